#pragma once

// Synthetic MU-MISO downlink channel datasets.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wgnn {

// K x N complex matrix; row k is user k's channel.
using CMatrix = Eigen::MatrixXcd;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetHeader {
  int k_users = 4;
  int n_antennas = 8;
  double sigma2 = 1.0;
  double power_budget = 10.0;
  int count = 1;
  std::uint64_t seed = 0;
  // Path of the run manifest that produced the file, when written by the CLI.
  std::string manifest;

  void validate() const;
};

struct ChannelSample {
  std::int64_t sample_id = 0;
  CMatrix H;
};

struct Dataset {
  DatasetHeader header;
  std::vector<ChannelSample> samples;
};

// i.i.d. CN(0, 1) entries. Sample i draws from its own stream keyed by
// (seed, i), so any subset can be regenerated independently.
std::vector<ChannelSample> sample_channels(const DatasetHeader& header);
Dataset generate_dataset(const DatasetHeader& header);

// JSON Lines: header object, then one {"sample_id", "H": [[[re, im], ...], ...]}
// object per line. Doubles are written with round-trip precision.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

struct SplitResult {
  Dataset train;
  Dataset test;
};

// Deterministic shuffle, then the first round(count * fraction) go to train.
SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

}  // namespace wgnn

#include "wgnn/channel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace wgnn {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json header_to_json(const DatasetHeader& h) {
  json j = {{"k_users", h.k_users}, {"n_antennas", h.n_antennas}, {"sigma2", h.sigma2},
            {"power_budget", h.power_budget}, {"count", h.count}, {"seed", h.seed}};
  if (!h.manifest.empty()) j["manifest"] = h.manifest;
  return j;
}

DatasetHeader header_from_json(const json& j) {
  DatasetHeader h;
  h.k_users = j.at("k_users").get<int>();
  h.n_antennas = j.at("n_antennas").get<int>();
  h.sigma2 = j.at("sigma2").get<double>();
  h.power_budget = j.at("power_budget").get<double>();
  h.count = j.at("count").get<int>();
  h.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("manifest")) h.manifest = j.at("manifest").get<std::string>();
  return h;
}

}  // namespace

void DatasetHeader::validate() const {
  if (k_users < 1) throw std::invalid_argument("dataset header: k_users must be >= 1");
  if (n_antennas < 1) throw std::invalid_argument("dataset header: n_antennas must be >= 1");
  if (count < 1) throw std::invalid_argument("dataset header: count must be >= 1");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("dataset header: sigma2 must be > 0");
  if (!(power_budget > 0.0)) throw std::invalid_argument("dataset header: power_budget must be > 0");
}

std::vector<ChannelSample> sample_channels(const DatasetHeader& header) {
  header.validate();
  std::vector<ChannelSample> out;
  out.reserve(static_cast<std::size_t>(header.count));
  const double sd = std::sqrt(0.5);
  for (int i = 0; i < header.count; ++i) {
    std::mt19937_64 rng(splitmix64(header.seed ^ splitmix64(static_cast<std::uint64_t>(i))));
    std::normal_distribution<double> normal(0.0, sd);
    ChannelSample s;
    s.sample_id = i;
    s.H.resize(header.k_users, header.n_antennas);
    for (int k = 0; k < header.k_users; ++k) {
      for (int n = 0; n < header.n_antennas; ++n) {
        const double re = normal(rng);
        const double im = normal(rng);
        s.H(k, n) = {re, im};
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dataset generate_dataset(const DatasetHeader& header) {
  return Dataset{header, sample_channels(header)};
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  dataset.header.validate();
  if (static_cast<std::size_t>(dataset.header.count) != dataset.samples.size()) {
    throw std::invalid_argument("write_dataset: header count " + std::to_string(dataset.header.count) +
                                " but " + std::to_string(dataset.samples.size()) + " samples");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_dataset: cannot open " + path.string());
  os << header_to_json(dataset.header).dump() << '\n';
  for (const ChannelSample& s : dataset.samples) {
    if (s.H.rows() != dataset.header.k_users || s.H.cols() != dataset.header.n_antennas) {
      throw std::invalid_argument("write_dataset: sample " + std::to_string(s.sample_id) +
                                  " dimension mismatch");
    }
    json rows = json::array();
    for (Eigen::Index k = 0; k < s.H.rows(); ++k) {
      json row = json::array();
      for (Eigen::Index n = 0; n < s.H.cols(); ++n) row.push_back({s.H(k, n).real(), s.H(k, n).imag()});
      rows.push_back(std::move(row));
    }
    os << json{{"sample_id", s.sample_id}, {"H", std::move(rows)}}.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write_dataset: write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_dataset: cannot open " + path.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };

  if (!std::getline(is, line)) throw FormatError(path.string() + ": empty file, missing header");
  lineno = 1;
  try {
    ds.header = header_from_json(json::parse(line));
    ds.header.validate();
  } catch (const json::exception& e) {
    throw fail(std::string("bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  const int K = ds.header.k_users;
  const int N = ds.header.n_antennas;

  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    ChannelSample s;
    try {
      json j = json::parse(line);
      s.sample_id = j.at("sample_id").get<std::int64_t>();
      const json& rows = j.at("H");
      if (!rows.is_array() || static_cast<int>(rows.size()) != K) {
        throw fail("dimension mismatch: expected " + std::to_string(K) + " rows, got " +
                   std::to_string(rows.is_array() ? rows.size() : 0));
      }
      s.H.resize(K, N);
      for (int k = 0; k < K; ++k) {
        const json& row = rows[static_cast<std::size_t>(k)];
        if (!row.is_array() || static_cast<int>(row.size()) != N) {
          throw fail("dimension mismatch: row " + std::to_string(k) + " expected " +
                     std::to_string(N) + " entries");
        }
        for (int n = 0; n < N; ++n) {
          const json& z = row[static_cast<std::size_t>(n)];
          if (!z.is_array() || z.size() != 2) throw fail("entry is not a [re, im] pair");
          s.H(k, n) = {z[0].get<double>(), z[1].get<double>()};
          if (!std::isfinite(s.H(k, n).real()) || !std::isfinite(s.H(k, n).imag())) {
            throw fail("non-finite channel entry");
          }
        }
      }
    } catch (const json::exception& e) {
      throw fail(std::string("parse error: ") + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (static_cast<int>(ds.samples.size()) != ds.header.count) {
    throw FormatError(path.string() + ": truncated, header declares " +
                      std::to_string(ds.header.count) + " samples but file has " +
                      std::to_string(ds.samples.size()));
  }
  return ds;
}

SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) {
    throw std::invalid_argument("split: fraction " + std::to_string(train_fraction) + " of " +
                                std::to_string(n) + " samples leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitResult out{Dataset{dataset.header, {}}, Dataset{dataset.header, {}}};
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? out.train : out.test).samples.push_back(dataset.samples[order[i]]);
  }
  out.train.header.count = static_cast<int>(out.train.samples.size());
  out.test.header.count = static_cast<int>(out.test.samples.size());
  return out;
}

}  // namespace wgnn

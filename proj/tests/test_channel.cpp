#include "wgnn/channel.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace wgnn;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wgnn_test_channel_" + name);
}

}  // namespace

TEST_CASE("sample_channels shape and determinism") {
  DatasetHeader h;
  h.count = 1000;
  h.seed = 7;
  const auto a = sample_channels(h);
  REQUIRE(a.size() == 1000);
  for (const auto& s : a) {
    CHECK(s.H.rows() == 4);
    CHECK(s.H.cols() == 8);
    CHECK(s.H.allFinite());
  }
  const auto b = sample_channels(h);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].H == b[i].H);

  h.seed = 8;
  const auto c = sample_channels(h);
  CHECK(c[0].H != a[0].H);
}

TEST_CASE("per-sample streams: a prefix regenerates identically") {
  DatasetHeader h;
  h.count = 20;
  h.seed = 3;
  const auto full = sample_channels(h);
  h.count = 5;
  const auto part = sample_channels(h);
  for (std::size_t i = 0; i < part.size(); ++i) CHECK(part[i].H == full[i].H);
}

TEST_CASE("unit variance of CN(0,1) entries") {
  // 10^5 entries; E|h|^2 = 1, std of the mean is about 1/sqrt(1e5)
  DatasetHeader h;
  h.k_users = 10;
  h.n_antennas = 10;
  h.count = 1000;
  h.seed = 11;
  double acc = 0.0;
  std::complex<double> mean = 0.0;
  double re2 = 0.0;
  std::size_t n = 0;
  for (const auto& s : sample_channels(h)) {
    acc += s.H.cwiseAbs2().sum();
    mean += s.H.sum();
    re2 += s.H.real().cwiseAbs2().sum();
    n += static_cast<std::size_t>(s.H.size());
  }
  CHECK(n == 100000);
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(mean / static_cast<double>(n)) < 0.02);
  // circular symmetry: real part carries half the power
  CHECK(re2 / n == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("header validation") {
  DatasetHeader h;
  CHECK_NOTHROW(h.validate());
  h.k_users = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.n_antennas = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.count = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.sigma2 = 0.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = {};
  h.power_budget = -1.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(h), std::invalid_argument);
}

TEST_CASE("dataset round-trip is exact") {
  DatasetHeader h;
  h.count = 2;
  h.seed = 5;
  h.sigma2 = 0.3;
  h.power_budget = 7.25;
  const Dataset d = generate_dataset(h);
  const auto path = temp_file("roundtrip.jsonl");
  write_dataset(path, d);
  const Dataset r = read_dataset(path);
  CHECK(r.header.k_users == 4);
  CHECK(r.header.n_antennas == 8);
  CHECK(r.header.count == 2);
  CHECK(r.header.seed == 5);
  CHECK(r.header.sigma2 == 0.3);
  CHECK(r.header.power_budget == 7.25);
  REQUIRE(r.samples.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.samples[i].sample_id == d.samples[i].sample_id);
    CHECK(r.samples[i].H == d.samples[i].H);  // bitwise, not approximate
  }
  std::filesystem::remove(path);
}

TEST_CASE("reader rejects a sample with the wrong number of rows") {
  DatasetHeader h;
  h.count = 1;
  Dataset d = generate_dataset(h);
  d.header.k_users = 4;
  const auto good = temp_file("good.jsonl");
  write_dataset(good, d);

  std::ifstream in(good);
  std::string header, sample;
  std::getline(in, header);
  std::getline(in, sample);
  in.close();

  nlohmann::json j = nlohmann::json::parse(sample);
  j["H"].erase(j["H"].size() - 1);
  const std::string three_rows = j.dump();
  const auto bad = temp_file("bad.jsonl");
  std::ofstream(bad) << header << "\n" << three_rows << "\n";
  try {
    read_dataset(bad);
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dimension mismatch") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);  // names the line
  }
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}

TEST_CASE("truncated or malformed files are rejected") {
  DatasetHeader h;
  h.count = 3;
  const auto path = temp_file("trunc.jsonl");
  write_dataset(path, generate_dataset(h));
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  in.close();

  std::ofstream(path) << header << "\n" << first << "\n";
  CHECK_THROWS_AS(read_dataset(path), FormatError);

  std::ofstream(path) << header << "\n" << first.substr(0, first.size() / 2) << "\n";
  CHECK_THROWS_AS(read_dataset(path), FormatError);

  std::ofstream(path) << "";
  CHECK_THROWS_AS(read_dataset(path), FormatError);

  std::ofstream(path) << "{\"k_users\": 4}\n";
  CHECK_THROWS_AS(read_dataset(path), FormatError);
  std::filesystem::remove(path);

  CHECK_THROWS(read_dataset(temp_file("does_not_exist.jsonl")));
}

TEST_CASE("split is disjoint, covering and deterministic") {
  DatasetHeader h;
  h.count = 1000;
  const Dataset d = generate_dataset(h);
  const SplitResult s = split(d, 0.8, 42);
  CHECK(s.train.samples.size() == 800);
  CHECK(s.test.samples.size() == 200);
  CHECK(s.train.header.count == 800);
  CHECK(s.test.header.count == 200);

  std::set<std::int64_t> ids;
  for (const auto& x : s.train.samples) ids.insert(x.sample_id);
  for (const auto& x : s.test.samples) CHECK(ids.insert(x.sample_id).second);
  CHECK(ids.size() == 1000);

  const SplitResult again = split(d, 0.8, 42);
  for (std::size_t i = 0; i < 200; ++i) CHECK(again.test.samples[i].sample_id == s.test.samples[i].sample_id);

  // shuffled, not a prefix
  bool moved = false;
  for (std::size_t i = 0; i < 800; ++i) moved |= s.train.samples[i].sample_id != static_cast<std::int64_t>(i);
  CHECK(moved);
}

TEST_CASE("split rejects empty sides") {
  DatasetHeader h;
  h.count = 3;
  const Dataset d = generate_dataset(h);
  CHECK_THROWS_AS(split(d, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(split(d, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(split(d, 0.1, 0), std::invalid_argument);
  CHECK_THROWS_AS(split(d, 0.9, 0), std::invalid_argument);
  CHECK_NOTHROW(split(d, 0.5, 0));
}

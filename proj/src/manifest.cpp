#include "wgnn/manifest.hpp"

#include "wgnn/channel.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace wgnn {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".manifest.json";
  return p;
}

json to_json(const RunManifest& m) {
  return json{{"format", "wgnn-manifest/1"}, {"command", m.command},   {"argv", m.argv},
              {"config", m.config},          {"seeds", m.seeds},       {"inputs", m.inputs},
              {"outputs", m.outputs},        {"version", m.version},   {"started_at", m.started_at},
              {"finished_at", m.finished_at}};
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seeds = j.at("seeds");
    m.inputs = j.at("inputs");
    m.outputs = j.at("outputs");
    m.version = j.at("version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path.string());
  os << to_json(m).dump(2) << '\n';
  if (!os) throw std::runtime_error("write_manifest: write failed for " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path.string());
  try {
    return manifest_from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace wgnn

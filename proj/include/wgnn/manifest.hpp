#pragma once

// Run manifests: every CLI command writes <output>.manifest.json describing
// how its outputs were produced, and every produced file names it.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace wgnn {

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  std::string version = kVersion;
  std::string started_at;
  std::string finished_at;
};

std::string utc_timestamp();
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace wgnn

#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace plita::cli {

/// run.json: everything needed to replay a command.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string version;
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::vector<std::string> outputs;
  std::string started_at;
};

const char* version();

/// ISO 8601 UTC, second resolution.
std::string utc_timestamp();

/// Fills version and started_at, then writes `path`. Refuses to overwrite.
void write_manifest(const std::filesystem::path& path, RunManifest manifest);
RunManifest read_manifest(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

}  // namespace plita::cli

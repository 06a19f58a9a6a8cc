#include "plita/cli/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

#ifndef PLITA_VERSION
#define PLITA_VERSION "unknown"
#endif

namespace plita::cli {

using nlohmann::json;

const char* version() { return PLITA_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& path, RunManifest manifest) {
  if (std::filesystem::exists(path)) throw std::runtime_error("manifest " + path.string() + " already exists");
  manifest.version = version();
  if (manifest.started_at.empty()) manifest.started_at = utc_timestamp();
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json(manifest).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in).get<RunManifest>();
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"command", m.command}, {"argv", m.argv},       {"config", m.config},   {"seed", m.seed},
           {"version", m.version}, {"inputs", m.inputs},   {"outputs", m.outputs}, {"started_at", m.started_at}};
}

void from_json(const json& j, RunManifest& m) {
  j.at("command").get_to(m.command);
  j.at("argv").get_to(m.argv);
  m.config = j.at("config");
  j.at("seed").get_to(m.seed);
  j.at("version").get_to(m.version);
  j.at("inputs").get_to(m.inputs);
  j.at("outputs").get_to(m.outputs);
  j.at("started_at").get_to(m.started_at);
}

}  // namespace plita::cli

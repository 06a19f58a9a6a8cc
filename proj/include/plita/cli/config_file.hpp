#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plita/train/trainer.hpp"

namespace plita::cli {

/// Bad flags, config keys or infeasible settings. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigEntry {
  std::string key, value;
  std::size_t line = 0;
};

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
struct ConfigFile {
  std::string source;
  std::vector<ConfigEntry> entries;

  std::optional<std::string> get(const std::string& key) const;
};

ConfigFile parse_config(std::istream& in, const std::string& source = "<config>");
ConfigFile read_config(const std::filesystem::path& path);

/// Keys accepted by apply_config, in documentation order.
const std::vector<std::string>& config_keys();

/// Sets one field from its textual value. Throws UsageError on unknown keys
/// or unparsable values.
void set_config_value(train::TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every entry except `profile` (which selects the starting defaults).
void apply_config(const ConfigFile& file, train::TrainConfig& cfg);

/// The resolved config in the same key = value format.
std::string format_config(const train::TrainConfig& cfg);

}  // namespace plita::cli

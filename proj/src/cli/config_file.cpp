#include "plita/cli/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace plita::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw UsageError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true|false");
}

using Setter = std::function<void(train::TrainConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  using train::TrainConfig;
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"profile", [](TrainConfig& c, const std::string&, const std::string& v) { c.profile = v; }},
      {"iterations", [](TrainConfig& c, const std::string& k, const std::string& v) { c.iterations = to_count(k, v); }},
      {"batch", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch = to_count(k, v); }},
      {"N", [](TrainConfig& c, const std::string& k, const std::string& v) { c.n = to_count(k, v); }},
      {"W", [](TrainConfig& c, const std::string& k, const std::string& v) { c.window_s = to_real(k, v); }},
      {"lr", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lr = to_real(k, v); }},
      {"weight_decay",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_decay = to_real(k, v); }},
      {"metric",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v != "cosine" && v != "euclidean") bad_value(k, v, "cosine|euclidean");
         c.metric = train::parse_metric(v);
       }},
      {"enable_iv", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_iv = to_bool(k, v); }},
      {"enable_tv", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_tv = to_bool(k, v); }},
      {"split",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "shared") {
           c.model.head.split = false;
         } else if (v == "halves") {
           c.model.head.split = true;
         } else {
           bad_value(k, v, "shared|halves");
         }
       }},
      {"augment",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") {
           c.augment = {};
         } else if (v == "reverse") {
           c.augment = {.reverse = true, .flip = false};
         } else if (v == "flip") {
           c.augment = {.reverse = false, .flip = true};
         } else if (v == "reverse+flip") {
           c.augment = {.reverse = true, .flip = true};
         } else {
           bad_value(k, v, "none|reverse|flip|reverse+flip");
         }
       }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = to_count(k, v); }},
      {"checkpoint_every",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.checkpoint_every = to_count(k, v); }},
      {"max_retries",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.max_retries = to_count(k, v); }},
      {"quality",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         try {
           train::quality_predicate(v);
         } catch (const std::invalid_argument&) {
           bad_value(k, v, "none|flatline|clipping|flatline+clipping");
         }
         c.quality = v;
       }},
      {"tau", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.tau = to_real(k, v); }},
      {"depth",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.encoder.depth = to_count(k, v); }},
      {"dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.encoder.dim = to_count(k, v); }},
      {"heads",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.encoder.heads = to_count(k, v); }},
      {"mlp_ratio",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.encoder.mlp_ratio = to_count(k, v); }},
      {"patch_size",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.encoder.patch_size = to_count(k, v); }},
      {"projector_hidden",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.head.projector_hidden = to_count(k, v);
       }},
      {"projector_out",
       [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.head.projector_out = to_count(k, v); }},
      {"predictor_hidden",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.head.predictor_hidden = to_count(k, v);
       }},
  };
  return table;
}

std::string augment_name(const losses::AugmentConfig& a) {
  if (a.reverse && a.flip) return "reverse+flip";
  if (a.reverse) return "reverse";
  if (a.flip) return "flip";
  return "none";
}

}  // namespace

std::optional<std::string> ConfigFile::get(const std::string& key) const {
  std::optional<std::string> out;
  for (const auto& e : entries) {
    if (e.key == key) out = e.value;
  }
  return out;
}

ConfigFile parse_config(std::istream& in, const std::string& source) {
  ConfigFile file;
  file.source = source;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(n) + ": expected key = value, got '" + line + "'");
    }
    ConfigEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
    if (e.key.empty()) throw UsageError(source + ":" + std::to_string(n) + ": empty key");
    file.entries.push_back(std::move(e));
  }
  return file;
}

ConfigFile read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  return parse_config(in, path.string());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(train::TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = std::find_if(table.begin(), table.end(), [&](const auto& p) { return p.first == key; });
  if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

void apply_config(const ConfigFile& file, train::TrainConfig& cfg) {
  for (const auto& e : file.entries) {
    if (e.key == "profile") continue;
    try {
      set_config_value(cfg, e.key, e.value);
    } catch (const UsageError& err) {
      throw UsageError(file.source + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
}

std::string format_config(const train::TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& m = c.model;
  os << "profile = " << c.profile << '\n'
     << "iterations = " << c.iterations << '\n'
     << "batch = " << c.batch << '\n'
     << "N = " << c.n << '\n'
     << "W = " << c.window_s << '\n'
     << "lr = " << c.lr << '\n'
     << "weight_decay = " << c.weight_decay << '\n'
     << "metric = " << train::to_string(c.metric) << '\n'
     << "enable_iv = " << (c.enable_iv ? "true" : "false") << '\n'
     << "enable_tv = " << (c.enable_tv ? "true" : "false") << '\n'
     << "split = " << (m.head.split ? "halves" : "shared") << '\n'
     << "augment = " << augment_name(c.augment) << '\n'
     << "seed = " << c.seed << '\n'
     << "checkpoint_every = " << c.checkpoint_every << '\n'
     << "max_retries = " << c.max_retries << '\n'
     << "quality = " << c.quality << '\n'
     << "tau = " << m.tau << '\n'
     << "depth = " << m.encoder.depth << '\n'
     << "dim = " << m.encoder.dim << '\n'
     << "heads = " << m.encoder.heads << '\n'
     << "mlp_ratio = " << m.encoder.mlp_ratio << '\n'
     << "patch_size = " << m.encoder.patch_size << '\n'
     << "projector_hidden = " << m.head.projector_hidden << '\n'
     << "projector_out = " << m.head.projector_out << '\n'
     << "predictor_hidden = " << m.head.predictor_hidden << '\n';
  return os.str();
}

}  // namespace plita::cli

#include "plita/eval/embeddings.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace plita::eval {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "embedding table IO assumes a little-endian host");

namespace {

constexpr const char* kFormat = "plita-embeddings";

std::string optional_field(const std::optional<int>& v) { return v ? std::to_string(*v) : ""; }

std::optional<int> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stoi(s);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void EmbeddingTable::append(EmbeddingRow meta, std::span<const float> h) {
  if (h.size() != dim) {
    throw std::invalid_argument("embedding width " + std::to_string(h.size()) + " != table dim " + std::to_string(dim));
  }
  rows.push_back(std::move(meta));
  values.insert(values.end(), h.begin(), h.end());
}

std::vector<std::string> EmbeddingTable::record_keys() const {
  std::vector<std::string> keys;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    auto key = r.record_key();
    if (seen.insert(key).second) keys.push_back(std::move(key));
  }
  return keys;
}

std::vector<std::string> EmbeddingTable::subject_ids() const {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.subject_id).second) ids.push_back(r.subject_id);
  }
  return ids;
}

EmbeddingTable export_embeddings(const model::Network<float>& student, const data::Corpus& corpus,
                                 const ExportOptions& options) {
  const std::size_t len = signal::kStripSamples;
  EmbeddingTable table;
  table.dim = student.cfg.encoder.dim;

  std::vector<EmbeddingRow> pending;
  std::vector<float> strips;
  auto flush = [&] {
    if (pending.empty()) return;
    core::NoGradGuard guard;
    const core::Tensor<float> x({pending.size(), len}, strips);
    const auto h = student.encode(x);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      table.append(std::move(pending[i]), h.data().subspan(i * table.dim, table.dim));
    }
    pending.clear();
    strips.clear();
  };

  for (const auto& rec : corpus) {
    if (rec.fs != signal::kTargetRate) {
      throw std::invalid_argument("export needs a 100 Hz corpus; " + rec.subject_id + "/" + rec.record_id + " is at " +
                                  std::to_string(rec.fs) + " Hz");
    }
    for (std::size_t s = 0; s < rec.strip_count(); ++s) {
      const auto strip = signal::normalize_strip(std::span<const float>(rec.samples.data() + s * len, len));
      if (!signal::quality_gate(strip, options.predicate)) continue;
      EmbeddingRow row{rec.subject_id, rec.record_id, s, std::nullopt, rec.subject_attribute};
      if (rec.labels) row.label = (*rec.labels)[s];
      pending.push_back(std::move(row));
      strips.insert(strips.end(), strip.begin(), strip.end());
      if (pending.size() == options.batch) flush();
    }
  }
  flush();
  if (options.normalize) normalize_features(table);
  return table;
}

void normalize_features(EmbeddingTable& table) {
  const std::size_t n = table.size(), d = table.dim;
  if (n == 0) {
    table.normalized = true;
    return;
  }
  for (std::size_t f = 0; f < d; ++f) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += table.values[i * d + f];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = table.values[i * d + f] - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double scale = var < 1e-12 ? 0.0 : 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) {
      table.values[i * d + f] = static_cast<float>((table.values[i * d + f] - mean) * scale);
    }
  }
  table.normalized = true;
}

void write_table(const fs::path& dir, const EmbeddingTable& table, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw std::invalid_argument(dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
  const json manifest{{"format", kFormat},
                      {"version", 1},
                      {"rows", table.size()},
                      {"dim", table.dim},
                      {"normalized", table.normalized},
                      {"matrix", "embeddings.f32"},
                      {"metadata", "rows.csv"}};
  std::ofstream(dir / "table.json") << manifest.dump(2) << '\n';

  std::ofstream bin(dir / "embeddings.f32", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(table.values.data()),
            static_cast<std::streamsize>(table.values.size() * sizeof(float)));
  if (!bin) throw std::runtime_error("cannot write " + (dir / "embeddings.f32").string());

  std::ofstream csv(dir / "rows.csv");
  csv << "subject_id,record_id,strip_index,label,attribute\n";
  for (const auto& r : table.rows) {
    csv << r.subject_id << ',' << r.record_id << ',' << r.strip_index << ',' << optional_field(r.label) << ','
        << optional_field(r.attribute) << '\n';
  }
  if (!csv) throw std::runtime_error("cannot write " + (dir / "rows.csv").string());
}

EmbeddingTable read_table(const fs::path& dir) {
  std::ifstream mf(dir / "table.json");
  if (!mf) throw std::runtime_error("missing " + (dir / "table.json").string());
  const json manifest = json::parse(mf);
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != 1) {
    throw std::runtime_error((dir / "table.json").string() + " is not a version 1 embedding table");
  }
  EmbeddingTable table;
  table.dim = manifest.at("dim").get<std::size_t>();
  table.normalized = manifest.at("normalized").get<bool>();
  const auto n = manifest.at("rows").get<std::size_t>();

  std::ifstream csv(dir / "rows.csv");
  std::string line;
  if (!std::getline(csv, line) || line != "subject_id,record_id,strip_index,label,attribute") {
    throw std::runtime_error((dir / "rows.csv").string() + ": unexpected header");
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw std::runtime_error((dir / "rows.csv").string() + ": malformed row '" + line + "'");
    table.rows.push_back({cells[0], cells[1], std::stoul(cells[2]), parse_optional(cells[3]), parse_optional(cells[4])});
  }
  if (table.rows.size() != n) throw std::runtime_error("rows.csv holds " + std::to_string(table.rows.size()) +
                                                       " rows, table.json declares " + std::to_string(n));

  const auto path = dir / "embeddings.f32";
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec || bytes != n * table.dim * sizeof(float)) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(n * table.dim) + " float32 values");
  }
  table.values.resize(n * table.dim);
  std::ifstream bin(path, std::ios::binary);
  bin.read(reinterpret_cast<char*>(table.values.data()), static_cast<std::streamsize>(bytes));
  if (!bin) throw std::runtime_error("read failed: " + path.string());
  return table;
}

}  // namespace plita::eval

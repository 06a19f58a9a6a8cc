#include "plita/data/corpus_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <json.hpp>
#include <sstream>

namespace plita::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "plita-corpus";
constexpr const char* kManifest = "manifest.jsonl";

[[noreturn]] void fail(CorpusErrorKind kind, const std::string& what) { throw CorpusError(kind, what); }

bool safe_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  }
  return true;
}

void write_floats(const fs::path& path, const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(CorpusErrorKind::Io, "cannot open " + path.string() + " for writing");
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float f : v) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = __builtin_bswap32(u);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  if (!out) fail(CorpusErrorKind::Io, "write failed: " + path.string());
}

std::vector<float> read_floats(const fs::path& path, std::size_t expected) {
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) fail(CorpusErrorKind::Io, "cannot stat " + path.string() + ": " + ec.message());
  if (bytes != expected * sizeof(float)) {
    fail(CorpusErrorKind::LengthMismatch, path.string() + ": manifest declares " + std::to_string(expected) +
                                              " samples but file holds " + std::to_string(bytes) + " bytes");
  }
  std::vector<float> v(expected);
  std::ifstream in(path, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes))) {
    fail(CorpusErrorKind::Io, "read failed: " + path.string());
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : v) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return v;
}

std::vector<int> read_labels(const fs::path& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) fail(CorpusErrorKind::Io, "cannot open label file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "strip_index,label") {
    fail(CorpusErrorKind::MalformedHeader, path.string() + ": expected header 'strip_index,label'");
  }
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long index = -1;
    int label = 0;
    char comma = 0;
    if (!(row >> index >> comma >> label) || comma != ',' || index != static_cast<long>(labels.size())) {
      fail(CorpusErrorKind::Validation, key + ": bad label row '" + line + "' in " + path.string());
    }
    labels.push_back(label);
  }
  return labels;
}

}  // namespace

const char* to_string(CorpusErrorKind kind) {
  switch (kind) {
    case CorpusErrorKind::Io: return "io";
    case CorpusErrorKind::MalformedHeader: return "malformed-header";
    case CorpusErrorKind::UnknownVersion: return "unknown-version";
    case CorpusErrorKind::Validation: return "validation";
    case CorpusErrorKind::LengthMismatch: return "length-mismatch";
    case CorpusErrorKind::Checksum: return "checksum";
  }
  return "unknown";
}

CorpusError::CorpusError(CorpusErrorKind kind, const std::string& what)
    : std::runtime_error(std::string("corpus ") + to_string(kind) + " error: " + what), kind_(kind) {}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CorpusErrorKind::Io, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

void write_corpus(const fs::path& dir, const Corpus& corpus, bool force) {
  try {
    validate(corpus);
  } catch (const std::invalid_argument& e) {
    fail(CorpusErrorKind::Validation, e.what());
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw std::invalid_argument("output " + dir.string() + " exists and is not empty (use --force)");
  }
  fs::create_directories(dir);
  std::ofstream manifest(dir / kManifest);
  if (!manifest) fail(CorpusErrorKind::Io, "cannot write " + (dir / kManifest).string());
  manifest << json{{"format", kFormat}, {"version", kCorpusVersion}}.dump() << '\n';
  for (const auto& r : corpus) {
    if (!safe_id(r.subject_id) || !safe_id(r.record_id)) {
      fail(CorpusErrorKind::Validation, "ids must match [A-Za-z0-9._-]+: " + r.subject_id + "/" + r.record_id);
    }
    const std::string stem = r.subject_id + "_" + r.record_id;
    write_floats(dir / (stem + ".f32"), r.samples);
    json line{{"subject_id", r.subject_id}, {"record_id", r.record_id}, {"fs", r.fs},
              {"length", r.samples.size()},   {"samples", stem + ".f32"},   {"sha256", sha256_file(dir / (stem + ".f32"))},
              {"labels", nullptr}};
    if (r.labels) {
      std::ofstream lf(dir / (stem + ".labels.csv"));
      lf << "strip_index,label\n";
      for (std::size_t i = 0; i < r.labels->size(); ++i) lf << i << ',' << (*r.labels)[i] << '\n';
      if (!lf) fail(CorpusErrorKind::Io, "cannot write labels for " + stem);
      line["labels"] = stem + ".labels.csv";
    }
    if (r.subject_attribute) line["subject_attribute"] = *r.subject_attribute;
    manifest << line.dump() << '\n';
  }
  if (!manifest) fail(CorpusErrorKind::Io, "manifest write failed in " + dir.string());
}

Corpus read_corpus(const fs::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) fail(CorpusErrorKind::Io, "cannot open " + (dir / kManifest).string());
  std::string line;
  json header;
  if (!std::getline(in, line)) fail(CorpusErrorKind::MalformedHeader, "empty manifest in " + dir.string());
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(CorpusErrorKind::MalformedHeader, std::string("header is not JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kFormat || !header.contains("version") ||
      !header["version"].is_number_integer()) {
    fail(CorpusErrorKind::MalformedHeader, "expected {\"format\":\"plita-corpus\",\"version\":<int>}, got " + line);
  }
  if (header["version"].get<int>() != kCorpusVersion) {
    fail(CorpusErrorKind::UnknownVersion, "corpus version " + std::to_string(header["version"].get<int>()) +
                                              " (this build reads version " + std::to_string(kCorpusVersion) + ")");
  }

  Corpus corpus;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Recording r;
    std::string samples_file, checksum;
    std::size_t length = 0;
    json labels_ref;
    try {
      const json j = json::parse(line);
      r.subject_id = j.at("subject_id").get<std::string>();
      r.record_id = j.at("record_id").get<std::string>();
      r.fs = j.at("fs").get<double>();
      length = j.at("length").get<std::size_t>();
      samples_file = j.at("samples").get<std::string>();
      checksum = j.at("sha256").get<std::string>();
      labels_ref = j.value("labels", json(nullptr));
      if (j.contains("subject_attribute")) r.subject_attribute = j["subject_attribute"].get<int>();
    } catch (const json::exception& e) {
      fail(CorpusErrorKind::Validation, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string key = r.subject_id + "/" + r.record_id;
    if (!(r.fs > 0)) fail(CorpusErrorKind::Validation, key + ": fs must be positive, got " + std::to_string(r.fs));
    if (!safe_id(r.subject_id) || !safe_id(r.record_id) || samples_file.find('/') != std::string::npos) {
      fail(CorpusErrorKind::Validation, "manifest line " + std::to_string(line_no) + ": unsafe id or path");
    }
    r.samples = read_floats(dir / samples_file, length);
    if (sha256_file(dir / samples_file) != checksum) fail(CorpusErrorKind::Checksum, key + ": sha256 mismatch");
    if (labels_ref.is_string()) r.labels = read_labels(dir / labels_ref.get<std::string>(), key);
    corpus.push_back(std::move(r));
  }
  try {
    validate(corpus);
  } catch (const std::invalid_argument& e) {
    fail(CorpusErrorKind::Validation, e.what());
  }
  return corpus;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("PLITA_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace plita::data

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "plita/data/recording.hpp"

namespace plita::data {

inline constexpr int kCorpusVersion = 1;

enum class CorpusErrorKind { Io, MalformedHeader, UnknownVersion, Validation, LengthMismatch, Checksum };

const char* to_string(CorpusErrorKind kind);

class CorpusError : public std::runtime_error {
 public:
  CorpusError(CorpusErrorKind kind, const std::string& what);
  CorpusErrorKind kind() const { return kind_; }

 private:
  CorpusErrorKind kind_;
};

/// Layout under `dir`:
///   manifest.jsonl           header line, then one JSON object per record
///   <subject>_<record>.f32   little-endian float32 samples
///   <subject>_<record>.labels.csv   strip_index,label (when labels exist)
/// Throws std::invalid_argument if `dir` exists and is non-empty unless `force`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, bool force = false);
Corpus read_corpus(const std::filesystem::path& dir);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// $PLITA_DATA_DIR when set, else "./data".
std::filesystem::path default_data_dir();

}  // namespace plita::data

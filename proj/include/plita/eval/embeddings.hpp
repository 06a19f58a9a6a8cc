#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plita/data/recording.hpp"
#include "plita/model/model_pair.hpp"
#include "plita/signal/prep.hpp"

namespace plita::eval {

struct EmbeddingRow {
  std::string subject_id;
  std::string record_id;
  std::size_t strip_index = 0;
  std::optional<int> label;
  std::optional<int> attribute;

  std::string record_key() const { return subject_id + "/" + record_id; }
};

/// One row per exported strip, h stored row-major as float32.
struct EmbeddingTable {
  std::size_t dim = 0;
  bool normalized = false;
  std::vector<EmbeddingRow> rows;
  std::vector<float> values;

  std::size_t size() const { return rows.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  float at(std::size_t i, std::size_t feature) const { return values[i * dim + feature]; }
  void append(EmbeddingRow meta, std::span<const float> h);

  /// Record keys in order of first appearance.
  std::vector<std::string> record_keys() const;
  std::vector<std::string> subject_ids() const;
};

struct ExportOptions {
  /// Global per-feature z-normalization after export.
  bool normalize = false;
  /// Strips failing the predicate are left out.
  signal::QualityPredicate predicate = signal::accept_all();
  std::size_t batch = 64;
};

/// Runs the frozen student encoder over every 10 s strip of every record.
/// The corpus must be prefiltered to 100 Hz.
EmbeddingTable export_embeddings(const model::Network<float>& student, const data::Corpus& corpus,
                                 const ExportOptions& options = {});

/// Subtracts the mean and divides by the population standard deviation of each
/// feature across the whole table. Constant features become zero.
void normalize_features(EmbeddingTable& table);

/// Directory with table.json, embeddings.f32 (little-endian) and rows.csv.
/// Throws std::invalid_argument when `dir` is non-empty and `force` is false.
void write_table(const std::filesystem::path& dir, const EmbeddingTable& table, bool force = false);
EmbeddingTable read_table(const std::filesystem::path& dir);

}  // namespace plita::eval

#pragma once

#include <cstdint>
#include <vector>

#include "plita/eval/probe.hpp"

namespace plita::eval {

/// `size` consecutive strips of one record, labeled by their majority (ties
/// to the lower class id).
struct SequenceGroup {
  std::vector<std::size_t> rows;
  int label = 0;
};

/// Non-overlapping groups at strip indices [g*size, (g+1)*size). Groups with a
/// missing or unlabeled strip are dropped, so a record shorter than one group
/// contributes nothing.
std::vector<SequenceGroup> make_groups(const EmbeddingTable& table, LabelField field, std::size_t size = 3);

struct SequenceProbeConfig {
  std::size_t group = 3;
  std::size_t hidden = 64;
  std::size_t epochs = 5;
  std::size_t batch = 8;
  double lr = 5e-3;
  std::uint64_t seed = 0;
};

/// GRU head over frozen embeddings of each group, trained with cross-entropy.
FoldProbe sequence_fold_probe(LabelField field, const SequenceProbeConfig& cfg = {});

/// Leave-one-record-out sequence probe. A corpus with a single class is
/// flagged degenerate and scored with a constant prediction.
ProbeReport sequence_probe(const EmbeddingTable& table, LabelField field, const SequenceProbeConfig& cfg = {});

}  // namespace plita::eval

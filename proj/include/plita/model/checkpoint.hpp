#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "plita/core/tensor.hpp"

namespace plita::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  core::Shape shape;
  std::vector<float> data;
};

/// Versioned binary container: magic "PLITACKP", u32 version, u64 header
/// length, header JSON, then little-endian float32 blobs in header order.
struct Checkpoint {
  nlohmann::json header;  // free-form metadata; "tensors" is managed by save/load
  std::vector<std::pair<std::string, StoredTensor>> tensors;

  void add(const std::string& name, const core::Tensor<float>& t);
  void add(const std::string& name, core::Shape shape, std::vector<float> data);
  const StoredTensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params` (prefix + name). Throws CheckpointError
/// on a missing tensor or a shape mismatch.
void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, core::ParameterList<float>& params);
void store_parameters(Checkpoint& ckpt, const std::string& prefix, const core::ParameterList<float>& params);

}  // namespace plita::model

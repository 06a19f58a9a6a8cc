#include "plita/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace plita::model {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'L', 'I', 'T', 'A', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& in, const fs::path& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void Checkpoint::add(const std::string& name, const core::Tensor<float>& t) {
  add(name, t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
}

void Checkpoint::add(const std::string& name, core::Shape shape, std::vector<float> data) {
  if (core::shape_numel(shape) != data.size()) throw CheckpointError("tensor " + name + ": shape/data size mismatch");
  if (contains(name)) throw CheckpointError("duplicate tensor " + name);
  tensors.emplace_back(name, StoredTensor{std::move(shape), std::move(data)});
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const StoredTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json header = ckpt.header;
  json list = json::array();
  for (const auto& [name, t] : ckpt.tensors) list.push_back({{"name", name}, {"shape", t.shape}});
  header["tensors"] = list;
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = get<std::uint64_t>(in, path);
  if (len > (1ULL << 30)) throw CheckpointError("implausible header length in " + path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated header in " + path.string());
  Checkpoint ckpt;
  try {
    ckpt.header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + std::string(e.what()));
  }
  for (const auto& entry : ckpt.header.at("tensors")) {
    StoredTensor t;
    t.shape = entry.at("shape").get<core::Shape>();
    t.data.resize(core::shape_numel(t.shape));
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)))) {
      throw CheckpointError("truncated tensor data in " + path.string());
    }
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  ckpt.header.erase("tensors");
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const std::string& prefix, core::ParameterList<float>& params) {
  for (auto& p : params) {
    const auto& t = ckpt.get(prefix + p.name);
    if (t.shape != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + prefix + p.name + ": checkpoint " + core::shape_str(t.shape) +
                            ", model " + core::shape_str(p.tensor.shape()));
    }
    std::copy(t.data.begin(), t.data.end(), p.tensor.mutable_data().begin());
  }
}

void store_parameters(Checkpoint& ckpt, const std::string& prefix, const core::ParameterList<float>& params) {
  for (const auto& p : params) ckpt.add(prefix + p.name, p.tensor);
}

}  // namespace plita::model

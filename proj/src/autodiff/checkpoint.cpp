#include "airbeam/autodiff/checkpoint.hpp"

#include <fstream>

#include "airbeam/common/binio.hpp"

namespace airbeam::ad {

namespace {
constexpr char kMagic[4] = {'A', 'B', 'C', 'K'};
}

Checkpoint snapshot(const ParameterStore& store, std::string config) {
  Checkpoint ck;
  ck.config = std::move(config);
  for (const auto& p : store.parameters()) {
    ck.entries.push_back({p.name, true, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  }
  for (const auto& b : store.buffers()) {
    ck.entries.push_back({b.name, false, {static_cast<std::int64_t>(b.values.size())}, b.values});
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  binio::write_le<std::uint32_t>(os, ck.version);
  binio::write_string(os, ck.config);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) {
    binio::write_string(os, e.name);
    binio::write_le<std::uint8_t>(os, e.trainable ? 0 : 1);
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) binio::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (double v : e.values) binio::write_le<double>(os, v);
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  try {
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4)) {
      throw CheckpointError(path.string() + " is not a checkpoint file");
    }
    Checkpoint ck;
    ck.version = binio::read_le<std::uint32_t>(is, "format version");
    if (ck.version != kCheckpointVersion) {
      throw CheckpointError("checkpoint format version " + std::to_string(ck.version) +
                            " does not match supported version " + std::to_string(kCheckpointVersion));
    }
    ck.config = binio::read_string(is, "config snapshot");
    const auto count = binio::read_le<std::uint32_t>(is, "entry count");
    for (std::uint32_t i = 0; i < count; ++i) {
      CheckpointEntry e;
      e.name = binio::read_string(is, "entry name", 4096);
      const auto kind = binio::read_le<std::uint8_t>(is, "entry kind");
      if (kind > 1) throw CheckpointError("bad entry kind for " + e.name);
      e.trainable = kind == 0;
      const auto rank = binio::read_le<std::uint32_t>(is, "entry rank");
      if (rank > 8) throw CheckpointError("implausible rank for " + e.name);
      std::uint64_t n = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        const auto d = binio::read_le<std::uint64_t>(is, "entry dimension");
        if (d > (1ULL << 32)) throw CheckpointError("implausible dimension for " + e.name);
        e.shape.push_back(static_cast<std::int64_t>(d));
        n *= d;
      }
      if (n > (1ULL << 31)) throw CheckpointError("implausible size for " + e.name);
      e.values.resize(n);
      for (auto& v : e.values) v = binio::read_le<double>(is, "entry values");
      ck.entries.push_back(std::move(e));
    }
    return ck;
  } catch (const binio::FormatError& err) {
    throw CheckpointError(path.string() + ": " + err.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const std::string& config) {
  write_checkpoint(path, snapshot(store, config));
}

void restore(const Checkpoint& ck, ParameterStore& store) {
  const std::size_t expected = store.parameters().size() + store.buffers().size();
  std::size_t i = 0;
  auto mismatch = [](const std::string& what) { throw CheckpointError("checkpoint does not fit model: " + what); };
  for (const auto& p : store.parameters()) {
    if (i >= ck.entries.size()) mismatch("missing tensor " + p.name);
    const auto& e = ck.entries[i++];
    if (e.name != p.name || !e.trainable || e.shape != p.tensor.shape()) {
      mismatch("tensor " + e.name + shape_str(e.shape) + " vs model " + p.name + shape_str(p.tensor.shape()));
    }
  }
  for (const auto& b : store.buffers()) {
    if (i >= ck.entries.size()) mismatch("missing buffer " + b.name);
    const auto& e = ck.entries[i++];
    if (e.name != b.name || e.trainable || e.values.size() != b.values.size()) {
      mismatch("buffer " + e.name + " vs model " + b.name);
    }
  }
  if (ck.entries.size() != expected) {
    mismatch("checkpoint holds " + std::to_string(ck.entries.size()) + " entries, model has " +
             std::to_string(expected));
  }
  i = 0;
  for (auto& p : store.parameters()) {
    const auto& v = ck.entries[i++].values;
    std::copy(v.begin(), v.end(), p.tensor.mutable_values().begin());
  }
  for (auto& b : store.buffers()) b.values = ck.entries[i++].values;
}

std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  Checkpoint ck = read_checkpoint(path);
  restore(ck, store);
  return ck.config;
}

}  // namespace airbeam::ad

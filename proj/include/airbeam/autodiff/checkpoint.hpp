#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "airbeam/autodiff/layers.hpp"

namespace airbeam::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  bool trainable = true;
  Shape shape;
  std::vector<double> values;
};

/// On-disk layout (all integers and reals little-endian):
///   "ABCK" | u32 version | str config | u32 count | count x entry
///   entry = str name | u8 kind (0 param, 1 buffer) | u32 rank |
///           rank x u64 dim | numel x f64 (row-major)
///   str   = u32 length | bytes
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::vector<CheckpointEntry> entries;
};

Checkpoint snapshot(const ParameterStore& store, std::string config);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const std::string& config);

/// Restores every entry into `store`. Every name and shape is validated
/// before anything is written, so a failed load leaves `store` unchanged.
/// Returns the stored config snapshot.
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& store);
void restore(const Checkpoint& ck, ParameterStore& store);

}  // namespace airbeam::ad

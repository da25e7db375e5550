#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "model.hpp"

namespace mswave {

// Adam first/second moments, aligned with the model's parameter order.
struct AdamState {
  long t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// Single little-endian file:
//   "MSWCKPT1" | u32 version | i64 step | u64 seed
//   | blob hyperparameters | blob speaker registry | blob charset
//   | u64 n | n x (u32 name_len, name, u64 rows, u64 cols, f64 data row-major)
// Parameters come first in registration order, then adam_m/<name> and
// adam_v/<name> when optimizer state is present. The Adam step count equals
// the global step.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const AdamState* adam, long step, std::uint64_t seed);
// Atomic: written to a temporary sibling and renamed over `path`.
void save_checkpoint(const std::string& path, const Model& model, const AdamState* adam, long step,
                     std::uint64_t seed);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  AdamState adam;  // empty m/v when the file carries no optimizer state
  long step = 0;
  std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);
LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

// Writes `bytes` to a temporary sibling of `path` and renames it into place.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mswave

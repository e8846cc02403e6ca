#pragma once

#include <filesystem>
#include <string>

#include "plab/lm/model.hpp"

namespace plab::lm {

// Binary layout (version 1):
//   8 bytes  magic "PLABCKPT"
//   u32 LE   format version
//   u64 LE   header length N
//   N bytes  JSON header: {"config": {...}, "seed": s, "corpus_hash": "...",
//            "params": [{"name": ..., "shape": [...]}, ...]}
//   raw little-endian float64 parameter blocks in header order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string corpus_hash;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

// Throws DataError on bad magic, unknown version, or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace plab::lm

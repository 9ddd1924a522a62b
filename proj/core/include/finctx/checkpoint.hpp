#pragma once

#include <string>
#include <vector>

#include "finctx/tape.hpp"

namespace finctx {

// Binary checkpoint layout (all integers little-endian):
//   magic "FCTX" | u32 version | u64 config length | config JSON bytes |
//   u64 param count | per param: u64 name length, name bytes,
//   u32 rank, u32 dims..., f64 payload (little-endian bit pattern).
// Doubles round-trip bit-exactly.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::string config_json;
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::vector<const Parameter*>& params);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint entries into params by name. Every param must be present
// with a matching shape; unknown checkpoint entries are an error too, so a
// checkpoint and a model either match exactly or loading fails loudly.
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

}  // namespace finctx

#pragma once

#include <optional>
#include <string>

#include "kws/model.hpp"
#include "kws/nn.hpp"

namespace kws {

// Checkpoint file layout (little-endian):
//   magic "KWSC", u32 version=1, u32 tensor count,
//   per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims, f32 data,
//   trailing u32 CRC32 over everything after the magic+version header.
// Model metadata rides along as a JSON byte string in a tensor named
// "__meta__"; Adam moments are stored under "__adam_m__/" and "__adam_v__/".

struct Checkpoint {
    ParameterSet params;
    std::optional<AdamState> adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kws

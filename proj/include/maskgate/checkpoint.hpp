#pragma once

#include <string>
#include <utility>
#include <vector>

#include "maskgate/model.hpp"
#include "maskgate/tensor.hpp"

namespace maskgate {

/// Flat binary checkpoint: magic "MGK1", then per entry a little-endian u32
/// name length, the name bytes, a u32 rank, u32 dimensions, and the values as
/// little-endian 64-bit floats. Entries cover structure descriptors
/// ("structure/...", frozen masks, channel selections) followed by every
/// trainable parameter, in a fixed order so identical networks serialize to
/// identical bytes.
void save_checkpoint(const std::string& path, const MaskedNetwork& net);

std::vector<std::pair<std::string, Tensor>> load_checkpoint_entries(
    const std::string& path);

MaskedNetwork net_from_checkpoint(
    const std::vector<std::pair<std::string, Tensor>>& entries);

MaskedNetwork load_checkpoint(const std::string& path);

}  // namespace maskgate

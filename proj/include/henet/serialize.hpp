#pragma once

#include <cstdint>
#include <string>

#include "henet/graph.hpp"

namespace henet {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Binary model file: magic, version, embedded network config, input means,
// named parameter blobs (little-endian f32) including BN running stats, and a
// trailing FNV-1a checksum. Round trips are bit-exact.
void save_model(const ModelGraph<float>& g, const std::string& path);
ModelGraph<float> load_model(const std::string& path);

}  // namespace henet

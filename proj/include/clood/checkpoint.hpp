#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clood/network.hpp"
#include "json.hpp"

namespace clood::nn {

// Layout (little-endian):
//   "CLOODCK1" | u32 header_len | header JSON | u32 tensor_count |
//   per tensor: u16 name_len, name, u8 scalar_bytes (4|8), u8 ndim, u32 dims[ndim], data
// The header always carries dtype, network spec, spec_hash, step and seed.
inline constexpr std::string_view kCheckpointMagic = "CLOODCK1";

std::string spec_hash(const NetworkSpec& spec);

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const Network<T>& net, std::int64_t step,
                                               std::uint64_t seed, const nlohmann::json& extra = {});

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& net, std::int64_t step,
                     std::uint64_t seed, const nlohmann::json& extra = {});

template <typename T>
struct LoadedCheckpoint {
  Network<T> net;
  nlohmann::json header;
};

// Loads into precision T; tensors stored in the other precision are
// converted. A same-precision round trip is bit-exact.
template <typename T>
LoadedCheckpoint<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace clood::nn

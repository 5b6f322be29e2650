#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "timae/model.hpp"

namespace timae {

// Checkpoint layout (all integers little-endian):
//   "TIMAE001"
//   u64 header length, header bytes (model config JSON)
//   repeated: u64 name length, name, u64 rank, rank x u64 dims, f32 values
//   u32 CRC-32 of every preceding byte

inline constexpr char kCheckpointMagic[8] = {'T', 'I', 'M', 'A', 'E', '0', '0', '1'};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t file_crc32(const std::filesystem::path& path);
/// CRC-32 of a checkpoint's content, i.e. of every byte before its trailer.
/// (The CRC of a whole checkpoint is the same constant for every file.)
std::uint32_t checkpoint_content_crc32(const std::filesystem::path& path);

/// CRC-32 of the raw in-memory bytes of the listed tensors, in order.
template <typename T>
std::uint32_t parameters_crc32(const std::vector<NamedTensor<T>>& params);

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const TiMaeModel<T>& model);

template <typename T>
void save_checkpoint(const TiMaeModel<T>& model, const std::filesystem::path& path);

/// Loads parameters into an existing model. The stored config must equal the
/// model's (VersionError otherwise); bad magic, truncation, CRC mismatch or
/// missing tensors raise FormatError.
template <typename T>
void load_checkpoint(TiMaeModel<T>& model, const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

/// Builds a model from the checkpoint's own config header.
TiMaeModel<float> load_model(const std::filesystem::path& path);

}  // namespace timae

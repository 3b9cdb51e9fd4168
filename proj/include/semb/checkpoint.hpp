#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "semb/model.hpp"

namespace semb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian):
//   "SEMB" | u32 version | u64 manifest length | manifest (UTF-8 JSON)
//   | f32 tensor payload | u32 CRC32 of the payload
// The manifest carries the encoder config, pooling, objective metadata, vocab
// and a tensor directory (name, shape, byte offset into the payload).
std::string serialize_checkpoint(const SentenceModel& model);
SentenceModel deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const SentenceModel& model, const std::filesystem::path& path);
SentenceModel load_checkpoint(const std::filesystem::path& path);

// Manifest only, without materialising tensors (for `inspect`).
std::string read_checkpoint_manifest(const std::filesystem::path& path);

}  // namespace semb

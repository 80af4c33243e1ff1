#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "u4d/params.hpp"

namespace u4d {

inline constexpr char kCheckpointMagic[4] = {'U', '4', 'D', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f64 = 1, i64 = 2 };

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
};

/// Layout, all little-endian: magic "U4DC", u32 version, u32 entry count, then per
/// entry u32 name length, name bytes, u32 rank, rank x u64 extents, u8 dtype,
/// raw values; a trailing u32 CRC32 over every preceding byte.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
// Fully validates before returning. CorruptCheckpointError on any defect.
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Parameters (LoRA tensors included) plus a `<target>.lora_scale` entry per
// adapter and any extra entries.
std::vector<CheckpointEntry> checkpoint_entries(const ParamStore& store);

/// Copies entries into the store. Every parameter must be present with its
/// shape; LoRA tensors missing from the store are created and attached. All
/// checks run before the first write, so a rejected checkpoint leaves the store
/// untouched.
void apply_checkpoint(ParamStore& store, const std::vector<CheckpointEntry>& entries);

// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace u4d

#pragma once

// Parameter snapshot container, little-endian throughout:
//
//   offset  size  field
//   0       4     magic "FCVP"
//   4       4     u32 version (1)
//   8       4     u32 model kind (0 = LogReg, 1 = Mlp2)
//   12      4     u32 input_dim
//   16      4     u32 num_classes
//   20      4     u32 hidden layer count L
//   24      4*L   u32 hidden widths
//   ..      8     u64 value count Q
//   ..      8*Q   f64 values (IEEE 754 binary64)

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedcvar/numerics.hpp"

namespace fedcvar {

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::uint8_t> encode_snapshot(const ModelParams& params);

/// Throws ParseError on bad magic, unknown version, inconsistent sizes or
/// non-finite values.
ModelParams decode_snapshot(std::span<const std::uint8_t> bytes);

void write_snapshot(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_snapshot(const std::filesystem::path& path);

}  // namespace fedcvar

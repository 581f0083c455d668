#pragma once

// IDX container (MNIST family): big-endian magic 0x000008NN where NN is the
// number of dimensions, one big-endian u32 per dimension, row-major uint8
// payload. Only the unsigned-byte element type is supported.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedcvar/data.hpp"

namespace fedcvar {

inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  bool operator==(const IdxTensor&) const = default;
};

/// Throws ParseError naming the offending byte offset.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
IdxTensor read_idx_file(const std::filesystem::path& path);

/// Image/label file pair into a Dataset with pixels scaled to [0, 1].
/// `limit` > 0 keeps only the first `limit` samples.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes = 10, std::size_t limit = 0);

}  // namespace fedcvar

#include "fedcvar/idx.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "fedcvar/error.hpp"

namespace fedcvar {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("truncated IDX magic", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic", 0);
  if (bytes[2] != 0x08) throw ParseError("unsupported IDX element type (only ubyte)", 2);
  const std::size_t ndim = bytes[3];
  if (ndim == 0) throw ParseError("IDX tensor with zero dimensions", 3);

  IdxTensor t;
  std::size_t offset = 4;
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndim; ++d, offset += 4) {
    if (bytes.size() < offset + 4) throw ParseError("truncated IDX dimension header", bytes.size());
    const auto dim = read_be32(bytes, offset);
    if (__builtin_mul_overflow(total, std::size_t{dim}, &total)) {
      throw ParseError("IDX dimension product overflows", offset);
    }
    t.dims.push_back(dim);
  }
  const std::size_t available = bytes.size() - offset;
  if (available < total) {
    throw ParseError("truncated IDX payload: need " + std::to_string(total) + " bytes, have " +
                         std::to_string(available),
                     bytes.size());
  }
  if (available > total) throw ParseError("trailing bytes after IDX payload", offset + total);
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return t;
}

std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > 255) {
    throw InvalidArgument("IDX tensor needs 1..255 dimensions");
  }
  std::size_t total = 1;
  for (auto d : tensor.dims) total *= d;
  if (total != tensor.data.size()) throw InvalidArgument("IDX dims do not match payload size");
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * tensor.dims.size() + tensor.data.size());
  write_be32(out, 0x00000800u | static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) write_be32(out, d);
  out.insert(out.end(), tensor.data.begin(), tensor.data.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxTensor read_idx_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_idx(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t num_classes, std::size_t limit) {
  const auto img = read_idx_file(images);
  const auto lab = read_idx_file(labels);
  if (img.dims.size() != 3) throw InvalidArgument(images.string() + ": expected a 3-D image tensor");
  if (lab.dims.size() != 1) throw InvalidArgument(labels.string() + ": expected a 1-D label vector");
  if (img.dims[0] != lab.dims[0]) throw InvalidArgument("image and label counts differ");

  std::size_t n = img.dims[0];
  if (limit > 0) n = std::min(n, limit);
  const std::size_t pixels = std::size_t{img.dims[1]} * img.dims[2];

  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = 0; p < pixels; ++p) {
      out.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) =
          img.data[r * pixels + p] / 255.0;
    }
    out.labels[r] = lab.data[r];
  }
  out.validate();
  return out;
}

}  // namespace fedcvar

#include "fedcvar/snapshot.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "fedcvar/atomic_file.hpp"
#include "fedcvar/error.hpp"
#include "fedcvar/idx.hpp"

namespace fedcvar {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'C', 'V', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t le(std::size_t width, const char* what) {
    if (bytes_.size() - pos_ < width) throw ParseError(std::string("truncated ") + what, pos_);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += width;
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const ModelParams& params) {
  params.arch.validate();
  if (params.values.size() != params.arch.param_count())
    throw InvalidArgument("parameter vector does not match its architecture");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kSnapshotVersion);
  put_u32(out, params.arch.kind == ModelKind::LogReg ? 0 : 1);
  put_u32(out, static_cast<std::uint32_t>(params.arch.input_dim));
  put_u32(out, static_cast<std::uint32_t>(params.arch.num_classes));
  put_u32(out, static_cast<std::uint32_t>(params.arch.hidden_dims.size()));
  for (auto h : params.arch.hidden_dims) put_u32(out, static_cast<std::uint32_t>(h));
  put_u64(out, params.values.size());
  out.reserve(out.size() + 8 * params.values.size());
  for (double v : params.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ModelParams decode_snapshot(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("not a parameter snapshot (bad magic)", 0);
  Reader r(bytes.subspan(4));
  const auto version = r.u32("version");
  if (version != kSnapshotVersion)
    throw ParseError("unsupported snapshot version " + std::to_string(version), 4);

  ModelArch arch;
  const auto kind = r.u32("model kind");
  if (kind > 1) throw ParseError("unknown model kind " + std::to_string(kind), 8);
  arch.kind = kind == 0 ? ModelKind::LogReg : ModelKind::Mlp2;
  arch.input_dim = r.u32("input_dim");
  arch.num_classes = r.u32("num_classes");
  const auto layers = r.u32("hidden layer count");
  if (layers > r.remaining() / 4) throw ParseError("truncated hidden widths", 4 + r.pos());
  for (std::uint32_t i = 0; i < layers; ++i) arch.hidden_dims.push_back(r.u32("hidden width"));
  try {
    arch.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid architecture: ") + e.what(), 8);
  }

  const std::size_t count_at = 4 + r.pos();
  const auto count = r.u64("value count");
  if (count != arch.param_count())
    throw ParseError("value count " + std::to_string(count) + " does not match architecture (" +
                         std::to_string(arch.param_count()) + ")",
                     count_at);
  if (r.remaining() / 8 < count) throw ParseError("truncated values", 4 + r.pos());
  if (r.remaining() != 8 * count) throw ParseError("trailing bytes", 4 + r.pos() + 8 * count);

  ModelParams p{arch, {}};
  p.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = 4 + r.pos();
    p.values[i] = std::bit_cast<double>(r.u64("value"));
    if (!std::isfinite(p.values[i])) throw ParseError("non-finite parameter value", at);
  }
  return p;
}

void write_snapshot(const std::filesystem::path& path, const ModelParams& params) {
  write_file_atomic(path, encode_snapshot(params));
}

ModelParams read_snapshot(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_snapshot(bytes);
}

}  // namespace fedcvar

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedcvar/numerics.hpp"

namespace fedcvar {

struct Dataset {
  Matrix features;          // N x d
  std::vector<int> labels;  // N entries in [0, num_classes)
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

  /// Throws InvalidArgument on empty data, shape mismatch, bad labels or
  /// non-finite features.
  void validate() const;
};

/// Rows `indices` of `data`, in that order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Per-class sample counts.
std::vector<std::size_t> class_counts(const Dataset& data);

// --- synthetic 2-D blobs -------------------------------------------------

struct SyntheticSpec {
  std::size_t num_classes = 3;
  std::size_t per_class = 100;
  double spread = 0.4;
  std::uint64_t seed = 0;
  double radius = 3.0;
  std::array<double, 2> center{0.0, 0.0};
};

/// Isotropic Gaussian blobs, class c centred at center + radius * (cos, sin)(2 pi c / C).
Dataset gen_synthetic_2d(const SyntheticSpec& spec);
Dataset gen_synthetic_2d(std::size_t num_classes, std::size_t per_class, double spread,
                         std::uint64_t seed);

/// CSV with header `x1,x2,label`.
void write_synthetic_csv(const Dataset& data, std::ostream& out);
Dataset read_synthetic_csv(std::istream& in, std::size_t num_classes = 0);

// --- heterogeneous partitioning ------------------------------------------

struct PartitionSpec {
  std::size_t num_users = 2;             // K
  double frequent_fraction = 90.0;       // M, percent of users
  double frequent_pattern_fraction = 90.0;  // r, percent of classes
  std::uint64_t seed = 0;

  std::size_t frequent_users() const;
  std::size_t frequent_classes(std::size_t num_classes) const;
  /// Throws PartitionError when either group would be empty.
  void validate(std::size_t num_classes) const;
};

struct Partition {
  std::vector<std::vector<std::size_t>> user_indices;  // one list per user
  std::size_t frequent_users = 0;                      // users [0, frequent_users)
  std::vector<int> frequent_classes;
  std::vector<int> rare_classes;
};

/// Frequent users share the lowest-id classes, rare users the rest; within
/// each group samples are dealt round-robin after a seeded shuffle.
Partition partition_indices(const Dataset& data, const PartitionSpec& spec);
std::vector<Dataset> partition_heterogeneous(const Dataset& data, const PartitionSpec& spec);

// --- batching -------------------------------------------------------------

/// Sample indices per batch for one epoch: seeded shuffle keyed by
/// (seed, epoch), then contiguous chunks of `batch_size` (last may be short).
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch);

/// All samples as a single batch, in order.
Batch as_batch(const Dataset& data);

}  // namespace fedcvar

#include "fedcvar/data.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "fedcvar/error.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar {
namespace {

constexpr std::uint64_t kPartitionStream = 0x9a27ULL;
constexpr std::uint64_t kBatchStream = 0xba7cULL;
constexpr std::uint64_t kSyntheticStream = 0x5e7dULL;

std::size_t percent_of(std::size_t n, double pct) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * pct / 100.0));
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw InvalidArgument("dataset is empty");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidArgument("feature rows and label count differ");
  }
  if (num_classes < 2) throw InvalidArgument("dataset needs at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidArgument("label out of range: " + std::to_string(y));
    }
  }
  if (!features.allFinite()) throw InvalidArgument("non-finite feature value");
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) =
        data.features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(data.labels[indices[r]]);
  }
  return out;
}

std::vector<std::size_t> class_counts(const Dataset& data) {
  std::vector<std::size_t> counts(data.num_classes, 0);
  for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Dataset gen_synthetic_2d(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw InvalidArgument("synthetic data needs at least 2 classes");
  if (spec.per_class < 1) throw InvalidArgument("per_class must be >= 1");
  if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread)) {
    throw InvalidArgument("spread must be finite and non-negative");
  }
  Rng rng(derive_seed({spec.seed, kSyntheticStream}));
  Dataset out;
  out.num_classes = spec.num_classes;
  const auto n = static_cast<Eigen::Index>(spec.num_classes * spec.per_class);
  out.features.resize(n, 2);
  out.labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                         static_cast<double>(spec.num_classes);
    const double mx = spec.center[0] + spec.radius * std::cos(angle);
    const double my = spec.center[1] + spec.radius * std::sin(angle);
    for (std::size_t k = 0; k < spec.per_class; ++k, ++row) {
      // Draw both coordinates even at zero spread so the stream position
      // does not depend on spread.
      const double nx = rng.normal();
      const double ny = rng.normal();
      out.features(row, 0) = mx + spec.spread * nx;
      out.features(row, 1) = my + spec.spread * ny;
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Dataset gen_synthetic_2d(std::size_t num_classes, std::size_t per_class, double spread,
                         std::uint64_t seed) {
  return gen_synthetic_2d(SyntheticSpec{num_classes, per_class, spread, seed});
}

void write_synthetic_csv(const Dataset& data, std::ostream& out) {
  if (data.dim() != 2) throw InvalidArgument("CSV export expects 2-D features");
  out << "x1,x2,label\n";
  char buf[96];
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", data.features(i, 0), data.features(i, 1),
                  data.labels[r]);
    out << buf;
  }
}

Dataset read_synthetic_csv(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line) || line != "x1,x2,label") {
    throw InvalidArgument("expected CSV header 'x1,x2,label'");
  }
  std::vector<double> xs;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x1 = 0, x2 = 0;
    int y = 0;
    char c1 = 0, c2 = 0;
    if (!(ss >> x1 >> c1 >> x2 >> c2 >> y) || c1 != ',' || c2 != ',') {
      throw InvalidArgument("malformed CSV row at line " + std::to_string(lineno));
    }
    xs.push_back(x1);
    xs.push_back(x2);
    labels.push_back(y);
  }
  Dataset out;
  out.labels = std::move(labels);
  out.features = Eigen::Map<Matrix>(xs.data(), static_cast<Eigen::Index>(out.labels.size()), 2);
  int max_label = 0;
  for (int y : out.labels) max_label = std::max(max_label, y);
  out.num_classes = num_classes > 0 ? num_classes : static_cast<std::size_t>(max_label) + 1;
  out.validate();
  return out;
}

std::size_t PartitionSpec::frequent_users() const { return percent_of(num_users, frequent_fraction); }

std::size_t PartitionSpec::frequent_classes(std::size_t num_classes) const {
  return percent_of(num_classes, frequent_pattern_fraction);
}

void PartitionSpec::validate(std::size_t num_classes) const {
  if (num_users < 2) throw PartitionError("need at least 2 users");
  if (!(frequent_fraction > 0.0 && frequent_fraction < 100.0)) {
    throw PartitionError("frequent user fraction M must lie in (0, 100)");
  }
  if (!(frequent_pattern_fraction > 0.0 && frequent_pattern_fraction < 100.0)) {
    throw PartitionError("frequent pattern fraction r must lie in (0, 100)");
  }
  const auto fu = frequent_users();
  if (fu < 1 || fu >= num_users) {
    throw PartitionError("M=" + std::to_string(frequent_fraction) + " with K=" +
                         std::to_string(num_users) + " leaves an empty user group");
  }
  const auto fc = frequent_classes(num_classes);
  if (fc < 1 || fc >= num_classes) {
    throw PartitionError("r=" + std::to_string(frequent_pattern_fraction) + " with C=" +
                         std::to_string(num_classes) + " leaves an empty pattern group");
  }
}

Partition partition_indices(const Dataset& data, const PartitionSpec& spec) {
  data.validate();
  spec.validate(data.num_classes);
  const auto counts = class_counts(data);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw PartitionError("class " + std::to_string(c) + " has no samples");
  }

  Partition part;
  part.frequent_users = spec.frequent_users();
  const auto fc = spec.frequent_classes(data.num_classes);
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    (c < fc ? part.frequent_classes : part.rare_classes).push_back(static_cast<int>(c));
  }

  std::vector<std::size_t> frequent_pool, rare_pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (static_cast<std::size_t>(data.labels[i]) < fc ? frequent_pool : rare_pool).push_back(i);
  }

  Rng rng(derive_seed({spec.seed, kPartitionStream}));
  part.user_indices.assign(spec.num_users, {});
  auto deal = [&](std::vector<std::size_t>& pool, std::size_t first_user, std::size_t users) {
    rng.shuffle(std::span(pool));
    for (std::size_t k = 0; k < pool.size(); ++k) {
      part.user_indices[first_user + k % users].push_back(pool[k]);
    }
  };
  deal(frequent_pool, 0, part.frequent_users);
  deal(rare_pool, part.frequent_users, spec.num_users - part.frequent_users);

  for (std::size_t u = 0; u < spec.num_users; ++u) {
    if (part.user_indices[u].empty()) {
      throw PartitionError("user " + std::to_string(u) + " would receive no samples");
    }
  }
  return part;
}

std::vector<Dataset> partition_heterogeneous(const Dataset& data, const PartitionSpec& spec) {
  const auto part = partition_indices(data, spec);
  std::vector<Dataset> shards;
  shards.reserve(part.user_indices.size());
  for (const auto& idx : part.user_indices) shards.push_back(subset(data, idx));
  return shards;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1 || batch_size > n) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) + " outside [1, " +
                          std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, epoch, kBatchStream}));
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                           std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(data.size(), batch_size, seed, epoch)) {
    Dataset part = subset(data, idx);
    out.push_back(Batch{std::move(part.features), std::move(part.labels)});
  }
  return out;
}

Batch as_batch(const Dataset& data) { return Batch{data.features, data.labels}; }

}  // namespace fedcvar

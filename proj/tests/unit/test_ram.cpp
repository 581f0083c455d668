#include <doctest.h>

#include <cstring>
#include <numeric>
#include <type_traits>

#include "fedcvar/error.hpp"
#include "fedcvar/ram.hpp"

using namespace fedcvar;
using namespace fedcvar::ram;

namespace {

// The weights are private to the channel; tests read them the same way the
// run-metadata writer does.
std::vector<double> weights_of(const RamDistribution& r) { return RamAuditor::weights(r); }

template <class T>
concept HasPublicWeights = requires(const T& r) { r.weights(); };

}  // namespace

static_assert(!HasPublicWeights<RamDistribution>, "selection weights must not be publicly readable");
static_assert(!std::is_default_constructible_v<RamDistribution>);

TEST_CASE("make_ram normalizes and validates") {
  const std::vector<double> rho{0.5, 0.4, 0.1};
  CHECK(weights_of(make_ram(rho)) == rho);
  CHECK(weights_of(make_ram(std::vector<double>{2, 2})) == std::vector<double>{0.5, 0.5});
  CHECK(weights_of(make_ram(std::vector<double>{1, 0, 0})) == std::vector<double>{1, 0, 0});
  CHECK(make_ram(rho).num_users() == 3);

  CHECK_THROWS_AS(make_ram(std::vector<double>{}), InvalidDistribution);
  CHECK_THROWS_AS(make_ram(std::vector<double>{0, 0}), InvalidDistribution);
  CHECK_THROWS_AS(make_ram(std::vector<double>{0.5, -0.1}), InvalidDistribution);
  CHECK_THROWS_AS(make_ram(std::vector<double>{0.5, std::nan("")}), InvalidDistribution);
  CHECK_THROWS_AS(make_ram(std::vector<double>{1, INFINITY}), InvalidDistribution);
}

TEST_CASE("degenerate channels") {
  Rng rng(1);
  const auto point0 = make_ram(std::vector<double>{1, 0, 0});
  const auto point2 = make_ram(std::vector<double>{0, 0, 3});
  const auto single = make_ram(std::vector<double>{0.7});
  for (int i = 0; i < 2000; ++i) {
    CHECK(sample(point0, rng) == 0);
    CHECK(sample(point2, rng) == 2);
    CHECK(sample(single, rng) == 0);
  }
  // Zero-weight users in the middle and at the end are never drawn.
  const auto gaps = make_ram(std::vector<double>{0.3, 0, 0.7, 0});
  for (int i = 0; i < 5000; ++i) {
    const auto k = sample(gaps, rng);
    CHECK((k == 0 || k == 2));
  }
}

TEST_CASE("empirical frequencies over 100,000 draws are within 0.01 of rho") {
  const std::vector<double> rho{0.5, 0.4, 0.1};
  const auto ram = make_ram(rho);
  Rng rng(2024);
  std::vector<double> count(3, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) count[sample(ram, rng)] += 1.0;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(count[k] / n - rho[k]) <= 0.01);
}

TEST_CASE("skewed weights") {
  SUBCASE("TailThree on 30 users") {
    const auto w = skewed_weights(30, SkewKind::TailThree, 0.95);
    REQUIRE(w.size() == 30);
    CHECK(w[27] == 0.0107);
    CHECK(w[28] == 0.0078);
    CHECK(w[29] == 0.0053);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t i = 1; i < 27; ++i) CHECK(w[i] / w[i - 1] == doctest::Approx(0.95).epsilon(1e-12));
  }
  SUBCASE("Geometric") {
    const auto two = skewed_weights(2, SkewKind::Geometric, 0.5);
    CHECK(two[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(two[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const auto three = skewed_weights(3, SkewKind::Geometric, 0.8);
    CHECK(three[1] / three[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(three[2] / three[0] == doctest::Approx(0.64).epsilon(1e-14));
    CHECK(three[0] + three[1] + three[2] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("domain") {
    CHECK_THROWS_AS(skewed_weights(2, SkewKind::Geometric, 1.0), InvalidArgument);
    CHECK_THROWS_AS(skewed_weights(2, SkewKind::Geometric, 0.0), InvalidArgument);
    CHECK_THROWS_AS(skewed_weights(1, SkewKind::Geometric, 0.5), InvalidArgument);
    CHECK_THROWS_AS(skewed_weights(3, SkewKind::TailThree, 0.5), InvalidArgument);
    CHECK_NOTHROW(skewed_weights(4, SkewKind::TailThree, 0.5));
  }
}

TEST_CASE("relay passes the selected pair through bit for bit") {
  const auto arch = ModelArch::logreg(2, 3);
  std::vector<LocalState> candidates;
  for (int u = 0; u < 3; ++u) {
    auto p = init_params(arch, static_cast<std::uint64_t>(u));
    p.values[0] = -0.0;  // sign of zero must survive too
    candidates.push_back({p, 0.1 * u + 1e-17});
  }
  const auto point = make_ram(std::vector<double>{0, 0, 1});
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto r = relay(point, rng, candidates);
    CHECK(r.index == 2);
    CHECK(std::memcmp(r.state.theta.values.data(), candidates[2].theta.values.data(),
                      sizeof(double) * candidates[2].theta.values.size()) == 0);
    CHECK(std::signbit(r.state.theta.values[0]));
    CHECK(r.state.t == candidates[2].t);
  }
  CHECK_THROWS_AS(relay(point, rng, std::span(candidates).first(2)), InvalidArgument);
}

TEST_CASE("selection sequences are reproducible for a fixed seed") {
  const auto ram = make_ram(std::vector<double>{0.2, 0.3, 0.5});
  auto draw = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> s;
    for (int i = 0; i < 500; ++i) s.push_back(sample(ram, rng));
    return s;
  };
  CHECK(draw(9) == draw(9));
  CHECK(draw(9) != draw(10));
}

TEST_CASE("portable RNG helpers") {
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(4);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
  CHECK(derive_seed({1, 2}) != derive_seed({2, 1}));
  CHECK(derive_seed({1, 2}) == derive_seed({1, 2}));
}

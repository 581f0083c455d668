#include "fedcvar/checks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedcvar/numerics.hpp"
#include "fedcvar/risk.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar::checks {
namespace {

// Smallest |pre-activation| over all hidden units and rows. Central
// differences across a ReLU kink are meaningless, so such draws are redone.
double min_hidden_margin(const ModelParams& p, const Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  Matrix a = x;
  std::size_t off = 0;
  const auto layers = p.arch.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto [in, out] = layers[l];
    Eigen::Map<const Matrix> w(p.values.data() + off, static_cast<Eigen::Index>(out),
                               static_cast<Eigen::Index>(in));
    Eigen::Map<const Eigen::RowVectorXd> b(p.values.data() + off + in * out,
                                           static_cast<Eigen::Index>(out));
    off += in * out + out;
    Matrix z = (a * w.transpose()).rowwise() + b;
    margin = std::min(margin, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return margin;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

GradCheckReport check_composite_gradients(std::size_t trials, std::uint64_t seed) {
  GradCheckReport report;
  Rng rng(derive_seed({seed, 0x9c4ec}));
  constexpr double eps = 1e-6;
  while (report.trials < trials) {
    const std::size_t d = 1 + rng.below(5);
    const std::size_t C = 2 + rng.below(4);
    ModelArch arch = ModelArch::logreg(d, C);
    if (rng.below(2) == 1) {
      std::vector<std::size_t> hidden(1 + rng.below(2));
      for (auto& h : hidden) h = 2 + rng.below(5);
      arch = ModelArch::mlp(d, hidden, C);
    }
    ModelParams p = init_params(arch, rng.next_u64());
    for (double& v : p.values) v += 0.3 * rng.normal();

    Batch batch;
    const std::size_t n = 1 + rng.below(8);
    batch.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < batch.features.size(); ++i) batch.features.data()[i] = rng.normal();
    for (std::size_t i = 0; i < n; ++i) batch.labels.push_back(static_cast<int>(rng.below(C)));
    if (min_hidden_margin(p, batch.features) < 1e-3) continue;

    risk::RiskConfig rc{rng.uniform(0.05, 1.0), rng.uniform(0.0, 1.0)};
    const auto lg = loss_and_grad(p, batch);
    const double gap = rng.uniform(0.05, 1.0);
    const double t = rng.below(2) == 0 ? lg.loss - gap : lg.loss + gap;

    const auto g = risk::composite_grads(lg.loss, lg.grad, t, rc);
    std::vector<double> analytic = g.grad_theta;
    analytic.push_back(g.grad_t);

    std::vector<double> numeric;
    ModelParams q = p;
    for (std::size_t j = 0; j < q.values.size(); ++j) {
      const double keep = q.values[j];
      q.values[j] = keep + eps;
      const double up = risk::composite_loss(batch_loss(q, batch), t, rc);
      q.values[j] = keep - eps;
      const double down = risk::composite_loss(batch_loss(q, batch), t, rc);
      q.values[j] = keep;
      numeric.push_back((up - down) / (2 * eps));
    }
    numeric.push_back((risk::composite_loss(lg.loss, t + eps, rc) -
                       risk::composite_loss(lg.loss, t - eps, rc)) /
                      (2 * eps));

    std::vector<double> diff(analytic.size());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = analytic[j] - numeric[j];
    const double scale = std::max({norm(analytic), norm(numeric), 1e-8});
    report.max_rel_err = std::max(report.max_rel_err, norm(diff) / scale);
    ++report.trials;
  }
  return report;
}

CvarCheckReport check_cvar(std::size_t trials, std::uint64_t seed) {
  CvarCheckReport report;
  Rng rng(derive_seed({seed, 0xc7a5}));
  for (std::size_t k = 0; k < trials; ++k) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> values(n), probs(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = rng.uniform(-10.0, 10.0);
      probs[i] = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.01, 1.0);
      total += probs[i];
    }
    if (total == 0.0) probs[0] = total = 1.0;
    for (double& p : probs) p /= total;

    const double alpha = rng.uniform(0.01, 1.0);
    const double exact = risk::cvar_discrete(values, probs, alpha);
    const double lo = *std::min_element(values.begin(), values.end()) - 1.0;
    const double hi = *std::max_element(values.begin(), values.end()) + 1.0;
    const double grid = risk::cvar_grid_oracle(values, probs, alpha, lo, hi, 1e-6);
    report.max_grid_err = std::max(report.max_grid_err, std::abs(exact - grid));

    double mean = 0.0, mx = -std::numeric_limits<double>::infinity(), min_pos = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += probs[i] * values[i];
      if (probs[i] > 0.0) {
        mx = std::max(mx, values[i]);
        min_pos = std::min(min_pos, probs[i]);
      }
    }
    report.max_mean_err =
        std::max(report.max_mean_err, std::abs(risk::cvar_discrete(values, probs, 1.0) - mean));
    const double small = min_pos * rng.uniform(0.01, 1.0);
    report.max_limit_err =
        std::max(report.max_limit_err, std::abs(risk::cvar_discrete(values, probs, small) - mx));
    ++report.trials;
  }
  return report;
}

}  // namespace fedcvar::checks

#include "fedcvar/numerics.hpp"

#include <cmath>

#include "fedcvar/error.hpp"
#include "fedcvar/rng.hpp"

namespace fedcvar {
namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

void check_params(const ModelParams& params) {
  if (params.values.size() != params.arch.param_count()) {
    throw InvalidArgument("parameter vector has " + std::to_string(params.values.size()) +
                          " entries, architecture needs " +
                          std::to_string(params.arch.param_count()));
  }
}

void check_batch(const ModelParams& params, const Batch& batch) {
  if (batch.labels.empty()) throw InvalidArgument("empty batch");
  if (static_cast<std::size_t>(batch.features.rows()) != batch.labels.size()) {
    throw InvalidArgument("batch feature rows and label count differ");
  }
  if (static_cast<std::size_t>(batch.features.cols()) != params.arch.input_dim) {
    throw InvalidArgument("feature width " + std::to_string(batch.features.cols()) +
                          " does not match input_dim " + std::to_string(params.arch.input_dim));
  }
  const auto classes = static_cast<int>(params.arch.num_classes);
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) throw InvalidArgument("label out of range: " + std::to_string(y));
  }
}

// Row-wise log-sum-exp, stabilized by the row maximum.
Eigen::VectorXd log_sum_exp(const Matrix& logits) {
  const Eigen::VectorXd mx = logits.rowwise().maxCoeff();
  return mx.array() + (logits.colwise() - mx).array().exp().rowwise().sum().log();
}

}  // namespace

ModelArch ModelArch::logreg(std::size_t input_dim, std::size_t num_classes) {
  ModelArch a{ModelKind::LogReg, input_dim, {}, num_classes};
  a.validate();
  return a;
}

ModelArch ModelArch::mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                         std::size_t num_classes) {
  ModelArch a{ModelKind::Mlp2, input_dim, std::move(hidden), num_classes};
  a.validate();
  return a;
}

void ModelArch::validate() const {
  if (input_dim < 1) throw InvalidArgument("input_dim must be >= 1");
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (kind == ModelKind::LogReg && !hidden_dims.empty()) {
    throw InvalidArgument("LogReg takes no hidden layers");
  }
  if (kind == ModelKind::Mlp2 && hidden_dims.empty()) {
    throw InvalidArgument("Mlp2 needs at least one hidden layer");
  }
  for (auto h : hidden_dims) {
    if (h < 1) throw InvalidArgument("hidden layer width must be >= 1");
  }
}

std::vector<LayerShape> ModelArch::layers() const {
  std::vector<LayerShape> out;
  std::size_t in = input_dim;
  for (auto h : hidden_dims) {
    out.push_back({in, h});
    in = h;
  }
  out.push_back({in, num_classes});
  return out;
}

std::size_t ModelArch::param_count() const {
  std::size_t q = 0;
  for (const auto& l : layers()) q += l.out * (l.in + 1);
  return q;
}

std::string ModelArch::describe() const {
  std::string s = kind == ModelKind::LogReg ? "logreg(" : "mlp2(";
  s += std::to_string(input_dim);
  for (auto h : hidden_dims) s += "-" + std::to_string(h);
  s += "-" + std::to_string(num_classes) + ")";
  return s;
}

ModelParams init_params(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
  Rng rng(derive_seed({seed, 0x1a7e5ULL}));
  std::size_t offset = 0;
  for (const auto& l : arch.layers()) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (std::size_t k = 0; k < l.in * l.out; ++k) p.values[offset + k] = rng.uniform(-scale, scale);
    offset += l.out * (l.in + 1);
  }
  return p;
}

Matrix forward(const ModelParams& params, const Matrix& features) {
  check_params(params);
  if (static_cast<std::size_t>(features.cols()) != params.arch.input_dim) {
    throw InvalidArgument("feature width " + std::to_string(features.cols()) +
                          " does not match input_dim " + std::to_string(params.arch.input_dim));
  }
  const auto shapes = params.arch.layers();
  Matrix act = features;
  std::size_t offset = 0;
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const auto [in, out] = shapes[li];
    ConstMatMap w(params.values.data() + offset, out, in);
    ConstVecMap b(params.values.data() + offset + in * out, out);
    Matrix z = act * w.transpose();
    z.rowwise() += b;
    if (li + 1 < shapes.size()) z = z.cwiseMax(0.0);
    act = std::move(z);
    offset += out * (in + 1);
  }
  return act;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Eigen::VectorXd lse = log_sum_exp(logits);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) total += lse[r] - logits(r, labels[r]);
  const double loss = total / static_cast<double>(labels.size());
  if (!std::isfinite(loss)) throw NumericalError("non-finite cross-entropy");
  return loss;
}

double batch_loss(const ModelParams& params, const Batch& batch) {
  check_batch(params, batch);
  return cross_entropy(forward(params, batch.features), batch.labels);
}

double loss_and_grad(const ModelParams& params, const Batch& batch, std::span<double> grad) {
  check_params(params);
  check_batch(params, batch);
  if (grad.size() != params.values.size()) throw InvalidArgument("gradient buffer size mismatch");

  const auto shapes = params.arch.layers();
  const std::size_t depth = shapes.size();
  std::vector<std::size_t> offsets(depth);
  for (std::size_t li = 0, off = 0; li < depth; ++li) {
    offsets[li] = off;
    off += shapes[li].out * (shapes[li].in + 1);
  }

  // Forward pass, keeping pre-activations of hidden layers.
  std::vector<Matrix> inputs(depth);
  std::vector<Matrix> pre(depth);
  const Matrix* act = &batch.features;
  for (std::size_t li = 0; li < depth; ++li) {
    const auto [in, out] = shapes[li];
    ConstMatMap w(params.values.data() + offsets[li], out, in);
    ConstVecMap b(params.values.data() + offsets[li] + in * out, out);
    pre[li].noalias() = *act * w.transpose();
    pre[li].rowwise() += b;
    if (li + 1 < depth) {
      inputs[li + 1] = pre[li].cwiseMax(0.0);
      act = &inputs[li + 1];
    }
  }
  const Matrix& logits = pre[depth - 1];
  const auto rows = static_cast<Eigen::Index>(batch.labels.size());
  const double inv_rows = 1.0 / static_cast<double>(rows);

  const Eigen::VectorXd lse = log_sum_exp(logits);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) total += lse[r] - logits(r, batch.labels[r]);
  const double loss = total * inv_rows;
  if (!std::isfinite(loss)) throw NumericalError("non-finite cross-entropy");

  // dL/dlogits = (softmax - onehot) / rows
  Matrix delta = (logits.colwise() - lse).array().exp().matrix();
  for (Eigen::Index r = 0; r < rows; ++r) delta(r, batch.labels[r]) -= 1.0;
  delta *= inv_rows;

  for (std::size_t li = depth; li-- > 0;) {
    const auto [in, out] = shapes[li];
    const Matrix& layer_in = li == 0 ? batch.features : inputs[li];
    MatMap gw(grad.data() + offsets[li], out, in);
    VecMap gb(grad.data() + offsets[li] + in * out, out);
    gw.noalias() = delta.transpose() * layer_in;
    gb = delta.colwise().sum();
    if (li > 0) {
      ConstMatMap w(params.values.data() + offsets[li], out, in);
      Matrix back = delta * w;
      // ReLU subgradient at 0 is taken as 0.
      delta = (pre[li - 1].array() > 0.0).select(back, 0.0);
    }
  }

  if (!Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size()).allFinite()) {
    throw NumericalError("non-finite gradient");
  }
  return loss;
}

LossGrad loss_and_grad(const ModelParams& params, const Batch& batch) {
  LossGrad out;
  out.grad.assign(params.values.size(), 0.0);
  out.loss = loss_and_grad(params, batch, out.grad);
  return out;
}

std::vector<double> finite_diff_grad(const ModelParams& params, const Batch& batch, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  check_params(params);
  std::vector<double> g(params.values.size());
  ModelParams probe = params;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double orig = probe.values[j];
    probe.values[j] = orig + eps;
    const double up = batch_loss(probe, batch);
    probe.values[j] = orig - eps;
    const double down = batch_loss(probe, batch);
    probe.values[j] = orig;
    g[j] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace fedcvar

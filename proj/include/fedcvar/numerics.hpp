#pragma once

// Small differentiable classifiers over a flat parameter vector.
//
// Parameter layout: for each layer in order, the weight matrix (out x in,
// row-major) followed by its bias vector (out). Hidden layers use ReLU; the
// final layer produces raw logits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fedcvar {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { LogReg, Mlp2 };

struct LayerShape {
  std::size_t in;
  std::size_t out;
};

struct ModelArch {
  ModelKind kind = ModelKind::LogReg;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;  // empty for LogReg
  std::size_t num_classes = 2;

  static ModelArch logreg(std::size_t input_dim, std::size_t num_classes);
  static ModelArch mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                       std::size_t num_classes);

  /// Throws InvalidArgument when the descriptor is inconsistent.
  void validate() const;
  std::vector<LayerShape> layers() const;
  std::size_t param_count() const;
  std::string describe() const;

  bool operator==(const ModelArch&) const = default;
};

struct ModelParams {
  ModelArch arch;
  std::vector<double> values;
};

/// Labeled mini-batch; features are rows.
struct Batch {
  Matrix features;
  std::vector<int> labels;
};

/// Weights uniform in +-1/sqrt(fan_in) per layer, biases zero.
ModelParams init_params(const ModelArch& arch, std::uint64_t seed);

/// Logits (rows x num_classes).
Matrix forward(const ModelParams& params, const Matrix& features);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelParams& params, const Batch& batch);

/// Same as above, writing the gradient into `grad` (size param_count()).
double loss_and_grad(const ModelParams& params, const Batch& batch, std::span<double> grad);

/// Mean softmax cross-entropy only.
double batch_loss(const ModelParams& params, const Batch& batch);

/// Central-difference gradient of batch_loss; the reference used to check
/// loss_and_grad.
std::vector<double> finite_diff_grad(const ModelParams& params, const Batch& batch, double eps);

/// Mean cross-entropy for given logits; exposed for the shift-invariance checks.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

}  // namespace fedcvar

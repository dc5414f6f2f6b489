// Copyright 2026 The poselayout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poselayout/common.hpp"

namespace poselayout::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Vector value;  // row-major flattening of `shape`
  Vector grad;   // empty until touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Vector&)> backward;
  const char* op = "leaf";

  Vector& grad_buffer() {
    if (grad.size() != value.size()) grad = Vector::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

/// Dense N-d double array taking part in a reverse-mode differentiation graph.
///
/// Tensors are immutable handles once produced by an op; leaves (inputs and
/// parameters) may have their values edited between graph constructions.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vector value, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const { return node_->shape.at(axis); }
  Index numel() const { return node_->value.size(); }

  const Vector& value() const { return node_->value; }
  /// Mutable view of a leaf's data. Do not edit tensors produced by ops
  /// while a graph that uses them is alive.
  Vector& mutable_value() { return node_->value; }
  double item() const;
  /// Row-major [rows, numel/rows] view of the data.
  Eigen::Map<const RowMatrix> matrix(Index rows) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Gradient accumulated by backward(); zeros when never touched.
  Vector grad() const;
  void zero_grad() const { node_->grad.resize(0); }

  /// Reverse sweep from a scalar output with seed 1.
  void backward() const;
  /// Reverse sweep with an explicit seed of the output's shape.
  void backward(const Vector& seed) const;

  /// Same value, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ops created on this thread while alive record no graph and never require
/// gradients.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

/// Trainable tensor with a stable checkpoint name.
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Non-trainable state saved with a model (batch-norm running statistics).
struct Buffer {
  std::string name;
  Vector* data;
};

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Hadamard product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// x[N, C] + b[C] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
/// Multiplies every row x[n, ...] by the constant w[n].
Tensor scale_rows(const Tensor& x, const Vector& w);

// ---- linear algebra ------------------------------------------------------------

/// A[m, k] * B[k, n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Arithmetic used inside conv2d's matrix products. Inputs, outputs and
/// gradients stay double; kSingle rounds operands to float for speed.
enum class ConvPrecision { kDouble, kSingle };

ConvPrecision current_conv_precision();

/// Sets the calling thread's convolution precision until destruction.
class ConvPrecisionScope {
 public:
  explicit ConvPrecisionScope(ConvPrecision p);
  ~ConvPrecisionScope();
  ConvPrecisionScope(const ConvPrecisionScope&) = delete;
  ConvPrecisionScope& operator=(const ConvPrecisionScope&) = delete;

 private:
  ConvPrecision previous_;
};

/// Stride-1 convolution of x[N, Cin, H, W] with k[Cout, Cin, kh, kw] and
/// symmetric zero padding. `bias` (shape [Cout]) may be undefined. The
/// backward pass uses the precision that was active during the forward pass.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, int padding);

/// Bilinear upsampling by an integer factor, half-pixel (align-corners-false)
/// sampling with edge clamping. factor 1 returns x unchanged.
Tensor upsample_bilinear(const Tensor& x, int factor);
/// Non-overlapping average pooling; H and W must be multiples of factor.
Tensor avg_pool2d(const Tensor& x, int factor);

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
  /// Optional per-sample weights (length N). In training mode statistics are
  /// weighted means over samples; samples with weight 0 do not contribute.
  const Vector* sample_weights = nullptr;
};

/// Running statistics updated in training mode (biased variance).
struct RunningStats {
  Eigen::Ref<Vector> mean;
  Eigen::Ref<Vector> var;
};

/// Per-channel normalization of x[N, C] or x[N, C, H, W].
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats stats,
                 const BatchNormOptions& opt);

// ---- indexing --------------------------------------------------------------------

/// out[e] = x[index[e]] along axis 0.
Tensor gather_rows(const Tensor& x, const std::vector<int>& index);
/// out[n] = sum over e with index[e] == n of x[e]; out has `count` rows.
Tensor segment_sum(const Tensor& x, const std::vector<int>& index, Index count);
/// out[n] = sum over e with dst[e] == n of silu(receiver[dst[e]] + sender[src[e]]),
/// silu(x) = x * sigmoid(x). Equals segment_sum of the gated gathered sum
/// without materializing per-edge tensors.
Tensor gated_edge_sum(const Tensor& receiver, const Tensor& sender, const std::vector<int>& src,
                      const std::vector<int>& dst);
/// out[g] = elementwise max of rows offsets[g] .. offsets[g+1]-1. Empty segments give 0.
Tensor segment_max(const Tensor& x, const std::vector<int>& offsets);
/// Rows of table[V+1, D]; id kMissing selects the reserved last row.
/// Throws DataError for ids outside [0, V).
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& x, int axis, Index offset, Index length);
Tensor reshape(const Tensor& x, Shape shape);

// ---- reductions and losses ------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean binary cross entropy of pred in (0,1) against a constant target.
/// pred is clamped to [1e-12, 1 - 1e-12].
Tensor bce_loss(const Tensor& pred, const Vector& target);

/// Per-graph mean of outer products: f[N, C] and masks m[N, H, W] (or
/// [N, 1, H, W]) give out[G, C, H, W] with
/// out[g] = (1/n_g) * sum over nodes i of graph g of f_i (x) m_i.
/// Graph g owns rows offsets[g] .. offsets[g+1]-1. Throws DataError for an empty graph.
Tensor layout_assemble(const Tensor& f, const Tensor& m, const std::vector<int>& offsets);

// ---- verification ---------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_input = -1;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f()` with respect to each
/// tensor in `inputs` against central differences with step eps. Relative
/// error is |a - b| / max(1, |a|, |b|). When max_components > 0, a random
/// subset of that many components per input is checked.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps = 1e-5,
                           Index max_components = 0, std::uint64_t seed = 0);

// ---- checkpoint container --------------------------------------------------------

struct NamedArray {
  std::string name;
  Shape shape;
  Vector data;
};

/// Little-endian container of named arrays with shape headers.
void save_arrays(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::string& path);

}  // namespace poselayout::ad

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

#include "poselayout/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "poselayout/graph.hpp"

namespace poselayout::ad {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

thread_local bool grad_disabled = false;

NodePtr new_node(Shape shape, Vector value, const char* op, std::initializer_list<const Tensor*> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  if (grad_disabled) return n;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const Tensor* t : inputs) {
      if (t->defined()) n->parents.push_back(t->node());
    }
  }
  return n;
}

// Gradient accumulator of a parent, or nullptr when it does not need one.
Vector* grad_of(Node* p) { return p && p->requires_grad ? &p->grad_buffer() : nullptr; }

Eigen::Map<const RowMatrix> as_matrix(const Vector& v, Index rows, Index cols) {
  return Eigen::Map<const RowMatrix>(v.data(), rows, cols);
}
Eigen::Map<RowMatrix> as_matrix(Vector& v, Index rows, Index cols) { return Eigen::Map<RowMatrix>(v.data(), rows, cols); }

}  // namespace

NoGradScope::NoGradScope() : previous_(grad_disabled) { grad_disabled = true; }
NoGradScope::~NoGradScope() { grad_disabled = previous_; }

// ---- Tensor ----------------------------------------------------------------------

Tensor::Tensor(Shape shape, Vector value, bool requires_grad) {
  if (ad::numel(shape) != value.size()) {
    throw std::invalid_argument("Tensor: value length " + std::to_string(value.size()) + " does not match shape " +
                                to_string(shape));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = ad::numel(shape);
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::constant(Shape shape, double v, bool requires_grad) {
  const Index n = ad::numel(shape);
  return Tensor(std::move(shape), Vector::Constant(n, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({}, Vector::Constant(1, v), requires_grad); }

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad) {
  Vector v(m.size());
  as_matrix(v, m.rows(), m.cols()) = m;
  return Tensor({m.rows(), m.cols()}, std::move(v), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

Eigen::Map<const RowMatrix> Tensor::matrix(Index rows) const {
  const Vector& v = node_->value;
  return as_matrix(v, rows, rows == 0 ? 0 : numel() / rows);
}

Vector Tensor::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return Vector::Zero(node_->value.size());
}

void Tensor::backward() const {
  if (numel() != 1) throw std::invalid_argument("backward: output is not a scalar");
  backward(Vector::Ones(1));
}

void Tensor::backward(const Vector& seed) const {
  if (seed.size() != numel()) throw std::invalid_argument("backward: seed shape mismatch");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(n->grad);
  }
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

// ---- elementwise -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto out = new_node(a.shape(), a.value() + b.value(), "add", {&a, &b});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), pb = b.node().get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += g;
      if (auto* gb = grad_of(pb)) *gb += g;
    };
  }
  return Tensor::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto out = new_node(a.shape(), a.value() - b.value(), "sub", {&a, &b});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), pb = b.node().get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += g;
      if (auto* gb = grad_of(pb)) *gb -= g;
    };
  }
  return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto out = new_node(a.shape(), a.value().cwiseProduct(b.value()), "mul", {&a, &b});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), pb = b.node().get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += g.cwiseProduct(pb->value);
      if (auto* gb = grad_of(pb)) *gb += g.cwiseProduct(pa->value);
    };
  }
  return Tensor::wrap(out);
}

Tensor scale(const Tensor& a, double s) {
  auto out = new_node(a.shape(), a.value() * s, "scale", {&a});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), s](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += g * s;
    };
  }
  return Tensor::wrap(out);
}

Tensor relu(const Tensor& a) {
  auto out = new_node(a.shape(), a.value().cwiseMax(0.0), "relu", {&a});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += (pa->value.array() > 0.0).select(g, 0.0);
    };
  }
  return Tensor::wrap(out);
}

Tensor sigmoid(const Tensor& a) {
  Vector v = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  auto out = new_node(a.shape(), std::move(v), "sigmoid", {&a});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), self = out.get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += (g.array() * self->value.array() * (1.0 - self->value.array())).matrix();
    };
  }
  return Tensor::wrap(out);
}

Tensor tanh(const Tensor& a) {
  Vector v = a.value().array().tanh().matrix();
  auto out = new_node(a.shape(), std::move(v), "tanh", {&a});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), self = out.get()](const Vector& g) {
      if (auto* ga = grad_of(pa)) *ga += (g.array() * (1.0 - self->value.array().square())).matrix();
    };
  }
  return Tensor::wrap(out);
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || b.dim(0) != x.dim(1)) {
    shape_error("add_row_bias", to_string(x.shape()) + " + " + to_string(b.shape()));
  }
  const Index rows = x.dim(0), cols = x.dim(1);
  Vector v(x.numel());
  as_matrix(v, rows, cols) = x.matrix(rows).rowwise() + b.value().transpose();
  auto out = new_node(x.shape(), std::move(v), "add_row_bias", {&x, &b});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), pb = b.node().get(), rows, cols](const Vector& g) {
      if (auto* gx = grad_of(px)) *gx += g;
      if (auto* gb = grad_of(pb)) *gb += as_matrix(g, rows, cols).colwise().sum().transpose();
    };
  }
  return Tensor::wrap(out);
}

Tensor scale_rows(const Tensor& x, const Vector& w) {
  if (x.ndim() < 1 || x.dim(0) != w.size()) shape_error("scale_rows", "weight length must equal leading dimension");
  const Index rows = x.dim(0), cols = rows ? x.numel() / rows : 0;
  Vector v(x.numel());
  as_matrix(v, rows, cols) = w.asDiagonal() * x.matrix(rows);
  auto out = new_node(x.shape(), std::move(v), "scale_rows", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), w, rows, cols](const Vector& g) {
      if (auto* gx = grad_of(px)) as_matrix(*gx, rows, cols) += w.asDiagonal() * as_matrix(g, rows, cols);
    };
  }
  return Tensor::wrap(out);
}

// ---- linear algebra ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Vector v(m * n);
  as_matrix(v, m, n).noalias() = a.matrix(m) * b.matrix(k);
  auto out = new_node({m, n}, std::move(v), "matmul", {&a, &b});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), pb = b.node().get(), m, k, n](const Vector& g) {
      const auto gm = as_matrix(g, m, n);
      if (auto* ga = grad_of(pa)) as_matrix(*ga, m, k).noalias() += gm * as_matrix(pb->value, k, n).transpose();
      if (auto* gb = grad_of(pb)) as_matrix(*gb, k, n).noalias() += as_matrix(pa->value, m, k).transpose() * gm;
    };
  }
  return Tensor::wrap(out);
}

namespace {

thread_local ConvPrecision conv_precision = ConvPrecision::kDouble;

// Stride-1 convolution over zero-padded planes laid side by side: sample b of
// a chunk occupies columns [b*P, (b+1)*P), P = hp*wp, and output pixel
// (oy, ox) reads tap t at column b*P + oy*wp + ox + offset(t). Columns that do
// not correspond to an output pixel are computed and discarded.
struct ConvGeometry {
  Index n, cin, h, w, cout, kh, kw, pad, ho, wo;
  Index hp() const { return h + 2 * pad; }
  Index wp() const { return w + 2 * pad; }
  Index plane() const { return hp() * wp(); }
  Index plane_in() const { return h * w; }
  Index plane_out() const { return ho * wo; }
  Index taps() const { return kh * kw; }
  Index tail() const { return (kh - 1) * wp() + kw - 1; }
  Index tap_offset(Index t) const { return (t / kw) * wp() + t % kw; }
  Index samples_per_chunk() const {
    const Index budget = Index{1} << 18;
    return std::clamp<Index>(budget / std::max<Index>(1, std::max(cin, taps() * cout) * plane()), 1, n);
  }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// [taps * cout, cin] with row t * cout + o holding kernel[o, :, t].
template <typename S>
Mat<S> stacked_kernel(const double* k, const ConvGeometry& g) {
  Mat<S> m(g.taps() * g.cout, g.cin);
  for (Index t = 0; t < g.taps(); ++t) {
    for (Index o = 0; o < g.cout; ++o) {
      for (Index c = 0; c < g.cin; ++c) m(t * g.cout + o, c) = static_cast<S>(k[(o * g.cin + c) * g.taps() + t]);
    }
  }
  return m;
}

template <typename S>
void pad_into(const double* x, const ConvGeometry& g, Mat<S>& xp, Index b) {
  for (Index c = 0; c < g.cin; ++c) {
    S* dst = xp.row(c).data() + b * g.plane();
    const double* src = x + c * g.plane_in();
    for (Index y = 0; y < g.h; ++y) {
      std::transform(src + y * g.w, src + (y + 1) * g.w, dst + (y + g.pad) * g.wp() + g.pad,
                     [](double v) { return static_cast<S>(v); });
    }
  }
}

template <typename S>
void conv_forward(const double* x, const double* k, const double* bias, const ConvGeometry& g, double* out) {
  const Index chunk = g.samples_per_chunk();
  const Mat<S> kstack = stacked_kernel<S>(k, g);
  Mat<S> xp = Mat<S>::Zero(g.cin, chunk * g.plane() + g.tail());
  Mat<S> z(g.taps() * g.cout, chunk * g.plane() + g.tail());
  Eigen::Matrix<S, Eigen::Dynamic, 1> acc(chunk * g.plane());
  for (Index s0 = 0; s0 < g.n; s0 += chunk) {
    const Index bc = std::min(chunk, g.n - s0);
    const Index cols = bc * g.plane();
    for (Index b = 0; b < bc; ++b) pad_into<S>(x + (s0 + b) * g.cin * g.plane_in(), g, xp, b);
    z.leftCols(cols + g.tail()).noalias() = kstack * xp.leftCols(cols + g.tail());
    for (Index o = 0; o < g.cout; ++o) {
      auto a = acc.head(cols);
      a = z.row(o).segment(g.tap_offset(0), cols).transpose();
      for (Index t = 1; t < g.taps(); ++t) a += z.row(t * g.cout + o).segment(g.tap_offset(t), cols).transpose();
      const double shift = bias ? bias[o] : 0.0;
      for (Index b = 0; b < bc; ++b) {
        double* dst = out + ((s0 + b) * g.cout + o) * g.plane_out();
        const S* src = acc.data() + b * g.plane();
        for (Index oy = 0; oy < g.ho; ++oy) {
          for (Index ox = 0; ox < g.wo; ++ox) dst[oy * g.wo + ox] = static_cast<double>(src[oy * g.wp() + ox]) + shift;
        }
      }
    }
  }
}

// Accumulates into gx and gk when they are non-null.
template <typename S>
void conv_backward(const double* grad, const double* x, const double* k, const ConvGeometry& g, double* gx,
                   double* gk) {
  const Index chunk = g.samples_per_chunk();
  // shifted[(t, o), c] = dy_wide[o, c - offset(t)]; positions that are not
  // output pixels stay zero across chunks.
  Mat<S> shifted = Mat<S>::Zero(g.taps() * g.cout, chunk * g.plane() + g.tail());
  Mat<S> xp, dxp;
  Mat<S> dk = Mat<S>::Zero(g.taps() * g.cout, g.cin);
  if (gk) xp = Mat<S>::Zero(g.cin, chunk * g.plane() + g.tail());
  const Mat<S> kstack = stacked_kernel<S>(k, g);
  for (Index s0 = 0; s0 < g.n; s0 += chunk) {
    const Index bc = std::min(chunk, g.n - s0);
    const Index cols = bc * g.plane() + g.tail();
    for (Index t = 0; t < g.taps(); ++t) {
      const Index off = g.tap_offset(t);
      for (Index o = 0; o < g.cout; ++o) {
        S* row = shifted.row(t * g.cout + o).data();
        for (Index b = 0; b < bc; ++b) {
          const double* src = grad + ((s0 + b) * g.cout + o) * g.plane_out();
          S* dst = row + off + b * g.plane();
          for (Index oy = 0; oy < g.ho; ++oy) {
            std::transform(src + oy * g.wo, src + (oy + 1) * g.wo, dst + oy * g.wp(),
                           [](double v) { return static_cast<S>(v); });
          }
        }
      }
    }
    if (gk) {
      for (Index b = 0; b < bc; ++b) pad_into<S>(x + (s0 + b) * g.cin * g.plane_in(), g, xp, b);
      dk.noalias() += shifted.leftCols(cols) * xp.leftCols(cols).transpose();
    }
    if (gx) {
      dxp.noalias() = kstack.transpose() * shifted.leftCols(cols);
      for (Index b = 0; b < bc; ++b) {
        for (Index c = 0; c < g.cin; ++c) {
          const S* src = dxp.row(c).data() + b * g.plane();
          double* dst = gx + ((s0 + b) * g.cin + c) * g.plane_in();
          for (Index y = 0; y < g.h; ++y) {
            for (Index xx = 0; xx < g.w; ++xx) {
              dst[y * g.w + xx] += static_cast<double>(src[(y + g.pad) * g.wp() + g.pad + xx]);
            }
          }
        }
      }
    }
  }
  if (gk) {
    for (Index t = 0; t < g.taps(); ++t) {
      for (Index o = 0; o < g.cout; ++o) {
        for (Index c = 0; c < g.cin; ++c) gk[(o * g.cin + c) * g.taps() + t] += static_cast<double>(dk(t * g.cout + o, c));
      }
    }
  }
}

}  // namespace

ConvPrecision current_conv_precision() { return conv_precision; }

ConvPrecisionScope::ConvPrecisionScope(ConvPrecision p) : previous_(conv_precision) { conv_precision = p; }
ConvPrecisionScope::~ConvPrecisionScope() { conv_precision = previous_; }

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, int padding) {
  if (x.ndim() != 4 || k.ndim() != 4 || k.dim(1) != x.dim(1)) {
    shape_error("conv2d", "input " + to_string(x.shape()) + " kernel " + to_string(k.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != k.dim(0))) shape_error("conv2d", "bias shape");
  if (padding < 0) shape_error("conv2d", "negative padding");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), padding, 0, 0};
  g.ho = g.hp() - g.kh + 1;
  g.wo = g.wp() - g.kw + 1;
  if (g.ho < 1 || g.wo < 1) shape_error("conv2d", "kernel larger than padded input");

  const bool single = conv_precision == ConvPrecision::kSingle;
  Vector v(g.n * g.cout * g.plane_out());
  const double* bias_data = bias.defined() ? bias.value().data() : nullptr;
  if (single) {
    conv_forward<float>(x.value().data(), k.value().data(), bias_data, g, v.data());
  } else {
    conv_forward<double>(x.value().data(), k.value().data(), bias_data, g, v.data());
  }

  auto out = new_node({g.n, g.cout, g.ho, g.wo}, std::move(v), "conv2d", {&x, &k, &bias});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), pk = k.node().get(), pb = bias.defined() ? bias.node().get() : nullptr, g,
                     single](const Vector& grad) {
      Vector* gx = grad_of(px);
      Vector* gk = grad_of(pk);
      Vector* gb = grad_of(pb);
      if (gb) {
        const auto gall = as_matrix(grad, g.n * g.cout, g.plane_out());
        for (Index s = 0; s < g.n; ++s) *gb += gall.middleRows(s * g.cout, g.cout).rowwise().sum();
      }
      if (!gx && !gk) return;
      double* gxd = gx ? gx->data() : nullptr;
      double* gkd = gk ? gk->data() : nullptr;
      if (single) {
        conv_backward<float>(grad.data(), px->value.data(), pk->value.data(), g, gxd, gkd);
      } else {
        conv_backward<double>(grad.data(), px->value.data(), pk->value.data(), g, gxd, gkd);
      }
    };
  }
  return Tensor::wrap(out);
}

namespace {

// Resampling along one axis where every output index reads a fixed number of inputs.
struct AxisMap {
  Index in = 0;
  Index out = 0;
  Index taps = 0;
  std::vector<Index> index;  // [out * taps]
  std::vector<double> weight;

  RowMatrix dense() const {
    RowMatrix m = RowMatrix::Zero(out, in);
    for (Index o = 0; o < out; ++o) {
      for (Index k = 0; k < taps; ++k) m(o, index[o * taps + k]) += weight[o * taps + k];
    }
    return m;
  }
};

// Applies m along the row axis of `planes` stacked [m.in, width] blocks of
// `from`, accumulating into [m.out, width] blocks of `to`; transposed swaps
// the roles of in and out.
void axis_pass(const AxisMap& m, Index planes, Index width, const double* from, double* to, bool transposed) {
  const Index rows_from = transposed ? m.out : m.in, rows_to = transposed ? m.in : m.out;
  for (Index p = 0; p < planes; ++p) {
    for (Index o = 0; o < m.out; ++o) {
      for (Index k = 0; k < m.taps; ++k) {
        const Index i = m.index[o * m.taps + k];
        const double wt = m.weight[o * m.taps + k];
        const double* src = from + (p * rows_from + (transposed ? o : i)) * width;
        double* dst = to + (p * rows_to + (transposed ? i : o)) * width;
        for (Index j = 0; j < width; ++j) dst[j] += wt * src[j];
      }
    }
  }
}

// y_plane = mh * x_plane * mw^T for every [H, W] plane of x[N, C, H, W], with
// mh and mw given as AxisMaps.
Tensor separable(const Tensor& x, const AxisMap& mh, const AxisMap& mw, const char* op) {
  if (x.ndim() != 4) shape_error(op, "expects [N, C, H, W], got " + to_string(x.shape()));
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index ho = mh.out, wo = mw.out;
  const RowMatrix mw_dense = mw.dense();
  RowMatrix tmp(planes * h, wo);
  tmp.noalias() = x.matrix(planes * h) * mw_dense.transpose();
  Vector v = Vector::Zero(planes * ho * wo);
  axis_pass(mh, planes, wo, tmp.data(), v.data(), false);
  auto out = new_node({x.dim(0), x.dim(1), ho, wo}, std::move(v), op, {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), mh, mw_dense, planes, h, w, ho, wo](const Vector& g) {
      Vector* gx = grad_of(px);
      if (!gx) return;
      RowMatrix dtmp = RowMatrix::Zero(planes * h, wo);
      axis_pass(mh, planes, wo, g.data(), dtmp.data(), true);
      as_matrix(*gx, planes * h, w).noalias() += dtmp * mw_dense;
    };
  }
  return Tensor::wrap(out);
}

AxisMap bilinear_map(Index in, int factor) {
  AxisMap m{in, in * factor, 2, {}, {}};
  for (Index o = 0; o < m.out; ++o) {
    const double src = std::max(0.0, (o + 0.5) / factor - 0.5);
    const Index i0 = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
    const Index i1 = std::min<Index>(i0 + 1, in - 1);
    const double lambda = src - static_cast<double>(i0);
    m.index.insert(m.index.end(), {i0, i1});
    m.weight.insert(m.weight.end(), {1.0 - lambda, lambda});
  }
  return m;
}

AxisMap pool_map(Index in, int factor) {
  AxisMap m{in, in / factor, factor, {}, {}};
  for (Index o = 0; o < m.out; ++o) {
    for (Index k = 0; k < factor; ++k) {
      m.index.push_back(o * factor + k);
      m.weight.push_back(1.0 / factor);
    }
  }
  return m;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int factor) {
  if (factor < 1) shape_error("upsample_bilinear", "factor must be >= 1");
  if (factor == 1) return x;
  if (x.ndim() != 4) shape_error("upsample_bilinear", "expects [N, C, H, W]");
  return separable(x, bilinear_map(x.dim(2), factor), bilinear_map(x.dim(3), factor), "upsample_bilinear");
}

Tensor avg_pool2d(const Tensor& x, int factor) {
  if (factor < 1) shape_error("avg_pool2d", "factor must be >= 1");
  if (factor == 1) return x;
  if (x.ndim() != 4 || x.dim(2) % factor || x.dim(3) % factor) {
    shape_error("avg_pool2d", "spatial size must be divisible by the factor");
  }
  return separable(x, pool_map(x.dim(2), factor), pool_map(x.dim(3), factor), "avg_pool2d");
}

// ---- batch norm --------------------------------------------------------------------

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats stats,
                 const BatchNormOptions& opt) {
  if (x.ndim() != 2 && x.ndim() != 4) shape_error("batchnorm", "expects [N, C] or [N, C, H, W]");
  const Index n = x.dim(0), c = x.dim(1), s = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.numel() != c || beta.numel() != c || stats.mean.size() != c || stats.var.size() != c) {
    shape_error("batchnorm", "channel count mismatch");
  }
  Vector w = opt.sample_weights ? *opt.sample_weights : Vector::Ones(n);
  if (w.size() != n) shape_error("batchnorm", "sample weight length mismatch");

  // [N, C, S] viewed as N blocks of C rows of S values.
  const auto xv = as_matrix(x.value(), n * c, s);
  Vector mu(c), var(c);
  if (opt.training) {
    const double total = w.sum() * static_cast<double>(s);
    if (!(total > 0.0)) shape_error("batchnorm", "training batch has zero total weight");
    mu.setZero();
    for (Index i = 0; i < n; ++i) {
      if (w[i] != 0.0) mu += w[i] * xv.middleRows(i * c, c).rowwise().sum();
    }
    mu /= total;
    var.setZero();
    for (Index i = 0; i < n; ++i) {
      if (w[i] != 0.0) var += w[i] * (xv.middleRows(i * c, c).colwise() - mu).rowwise().squaredNorm();
    }
    var /= total;
    stats.mean = (1.0 - opt.momentum) * stats.mean + opt.momentum * mu;
    stats.var = (1.0 - opt.momentum) * stats.var + opt.momentum * var;
  } else {
    mu = stats.mean;
    var = stats.var;
  }
  const Vector inv_std = (var.array() + opt.eps).rsqrt().matrix();

  Vector xhat(x.numel());
  auto xh = as_matrix(xhat, n * c, s);
  for (Index i = 0; i < n; ++i) {
    xh.middleRows(i * c, c) = inv_std.asDiagonal() * (xv.middleRows(i * c, c).colwise() - mu);
  }
  Vector v(x.numel());
  auto vm = as_matrix(v, n * c, s);
  for (Index i = 0; i < n; ++i) {
    vm.middleRows(i * c, c) = (gamma.value().asDiagonal() * xh.middleRows(i * c, c)).colwise() + beta.value();
  }

  auto out = new_node(x.shape(), std::move(v), "batchnorm", {&x, &gamma, &beta});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), pg = gamma.node().get(), pb = beta.node().get(), xhat = std::move(xhat),
                     inv_std, w = std::move(w), n, c, s, training = opt.training](const Vector& grad) {
      const auto gm = as_matrix(grad, n * c, s);
      const auto xh = as_matrix(xhat, n * c, s);
      Vector sum_g = Vector::Zero(c), sum_gx = Vector::Zero(c);
      for (Index i = 0; i < n; ++i) {
        sum_g += gm.middleRows(i * c, c).rowwise().sum();
        sum_gx += gm.middleRows(i * c, c).cwiseProduct(xh.middleRows(i * c, c)).rowwise().sum();
      }
      if (auto* gg = grad_of(pg)) *gg += sum_gx;
      if (auto* gb = grad_of(pb)) *gb += sum_g;
      Vector* gx = grad_of(px);
      if (!gx) return;
      const Vector scale = pg->value.cwiseProduct(inv_std);
      auto gxm = as_matrix(*gx, n * c, s);
      if (!training) {
        for (Index i = 0; i < n; ++i) gxm.middleRows(i * c, c) += scale.asDiagonal() * gm.middleRows(i * c, c);
        return;
      }
      // Sample i reaches the statistics with share w_i / total.
      const double total = w.sum() * static_cast<double>(s);
      for (Index i = 0; i < n; ++i) {
        const double share = w[i] / total;
        gxm.middleRows(i * c, c) += scale.asDiagonal() * ((gm.middleRows(i * c, c).colwise() - share * sum_g) -
                                                          (share * sum_gx).asDiagonal() * xh.middleRows(i * c, c));
      }
    };
  }
  return Tensor::wrap(out);
}

// ---- indexing ------------------------------------------------------------------------

Tensor gather_rows(const Tensor& x, const std::vector<int>& index) {
  if (x.ndim() < 1) shape_error("gather_rows", "needs at least one axis");
  const Index rows = x.dim(0), width = rows ? x.numel() / rows : 0;
  const Index e = static_cast<Index>(index.size());
  Vector v(e * width);
  auto vm = as_matrix(v, e, width);
  const auto xm = x.matrix(rows);
  for (Index i = 0; i < e; ++i) {
    if (index[i] < 0 || index[i] >= rows) shape_error("gather_rows", "index out of range");
    vm.row(i) = xm.row(index[i]);
  }
  Shape shape = x.shape();
  shape[0] = e;
  auto out = new_node(std::move(shape), std::move(v), "gather_rows", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), index, rows, width](const Vector& g) {
      Vector* gx = grad_of(px);
      if (!gx) return;
      auto gxm = as_matrix(*gx, rows, width);
      const auto gm = as_matrix(g, static_cast<Index>(index.size()), width);
      for (size_t i = 0; i < index.size(); ++i) gxm.row(index[i]) += gm.row(i);
    };
  }
  return Tensor::wrap(out);
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& index, Index count) {
  if (x.ndim() < 1 || x.dim(0) != static_cast<Index>(index.size())) {
    shape_error("segment_sum", "index length must equal leading dimension");
  }
  const Index e = x.dim(0), width = e ? x.numel() / e : numel(Shape(x.shape().begin() + 1, x.shape().end()));
  Vector v = Vector::Zero(count * width);
  auto vm = as_matrix(v, count, width);
  const auto xm = as_matrix(x.value(), e, width);
  for (Index i = 0; i < e; ++i) {
    if (index[i] < 0 || index[i] >= count) shape_error("segment_sum", "index out of range");
    vm.row(index[i]) += xm.row(i);
  }
  Shape shape = x.shape();
  shape[0] = count;
  auto out = new_node(std::move(shape), std::move(v), "segment_sum", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), index, count, width](const Vector& g) {
      Vector* gx = grad_of(px);
      if (!gx) return;
      auto gxm = as_matrix(*gx, static_cast<Index>(index.size()), width);
      const auto gm = as_matrix(g, count, width);
      for (size_t i = 0; i < index.size(); ++i) gxm.row(i) += gm.row(index[i]);
    };
  }
  return Tensor::wrap(out);
}

Tensor gated_edge_sum(const Tensor& receiver, const Tensor& sender, const std::vector<int>& src,
                      const std::vector<int>& dst) {
  require_same_shape("gated_edge_sum", receiver, sender);
  if (receiver.ndim() < 1 || src.size() != dst.size()) shape_error("gated_edge_sum", "bad edge lists");
  const Index n = receiver.dim(0), width = n ? receiver.numel() / n : 0;
  for (size_t e = 0; e < src.size(); ++e) {
    if (src[e] < 0 || src[e] >= n || dst[e] < 0 || dst[e] >= n) shape_error("gated_edge_sum", "index out of range");
  }
  const auto rm = as_matrix(receiver.value(), n, width);
  const auto sm = as_matrix(sender.value(), n, width);
  Vector v = Vector::Zero(n * width);
  auto vm = as_matrix(v, n, width);
  Eigen::ArrayXd pre(width);
  for (size_t e = 0; e < src.size(); ++e) {
    pre = (rm.row(dst[e]) + sm.row(src[e])).array().transpose();
    vm.row(dst[e]).array() += (pre / (1.0 + (-pre).exp())).transpose();
  }
  auto out = new_node(receiver.shape(), std::move(v), "gated_edge_sum", {&receiver, &sender});
  if (out->requires_grad) {
    out->backward = [pr = receiver.node().get(), ps = sender.node().get(), src, dst, n, width](const Vector& g) {
      Vector* gr = grad_of(pr);
      Vector* gs = grad_of(ps);
      const auto rm = as_matrix(pr->value, n, width);
      const auto sm = as_matrix(ps->value, n, width);
      const auto gm = as_matrix(g, n, width);
      Eigen::ArrayXd pre(width), sig(width), d(width);
      for (size_t e = 0; e < src.size(); ++e) {
        pre = (rm.row(dst[e]) + sm.row(src[e])).array().transpose();
        sig = 1.0 / (1.0 + (-pre).exp());
        d = gm.row(dst[e]).array().transpose() * sig * (1.0 + pre * (1.0 - sig));
        if (gr) as_matrix(*gr, n, width).row(dst[e]).array() += d.transpose();
        if (gs) as_matrix(*gs, n, width).row(src[e]).array() += d.transpose();
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor segment_max(const Tensor& x, const std::vector<int>& offsets) {
  if (offsets.empty() || offsets.front() != 0 || x.ndim() < 1 || offsets.back() != x.dim(0)) {
    shape_error("segment_max", "offsets must run from 0 to the leading dimension");
  }
  const Index rows = x.dim(0), width = numel(Shape(x.shape().begin() + 1, x.shape().end()));
  const Index groups = static_cast<Index>(offsets.size()) - 1;
  Vector v = Vector::Zero(groups * width);
  std::vector<int> argmax(groups * width, -1);
  const auto xm = as_matrix(x.value(), rows, width);
  for (Index gi = 0; gi < groups; ++gi) {
    for (int r = offsets[gi]; r < offsets[gi + 1]; ++r) {
      for (Index k = 0; k < width; ++k) {
        int& am = argmax[gi * width + k];
        if (am < 0 || xm(r, k) > v[gi * width + k]) {
          am = r;
          v[gi * width + k] = xm(r, k);
        }
      }
    }
  }
  Shape shape = x.shape();
  shape[0] = groups;
  auto out = new_node(std::move(shape), std::move(v), "segment_max", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), argmax = std::move(argmax), width](const Vector& g) {
      Vector* gx = grad_of(px);
      if (!gx) return;
      for (size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= 0) (*gx)[argmax[i] * width + static_cast<Index>(i) % width] += g[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2 || table.dim(0) < 1) shape_error("embedding_lookup", "table must be [V+1, D]");
  const Index vocab = table.dim(0) - 1;
  std::vector<int> rows(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kMissing) {
      rows[i] = static_cast<int>(vocab);
    } else if (ids[i] < 0 || ids[i] >= vocab) {
      throw DataError("embedding_lookup: attribute id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                      std::to_string(vocab));
    } else {
      rows[i] = ids[i];
    }
  }
  return gather_rows(table, rows);
}

namespace {

struct AxisSplit {
  Index outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s{1, shape.at(axis), 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.ndim() != b.ndim() || axis < 0 || axis >= a.ndim()) shape_error("concat", "rank mismatch or bad axis");
  for (int i = 0; i < a.ndim(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) shape_error("concat", to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const AxisSplit sa = split_axis(a.shape(), axis), sb = split_axis(b.shape(), axis);
  const Index la = sa.extent * sa.inner, lb = sb.extent * sb.inner;
  Vector v(a.numel() + b.numel());
  auto vm = as_matrix(v, sa.outer, la + lb);
  vm.leftCols(la) = as_matrix(a.value(), sa.outer, la);
  vm.rightCols(lb) = as_matrix(b.value(), sa.outer, lb);
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  auto out = new_node(std::move(shape), std::move(v), "concat", {&a, &b});
  if (out->requires_grad) {
    out->backward = [pa = a.node().get(), pb = b.node().get(), outer = sa.outer, la, lb](const Vector& g) {
      const auto gm = as_matrix(g, outer, la + lb);
      if (auto* ga = grad_of(pa)) as_matrix(*ga, outer, la) += gm.leftCols(la);
      if (auto* gb = grad_of(pb)) as_matrix(*gb, outer, lb) += gm.rightCols(lb);
    };
  }
  return Tensor::wrap(out);
}

Tensor slice(const Tensor& x, int axis, Index offset, Index length) {
  if (axis < 0 || axis >= x.ndim() || offset < 0 || length < 0 || offset + length > x.dim(axis)) {
    shape_error("slice", "range out of bounds for " + to_string(x.shape()));
  }
  const AxisSplit sx = split_axis(x.shape(), axis);
  const Index full = sx.extent * sx.inner, part = length * sx.inner, start = offset * sx.inner;
  Vector v(sx.outer * part);
  as_matrix(v, sx.outer, part) = as_matrix(x.value(), sx.outer, full).middleCols(start, part);
  Shape shape = x.shape();
  shape[axis] = length;
  auto out = new_node(std::move(shape), std::move(v), "slice", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get(), outer = sx.outer, full, part, start](const Vector& g) {
      if (auto* gx = grad_of(px)) as_matrix(*gx, outer, full).middleCols(start, part) += as_matrix(g, outer, part);
    };
  }
  return Tensor::wrap(out);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_error("reshape", to_string(x.shape()) + " -> " + to_string(shape));
  auto out = new_node(std::move(shape), x.value(), "reshape", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get()](const Vector& g) {
      if (auto* gx = grad_of(px)) *gx += g;
    };
  }
  return Tensor::wrap(out);
}

// ---- reductions and losses --------------------------------------------------------

Tensor sum(const Tensor& x) {
  auto out = new_node({}, Vector::Constant(1, x.value().sum()), "sum", {&x});
  if (out->requires_grad) {
    out->backward = [px = x.node().get()](const Vector& g) {
      if (auto* gx = grad_of(px)) gx->array() += g[0];
    };
  }
  return Tensor::wrap(out);
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) shape_error("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor bce_loss(const Tensor& pred, const Vector& target) {
  if (pred.numel() != target.size() || target.size() == 0) shape_error("bce_loss", "prediction/target size mismatch");
  constexpr double kClamp = 1e-12;
  const Eigen::ArrayXd p = pred.value().array().max(kClamp).min(1.0 - kClamp);
  const Eigen::ArrayXd y = target.array();
  const double m = static_cast<double>(target.size());
  const double loss = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum() / m;
  auto out = new_node({}, Vector::Constant(1, loss), "bce_loss", {&pred});
  if (out->requires_grad) {
    out->backward = [pp = pred.node().get(), p, y, m](const Vector& g) {
      if (auto* gp = grad_of(pp)) *gp += (g[0] / m * (p - y) / (p * (1.0 - p))).matrix();
    };
  }
  return Tensor::wrap(out);
}

Tensor layout_assemble(const Tensor& f, const Tensor& m, const std::vector<int>& offsets) {
  if (f.ndim() != 2 || m.ndim() < 2 || m.dim(0) != f.dim(0)) shape_error("layout_assemble", "f[N,C] and m[N,...] expected");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != f.dim(0)) {
    shape_error("layout_assemble", "offsets must run from 0 to N");
  }
  Index h, w;
  if (m.ndim() == 3) {
    h = m.dim(1), w = m.dim(2);
  } else if (m.ndim() == 4 && m.dim(1) == 1) {
    h = m.dim(2), w = m.dim(3);
  } else {
    shape_error("layout_assemble", "masks must be [N, H, W] or [N, 1, H, W]");
  }
  const Index n = f.dim(0), c = f.dim(1), hw = h * w;
  const Index groups = static_cast<Index>(offsets.size()) - 1;
  const auto fm = f.matrix(n);
  const auto mm = as_matrix(m.value(), n, hw);
  Vector v(groups * c * hw);
  for (Index g = 0; g < groups; ++g) {
    const Index r0 = offsets[g], cnt = offsets[g + 1] - offsets[g];
    if (cnt <= 0) throw DataError("layout_assemble: empty graph");
    as_matrix(v, groups * c, hw).middleRows(g * c, c).noalias() =
        fm.middleRows(r0, cnt).transpose() * mm.middleRows(r0, cnt) / static_cast<double>(cnt);
  }
  auto out = new_node({groups, c, h, w}, std::move(v), "layout_assemble", {&f, &m});
  if (out->requires_grad) {
    out->backward = [pf = f.node().get(), pm = m.node().get(), offsets, n, c, hw](const Vector& grad) {
      Vector* gf = grad_of(pf);
      Vector* gmask = grad_of(pm);
      const Index groups = static_cast<Index>(offsets.size()) - 1;
      const auto gl = as_matrix(grad, groups * c, hw);
      for (Index g = 0; g < groups; ++g) {
        const Index r0 = offsets[g], cnt = offsets[g + 1] - offsets[g];
        const double inv = 1.0 / static_cast<double>(cnt);
        const auto dl = gl.middleRows(g * c, c);
        if (gf) {
          as_matrix(*gf, n, c).middleRows(r0, cnt).noalias() +=
              inv * as_matrix(pm->value, n, hw).middleRows(r0, cnt) * dl.transpose();
        }
        if (gmask) {
          as_matrix(*gmask, n, hw).middleRows(r0, cnt).noalias() +=
              inv * as_matrix(pf->value, n, c).middleRows(r0, cnt) * dl;
        }
      }
    };
  }
  return Tensor::wrap(out);
}

// ---- verification ---------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps,
                           Index max_components, std::uint64_t seed) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor out = f();
  out.backward();
  std::vector<Vector> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad());

  GradCheckResult res;
  Rng rng(seed);
  for (size_t which = 0; which < inputs.size(); ++which) {
    Vector& x = inputs[which].mutable_value();
    std::vector<Index> idx(x.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    if (max_components > 0 && max_components < x.size()) {
      for (Index i = 0; i < max_components; ++i) {
        std::swap(idx[i], idx[i + rng.uniform_int(0, x.size() - 1 - i)]);
      }
      idx.resize(max_components);
    }
    for (Index i : idx) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = f().item();
      x[i] = saved - eps;
      const double down = f().item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[which][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++res.checked;
      if (err > res.max_rel_error || res.worst_input < 0) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        if (err >= res.max_rel_error) {
          res.worst_input = static_cast<int>(which);
          res.worst_index = i;
          res.analytic = a;
          res.numeric = numeric;
        }
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return res;
}

// ---- container ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'L', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace

void save_arrays(const std::string& path, const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, arrays.size());
  for (const auto& a : arrays) {
    if (numel(a.shape) != a.data.size()) throw std::invalid_argument("save_arrays: shape/data mismatch for " + a.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (Index d : a.shape) put<std::int64_t>(out, d);
    for (Index i = 0; i < a.data.size(); ++i) put<double>(out, a.data[i]);
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<NamedArray> load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw DataError("not a checkpoint: " + path);
  if (get<std::uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version");
  const auto count = get<std::uint64_t>(in);
  std::vector<NamedArray> arrays;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name.resize(get<std::uint32_t>(in));
    if (!in.read(a.name.data(), static_cast<std::streamsize>(a.name.size()))) throw DataError("checkpoint truncated");
    const auto rank = get<std::uint32_t>(in);
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(get<std::int64_t>(in));
    a.data.resize(numel(a.shape));
    for (Index k = 0; k < a.data.size(); ++k) a.data[k] = get<double>(in);
    arrays.push_back(std::move(a));
  }
  return arrays;
}

}  // namespace poselayout::ad

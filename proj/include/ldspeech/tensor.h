// ldspeech/tensor.h

// Copyright 2026  The ldspeech Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LDSPEECH_TENSOR_H_
#define LDSPEECH_TENSOR_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ldspeech/common.h"

namespace ldspeech {

// Dense double-precision tensor with reverse-mode automatic differentiation.
// Rank 1..4; most of the pipeline works on rank-2 (rows x cols) tensors, the
// adversarial stage uses rank-3 activations (channels x H x W) and rank-4
// convolution kernels.
//
// Tensors are cheap handles onto shared nodes. Ops record a tape when grad
// mode is enabled and at least one input requires grad; Tensor::Backward()
// replays the tape in reverse topological order.

using Shape = std::vector<int>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, same size as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward;  // accumulates node.grad into parents

  int64_t NumEl() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void EnsureGrad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

// Thread-local gradient mode; sampling loops disable it to skip tape capture.
bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(const Shape &shape, bool requires_grad = false);
  static Tensor Full(const Shape &shape, double v, bool requires_grad = false);
  static Tensor FromData(const Shape &shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Randn(const Shape &shape, Rng *rng, double stddev = 1.0,
                      bool requires_grad = false);
  static Tensor Scalar(double v, bool requires_grad = false);

  bool Defined() const { return node_ != nullptr; }
  const Shape &Dims() const { return node_->shape; }
  int Rank() const { return static_cast<int>(node_->shape.size()); }
  int Rows() const { return node_->shape[0]; }
  int Cols() const { return node_->shape[1]; }
  int64_t NumEl() const { return node_->NumEl(); }

  const std::vector<double> &Value() const { return node_->value; }
  std::vector<double> &MutableValue() { return node_->value; }
  const std::vector<double> &Grad() const { return node_->grad; }

  double At(int r, int c) const { return node_->value[static_cast<size_t>(r) * Cols() + c]; }
  void Set(int r, int c, double v) { node_->value[static_cast<size_t>(r) * Cols() + c] = v; }
  double Item() const;  // value of a single-element tensor

  bool RequiresGrad() const { return node_ && node_->requires_grad; }
  void SetRequiresGrad(bool rg);
  void ZeroGrad();
  void EnsureGrad() { node_->EnsureGrad(); }

  // Seeds the output gradient with 1 (single-element tensors only) and
  // propagates through the tape.
  void Backward();

  // A leaf sharing this tensor's value buffer copy, cut from the tape.
  Tensor Detach() const;

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

// Generic op constructor for fused/custom gradients (the minimal-CTC loss
// uses this). `backward` reads self.grad and accumulates into parents
// (call EnsureGrad on a parent before writing).
Tensor MakeOp(const Shape &shape, std::vector<double> value,
              const std::vector<Tensor> &parents,
              std::function<void(detail::Node &)> backward);

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
Tensor Add(const Tensor &a, const Tensor &b);
Tensor Sub(const Tensor &a, const Tensor &b);
Tensor Mul(const Tensor &a, const Tensor &b);
Tensor Neg(const Tensor &a);
Tensor AddScalar(const Tensor &a, double c);
Tensor MulScalar(const Tensor &a, double c);
// a / s where s is a single-element tensor (gradient flows into both).
Tensor DivScalarT(const Tensor &a, const Tensor &s);

Tensor Exp(const Tensor &a);
Tensor Log(const Tensor &a);
Tensor Sqrt(const Tensor &a);
Tensor Square(const Tensor &a);
Tensor Abs(const Tensor &a);
Tensor Tanh(const Tensor &a);
Tensor Sigmoid(const Tensor &a);
Tensor Relu(const Tensor &a);
Tensor LeakyRelu(const Tensor &a, double slope);
Tensor Silu(const Tensor &a);

// Reductions (single-element results)
Tensor Sum(const Tensor &a);
Tensor Mean(const Tensor &a);

// Rank-2 linear algebra
Tensor MatMul(const Tensor &a, const Tensor &b);
Tensor Transpose(const Tensor &a);

// Row-wise normalizations (rank-2)
Tensor SoftmaxRows(const Tensor &a);
Tensor LogSoftmaxRows(const Tensor &a);
// gain/bias are [1 x cols].
Tensor LayerNormRows(const Tensor &x, const Tensor &gain, const Tensor &bias,
                     double eps = 1e-5);

// Structure ops (rank-2)
Tensor ConcatCols(const std::vector<Tensor> &parts);
Tensor SliceCols(const Tensor &a, int c0, int c1);  // [c0, c1)
Tensor ConcatRows(const std::vector<Tensor> &parts);
Tensor SliceRows(const Tensor &a, int r0, int r1);  // [r0, r1)
// out[i] = a[idx[i]]; duplicate indices accumulate on backward (embedding).
Tensor GatherRows(const Tensor &a, const std::vector<int> &idx);
// out has n_rows rows; out[idx[i]] = a[i], all other rows zero.
Tensor ScatterRows(const Tensor &a, const std::vector<int> &idx, int n_rows);

// Broadcasts of a [1 x n] row over [m x n]
Tensor AddRowBroadcast(const Tensor &a, const Tensor &row);
Tensor MulRowBroadcast(const Tensor &a, const Tensor &row);
Tensor RepeatRow(const Tensor &row, int m);
Tensor MeanRows(const Tensor &a);  // [m x n] -> [1 x n]

// Depthwise temporal convolution: x [N x D], w [K x D], bias [1 x D],
// zero-padded "same" output.
Tensor Conv1dDepthwise(const Tensor &x, const Tensor &w, const Tensor &bias);

// 2D convolution: x [Ci x H x W], w [Co x Ci x kh x kw], bias [Co],
// stride/pad symmetric in both spatial axes.
Tensor Conv2d(const Tensor &x, const Tensor &w, const Tensor &bias, int stride,
              int pad);

Tensor Reshape(const Tensor &a, const Shape &shape);

// Inverted dropout; identity when p == 0.
Tensor Dropout(const Tensor &x, double p, Rng *rng);

// Convenience non-grad helpers
double L1Norm(const Tensor &a);
double MaxAbs(const Tensor &a);
bool AllFinite(const Tensor &a);

}  // namespace ldspeech

#endif  // LDSPEECH_TENSOR_H_

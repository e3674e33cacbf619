// ldspeech/tensor.cc

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

#include "ldspeech/tensor.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace ldspeech {

namespace {

thread_local bool g_grad_enabled = true;

int64_t NumElOf(const Shape &shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void CheckSameShape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.Dims() != b.Dims())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::Zeros(const Shape &shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value.assign(NumElOf(shape), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::Full(const Shape &shape, double v, bool requires_grad) {
  Tensor t = Zeros(shape, requires_grad);
  std::fill(t.node()->value.begin(), t.node()->value.end(), v);
  return t;
}

Tensor Tensor::FromData(const Shape &shape, std::vector<double> data,
                        bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != NumElOf(shape))
    throw std::invalid_argument("FromData: size does not match shape");
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::Randn(const Shape &shape, Rng *rng, double stddev,
                     bool requires_grad) {
  Tensor t = Zeros(shape, requires_grad);
  for (double &v : t.node()->value) v = stddev * rng->Normal();
  return t;
}

Tensor Tensor::Scalar(double v, bool requires_grad) {
  return Full({1}, v, requires_grad);
}

double Tensor::Item() const {
  if (NumEl() != 1)
    throw std::invalid_argument("Item: tensor has more than one element");
  return node_->value[0];
}

void Tensor::SetRequiresGrad(bool rg) {
  if (!node_->parents.empty() && !rg)
    node_->backward = nullptr;  // freezing an interior node detaches it
  node_->requires_grad = rg;
}

void Tensor::ZeroGrad() {
  node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::Detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

void Tensor::Backward() {
  if (NumEl() != 1)
    throw std::invalid_argument("Backward: root must be a single element");
  // Iterative topological sort over the tape.
  std::vector<detail::Node *> order;
  std::unordered_set<detail::Node *> visited;
  std::vector<std::pair<detail::Node *, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node *p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->EnsureGrad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->EnsureGrad();
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Tensor MakeOp(const Shape &shape, std::vector<double> value,
              const std::vector<Tensor> &parents,
              std::function<void(detail::Node &)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value = std::move(value);
  bool any_rg = false;
  for (const Tensor &p : parents) any_rg = any_rg || p.RequiresGrad();
  if (g_grad_enabled && any_rg) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Tensor &p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor Add(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "Add");
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value(), &bv = b.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  return MakeOp(a.Dims(), std::move(v), {a, b}, [](detail::Node &self) {
    for (auto &p : self.parents) {
      if (!p->requires_grad) continue;
      p->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor Sub(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "Sub");
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value(), &bv = b.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  return MakeOp(a.Dims(), std::move(v), {a, b}, [](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &pb = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor Mul(const Tensor &a, const Tensor &b) {
  CheckSameShape(a, b, "Mul");
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value(), &bv = b.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  return MakeOp(a.Dims(), std::move(v), {a, b}, [](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &pb = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor Neg(const Tensor &a) { return MulScalar(a, -1.0); }

Tensor AddScalar(const Tensor &a, double c) {
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + c;
  return MakeOp(a.Dims(), std::move(v), {a}, [](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor MulScalar(const Tensor &a, double c) {
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  return MakeOp(a.Dims(), std::move(v), {a}, [c](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += c * self.grad[i];
  });
}

Tensor DivScalarT(const Tensor &a, const Tensor &s) {
  if (s.NumEl() != 1) throw std::invalid_argument("DivScalarT: divisor must be scalar");
  double sv = s.Value()[0];
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] / sv;
  return MakeOp(a.Dims(), std::move(v), {a, s}, [sv](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &ps = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] / sv;
    }
    if (ps->requires_grad) {
      ps->EnsureGrad();
      double acc = 0.0;
      for (size_t i = 0; i < self.grad.size(); ++i)
        acc -= self.grad[i] * pa->value[i] / (sv * sv);
      ps->grad[0] += acc;
    }
  });
}

namespace {

template <typename F, typename DF>
Tensor UnaryOp(const Tensor &a, F f, DF df_from_input_and_output) {
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = f(av[i]);
  return MakeOp(a.Dims(), std::move(v), {a},
                [df_from_input_and_output](detail::Node &self) {
                  auto &p = self.parents[0];
                  p->EnsureGrad();
                  for (size_t i = 0; i < self.grad.size(); ++i)
                    p->grad[i] += self.grad[i] *
                                  df_from_input_and_output(p->value[i], self.value[i]);
                });
}

}  // namespace

Tensor Exp(const Tensor &a) {
  return UnaryOp(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor Log(const Tensor &a) {
  return UnaryOp(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Tensor Sqrt(const Tensor &a) {
  return UnaryOp(a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Tensor Square(const Tensor &a) {
  return UnaryOp(a, [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
}

Tensor Abs(const Tensor &a) {
  return UnaryOp(a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor Tanh(const Tensor &a) {
  return UnaryOp(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor Sigmoid(const Tensor &a) {
  return UnaryOp(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor Relu(const Tensor &a) {
  return UnaryOp(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor LeakyRelu(const Tensor &a, double slope) {
  return UnaryOp(a, [slope](double x) { return x > 0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor Silu(const Tensor &a) {
  return UnaryOp(a,
                 [](double x) { return x / (1.0 + std::exp(-x)); },
                 [](double x, double) {
                   double s = 1.0 / (1.0 + std::exp(-x));
                   return s * (1.0 + x * (1.0 - s));
                 });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Sum(const Tensor &a) {
  double acc = 0.0;
  for (double v : a.Value()) acc += v;
  return MakeOp({1}, {acc}, {a}, [](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    double g = self.grad[0];
    for (double &pg : p->grad) pg += g;
  });
}

Tensor Mean(const Tensor &a) {
  double acc = 0.0;
  for (double v : a.Value()) acc += v;
  double inv = 1.0 / static_cast<double>(a.NumEl());
  return MakeOp({1}, {acc * inv}, {a}, [inv](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    double g = self.grad[0] * inv;
    for (double &pg : p->grad) pg += g;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor MatMul(const Tensor &a, const Tensor &b) {
  if (a.Rank() != 2 || b.Rank() != 2 || a.Cols() != b.Rows())
    throw std::invalid_argument("MatMul: incompatible shapes");
  int m = a.Rows(), k = a.Cols(), n = b.Cols();
  std::vector<double> v(static_cast<size_t>(m) * n, 0.0);
  const auto &av = a.Value(), &bv = b.Value();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double aip = av[static_cast<size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double *brow = &bv[static_cast<size_t>(p) * n];
      double *vrow = &v[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) vrow[j] += aip * brow[j];
    }
  }
  return MakeOp({m, n}, std::move(v), {a, b}, [m, k, n](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &pb = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      // dA = dC * B^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double *grow = &self.grad[static_cast<size_t>(i) * n];
          const double *brow = &pb->value[static_cast<size_t>(p) * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          pa->grad[static_cast<size_t>(i) * k + p] += acc;
        }
    }
    if (pb->requires_grad) {
      pb->EnsureGrad();
      // dB = A^T * dC
      for (int i = 0; i < m; ++i) {
        const double *arow = &pa->value[static_cast<size_t>(i) * k];
        const double *grow = &self.grad[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
          double aip = arow[p];
          if (aip == 0.0) continue;
          double *brow = &pb->grad[static_cast<size_t>(p) * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor Transpose(const Tensor &a) {
  if (a.Rank() != 2) throw std::invalid_argument("Transpose: rank-2 only");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  return MakeOp({n, m}, std::move(v), {a}, [m, n](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[static_cast<size_t>(i) * n + j] +=
            self.grad[static_cast<size_t>(j) * m + i];
  });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

Tensor SoftmaxRows(const Tensor &a) {
  if (a.Rank() != 2) throw std::invalid_argument("SoftmaxRows: rank-2 only");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i) {
    const double *row = &av[static_cast<size_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    double *out = &v[static_cast<size_t>(i) * n];
    for (int j = 0; j < n; ++j) {
      out[j] = std::exp(row[j] - mx);
      z += out[j];
    }
    for (int j = 0; j < n; ++j) out[j] /= z;
  }
  return MakeOp({m, n}, std::move(v), {a}, [m, n](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i) {
      const double *y = &self.value[static_cast<size_t>(i) * n];
      const double *g = &self.grad[static_cast<size_t>(i) * n];
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += y[j] * g[j];
      double *pg = &p->grad[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) pg[j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor LogSoftmaxRows(const Tensor &a) {
  if (a.Rank() != 2) throw std::invalid_argument("LogSoftmaxRows: rank-2 only");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i) {
    const double *row = &av[static_cast<size_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    double lse = mx + std::log(z);
    double *out = &v[static_cast<size_t>(i) * n];
    for (int j = 0; j < n; ++j) out[j] = row[j] - lse;
  }
  return MakeOp({m, n}, std::move(v), {a}, [m, n](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i) {
      const double *y = &self.value[static_cast<size_t>(i) * n];
      const double *g = &self.grad[static_cast<size_t>(i) * n];
      double gsum = 0.0;
      for (int j = 0; j < n; ++j) gsum += g[j];
      double *pg = &p->grad[static_cast<size_t>(i) * n];
      for (int j = 0; j < n; ++j) pg[j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Tensor LayerNormRows(const Tensor &x, const Tensor &gain, const Tensor &bias,
                     double eps) {
  if (x.Rank() != 2) throw std::invalid_argument("LayerNormRows: rank-2 only");
  int m = x.Rows(), n = x.Cols();
  if (gain.NumEl() != n || bias.NumEl() != n)
    throw std::invalid_argument("LayerNormRows: gain/bias size mismatch");
  std::vector<double> v(x.NumEl());
  std::vector<double> xhat(x.NumEl());
  std::vector<double> inv_std(m);
  const auto &xv = x.Value();
  const auto &gv = gain.Value();
  const auto &bv = bias.Value();
  for (int i = 0; i < m; ++i) {
    const double *row = &xv[static_cast<size_t>(i) * n];
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < n; ++j) {
      double xh = (row[j] - mu) * is;
      xhat[static_cast<size_t>(i) * n + j] = xh;
      v[static_cast<size_t>(i) * n + j] = gv[j] * xh + bv[j];
    }
  }
  return MakeOp({m, n}, std::move(v), {x, gain, bias},
                [m, n, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](detail::Node &self) {
                  auto &px = self.parents[0];
                  auto &pg = self.parents[1];
                  auto &pb = self.parents[2];
                  if (pg->requires_grad) pg->EnsureGrad();
                  if (pb->requires_grad) pb->EnsureGrad();
                  if (px->requires_grad) px->EnsureGrad();
                  for (int i = 0; i < m; ++i) {
                    const double *g = &self.grad[static_cast<size_t>(i) * n];
                    const double *xh = &xhat[static_cast<size_t>(i) * n];
                    if (pg->requires_grad)
                      for (int j = 0; j < n; ++j) pg->grad[j] += g[j] * xh[j];
                    if (pb->requires_grad)
                      for (int j = 0; j < n; ++j) pb->grad[j] += g[j];
                    if (px->requires_grad) {
                      // dxhat = g * gain; dx = inv_std*(dxhat - mean(dxhat)
                      //          - xhat * mean(dxhat*xhat))
                      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                      for (int j = 0; j < n; ++j) {
                        double dxh = g[j] * pg->value[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                      }
                      mean_dxh /= n;
                      mean_dxh_xh /= n;
                      double *pxg = &px->grad[static_cast<size_t>(i) * n];
                      for (int j = 0; j < n; ++j) {
                        double dxh = g[j] * pg->value[j];
                        pxg[j] += inv_std[i] *
                                  (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                      }
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Structure ops

Tensor ConcatCols(const std::vector<Tensor> &parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatCols: empty");
  int m = parts[0].Rows();
  int n = 0;
  for (const auto &p : parts) {
    if (p.Rank() != 2 || p.Rows() != m)
      throw std::invalid_argument("ConcatCols: row mismatch");
    n += p.Cols();
  }
  std::vector<double> v(static_cast<size_t>(m) * n);
  int off = 0;
  std::vector<int> offsets;
  std::vector<int> widths;
  for (const auto &p : parts) {
    int w = p.Cols();
    offsets.push_back(off);
    widths.push_back(w);
    const auto &pv = p.Value();
    for (int i = 0; i < m; ++i)
      std::copy(&pv[static_cast<size_t>(i) * w], &pv[static_cast<size_t>(i) * w] + w,
                &v[static_cast<size_t>(i) * n + off]);
    off += w;
  }
  return MakeOp({m, n}, std::move(v), parts,
                [m, n, offsets, widths](detail::Node &self) {
                  for (size_t k = 0; k < self.parents.size(); ++k) {
                    auto &p = self.parents[k];
                    if (!p->requires_grad) continue;
                    p->EnsureGrad();
                    int w = widths[k], off = offsets[k];
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < w; ++j)
                        p->grad[static_cast<size_t>(i) * w + j] +=
                            self.grad[static_cast<size_t>(i) * n + off + j];
                  }
                });
}

Tensor SliceCols(const Tensor &a, int c0, int c1) {
  if (a.Rank() != 2 || c0 < 0 || c1 > a.Cols() || c0 >= c1)
    throw std::invalid_argument("SliceCols: bad range");
  int m = a.Rows(), n = a.Cols(), w = c1 - c0;
  std::vector<double> v(static_cast<size_t>(m) * w);
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i)
    std::copy(&av[static_cast<size_t>(i) * n + c0],
              &av[static_cast<size_t>(i) * n + c1],
              &v[static_cast<size_t>(i) * w]);
  return MakeOp({m, w}, std::move(v), {a}, [m, n, w, c0](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        p->grad[static_cast<size_t>(i) * n + c0 + j] +=
            self.grad[static_cast<size_t>(i) * w + j];
  });
}

Tensor ConcatRows(const std::vector<Tensor> &parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatRows: empty");
  int n = parts[0].Cols();
  int m = 0;
  for (const auto &p : parts) {
    if (p.Rank() != 2 || p.Cols() != n)
      throw std::invalid_argument("ConcatRows: col mismatch");
    m += p.Rows();
  }
  std::vector<double> v;
  v.reserve(static_cast<size_t>(m) * n);
  std::vector<int> row_offsets;
  int off = 0;
  for (const auto &p : parts) {
    row_offsets.push_back(off);
    v.insert(v.end(), p.Value().begin(), p.Value().end());
    off += p.Rows();
  }
  return MakeOp({m, n}, std::move(v), parts,
                [n, row_offsets](detail::Node &self) {
                  for (size_t k = 0; k < self.parents.size(); ++k) {
                    auto &p = self.parents[k];
                    if (!p->requires_grad) continue;
                    p->EnsureGrad();
                    size_t base = static_cast<size_t>(row_offsets[k]) * n;
                    for (size_t i = 0; i < p->grad.size(); ++i)
                      p->grad[i] += self.grad[base + i];
                  }
                });
}

Tensor SliceRows(const Tensor &a, int r0, int r1) {
  if (a.Rank() != 2 || r0 < 0 || r1 > a.Rows() || r0 >= r1)
    throw std::invalid_argument("SliceRows: bad range");
  int n = a.Cols(), h = r1 - r0;
  std::vector<double> v(a.Value().begin() + static_cast<size_t>(r0) * n,
                        a.Value().begin() + static_cast<size_t>(r1) * n);
  return MakeOp({h, n}, std::move(v), {a}, [n, r0](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    size_t base = static_cast<size_t>(r0) * n;
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[base + i] += self.grad[i];
  });
}

Tensor GatherRows(const Tensor &a, const std::vector<int> &idx) {
  if (a.Rank() != 2) throw std::invalid_argument("GatherRows: rank-2 only");
  int n = a.Cols();
  int m = static_cast<int>(idx.size());
  for (int i : idx)
    if (i < 0 || i >= a.Rows()) throw std::invalid_argument("GatherRows: index out of range");
  std::vector<double> v(static_cast<size_t>(m) * n);
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i)
    std::copy(&av[static_cast<size_t>(idx[i]) * n],
              &av[static_cast<size_t>(idx[i]) * n] + n,
              &v[static_cast<size_t>(i) * n]);
  return MakeOp({m, n}, std::move(v), {a}, [n, m, idx](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[static_cast<size_t>(idx[i]) * n + j] +=
            self.grad[static_cast<size_t>(i) * n + j];
  });
}

Tensor ScatterRows(const Tensor &a, const std::vector<int> &idx, int n_rows) {
  if (a.Rank() != 2) throw std::invalid_argument("ScatterRows: rank-2 only");
  if (static_cast<int>(idx.size()) != a.Rows())
    throw std::invalid_argument("ScatterRows: index count mismatch");
  int n = a.Cols(), m = a.Rows();
  for (int i : idx)
    if (i < 0 || i >= n_rows) throw std::invalid_argument("ScatterRows: index out of range");
  std::vector<double> v(static_cast<size_t>(n_rows) * n, 0.0);
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i)
    std::copy(&av[static_cast<size_t>(i) * n], &av[static_cast<size_t>(i) * n] + n,
              &v[static_cast<size_t>(idx[i]) * n]);
  return MakeOp({n_rows, n}, std::move(v), {a}, [n, m, idx](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[static_cast<size_t>(i) * n + j] +=
            self.grad[static_cast<size_t>(idx[i]) * n + j];
  });
}

Tensor AddRowBroadcast(const Tensor &a, const Tensor &row) {
  if (a.Rank() != 2 || row.NumEl() != a.Cols())
    throw std::invalid_argument("AddRowBroadcast: shape mismatch");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value(), &rv = row.Value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<size_t>(i) * n + j] = av[static_cast<size_t>(i) * n + j] + rv[j];
  return MakeOp({m, n}, std::move(v), {a, row}, [m, n](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &pr = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pr->requires_grad) {
      pr->EnsureGrad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          pr->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
    }
  });
}

Tensor MulRowBroadcast(const Tensor &a, const Tensor &row) {
  if (a.Rank() != 2 || row.NumEl() != a.Cols())
    throw std::invalid_argument("MulRowBroadcast: shape mismatch");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(a.NumEl());
  const auto &av = a.Value(), &rv = row.Value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<size_t>(i) * n + j] = av[static_cast<size_t>(i) * n + j] * rv[j];
  return MakeOp({m, n}, std::move(v), {a, row}, [m, n](detail::Node &self) {
    auto &pa = self.parents[0];
    auto &pr = self.parents[1];
    if (pa->requires_grad) {
      pa->EnsureGrad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          pa->grad[static_cast<size_t>(i) * n + j] +=
              self.grad[static_cast<size_t>(i) * n + j] * pr->value[j];
    }
    if (pr->requires_grad) {
      pr->EnsureGrad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          pr->grad[j] += self.grad[static_cast<size_t>(i) * n + j] *
                         pa->value[static_cast<size_t>(i) * n + j];
    }
  });
}

Tensor RepeatRow(const Tensor &row, int m) {
  if (row.Rank() != 2 || row.Rows() != 1)
    throw std::invalid_argument("RepeatRow: expects [1 x n]");
  int n = row.Cols();
  std::vector<double> v(static_cast<size_t>(m) * n);
  const auto &rv = row.Value();
  for (int i = 0; i < m; ++i)
    std::copy(rv.begin(), rv.end(), &v[static_cast<size_t>(i) * n]);
  return MakeOp({m, n}, std::move(v), {row}, [m, n](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
  });
}

Tensor MeanRows(const Tensor &a) {
  if (a.Rank() != 2) throw std::invalid_argument("MeanRows: rank-2 only");
  int m = a.Rows(), n = a.Cols();
  std::vector<double> v(n, 0.0);
  const auto &av = a.Value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[j] += av[static_cast<size_t>(i) * n + j];
  for (int j = 0; j < n; ++j) v[j] /= m;
  return MakeOp({1, n}, std::move(v), {a}, [m, n](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p->grad[static_cast<size_t>(i) * n + j] += self.grad[j] / m;
  });
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor Conv1dDepthwise(const Tensor &x, const Tensor &w, const Tensor &bias) {
  if (x.Rank() != 2 || w.Rank() != 2 || x.Cols() != w.Cols())
    throw std::invalid_argument("Conv1dDepthwise: shape mismatch");
  if (bias.NumEl() != x.Cols())
    throw std::invalid_argument("Conv1dDepthwise: bias size mismatch");
  int n = x.Rows(), d = x.Cols(), k = w.Rows();
  int c = k / 2;
  std::vector<double> v(x.NumEl());
  const auto &xv = x.Value(), &wv = w.Value(), &bv = bias.Value();
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < d; ++j) {
      double acc = bv[j];
      for (int q = 0; q < k; ++q) {
        int src = t + q - c;
        if (src < 0 || src >= n) continue;
        acc += wv[static_cast<size_t>(q) * d + j] * xv[static_cast<size_t>(src) * d + j];
      }
      v[static_cast<size_t>(t) * d + j] = acc;
    }
  }
  return MakeOp({n, d}, std::move(v), {x, w, bias},
                [n, d, k, c](detail::Node &self) {
                  auto &px = self.parents[0];
                  auto &pw = self.parents[1];
                  auto &pb = self.parents[2];
                  if (px->requires_grad) px->EnsureGrad();
                  if (pw->requires_grad) pw->EnsureGrad();
                  if (pb->requires_grad) pb->EnsureGrad();
                  for (int t = 0; t < n; ++t) {
                    for (int j = 0; j < d; ++j) {
                      double g = self.grad[static_cast<size_t>(t) * d + j];
                      if (g == 0.0) continue;
                      if (pb->requires_grad) pb->grad[j] += g;
                      for (int q = 0; q < k; ++q) {
                        int src = t + q - c;
                        if (src < 0 || src >= n) continue;
                        if (px->requires_grad)
                          px->grad[static_cast<size_t>(src) * d + j] +=
                              g * pw->value[static_cast<size_t>(q) * d + j];
                        if (pw->requires_grad)
                          pw->grad[static_cast<size_t>(q) * d + j] +=
                              g * px->value[static_cast<size_t>(src) * d + j];
                      }
                    }
                  }
                });
}

Tensor Conv2d(const Tensor &x, const Tensor &w, const Tensor &bias, int stride,
              int pad) {
  if (x.Rank() != 3 || w.Rank() != 4)
    throw std::invalid_argument("Conv2d: expects x [Ci,H,W], w [Co,Ci,kh,kw]");
  int ci = x.Dims()[0], h = x.Dims()[1], wd = x.Dims()[2];
  int co = w.Dims()[0], wci = w.Dims()[1], kh = w.Dims()[2], kw = w.Dims()[3];
  if (wci != ci) throw std::invalid_argument("Conv2d: channel mismatch");
  if (bias.NumEl() != co) throw std::invalid_argument("Conv2d: bias size mismatch");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("Conv2d: output collapses to zero");
  std::vector<double> v(static_cast<size_t>(co) * oh * ow, 0.0);
  const auto &xv = x.Value(), &wv = w.Value(), &bv = bias.Value();
  auto xat = [&](int c, int i, int j) -> double {
    return xv[(static_cast<size_t>(c) * h + i) * wd + j];
  };
  for (int oc = 0; oc < co; ++oc) {
    for (int oi = 0; oi < oh; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        double acc = bv[oc];
        int i0 = oi * stride - pad, j0 = oj * stride - pad;
        for (int c = 0; c < ci; ++c)
          for (int p = 0; p < kh; ++p) {
            int i = i0 + p;
            if (i < 0 || i >= h) continue;
            for (int q = 0; q < kw; ++q) {
              int j = j0 + q;
              if (j < 0 || j >= wd) continue;
              acc += wv[((static_cast<size_t>(oc) * ci + c) * kh + p) * kw + q] *
                     xat(c, i, j);
            }
          }
        v[(static_cast<size_t>(oc) * oh + oi) * ow + oj] = acc;
      }
    }
  }
  return MakeOp({co, oh, ow}, std::move(v), {x, w, bias},
                [ci, h, wd, co, kh, kw, oh, ow, stride, pad](detail::Node &self) {
                  auto &px = self.parents[0];
                  auto &pw = self.parents[1];
                  auto &pb = self.parents[2];
                  if (px->requires_grad) px->EnsureGrad();
                  if (pw->requires_grad) pw->EnsureGrad();
                  if (pb->requires_grad) pb->EnsureGrad();
                  for (int oc = 0; oc < co; ++oc) {
                    for (int oi = 0; oi < oh; ++oi) {
                      for (int oj = 0; oj < ow; ++oj) {
                        double g = self.grad[(static_cast<size_t>(oc) * oh + oi) * ow + oj];
                        if (g == 0.0) continue;
                        if (pb->requires_grad) pb->grad[oc] += g;
                        int i0 = oi * stride - pad, j0 = oj * stride - pad;
                        for (int c = 0; c < ci; ++c)
                          for (int p = 0; p < kh; ++p) {
                            int i = i0 + p;
                            if (i < 0 || i >= h) continue;
                            for (int q = 0; q < kw; ++q) {
                              int j = j0 + q;
                              if (j < 0 || j >= wd) continue;
                              size_t widx =
                                  ((static_cast<size_t>(oc) * ci + c) * kh + p) * kw + q;
                              size_t xidx = (static_cast<size_t>(c) * h + i) * wd + j;
                              if (px->requires_grad)
                                px->grad[xidx] += g * pw->value[widx];
                              if (pw->requires_grad)
                                pw->grad[widx] += g * px->value[xidx];
                            }
                          }
                      }
                    }
                  }
                });
}

Tensor Reshape(const Tensor &a, const Shape &shape) {
  if (NumElOf(shape) != a.NumEl())
    throw std::invalid_argument("Reshape: element count mismatch");
  std::vector<double> v = a.Value();
  return MakeOp(shape, std::move(v), {a}, [](detail::Node &self) {
    auto &p = self.parents[0];
    p->EnsureGrad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor Dropout(const Tensor &x, double p, Rng *rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("Dropout: p must be < 1");
  double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.NumEl());
  for (double &m : mask) m = (rng->Uniform() < p) ? 0.0 : scale;
  std::vector<double> v(x.NumEl());
  const auto &xv = x.Value();
  for (size_t i = 0; i < v.size(); ++i) v[i] = xv[i] * mask[i];
  return MakeOp(x.Dims(), std::move(v), {x},
                [mask = std::move(mask)](detail::Node &self) {
                  auto &px = self.parents[0];
                  px->EnsureGrad();
                  for (size_t i = 0; i < self.grad.size(); ++i)
                    px->grad[i] += self.grad[i] * mask[i];
                });
}

double L1Norm(const Tensor &a) {
  double acc = 0.0;
  for (double v : a.Value()) acc += std::fabs(v);
  return acc;
}

double MaxAbs(const Tensor &a) {
  double acc = 0.0;
  for (double v : a.Value()) acc = std::max(acc, std::fabs(v));
  return acc;
}

bool AllFinite(const Tensor &a) {
  for (double v : a.Value())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ldspeech

// ldspeech/nn.cc

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

#include "ldspeech/nn.h"

#include <cmath>

namespace ldspeech {

Linear::Linear(int in_dim, int out_dim, Rng *rng) {
  w = Tensor::Randn({in_dim, out_dim}, rng, 1.0 / std::sqrt(in_dim), true);
  b = Tensor::Zeros({1, out_dim}, true);
}

Tensor Linear::Forward(const Tensor &x) const {
  return AddRowBroadcast(MatMul(x, w), b);
}

void Linear::Collect(const std::string &prefix, ParamMap *out) const {
  out->emplace_back(prefix + ".w", w);
  out->emplace_back(prefix + ".b", b);
}

LayerNorm::LayerNorm(int dim) {
  gain = Tensor::Full({1, dim}, 1.0, true);
  bias = Tensor::Zeros({1, dim}, true);
}

Tensor LayerNorm::Forward(const Tensor &x) const {
  return LayerNormRows(x, gain, bias);
}

void LayerNorm::Collect(const std::string &prefix, ParamMap *out) const {
  out->emplace_back(prefix + ".gain", gain);
  out->emplace_back(prefix + ".bias", bias);
}

Embedding::Embedding(int vocab, int dim, Rng *rng) {
  table = Tensor::Randn({vocab, dim}, rng, 1.0, true);
}

Tensor Embedding::Forward(const std::vector<int> &ids) const {
  return GatherRows(table, ids);
}

void Embedding::Collect(const std::string &prefix, ParamMap *out) const {
  out->emplace_back(prefix + ".table", table);
}

Tensor SinusoidalRows(int n, int dim) {
  Tensor pe = Tensor::Zeros({n, dim});
  auto &v = pe.MutableValue();
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i * 2 < dim; ++i) {
      double freq = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
      v[static_cast<size_t>(pos) * dim + 2 * i] = std::sin(pos * freq);
      if (2 * i + 1 < dim)
        v[static_cast<size_t>(pos) * dim + 2 * i + 1] = std::cos(pos * freq);
    }
  }
  return pe;
}

Tensor TimeEmbedding(double t, int dim) {
  Tensor row = Tensor::Zeros({1, dim});
  auto &v = row.MutableValue();
  double pos = 1000.0 * t;
  for (int i = 0; i * 2 < dim; ++i) {
    double freq = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
    v[2 * i] = std::sin(pos * freq);
    if (2 * i + 1 < dim) v[2 * i + 1] = std::cos(pos * freq);
  }
  return row;
}

FeedForward::FeedForward(int dim, int mult, Rng *rng)
    : in(dim, dim * mult, rng), out(dim * mult, dim, rng) {}

Tensor FeedForward::Forward(const Tensor &x, Rng *drop, double p) const {
  Tensor h = Silu(in.Forward(x));
  if (drop) h = Dropout(h, p, drop);
  h = out.Forward(h);
  if (drop) h = Dropout(h, p, drop);
  return h;
}

void FeedForward::Collect(const std::string &prefix, ParamMap *out_map) const {
  in.Collect(prefix + ".in", out_map);
  out.Collect(prefix + ".out", out_map);
}

Mhsa::Mhsa(int dim, int heads_in, Rng *rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng),
      heads(heads_in) {
  if (dim % heads_in != 0)
    throw ConfigError("attention dim not divisible by head count");
}

Tensor Mhsa::Forward(const Tensor &x, Rng *drop, double p) const {
  int dim = x.Cols();
  int dh = dim / heads;
  Tensor qs = q.Forward(x), ks = k.Forward(x), vs = v.Forward(x);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = SliceCols(qs, h * dh, (h + 1) * dh);
    Tensor kh = SliceCols(ks, h * dh, (h + 1) * dh);
    Tensor vh = SliceCols(vs, h * dh, (h + 1) * dh);
    Tensor attn = SoftmaxRows(MulScalar(MatMul(qh, Transpose(kh)), scale));
    outs.push_back(MatMul(attn, vh));
  }
  Tensor y = o.Forward(ConcatCols(outs));
  if (drop) y = Dropout(y, p, drop);
  return y;
}

void Mhsa::Collect(const std::string &prefix, ParamMap *out) const {
  q.Collect(prefix + ".q", out);
  k.Collect(prefix + ".k", out);
  v.Collect(prefix + ".v", out);
  o.Collect(prefix + ".o", out);
}

ConvModule::ConvModule(int dim, int kernel, Rng *rng)
    : pw_in(dim, 2 * dim, rng), ln(dim), pw_out(dim, dim, rng) {
  dw_w = Tensor::Randn({kernel, dim}, rng, 1.0 / std::sqrt(kernel), true);
  dw_b = Tensor::Zeros({1, dim}, true);
}

Tensor ConvModule::Forward(const Tensor &x, Rng *drop, double p) const {
  int dim = x.Cols();
  Tensor g = pw_in.Forward(x);
  Tensor a = SliceCols(g, 0, dim);
  Tensor gate = SliceCols(g, dim, 2 * dim);
  Tensor h = Mul(a, Sigmoid(gate));
  h = Conv1dDepthwise(h, dw_w, dw_b);
  h = Silu(ln.Forward(h));
  h = pw_out.Forward(h);
  if (drop) h = Dropout(h, p, drop);
  return h;
}

void ConvModule::Collect(const std::string &prefix, ParamMap *out) const {
  pw_in.Collect(prefix + ".pw_in", out);
  out->emplace_back(prefix + ".dw_w", dw_w);
  out->emplace_back(prefix + ".dw_b", dw_b);
  ln.Collect(prefix + ".ln", out);
  pw_out.Collect(prefix + ".pw_out", out);
}

ConformerBlock::ConformerBlock(const ConformerConfig &cfg, Rng *rng)
    : ln_ffn1(cfg.dim), ln_mhsa(cfg.dim), ln_conv(cfg.dim), ln_ffn2(cfg.dim),
      ln_out(cfg.dim),
      ffn1(cfg.dim, cfg.ffn_mult, rng), ffn2(cfg.dim, cfg.ffn_mult, rng),
      mhsa(cfg.dim, cfg.heads, rng), conv(cfg.dim, cfg.kernel, rng) {
  if (cfg.time_dim > 0) {
    film = Linear(cfg.time_dim, 2 * cfg.dim, rng);
    // Zero so conditioning starts as the identity and grows during training.
    std::fill(film.w.MutableValue().begin(), film.w.MutableValue().end(), 0.0);
    has_film = true;
  }
}

Tensor ConformerBlock::Forward(const Tensor &x, const Tensor &t_row, Rng *drop,
                               double p) const {
  Tensor h = x;
  if (has_film && t_row.Defined()) {
    int dim = x.Cols();
    Tensor mod = film.Forward(t_row);  // [1 x 2 dim]
    Tensor scale = AddScalar(SliceCols(mod, 0, dim), 1.0);
    Tensor shift = SliceCols(mod, dim, 2 * dim);
    h = AddRowBroadcast(MulRowBroadcast(h, scale), shift);
  }
  h = Add(h, MulScalar(ffn1.Forward(ln_ffn1.Forward(h), drop, p), 0.5));
  h = Add(h, mhsa.Forward(ln_mhsa.Forward(h), drop, p));
  h = Add(h, conv.Forward(ln_conv.Forward(h), drop, p));
  h = Add(h, MulScalar(ffn2.Forward(ln_ffn2.Forward(h), drop, p), 0.5));
  return ln_out.Forward(h);
}

void ConformerBlock::Collect(const std::string &prefix, ParamMap *out) const {
  ln_ffn1.Collect(prefix + ".ln_ffn1", out);
  ffn1.Collect(prefix + ".ffn1", out);
  ln_mhsa.Collect(prefix + ".ln_mhsa", out);
  mhsa.Collect(prefix + ".mhsa", out);
  ln_conv.Collect(prefix + ".ln_conv", out);
  conv.Collect(prefix + ".conv", out);
  ln_ffn2.Collect(prefix + ".ln_ffn2", out);
  ffn2.Collect(prefix + ".ffn2", out);
  ln_out.Collect(prefix + ".ln_out", out);
  if (has_film) film.Collect(prefix + ".film", out);
}

ConformerStack::ConformerStack(const ConformerConfig &cfg_in, Rng *rng)
    : cfg(cfg_in), in_proj(cfg_in.in_dim, cfg_in.dim, rng) {
  blocks.reserve(cfg.layers);
  for (int i = 0; i < cfg.layers; ++i) blocks.emplace_back(cfg, rng);
}

Tensor ConformerStack::Forward(const Tensor &x, Rng *drop,
                               const Tensor &t_row) const {
  Tensor h = in_proj.Forward(x);
  if (cfg.use_pos_enc) h = Add(h, SinusoidalRows(h.Rows(), cfg.dim));
  for (const auto &block : blocks)
    h = block.Forward(h, t_row, drop, cfg.dropout);
  return h;
}

void ConformerStack::Collect(const std::string &prefix, ParamMap *out) const {
  in_proj.Collect(prefix + ".in_proj", out);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].Collect(prefix + ".blocks." + std::to_string(i), out);
}

Adam::Adam(ParamMap params, double lr, double clip, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), clip_(clip), beta1_(beta1),
      beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].second.NumEl(), 0.0);
    v_[i].assign(params_[i].second.NumEl(), 0.0);
  }
}

void Adam::Step() {
  ++step_;
  double sq = 0.0;
  for (auto &[name, p] : params_) {
    p.EnsureGrad();
    for (double g : p.node()->grad) sq += g * g;
  }
  last_norm_ = std::sqrt(sq);
  double scale = (last_norm_ > clip_ && last_norm_ > 0.0)
                     ? clip_ / last_norm_
                     : 1.0;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto &p = params_[i].second;
    auto &val = p.MutableValue();
    const auto &grad = p.node()->grad;
    for (size_t j = 0; j < val.size(); ++j) {
      double g = grad[j] * scale;
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::ZeroGrad() {
  for (auto &[name, p] : params_) p.ZeroGrad();
}

}  // namespace ldspeech

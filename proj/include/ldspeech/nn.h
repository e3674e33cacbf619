// ldspeech/nn.h

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

#ifndef LDSPEECH_NN_H_
#define LDSPEECH_NN_H_

#include <string>
#include <utility>
#include <vector>

#include "ldspeech/tensor.h"

namespace ldspeech {

// Named parameters in construction order; the ordering is the checkpoint
// serialization order and must stay stable across runs.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

class Linear {
 public:
  Linear() = default;
  Linear(int in_dim, int out_dim, Rng *rng);
  Tensor Forward(const Tensor &x) const;  // [N x in] -> [N x out]
  void Collect(const std::string &prefix, ParamMap *out) const;

  Tensor w;  // [in x out]
  Tensor b;  // [1 x out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim);
  Tensor Forward(const Tensor &x) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  Tensor gain;  // [1 x dim]
  Tensor bias;  // [1 x dim]
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(int vocab, int dim, Rng *rng);
  Tensor Forward(const std::vector<int> &ids) const;  // [len(ids) x dim]
  void Collect(const std::string &prefix, ParamMap *out) const;

  Tensor table;  // [vocab x dim]
};

// Fixed sine/cosine position rows, one per frame index 0..n-1.
Tensor SinusoidalRows(int n, int dim);
// Diffusion time t in [0,1] mapped onto the same encoding at position 1000 t.
Tensor TimeEmbedding(double t, int dim);

struct ConformerConfig {
  int layers = 2;
  int dim = 32;
  int heads = 4;
  int kernel = 7;
  int in_dim = 32;  // projected to dim by the input layer
  int ffn_mult = 4;
  double dropout = 0.1;
  bool use_pos_enc = false;
  int time_dim = 0;  // > 0 adds per-block affine modulation from a time row
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(int dim, int mult, Rng *rng);
  Tensor Forward(const Tensor &x, Rng *drop, double p) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  Linear in, out;
};

class Mhsa {
 public:
  Mhsa() = default;
  Mhsa(int dim, int heads, Rng *rng);
  Tensor Forward(const Tensor &x, Rng *drop, double p) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  Linear q, k, v, o;
  int heads = 1;
};

class ConvModule {
 public:
  ConvModule() = default;
  ConvModule(int dim, int kernel, Rng *rng);
  Tensor Forward(const Tensor &x, Rng *drop, double p) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  Linear pw_in;       // dim -> 2 dim, gated
  Tensor dw_w, dw_b;  // depthwise kernel [K x dim], bias [1 x dim]
  LayerNorm ln;
  Linear pw_out;
};

class ConformerBlock {
 public:
  ConformerBlock() = default;
  ConformerBlock(const ConformerConfig &cfg, Rng *rng);
  // t_row: [1 x time_dim] or undefined when the block is unconditioned.
  Tensor Forward(const Tensor &x, const Tensor &t_row, Rng *drop,
                 double p) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  LayerNorm ln_ffn1, ln_mhsa, ln_conv, ln_ffn2, ln_out;
  FeedForward ffn1, ffn2;
  Mhsa mhsa;
  ConvModule conv;
  Linear film;  // time_dim -> 2 dim (scale, shift); zero-initialized
  bool has_film = false;
};

class ConformerStack {
 public:
  ConformerStack() = default;
  ConformerStack(const ConformerConfig &cfg, Rng *rng);
  // drop == nullptr runs in eval mode (no dropout). With cfg.layers == 0 the
  // stack degenerates to the pointwise input projection.
  Tensor Forward(const Tensor &x, Rng *drop = nullptr,
                 const Tensor &t_row = Tensor()) const;
  void Collect(const std::string &prefix, ParamMap *out) const;

  ConformerConfig cfg;
  Linear in_proj;
  std::vector<ConformerBlock> blocks;
};

struct TrainStats {
  std::vector<double> eval_losses;  // corpus mean loss, recorded periodically
};

// Adaptive-moment optimizer with global gradient-norm clipping.
class Adam {
 public:
  explicit Adam(ParamMap params, double lr = 2e-4, double clip = 1.0,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void Step();
  void ZeroGrad();
  double LastGradNorm() const { return last_norm_; }

 private:
  ParamMap params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, clip_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace ldspeech

#endif  // LDSPEECH_NN_H_

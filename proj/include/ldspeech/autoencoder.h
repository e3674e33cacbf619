// ldspeech/autoencoder.h

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

#ifndef LDSPEECH_AUTOENCODER_H_
#define LDSPEECH_AUTOENCODER_H_

#include <vector>

#include "ldspeech/data.h"
#include "ldspeech/nn.h"
#include "ldspeech/tensor.h"
#include "ldspeech/types.h"

namespace ldspeech {

// Factorized Gaussian posterior over the phoneme-rate latent, one row per
// phoneme. log_sigma is the log standard deviation.
struct PosteriorParams {
  Tensor mu;         // [M x D_latent]
  Tensor log_sigma;  // [M x D_latent]
};

struct LatentCode {
  Tensor z0;  // [M x D_latent]
};

struct VaeConfig {
  int d_mel = 16;
  int d_latent = 8;
  double laplace_b = 0.05;
  ConformerConfig encoder;
  ConformerConfig decoder;
  int steps = 3000;
  int eval_every = 0;
  double lr = 2e-4;
  unsigned long long seed = 0;

  VaeConfig() {
    encoder.layers = 2;
    encoder.dim = 32;
    encoder.heads = 4;
    encoder.kernel = 7;
    encoder.use_pos_enc = true;
    decoder = encoder;
  }
};

// z0 = mu + exp(log_sigma) * noise, elementwise.
LatentCode SamplePosterior(const PosteriorParams &p, const Tensor &noise);

// Sum over all cells of (mu^2 + sigma^2 - 1 - 2 log sigma) / 2.
Tensor KlToStandardNormal(const PosteriorParams &p);

// Scatters row i of z0 to frame a_i (1-based); every other row is zero.
Tensor Upsample(const Tensor &z0, const Alignment &a, int n_frames);

// Sum over cells of log(2b) + |y - y_hat| / b.
Tensor LaplaceNll(const Tensor &y, const Tensor &y_hat, double b);

// Encoder conformer over frames, gathered at the alignment spikes, projected
// to posterior parameters; decoder conformer over the zero-filled upsampled
// latent back to Mel frames.
class VaeModel {
 public:
  explicit VaeModel(const VaeConfig &cfg);

  PosteriorParams Encode(const Tensor &mel, const Alignment &a,
                         Rng *drop = nullptr) const;
  Tensor Decode(const Tensor &z0, const Alignment &a, int n_frames,
                Rng *drop = nullptr) const;
  // KL + Laplace reconstruction NLL for one utterance, reparameterized with
  // the caller's standard-normal draw.
  Tensor ElboLoss(const Tensor &mel, const Alignment &a, const Tensor &noise,
                  Rng *drop = nullptr) const;
  ParamMap Params() const;
  const VaeConfig &config() const { return cfg_; }

 private:
  VaeConfig cfg_;
  ConformerStack enc_, dec_;
  Linear post_;     // dim -> 2 D_latent, split into (mu, log_sigma)
  Linear mel_out_;  // dim -> D_mel
};

// Minimizes the mean ELBO loss with one ground-truth-or-inferred alignment
// per corpus item. Throws NumericalError if the loss stops being finite.
VaeModel TrainVae(const SynthCorpus &corpus,
                  const std::vector<Alignment> &alignments,
                  const VaeConfig &cfg, TrainStats *stats = nullptr);

}  // namespace ldspeech

#endif  // LDSPEECH_AUTOENCODER_H_

// ldspeech/diffusion.h

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

#ifndef LDSPEECH_DIFFUSION_H_
#define LDSPEECH_DIFFUSION_H_

#include <functional>
#include <string>
#include <vector>

#include "ldspeech/autoencoder.h"
#include "ldspeech/data.h"
#include "ldspeech/nn.h"
#include "ldspeech/tensor.h"
#include "ldspeech/types.h"

namespace ldspeech {

// Lower limit for training times and reverse integration; the transition
// score is singular at t = 0.
constexpr double kTimeEps = 1e-3;

// Maps integer frame durations to a continuous channel and back:
//   l = log(d - u + c0) + c1,   d = max(1, ceil(exp(l - c1) - c0)).
// The round trip is exact for any u in [0, 1) since d - u + c0 - c0 lands in
// (d - 1, d].
struct DurationCodecConfig {
  double c0 = 1.0;
  double c1 = 0.0;
};

std::vector<double> DequantizeDurations(const std::vector<int> &d,
                                        const std::vector<double> &u,
                                        const DurationCodecConfig &cfg);
std::vector<int> QuantizeDurations(const std::vector<double> &l,
                                   const DurationCodecConfig &cfg);

// Refits c1 so the duration channel is zero-mean over the corpus, evaluated
// at the dequantization midpoint u = 0.5.
DurationCodecConfig RefitCodec(const std::vector<Alignment> &alignments,
                               double c0 = 1.0);

// Linear beta(t) = beta_min + t (beta_max - beta_min) on t in [0, 1] with
//   alpha_bar(t) = exp(-(beta_min t + (beta_max - beta_min) t^2 / 2)),
// the survival factor of the variance-preserving forward process.
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  double Beta(double t) const { return beta_min + t * (beta_max - beta_min); }
  double AlphaBar(double t) const;
};

// x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps, the closed-form draw
// from the forward transition density.
Tensor Perturb(const Tensor &x0, double t, const Tensor &eps,
               const NoiseSchedule &sched);

// Gradient of the log transition density at x_t:
//   -(x_t - sqrt(alpha_bar) x0) / (1 - alpha_bar).
Tensor TrueTransitionScore(const Tensor &x_t, const Tensor &x0, double t,
                           const NoiseSchedule &sched);

// Phoneme-conditioned score network over the joint duration/latent rows.
// Input rows are [l | z] with one row per phoneme; the phoneme encoder output
// (and, when enabled, a repeated speaker embedding) is concatenated
// feature-wise, and the diffusion time enters every block through a
// sinusoidal row.
struct ScoreModelConfig {
  int vocab_size = 6;
  int d_latent = 8;
  // Forward process the score head is scaled against; the estimator predicts
  // the noise and the score is its negative over sqrt(1 - alpha_bar), so the
  // sampling and training schedule must be this one.
  NoiseSchedule schedule;
  ConformerConfig phoneme_enc;
  ConformerConfig estimator;
  ConformerConfig speaker_enc;
  bool use_speaker = false;
  unsigned long long seed = 0;

  ScoreModelConfig() {
    phoneme_enc.layers = 2;
    phoneme_enc.dim = 32;
    phoneme_enc.heads = 4;
    phoneme_enc.kernel = 7;
    phoneme_enc.use_pos_enc = true;
    estimator = phoneme_enc;
    estimator.layers = 4;
    estimator.time_dim = 32;
    speaker_enc = phoneme_enc;
    speaker_enc.use_pos_enc = false;
  }
};

class ScoreModel {
 public:
  ScoreModel() = default;
  explicit ScoreModel(const ScoreModelConfig &cfg);

  // Score estimate at (x_t, t) conditioned on the phoneme row w and, when
  // configured, a speaker embedding row. Output shape equals x_t's.
  Tensor Score(const Tensor &x_t, double t, const PhonemeSequence &w,
               const Tensor &spk = Tensor(), Rng *drop = nullptr) const;
  // Mean-pooled conformer embedding of a reference x0, one row.
  Tensor SpeakerEmbed(const Tensor &x0_ref, Rng *drop = nullptr) const;
  ParamMap Params() const;
  const ScoreModelConfig &config() const { return cfg_; }

 private:
  ScoreModelConfig cfg_;
  Embedding emb_;
  ConformerStack phoneme_enc_, estimator_, speaker_enc_;
  Linear out_proj_;
};

// Score providers for the samplers; must return a tensor of x's shape.
using ScoreFn = std::function<Tensor(const Tensor &x, double t)>;

// Wraps a model (with fixed conditioning) as a tape-free score provider.
ScoreFn MakeModelScore(const ScoreModel &model, const PhonemeSequence &w,
                       const Tensor &spk = Tensor());

// One-draw denoising score matching objective: t uniform on [kTimeEps, 1],
// x_t from Perturb, squared error against the true transition score weighted
// by 1 - alpha_bar(t). Expectation over draws is size(x0) for a zero score.
Tensor DsmLoss(const ScoreFn &score, const Tensor &x0,
               const NoiseSchedule &sched, Rng *rng);
Tensor DsmLoss(const ScoreModel &model, const Tensor &x0,
               const PhonemeSequence &w, Rng *rng,
               const Tensor &spk = Tensor(), Rng *drop = nullptr);

// Euler-Maruyama integration of the reverse-time SDE
//   dx = [-beta/2 x - beta s(x,t)] dt + sqrt(beta) dW
// from t = 1 (x ~ N(0, I)) down to kTimeEps on a uniform grid.
Tensor SampleEm(const ScoreFn &score, const Shape &shape, int steps,
                const NoiseSchedule &sched, Rng *rng);

// Euler integration of the probability-flow ODE
//   dx/dt = -beta/2 (x + s(x,t))
// from t = 1 down to kTimeEps, deterministic given the start point x1.
Tensor SampleOde(const ScoreFn &score, const Tensor &x1, int steps,
                 const NoiseSchedule &sched);

struct DiffusionConfig {
  ScoreModelConfig model;
  DurationCodecConfig codec;
  int steps = 20000;
  int eval_every = 0;
  double lr = 2e-4;
  unsigned long long seed = 0;
};

// Trains the score network on x0 = [l | z0] rows built from each item's
// alignment (uniform dequantization, resampled per visit) and a posterior
// draw from the frozen autoencoder. When the model is speaker-conditioned,
// the item's own x0 serves as the reference.
ScoreModel TrainDiffusion(const SynthCorpus &corpus,
                          const std::vector<Alignment> &alignments,
                          const VaeModel &vae, const DiffusionConfig &cfg,
                          TrainStats *stats = nullptr);

struct SynthesisResult {
  MelSpectrogram mel;
  Alignment alignment;
  Tensor x0;  // sampled [M x (D_latent + 1)] joint rows
};

// Splits a sampled joint state into the duration channel and the latent rows,
// quantizes the durations, rebuilds the alignment by cumulative sum, and
// decodes to frames. The frame total is capped so a divergent state fails
// with an error instead of a huge decode.
SynthesisResult DecodeJointState(const VaeModel &vae, const Tensor &x0,
                                 const DurationCodecConfig &codec);

// Samples x0 with the reverse SDE under the model's own schedule and decodes
// it with DecodeJointState.
SynthesisResult Synthesize(const ScoreModel &model, const VaeModel &vae,
                           const PhonemeSequence &w,
                           const DurationCodecConfig &codec, int steps,
                           Rng *rng, const Tensor &spk = Tensor());

}  // namespace ldspeech

#endif  // LDSPEECH_DIFFUSION_H_

// ldspeech/inverse.h

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

#ifndef LDSPEECH_INVERSE_H_
#define LDSPEECH_INVERSE_H_

#include "ldspeech/aligner.h"
#include "ldspeech/autoencoder.h"
#include "ldspeech/data.h"
#include "ldspeech/diffusion.h"
#include "ldspeech/tensor.h"
#include "ldspeech/types.h"

namespace ldspeech {

// Three-way split of an utterance's phoneme rows: the first m_a and the last
// m_c rows are kept, the m_b rows between them are swapped for `replacement`.
// An empty replacement deletes the middle; m_b = 0 with a nonempty
// replacement inserts.
struct EditSpec {
  int m_a = 0;
  int m_b = 0;
  int m_c = 0;
  PhonemeSequence replacement;

  int SourceSize() const { return m_a + m_b + m_c; }
  int EditedSize() const { return m_a + replacement.Size() + m_c; }
};

// The same split seen from the edited side: the middle block is the
// replacement, so masked selection over the edited rows keeps dropping the
// middle.
EditSpec EditedLayout(const EditSpec &spec);

// Anchored measurement of the kept rows: target values and per-cell scales,
// both (m_a + m_c) x K. In the editing pipeline the duration column of
// sigma_tilde is identically one and the latent columns carry the posterior
// standard deviation.
struct Observation {
  Tensor o;
  Tensor sigma_tilde;
};

// Guidance weight: xi0 / (1 - alpha_bar(t) + delta) in the time-scaled mode,
// plain xi0 otherwise.
struct GuidanceConfig {
  double xi0 = 1.0;
  double delta = 1e-4;
  bool time_scaled = true;

  double Xi(double t, const NoiseSchedule &sched) const;
};

// pi = (x_t + (1 - alpha_bar) s(x_t, t)) / sqrt(alpha_bar), the estimate of
// E[x0 | x_t] implied by a score; exact when the score is the true
// transition score for x0.
Tensor DenoisedEstimate(const ScoreFn &score, const Tensor &x_t, double t,
                        const NoiseSchedule &sched);
Tensor DenoisedEstimate(const ScoreModel &model, const Tensor &x_t, double t,
                        const PhonemeSequence &w, const Tensor &spk = Tensor());

// Stacks rows [0, m_a) and [rows - m_c, rows); the middle block is dropped.
// Works for any column count. A selection that keeps no rows returns an
// undefined tensor.
Tensor MaskedSelect(const Tensor &u, const EditSpec &spec);

// -xi(t) * grad_x ||(MaskedSelect(pi(x, t)) - o) / sigma_tilde||^2, the
// gradient taken through the denoised estimate by automatic differentiation.
// `edited` describes the layout of x_t's rows; the score closure must be
// built from differentiable tensor ops.
Tensor GuidanceGradient(const ScoreFn &score, const Tensor &x_t, double t,
                        const Observation &obs, const EditSpec &edited,
                        const GuidanceConfig &cfg, const NoiseSchedule &sched);
Tensor GuidanceGradient(const ScoreModel &model, const Tensor &x_t, double t,
                        const PhonemeSequence &w, const Observation &obs,
                        const EditSpec &edited, const GuidanceConfig &cfg,
                        const Tensor &spk = Tensor());

// Score with the observation pull folded in: score(x, t) plus the guidance
// gradient at every evaluation. Feed to SampleEm or SampleOde.
ScoreFn GuidedScore(const ScoreFn &score, const Observation &obs,
                    const EditSpec &edited, const GuidanceConfig &cfg,
                    const NoiseSchedule &sched);
ScoreFn GuidedScore(const ScoreModel &model, const PhonemeSequence &w,
                    const Observation &obs, const EditSpec &edited,
                    const GuidanceConfig &cfg, const Tensor &spk = Tensor());

struct GuidedSampleOptions {
  int steps = 300;
  bool use_ode = false;
  GuidanceConfig guidance;
};

// Reverse-time sampling of the edited joint rows under the guided score.
// The ODE variant integrates from a seeded prior draw.
Tensor GuidedSample(const ScoreModel &model, const PhonemeSequence &w,
                    const Observation &obs, const EditSpec &edited,
                    const GuidedSampleOptions &opts, Rng *rng,
                    const Tensor &spk = Tensor());

struct EditOptions {
  DurationCodecConfig codec;
  GuidedSampleOptions sample;
};

struct EditResult {
  MelSpectrogram mel;
  Alignment alignment;
  Tensor x0;  // sampled edited joint rows, EditedSize x (d_latent + 1)
};

// Text-based editing: force-aligns the source against its phonemes, anchors
// the kept rows to the deterministic duration channel and the posterior mean
// with scales [1 | sigma], samples the edited rows under guidance, and
// decodes. The replacement rows' durations and latents are free.
EditResult Edit(const AlignerModel &aligner, const VaeModel &vae,
                const ScoreModel &model, const MelSpectrogram &y,
                const PhonemeSequence &w, const EditSpec &spec,
                const EditOptions &opts, Rng *rng,
                const Tensor &spk = Tensor());

// Prompt-based adaptation: the reference utterance is kept whole as the
// prefix, new_w is generated after it, and only the frames past the prompt
// are returned.
MelSpectrogram ZeroShot(const AlignerModel &aligner, const VaeModel &vae,
                        const ScoreModel &model, const MelSpectrogram &ref_y,
                        const PhonemeSequence &ref_w,
                        const PhonemeSequence &new_w, const EditOptions &opts,
                        Rng *rng, const Tensor &spk = Tensor());

// Speech continuation is the same prompt-completion operation by another
// name.
MelSpectrogram SpeechContinuation(const AlignerModel &aligner,
                                  const VaeModel &vae, const ScoreModel &model,
                                  const MelSpectrogram &ref_y,
                                  const PhonemeSequence &ref_w,
                                  const PhonemeSequence &new_w,
                                  const EditOptions &opts, Rng *rng,
                                  const Tensor &spk = Tensor());

}  // namespace ldspeech

#endif  // LDSPEECH_INVERSE_H_

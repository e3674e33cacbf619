// ldspeech/inverse.cc

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

#include "ldspeech/inverse.h"

#include <cmath>
#include <vector>

#include "ldspeech/common.h"

namespace ldspeech {

namespace {

void CheckSegments(const EditSpec &spec) {
  if (spec.m_a < 0 || spec.m_b < 0 || spec.m_c < 0)
    throw ConfigError("edit segment lengths must be nonnegative");
}

void CheckObservation(const Observation &obs, const EditSpec &edited,
                      int cols) {
  const int kept = edited.m_a + edited.m_c;
  if (kept == 0) {
    if (obs.o.Defined() || obs.sigma_tilde.Defined())
      throw ConfigError("observation shape mismatch");
    return;
  }
  if (!obs.o.Defined() || !obs.sigma_tilde.Defined() || obs.o.Rank() != 2 ||
      obs.o.Rows() != kept || obs.o.Cols() != cols ||
      obs.sigma_tilde.Dims() != obs.o.Dims())
    throw ConfigError("observation shape mismatch");
  for (double s : obs.sigma_tilde.Value())
    if (!(s > 0.0)) throw ConfigError("observation scales must be positive");
}

// Gradient of || (MaskedSelect(pi(x, t)) - o) / sigma_tilde ||^2 with respect
// to x, evaluated at x_t through a taped copy. The score closure must build
// its output from differentiable tensor ops.
Tensor ObjectiveGradient(const ScoreFn &score, const Tensor &x_t, double t,
                         const Observation &obs, const EditSpec &edited,
                         const NoiseSchedule &sched) {
  Tensor x = Tensor::FromData(x_t.Dims(), x_t.Value(), true);
  Tensor pi = DenoisedEstimate(score, x, t, sched);
  Tensor sel = MaskedSelect(pi, edited);
  std::vector<double> inv(obs.sigma_tilde.Value());
  for (double &v : inv) v = 1.0 / v;
  Tensor scaled =
      Mul(Sub(sel, obs.o), Tensor::FromData(obs.sigma_tilde.Dims(), inv));
  Tensor objective = Sum(Square(scaled));
  objective.Backward();
  return Tensor::FromData(x.Dims(), x.Grad());
}

}  // namespace

EditSpec EditedLayout(const EditSpec &spec) {
  CheckSegments(spec);
  EditSpec edited = spec;
  edited.m_b = spec.replacement.Size();
  return edited;
}

double GuidanceConfig::Xi(double t, const NoiseSchedule &sched) const {
  if (!(xi0 >= 0.0)) throw ConfigError("guidance weight must be nonnegative");
  if (!(delta >= 0.0)) throw ConfigError("guidance delta must be nonnegative");
  if (!time_scaled) return xi0;
  return xi0 / (1.0 - sched.AlphaBar(t) + delta);
}

Tensor DenoisedEstimate(const ScoreFn &score, const Tensor &x_t, double t,
                        const NoiseSchedule &sched) {
  if (!(t > 0.0 && t <= 1.0)) throw ConfigError("time outside (0, 1]");
  const double abar = sched.AlphaBar(t);
  Tensor s = score(x_t, t);
  return MulScalar(Add(x_t, MulScalar(s, 1.0 - abar)),
                   1.0 / std::sqrt(abar));
}

Tensor DenoisedEstimate(const ScoreModel &model, const Tensor &x_t, double t,
                        const PhonemeSequence &w, const Tensor &spk) {
  ScoreFn fn = [&model, &w, &spk](const Tensor &x, double tt) {
    return model.Score(x, tt, w, spk);
  };
  return DenoisedEstimate(fn, x_t, t, model.config().schedule);
}

Tensor MaskedSelect(const Tensor &u, const EditSpec &spec) {
  CheckSegments(spec);
  if (!u.Defined() || u.Rank() != 2 ||
      u.Rows() != spec.m_a + spec.m_b + spec.m_c)
    throw ConfigError("edit spec does not partition the rows");
  const int rows = u.Rows();
  if (spec.m_a + spec.m_c == 0) return Tensor();
  if (spec.m_c == 0) return SliceRows(u, 0, spec.m_a);
  if (spec.m_a == 0) return SliceRows(u, rows - spec.m_c, rows);
  return ConcatRows(
      {SliceRows(u, 0, spec.m_a), SliceRows(u, rows - spec.m_c, rows)});
}

Tensor GuidanceGradient(const ScoreFn &score, const Tensor &x_t, double t,
                        const Observation &obs, const EditSpec &edited,
                        const GuidanceConfig &cfg, const NoiseSchedule &sched) {
  CheckSegments(edited);
  if (!x_t.Defined() || x_t.Rank() != 2 ||
      x_t.Rows() != edited.m_a + edited.m_b + edited.m_c)
    throw ConfigError("edit spec does not partition the rows");
  CheckObservation(obs, edited, x_t.Cols());
  const double xi = cfg.Xi(t, sched);
  if (xi == 0.0 || edited.m_a + edited.m_c == 0)
    return Tensor::Zeros(x_t.Dims());
  Tensor grad = ObjectiveGradient(score, x_t, t, obs, edited, sched);
  NoGradGuard ng;
  return MulScalar(grad, -xi);
}

Tensor GuidanceGradient(const ScoreModel &model, const Tensor &x_t, double t,
                        const PhonemeSequence &w, const Observation &obs,
                        const EditSpec &edited, const GuidanceConfig &cfg,
                        const Tensor &spk) {
  ScoreFn fn = [&model, &w, &spk](const Tensor &x, double tt) {
    return model.Score(x, tt, w, spk);
  };
  return GuidanceGradient(fn, x_t, t, obs, edited, cfg,
                          model.config().schedule);
}

ScoreFn GuidedScore(const ScoreFn &score, const Observation &obs,
                    const EditSpec &edited, const GuidanceConfig &cfg,
                    const NoiseSchedule &sched) {
  return [score, obs, edited, cfg, sched](const Tensor &x, double t) {
    Tensor g = GuidanceGradient(score, x, t, obs, edited, cfg, sched);
    return Add(score(x, t), g);
  };
}

ScoreFn GuidedScore(const ScoreModel &model, const PhonemeSequence &w,
                    const Observation &obs, const EditSpec &edited,
                    const GuidanceConfig &cfg, const Tensor &spk) {
  ScoreFn taped = [&model, w, spk](const Tensor &x, double t) {
    return model.Score(x, t, w, spk);
  };
  return GuidedScore(taped, obs, edited, cfg, model.config().schedule);
}

Tensor GuidedSample(const ScoreModel &model, const PhonemeSequence &w,
                    const Observation &obs, const EditSpec &edited,
                    const GuidedSampleOptions &opts, Rng *rng,
                    const Tensor &spk) {
  CheckSegments(edited);
  if (w.Size() != edited.m_a + edited.m_b + edited.m_c)
    throw ConfigError("edit spec does not partition the phoneme sequence");
  if (w.Size() < 1) throw ConfigError("empty phoneme sequence");
  ScoreFn fn = GuidedScore(model, w, obs, edited, opts.guidance, spk);
  const Shape shape = {w.Size(), model.config().d_latent + 1};
  const NoiseSchedule &sched = model.config().schedule;
  if (opts.use_ode) {
    Tensor x1 = Tensor::Randn(shape, rng);
    return SampleOde(fn, x1, opts.steps, sched);
  }
  return SampleEm(fn, shape, opts.steps, sched, rng);
}

EditResult Edit(const AlignerModel &aligner, const VaeModel &vae,
                const ScoreModel &model, const MelSpectrogram &y,
                const PhonemeSequence &w, const EditSpec &spec,
                const EditOptions &opts, Rng *rng, const Tensor &spk) {
  CheckSegments(spec);
  if (spec.SourceSize() != w.Size())
    throw ConfigError("edit spec does not partition the phoneme sequence");
  if (spec.EditedSize() < 1) throw ConfigError("empty phoneme sequence");

  Observation obs;
  {
    NoGradGuard ng;
    Alignment a = ForcedAlign(aligner.LogProbs(y.values), w);
    PosteriorParams post = vae.Encode(y.values, a);
    // The anchored duration channel is the deterministic midpoint encoding
    // of the observed durations.
    std::vector<double> u(a.durations.size(), 0.5);
    std::vector<double> l = DequantizeDurations(a.durations, u, opts.codec);
    Tensor l_col = Tensor::FromData({w.Size(), 1}, l);
    Tensor mu_tilde = ConcatCols({l_col, post.mu});
    Tensor sigma_tilde =
        ConcatCols({Tensor::Full({w.Size(), 1}, 1.0), Exp(post.log_sigma)});
    obs.o = MaskedSelect(mu_tilde, spec);
    obs.sigma_tilde = MaskedSelect(sigma_tilde, spec);
  }

  PhonemeSequence edited_w;
  edited_w.ids.reserve(spec.EditedSize());
  for (int i = 0; i < spec.m_a; ++i) edited_w.ids.push_back(w.ids[i]);
  for (int id : spec.replacement.ids) edited_w.ids.push_back(id);
  for (int i = spec.m_a + spec.m_b; i < w.Size(); ++i)
    edited_w.ids.push_back(w.ids[i]);

  Tensor x0 = GuidedSample(model, edited_w, obs, EditedLayout(spec),
                           opts.sample, rng, spk);
  SynthesisResult decoded = DecodeJointState(vae, x0, opts.codec);

  EditResult out;
  out.mel = decoded.mel;
  out.mel.frame_hop_s = y.frame_hop_s;
  out.alignment = decoded.alignment;
  out.x0 = x0;
  return out;
}

MelSpectrogram ZeroShot(const AlignerModel &aligner, const VaeModel &vae,
                        const ScoreModel &model, const MelSpectrogram &ref_y,
                        const PhonemeSequence &ref_w,
                        const PhonemeSequence &new_w, const EditOptions &opts,
                        Rng *rng, const Tensor &spk) {
  if (new_w.Size() < 1) throw ConfigError("nothing to generate");
  EditSpec spec;
  spec.m_a = ref_w.Size();
  spec.replacement = new_w;
  EditResult res =
      Edit(aligner, vae, model, ref_y, ref_w, spec, opts, rng, spk);

  NoGradGuard ng;
  const int prompt_frames = res.alignment.spikes[spec.m_a - 1];
  MelSpectrogram out;
  out.values =
      SliceRows(res.mel.values, prompt_frames, res.mel.values.Rows());
  out.frame_hop_s = ref_y.frame_hop_s;
  return out;
}

MelSpectrogram SpeechContinuation(const AlignerModel &aligner,
                                  const VaeModel &vae, const ScoreModel &model,
                                  const MelSpectrogram &ref_y,
                                  const PhonemeSequence &ref_w,
                                  const PhonemeSequence &new_w,
                                  const EditOptions &opts, Rng *rng,
                                  const Tensor &spk) {
  return ZeroShot(aligner, vae, model, ref_y, ref_w, new_w, opts, rng, spk);
}

}  // namespace ldspeech

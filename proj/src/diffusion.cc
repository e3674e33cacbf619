// ldspeech/diffusion.cc

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

#include "ldspeech/diffusion.h"

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "ldspeech/common.h"

namespace ldspeech {

namespace {

void CheckSchedule(const NoiseSchedule &sched) {
  if (!(sched.beta_min > 0.0) || !(sched.beta_min <= sched.beta_max))
    throw ConfigError("invalid noise schedule");
}

void CheckCodec(const DurationCodecConfig &cfg) {
  if (!(cfg.c0 > 0.0)) throw ConfigError("codec constant c0 must be positive");
}

// x0 = [l | z0] for one utterance: freshly dequantized durations in column 0,
// a posterior draw in the rest. Built tape-free; the autoencoder is frozen
// during diffusion training.
Tensor BuildJointRows(const VaeModel &vae, const Tensor &mel,
                      const Alignment &a, const DurationCodecConfig &codec,
                      Rng *rng) {
  NoGradGuard ng;
  const int m = a.Size();
  std::vector<double> u(m);
  for (auto &v : u) v = rng->Uniform();
  std::vector<double> l = DequantizeDurations(a.durations, u, codec);
  PosteriorParams p = vae.Encode(mel, a);
  Tensor noise = Tensor::Randn({m, p.mu.Cols()}, rng);
  Tensor z0 = SamplePosterior(p, noise).z0;
  Tensor l_col = Tensor::FromData({m, 1}, std::move(l));
  return ConcatCols({l_col, z0});
}

}  // namespace

std::vector<double> DequantizeDurations(const std::vector<int> &d,
                                        const std::vector<double> &u,
                                        const DurationCodecConfig &cfg) {
  CheckCodec(cfg);
  if (d.size() != u.size())
    throw ConfigError("one noise draw required per duration");
  std::vector<double> l(d.size());
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 1) throw ConfigError("duration must be positive");
    if (!(u[i] >= 0.0 && u[i] < 1.0))
      throw ConfigError("dequantization noise must lie in [0, 1)");
    l[i] = std::log(static_cast<double>(d[i]) - u[i] + cfg.c0) + cfg.c1;
  }
  return l;
}

std::vector<int> QuantizeDurations(const std::vector<double> &l,
                                   const DurationCodecConfig &cfg) {
  CheckCodec(cfg);
  std::vector<int> d(l.size());
  for (size_t i = 0; i < l.size(); ++i) {
    double cont = std::exp(l[i] - cfg.c1) - cfg.c0;
    if (!std::isfinite(cont) || cont > 1e6)
      throw NumericalError("duration overflow");
    // The nudge keeps u = 0, which decodes to the cell's right endpoint,
    // from being rounded up by floating-point noise in exp(log(d)).
    d[i] = std::max(1, static_cast<int>(std::ceil(cont - 1e-9)));
  }
  return d;
}

DurationCodecConfig RefitCodec(const std::vector<Alignment> &alignments,
                               double c0) {
  DurationCodecConfig cfg;
  cfg.c0 = c0;
  CheckCodec(cfg);
  double sum = 0.0;
  long count = 0;
  for (const auto &a : alignments)
    for (int d : a.durations) {
      if (d < 1) throw ConfigError("duration must be positive");
      sum += std::log(static_cast<double>(d) - 0.5 + c0);
      ++count;
    }
  if (count == 0) throw ConfigError("no durations to fit");
  cfg.c1 = -sum / static_cast<double>(count);
  return cfg;
}

double NoiseSchedule::AlphaBar(double t) const {
  CheckSchedule(*this);
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("time outside [0, 1]");
  return std::exp(-(beta_min * t + (beta_max - beta_min) * t * t / 2.0));
}

Tensor Perturb(const Tensor &x0, double t, const Tensor &eps,
               const NoiseSchedule &sched) {
  double abar = sched.AlphaBar(t);
  return Add(MulScalar(x0, std::sqrt(abar)),
             MulScalar(eps, std::sqrt(1.0 - abar)));
}

Tensor TrueTransitionScore(const Tensor &x_t, const Tensor &x0, double t,
                           const NoiseSchedule &sched) {
  if (!(t > 0.0)) throw NumericalError("degenerate transition");
  double abar = sched.AlphaBar(t);
  Tensor centered = Sub(x_t, MulScalar(x0, std::sqrt(abar)));
  return MulScalar(centered, -1.0 / (1.0 - abar));
}

ScoreModel::ScoreModel(const ScoreModelConfig &cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  ConformerConfig pc = cfg.phoneme_enc;
  emb_ = Embedding(cfg.vocab_size, pc.in_dim, &rng);
  phoneme_enc_ = ConformerStack(pc, &rng);
  ConformerConfig ec = cfg.estimator;
  ec.in_dim = cfg.d_latent + 1 + pc.dim;
  if (cfg.use_speaker) ec.in_dim += cfg.speaker_enc.dim;
  estimator_ = ConformerStack(ec, &rng);
  out_proj_ = Linear(ec.dim, cfg.d_latent + 1, &rng);
  if (cfg.use_speaker) {
    ConformerConfig sc = cfg.speaker_enc;
    sc.in_dim = cfg.d_latent + 1;
    speaker_enc_ = ConformerStack(sc, &rng);
  }
}

Tensor ScoreModel::Score(const Tensor &x_t, double t, const PhonemeSequence &w,
                         const Tensor &spk, Rng *drop) const {
  if (!(t > 0.0 && t <= 1.0)) throw ConfigError("time outside (0, 1]");
  if (x_t.Rank() != 2 || x_t.Cols() != cfg_.d_latent + 1)
    throw ConfigError("score input must have one latent-plus-duration row "
                      "per phoneme");
  if (w.Size() != x_t.Rows())
    throw ConfigError("phoneme count must match score rows");
  for (int id : w.ids)
    if (id < 0 || id >= cfg_.vocab_size)
      throw ConfigError("phoneme id out of range");
  if (cfg_.use_speaker != spk.Defined())
    throw ConfigError(cfg_.use_speaker
                          ? "speaker embedding required"
                          : "model is not speaker-conditioned");

  Tensor h_w = phoneme_enc_.Forward(emb_.Forward(w.ids), drop);
  Tensor feats = ConcatCols({x_t, h_w});
  if (cfg_.use_speaker) {
    if (spk.Rank() != 2 || spk.Rows() != 1 ||
        spk.Cols() != cfg_.speaker_enc.dim)
      throw ConfigError("speaker embedding has wrong shape");
    feats = ConcatCols({feats, RepeatRow(spk, x_t.Rows())});
  }
  Tensor t_row = TimeEmbedding(t, cfg_.estimator.time_dim);
  Tensor noise_est = out_proj_.Forward(estimator_.Forward(feats, drop, t_row));
  // The head predicts the perturbation noise, whose cells stay near unit
  // scale at every time; dividing by -sqrt(1 - alpha_bar) turns it into the
  // score, which grows without bound as t drops toward zero.
  double abar = cfg_.schedule.AlphaBar(t);
  return MulScalar(noise_est, -1.0 / std::sqrt(1.0 - abar));
}

Tensor ScoreModel::SpeakerEmbed(const Tensor &x0_ref, Rng *drop) const {
  if (!cfg_.use_speaker)
    throw ConfigError("model is not speaker-conditioned");
  if (!x0_ref.Defined() || x0_ref.Rank() != 2 || x0_ref.Rows() < 1 ||
      x0_ref.Cols() != cfg_.d_latent + 1)
    throw ConfigError("empty reference");
  return MeanRows(speaker_enc_.Forward(x0_ref, drop));
}

ParamMap ScoreModel::Params() const {
  ParamMap out;
  emb_.Collect("diffusion.emb", &out);
  phoneme_enc_.Collect("diffusion.phoneme_enc", &out);
  estimator_.Collect("diffusion.estimator", &out);
  out_proj_.Collect("diffusion.out_proj", &out);
  if (cfg_.use_speaker) speaker_enc_.Collect("diffusion.speaker_enc", &out);
  return out;
}

ScoreFn MakeModelScore(const ScoreModel &model, const PhonemeSequence &w,
                       const Tensor &spk) {
  return [&model, w, spk](const Tensor &x, double t) {
    NoGradGuard ng;
    return model.Score(x, t, w, spk);
  };
}

Tensor DsmLoss(const ScoreFn &score, const Tensor &x0,
               const NoiseSchedule &sched, Rng *rng) {
  double t = kTimeEps + (1.0 - kTimeEps) * rng->Uniform();
  double abar = sched.AlphaBar(t);
  Tensor eps = Tensor::Randn(x0.Dims(), rng);
  Tensor x_t, target;
  {
    NoGradGuard ng;
    x_t = Perturb(x0, t, eps, sched);
    target = TrueTransitionScore(x_t, x0, t, sched);
  }
  Tensor loss = MulScalar(Sum(Square(Sub(score(x_t, t), target))), 1.0 - abar);
  if (!AllFinite(loss)) throw NumericalError("dsm loss is not finite");
  return loss;
}

Tensor DsmLoss(const ScoreModel &model, const Tensor &x0,
               const PhonemeSequence &w, Rng *rng, const Tensor &spk,
               Rng *drop) {
  ScoreFn fn = [&](const Tensor &x, double t) {
    return model.Score(x, t, w, spk, drop);
  };
  return DsmLoss(fn, x0, model.config().schedule, rng);
}

Tensor SampleEm(const ScoreFn &score, const Shape &shape, int steps,
                const NoiseSchedule &sched, Rng *rng) {
  CheckSchedule(sched);
  if (steps < 1) throw ConfigError("at least one step required");
  Tensor x = Tensor::Randn(shape, rng);
  const double dt = (1.0 - kTimeEps) / steps;
  for (int k = 0; k < steps; ++k) {
    double t = 1.0 - k * dt;
    double beta = sched.Beta(t);
    Tensor s = score(x, t).Detach();
    Tensor noise = Tensor::Randn(shape, rng);
    NoGradGuard ng;
    Tensor drift = Add(MulScalar(x, 0.5 * beta), MulScalar(s, beta));
    x = Add(Add(x, MulScalar(drift, dt)),
            MulScalar(noise, std::sqrt(beta * dt)));
  }
  return x;
}

Tensor SampleOde(const ScoreFn &score, const Tensor &x1, int steps,
                 const NoiseSchedule &sched) {
  CheckSchedule(sched);
  if (steps < 1) throw ConfigError("at least one step required");
  Tensor x = x1;
  const double dt = (1.0 - kTimeEps) / steps;
  for (int k = 0; k < steps; ++k) {
    double t = 1.0 - k * dt;
    double beta = sched.Beta(t);
    Tensor s = score(x, t).Detach();
    NoGradGuard ng;
    x = Add(x, MulScalar(Add(x, s), 0.5 * beta * dt));
  }
  return x;
}

ScoreModel TrainDiffusion(const SynthCorpus &corpus,
                          const std::vector<Alignment> &alignments,
                          const VaeModel &vae, const DiffusionConfig &cfg,
                          TrainStats *stats) {
  if (corpus.items.empty()) throw ConfigError("empty corpus");
  if (alignments.size() != corpus.items.size())
    throw ConfigError("one alignment required per corpus item");
  CheckSchedule(cfg.model.schedule);
  CheckCodec(cfg.codec);

  ScoreModel model(cfg.model);
  ParamMap params = model.Params();
  for (auto &kv : params) kv.second.SetRequiresGrad(true);
  Adam opt(params, cfg.lr);
  Rng rng(cfg.seed + 1);

  auto item_loss = [&](size_t i, Rng *r, Rng *drop) {
    Tensor x0 = BuildJointRows(vae, corpus.items[i].mel.values, alignments[i],
                               cfg.codec, r);
    Tensor spk;
    if (cfg.model.use_speaker) spk = model.SpeakerEmbed(x0, drop);
    return DsmLoss(model, x0, corpus.items[i].phonemes, r, spk, drop);
  };

  auto eval_mean = [&]() {
    NoGradGuard ng;
    Rng eval_rng(cfg.seed + 2);
    double total = 0.0;
    for (size_t i = 0; i < corpus.items.size(); ++i)
      total += item_loss(i, &eval_rng, nullptr).Item();
    return total / static_cast<double>(corpus.items.size());
  };

  for (int step = 0; step < cfg.steps; ++step) {
    if (stats && cfg.eval_every > 0 && step % cfg.eval_every == 0)
      stats->eval_losses.push_back(eval_mean());
    size_t pick = rng.UniformInt(0, static_cast<int>(corpus.items.size()) - 1);
    Tensor loss = item_loss(pick, &rng, &rng);
    double value = loss.Item();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "diffusion training diverged: loss " << value << " at step "
          << step;
      throw NumericalError(msg.str());
    }
    opt.ZeroGrad();
    loss.Backward();
    opt.Step();
  }
  if (stats && cfg.eval_every > 0) stats->eval_losses.push_back(eval_mean());
  return model;
}

SynthesisResult DecodeJointState(const VaeModel &vae, const Tensor &x0,
                                 const DurationCodecConfig &codec) {
  if (!x0.Defined() || x0.Rank() != 2 || x0.Rows() < 1 ||
      x0.Cols() != vae.config().d_latent + 1)
    throw ConfigError("joint state must have one latent-plus-duration row "
                      "per phoneme");
  SynthesisResult out;
  out.x0 = x0;
  NoGradGuard ng;
  Tensor l_col = SliceCols(x0, 0, 1);
  Tensor z0 = SliceCols(x0, 1, x0.Cols());
  std::vector<double> l(l_col.Value());
  out.alignment.durations = QuantizeDurations(l, codec);
  long total = 0;
  for (int d : out.alignment.durations) {
    total += d;
    out.alignment.spikes.push_back(static_cast<int>(total));
  }
  if (total > 4096) throw NumericalError("synthesized alignment too long");
  out.mel.values = vae.Decode(z0, out.alignment, static_cast<int>(total));
  return out;
}

SynthesisResult Synthesize(const ScoreModel &model, const VaeModel &vae,
                           const PhonemeSequence &w,
                           const DurationCodecConfig &codec, int steps,
                           Rng *rng, const Tensor &spk) {
  if (w.Size() < 1) throw ConfigError("empty phoneme sequence");
  const int m = w.Size();
  const int cols = model.config().d_latent + 1;
  Tensor x0 = SampleEm(MakeModelScore(model, w, spk), {m, cols}, steps,
                       model.config().schedule, rng);
  return DecodeJointState(vae, x0, codec);
}

}  // namespace ldspeech

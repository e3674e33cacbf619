// ldspeech/autoencoder.cc

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

#include "ldspeech/autoencoder.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "ldspeech/aligner.h"
#include "ldspeech/common.h"

namespace ldspeech {

namespace {

// Validates monotonicity and the frame bound; returns 0-based gather indices.
std::vector<int> SpikeIndices(const Alignment &a, int n_frames) {
  if (a.Size() == 0) throw ConfigError("empty alignment");
  Durations(a.spikes);
  if (a.spikes.back() > n_frames) throw ConfigError("alignment exceeds frames");
  std::vector<int> idx(a.spikes.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = a.spikes[i] - 1;
  return idx;
}

}  // namespace

LatentCode SamplePosterior(const PosteriorParams &p, const Tensor &noise) {
  return {Add(p.mu, Mul(Exp(p.log_sigma), noise))};
}

Tensor KlToStandardNormal(const PosteriorParams &p) {
  Tensor var = Exp(MulScalar(p.log_sigma, 2.0));
  Tensor cell = Sub(AddScalar(Add(Square(p.mu), var), -1.0),
                    MulScalar(p.log_sigma, 2.0));
  return MulScalar(Sum(cell), 0.5);
}

Tensor Upsample(const Tensor &z0, const Alignment &a, int n_frames) {
  std::vector<int> idx = SpikeIndices(a, n_frames);
  if (z0.Rows() != a.Size())
    throw ConfigError("latent row count does not match alignment");
  return ScatterRows(z0, idx, n_frames);
}

Tensor LaplaceNll(const Tensor &y, const Tensor &y_hat, double b) {
  if (b <= 0.0) throw ConfigError("laplace scale must be positive");
  if (y.Dims() != y_hat.Dims()) throw ConfigError("shape mismatch");
  double c = static_cast<double>(y.NumEl()) * std::log(2.0 * b);
  return AddScalar(MulScalar(Sum(Abs(Sub(y, y_hat))), 1.0 / b), c);
}

VaeModel::VaeModel(const VaeConfig &cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  ConformerConfig ec = cfg.encoder;
  ec.in_dim = cfg.d_mel;
  enc_ = ConformerStack(ec, &rng);
  post_ = Linear(ec.dim, 2 * cfg.d_latent, &rng);
  ConformerConfig dc = cfg.decoder;
  dc.in_dim = cfg.d_latent;
  dec_ = ConformerStack(dc, &rng);
  mel_out_ = Linear(dc.dim, cfg.d_mel, &rng);
}

PosteriorParams VaeModel::Encode(const Tensor &mel, const Alignment &a,
                                 Rng *drop) const {
  std::vector<int> idx = SpikeIndices(a, mel.Rows());
  Tensor e = enc_.Forward(mel, drop);
  Tensor packed = post_.Forward(GatherRows(e, idx));
  return {SliceCols(packed, 0, cfg_.d_latent),
          SliceCols(packed, cfg_.d_latent, 2 * cfg_.d_latent)};
}

Tensor VaeModel::Decode(const Tensor &z0, const Alignment &a, int n_frames,
                        Rng *drop) const {
  Tensor up = Upsample(z0, a, n_frames);
  return mel_out_.Forward(dec_.Forward(up, drop));
}

Tensor VaeModel::ElboLoss(const Tensor &mel, const Alignment &a,
                          const Tensor &noise, Rng *drop) const {
  PosteriorParams p = Encode(mel, a, drop);
  LatentCode z = SamplePosterior(p, noise);
  Tensor recon = Decode(z.z0, a, mel.Rows(), drop);
  return Add(KlToStandardNormal(p), LaplaceNll(mel, recon, cfg_.laplace_b));
}

ParamMap VaeModel::Params() const {
  ParamMap out;
  enc_.Collect("vae.enc", &out);
  post_.Collect("vae.post", &out);
  dec_.Collect("vae.dec", &out);
  mel_out_.Collect("vae.mel_out", &out);
  return out;
}

VaeModel TrainVae(const SynthCorpus &corpus,
                  const std::vector<Alignment> &alignments,
                  const VaeConfig &cfg, TrainStats *stats) {
  if (corpus.items.empty()) throw ConfigError("empty corpus");
  if (alignments.size() != corpus.items.size())
    throw ConfigError("one alignment required per corpus item");
  VaeModel model(cfg);
  ParamMap params = model.Params();
  for (auto &kv : params) kv.second.SetRequiresGrad(true);
  Adam opt(params, cfg.lr);
  Rng rng(cfg.seed + 1);

  // Evaluations reuse one fixed noise stream so successive numbers estimate
  // the same objective.
  auto eval_mean_loss = [&]() {
    NoGradGuard ng;
    Rng eval_rng(cfg.seed + 2);
    double total = 0.0;
    for (size_t i = 0; i < corpus.items.size(); ++i) {
      const CorpusItem &item = corpus.items[i];
      Tensor noise = Tensor::Randn(
          {alignments[i].Size(), cfg.d_latent}, &eval_rng);
      total += model.ElboLoss(item.mel.values, alignments[i], noise).Item();
    }
    return total / static_cast<double>(corpus.items.size());
  };

  for (int step = 0; step < cfg.steps; ++step) {
    if (stats && cfg.eval_every > 0 && step % cfg.eval_every == 0)
      stats->eval_losses.push_back(eval_mean_loss());
    size_t pick = rng.UniformInt(0, static_cast<int>(corpus.items.size()) - 1);
    const CorpusItem &item = corpus.items[pick];
    Tensor noise =
        Tensor::Randn({alignments[pick].Size(), cfg.d_latent}, &rng);
    Tensor loss =
        model.ElboLoss(item.mel.values, alignments[pick], noise, &rng);
    const double val = loss.Item();
    if (!std::isfinite(val)) {
      std::ostringstream msg;
      msg << "vae training diverged: loss " << val << " at step " << step;
      throw NumericalError(msg.str());
    }
    opt.ZeroGrad();
    loss.Backward();
    opt.Step();
  }
  if (stats && cfg.eval_every > 0) stats->eval_losses.push_back(eval_mean_loss());
  return model;
}

}  // namespace ldspeech

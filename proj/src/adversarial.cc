// ldspeech/adversarial.cc

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

#include "ldspeech/adversarial.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "ldspeech/common.h"

namespace ldspeech {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr int kRefinerChannels = 32;
constexpr int kRefinerLayers = 4;
constexpr int kPowerIterCap = 500;
constexpr double kPowerIterTol = 1e-8;

void NormalizeInPlace(std::vector<double> *x) {
  double sq = 0.0;
  for (double v : *x) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm < 1e-12) return;
  for (double &v : *x) v /= norm;
}

}  // namespace

SnConv2d::SnConv2d(int c_in, int c_out, int kernel, int stride_arg, Rng *rng)
    : stride(stride_arg), pad(kernel / 2) {
  double std_dev = 1.0 / std::sqrt(static_cast<double>(c_in) * kernel * kernel);
  w = Tensor::Randn({c_out, c_in, kernel, kernel}, rng, std_dev);
  b = Tensor::Zeros({1, c_out});
  u = Tensor::Randn({1, c_out}, rng);
  NormalizeInPlace(&u.MutableValue());
  v = Tensor::Zeros({c_in * kernel * kernel, 1});
  NormalizedKernel();
}

Tensor SnConv2d::NormalizedKernel() {
  const int co = w.Dims()[0];
  const int rest = static_cast<int>(w.NumEl()) / co;
  {
    const auto &wv = w.Value();
    auto &uv = u.MutableValue();
    auto &vv = v.MutableValue();
    // Alternate v <- normalize(W^T u), u <- normalize(W v) until the estimate
    // u^T W v is stationary. A stationary value is accurate even when the top
    // singular values cluster, since every direction in the cluster carries
    // nearly the same value.
    double prev = -1.0;
    for (int iter = 0; iter < kPowerIterCap; ++iter) {
      for (int j = 0; j < rest; ++j) {
        double s = 0.0;
        for (int i = 0; i < co; ++i)
          s += wv[static_cast<size_t>(i) * rest + j] * uv[i];
        vv[j] = s;
      }
      NormalizeInPlace(&vv);
      double est = 0.0;
      for (int i = 0; i < co; ++i) {
        double s = 0.0;
        for (int j = 0; j < rest; ++j)
          s += wv[static_cast<size_t>(i) * rest + j] * vv[j];
        uv[i] = s;
        est += s * s;
      }
      NormalizeInPlace(&uv);
      est = std::sqrt(est);
      if (std::fabs(est - prev) <= kPowerIterTol * std::max(1.0, est)) break;
      prev = est;
    }
  }
  Tensor sigma = AddScalar(
      MatMul(u, MatMul(Reshape(w, {co, rest}), v)), 1e-12);
  return DivScalarT(w, sigma);
}

Tensor SnConv2d::Forward(const Tensor &x) {
  return Conv2d(x, NormalizedKernel(), b, stride, pad);
}

void SnConv2d::Collect(const std::string &prefix, ParamMap *out) const {
  out->emplace_back(prefix + ".w", w);
  out->emplace_back(prefix + ".b", b);
}

void SnConv2d::CollectBuffers(const std::string &prefix, ParamMap *out) const {
  out->emplace_back(prefix + ".u", u);
  out->emplace_back(prefix + ".v", v);
}

Refiner::Refiner(Rng *rng) {
  convs.emplace_back(1, kRefinerChannels, 3, 1, rng);
  for (int i = 1; i < kRefinerLayers; ++i)
    convs.emplace_back(kRefinerChannels, kRefinerChannels, 3, 1, rng);
  proj_w = Tensor::Zeros({1, kRefinerChannels, 1, 1});
  proj_b = Tensor::Zeros({1, 1});
}

Tensor Refiner::Forward(const Tensor &y) {
  if (y.Rank() != 2) throw ConfigError("refiner expects a 2-D spectrogram");
  Tensor h = Reshape(y, {1, y.Rows(), y.Cols()});
  for (auto &conv : convs) h = LeakyRelu(conv.Forward(h), kLeakySlope);
  Tensor residual = Conv2d(h, proj_w, proj_b, 1, 0);
  return Add(y, Reshape(residual, y.Dims()));
}

void Refiner::Collect(const std::string &prefix, ParamMap *out) const {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].Collect(prefix + ".convs." + std::to_string(i), out);
  out->emplace_back(prefix + ".proj_w", proj_w);
  out->emplace_back(prefix + ".proj_b", proj_b);
}

void Refiner::CollectBuffers(const std::string &prefix, ParamMap *out) const {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].CollectBuffers(prefix + ".convs." + std::to_string(i), out);
}

Discriminator::Discriminator(Rng *rng) {
  const int chans[] = {1, 16, 32, 64, 1};
  for (int i = 0; i < 4; ++i)
    convs.emplace_back(chans[i], chans[i + 1], 3, 2, rng);
}

Discriminator::Output Discriminator::Forward(const Tensor &y) {
  if (y.Rank() != 2) throw ConfigError("discriminator expects a 2-D spectrogram");
  Output out;
  Tensor h = Reshape(y, {1, y.Rows(), y.Cols()});
  for (size_t i = 0; i < convs.size(); ++i) {
    h = convs[i].Forward(h);
    if (i + 1 < convs.size()) h = LeakyRelu(h, kLeakySlope);
    out.features.push_back(h);
  }
  out.score = Reshape(h, {h.Dims()[1], h.Dims()[2]});
  return out;
}

void Discriminator::SetTrainable(bool on) {
  for (auto &conv : convs) {
    conv.w.SetRequiresGrad(on);
    conv.b.SetRequiresGrad(on);
  }
}

void Discriminator::Collect(const std::string &prefix, ParamMap *out) const {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].Collect(prefix + ".convs." + std::to_string(i), out);
}

void Discriminator::CollectBuffers(const std::string &prefix,
                                   ParamMap *out) const {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].CollectBuffers(prefix + ".convs." + std::to_string(i), out);
}

Tensor LsganDLoss(const Tensor &d_real, const Tensor &d_fake) {
  return Add(Sum(Square(AddScalar(d_real, -1.0))), Sum(Square(d_fake)));
}

Tensor LsganGLoss(const Tensor &d_fake) {
  return Sum(Square(AddScalar(d_fake, -1.0)));
}

Tensor FeatureMatchingLoss(const std::vector<Tensor> &real_feats,
                           const std::vector<Tensor> &fake_feats) {
  if (real_feats.empty() || real_feats.size() != fake_feats.size())
    throw ConfigError("feature map lists must be nonempty and equal length");
  Tensor total;
  for (size_t l = 0; l < real_feats.size(); ++l) {
    if (real_feats[l].Dims() != fake_feats[l].Dims())
      throw ConfigError("feature map shape mismatch");
    Tensor layer =
        MulScalar(Sum(Abs(Sub(real_feats[l], fake_feats[l]))),
                  1.0 / static_cast<double>(real_feats[l].NumEl()));
    total = l == 0 ? layer : Add(total, layer);
  }
  return MulScalar(total, 1.0 / static_cast<double>(real_feats.size()));
}

GanModel::GanModel(unsigned long long seed) {
  Rng rng(seed);
  refiner = Refiner(&rng);
  disc = Discriminator(&rng);
}

ParamMap GanModel::RefinerParams() const {
  ParamMap out;
  refiner.Collect("gan.refiner", &out);
  return out;
}

ParamMap GanModel::DiscParams() const {
  ParamMap out;
  disc.Collect("gan.disc", &out);
  return out;
}

ParamMap GanModel::Buffers() const {
  ParamMap out;
  refiner.CollectBuffers("gan.refiner", &out);
  disc.CollectBuffers("gan.disc", &out);
  return out;
}

AdvMetrics AdvTrainStep(VaeModel *vae, GanModel *gan, Adam *opt_d,
                        Adam *opt_g, const Tensor &mel, const Alignment &a,
                        const AdvWeights &weights, Rng *rng) {
  const int d_latent = vae->config().d_latent;
  AdvMetrics m;

  // Discriminator phase against a generator sample held constant.
  gan->disc.SetTrainable(true);
  {
    Tensor fake;
    {
      NoGradGuard ng;
      Tensor noise = Tensor::Randn({a.Size(), d_latent}, rng);
      PosteriorParams p = vae->Encode(mel, a);
      Tensor recon = vae->Decode(SamplePosterior(p, noise).z0, a, mel.Rows());
      fake = gan->refiner.Forward(recon);
    }
    Tensor d_loss = LsganDLoss(gan->disc.Forward(mel).score,
                               gan->disc.Forward(fake).score);
    m.d_loss = d_loss.Item();
    opt_d->ZeroGrad();
    MulScalar(d_loss, weights.w_d).Backward();
    opt_d->Step();
  }

  // Generator phase; the discriminator participates as a fixed function.
  gan->disc.SetTrainable(false);
  {
    Tensor noise = Tensor::Randn({a.Size(), d_latent}, rng);
    PosteriorParams p = vae->Encode(mel, a);
    Tensor recon = vae->Decode(SamplePosterior(p, noise).z0, a, mel.Rows());
    Tensor refined = gan->refiner.Forward(recon);
    Discriminator::Output df = gan->disc.Forward(refined);
    Discriminator::Output dr = gan->disc.Forward(mel);
    Tensor g_adv = LsganGLoss(df.score);
    Tensor feat = FeatureMatchingLoss(dr.features, df.features);
    Tensor vae_loss = Add(KlToStandardNormal(p),
                          LaplaceNll(mel, refined, vae->config().laplace_b));
    m.g_loss = g_adv.Item();
    m.feat_loss = feat.Item();
    m.vae_loss = vae_loss.Item();
    Tensor total = Add(Add(MulScalar(g_adv, weights.w_g),
                           MulScalar(feat, weights.w_feat)),
                       MulScalar(vae_loss, weights.w_vae));
    opt_g->ZeroGrad();
    total.Backward();
    opt_g->Step();
  }
  gan->disc.SetTrainable(true);

  if (!std::isfinite(m.d_loss) || !std::isfinite(m.g_loss) ||
      !std::isfinite(m.feat_loss) || !std::isfinite(m.vae_loss)) {
    std::ostringstream msg;
    msg << "gan training diverged: d " << m.d_loss << " g " << m.g_loss
        << " feat " << m.feat_loss << " vae " << m.vae_loss;
    throw NumericalError(msg.str());
  }
  return m;
}

GanModel TrainGan(const SynthCorpus &corpus,
                  const std::vector<Alignment> &alignments, VaeModel *vae,
                  const GanConfig &cfg, std::vector<AdvMetrics> *metrics) {
  if (corpus.items.empty()) throw ConfigError("empty corpus");
  if (alignments.size() != corpus.items.size())
    throw ConfigError("one alignment required per corpus item");
  const AdvWeights &w = cfg.weights;
  if (w.w_d < 0 || w.w_g < 0 || w.w_feat < 0 || w.w_vae < 0 ||
      (w.w_d == 0 && w.w_g == 0 && w.w_feat == 0 && w.w_vae == 0))
    throw ConfigError("adversarial weights must be nonnegative, not all zero");

  GanModel gan(cfg.seed);
  ParamMap d_params = gan.DiscParams();
  for (auto &kv : d_params) kv.second.SetRequiresGrad(true);
  Adam opt_d(d_params, cfg.lr);

  ParamMap g_params = gan.RefinerParams();
  for (const auto &kv : vae->Params()) {
    bool encoder_side = kv.first.rfind("vae.enc", 0) == 0 ||
                        kv.first.rfind("vae.post", 0) == 0;
    if (cfg.freeze_encoder && encoder_side) continue;
    g_params.push_back(kv);
  }
  for (auto &kv : g_params) kv.second.SetRequiresGrad(true);
  Adam opt_g(g_params, cfg.lr);

  Rng rng(cfg.seed + 1);
  for (int step = 0; step < cfg.steps; ++step) {
    size_t pick = rng.UniformInt(0, static_cast<int>(corpus.items.size()) - 1);
    AdvMetrics m = AdvTrainStep(vae, &gan, &opt_d, &opt_g,
                                corpus.items[pick].mel.values,
                                alignments[pick], w, &rng);
    if (metrics) metrics->push_back(m);
  }
  return gan;
}

}  // namespace ldspeech

// tests/test_adversarial.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "ldspeech/adversarial.h"
#include "ldspeech/autoencoder.h"
#include "ldspeech/common.h"
#include "ldspeech/data.h"
#include "ldspeech/io.h"
#include "testing.h"

using namespace ldspeech;

namespace {

Alignment MakeAlignment(const std::vector<int> &spikes) {
  Alignment a;
  a.spikes = spikes;
  int prev = 0;
  for (int s : spikes) {
    a.durations.push_back(s - prev);
    prev = s;
  }
  return a;
}

VaeConfig ToyVae() {
  VaeConfig cfg;
  cfg.d_mel = 8;
  cfg.d_latent = 3;
  cfg.encoder.layers = 1;
  cfg.encoder.dim = 8;
  cfg.encoder.heads = 2;
  cfg.encoder.kernel = 3;
  cfg.encoder.ffn_mult = 2;
  cfg.decoder = cfg.encoder;
  cfg.seed = 31;
  return cfg;
}

// Converged power method on the (C_out x rest) reshape, independent of the
// layer's own single-step estimate.
double SpectralNormOracle(const Tensor &k) {
  const int co = k.Dims()[0];
  const int rest = static_cast<int>(k.NumEl()) / co;
  const auto &w = k.Value();
  Rng rng(123);
  std::vector<double> x(rest);
  for (auto &v : x) v = rng.Normal();
  double sigma = 0.0;
  for (int it = 0; it < 300; ++it) {
    std::vector<double> y(co, 0.0);
    for (int i = 0; i < co; ++i)
      for (int j = 0; j < rest; ++j)
        y[i] += w[static_cast<size_t>(i) * rest + j] * x[j];
    std::vector<double> x2(rest, 0.0);
    for (int i = 0; i < co; ++i)
      for (int j = 0; j < rest; ++j)
        x2[j] += w[static_cast<size_t>(i) * rest + j] * y[i];
    double n = 0.0;
    for (double v : x2) n += v * v;
    n = std::sqrt(n);
    if (n < 1e-300) return 0.0;
    for (auto &v : x2) v /= n;
    x = x2;
    double s2 = 0.0;
    for (int i = 0; i < co; ++i) {
      double yi = 0.0;
      for (int j = 0; j < rest; ++j)
        yi += w[static_cast<size_t>(i) * rest + j] * x[j];
      s2 += yi * yi;
    }
    sigma = std::sqrt(s2);
  }
  return sigma;
}

uint64_t HashSubset(const ParamMap &params,
                    const std::vector<std::string> &prefixes) {
  ParamMap picked;
  for (const auto &kv : params)
    for (const auto &pre : prefixes)
      if (kv.first.rfind(pre, 0) == 0) {
        picked.push_back(kv);
        break;
      }
  REQUIRE(!picked.empty());
  return HashParams(picked);
}

void CheckAllNormsNearOne(GanModel *gan) {
  auto check = [](SnConv2d &conv) {
    double sigma = SpectralNormOracle(conv.NormalizedKernel());
    CHECK(sigma <= 1.0 + 1e-2);
    CHECK(sigma >= 1.0 - 1e-2);
  };
  for (auto &conv : gan->refiner.convs) check(conv);
  for (auto &conv : gan->disc.convs) check(conv);
}

}  // namespace

TEST_CASE("lsgan losses match hand-computed values") {
  Tensor ones = Tensor::Full({3, 4}, 1.0);
  Tensor zeros = Tensor::Zeros({3, 4});
  CHECK(LsganDLoss(ones, zeros).Item() == doctest::Approx(0.0));
  CHECK(LsganGLoss(ones).Item() == doctest::Approx(0.0));

  Tensor half = Tensor::Full({3, 4}, 0.5);
  CHECK(LsganDLoss(half, half).Item() == doctest::Approx(6.0));
  CHECK(LsganGLoss(zeros).Item() == doctest::Approx(12.0));

  Tensor r = Tensor::Full({2, 2}, 0.3);
  Tensor f = Tensor::Full({2, 2}, -0.4);
  CHECK(LsganDLoss(r, f).Item() == doctest::Approx(4 * (0.49 + 0.16)));
  CHECK(LsganGLoss(f).Item() == doctest::Approx(4 * 1.96));

  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = testing::RandTensor({3, 5}, 100 + trial);
    Tensor b = testing::RandTensor({3, 5}, 200 + trial);
    CHECK(LsganDLoss(a, b).Item() >= 0.0);
    CHECK(LsganGLoss(a).Item() >= 0.0);
  }
}

TEST_CASE("feature matching averages per-element l1 across layers") {
  Tensor a = testing::RandTensor({2, 3}, 1);
  CHECK(FeatureMatchingLoss({a}, {a}).Item() == doctest::Approx(0.0));

  Tensor b1 = AddScalar(a, 0.5);
  Tensor r2 = testing::RandTensor({1, 4}, 2);
  Tensor f2 = AddScalar(r2, -2.0);
  CHECK(FeatureMatchingLoss({a}, {b1}).Item() == doctest::Approx(0.5));
  CHECK(FeatureMatchingLoss({a, r2}, {b1, f2}).Item() ==
        doctest::Approx((0.5 + 2.0) / 2.0));

  Tensor u = testing::RandTensor({3, 3}, 3);
  Tensor v = testing::RandTensor({3, 3}, 4);
  CHECK(FeatureMatchingLoss({u}, {v}).Item() ==
        doctest::Approx(FeatureMatchingLoss({v}, {u}).Item()));

  CHECK_THROWS_WITH_AS(FeatureMatchingLoss({}, {}),
                       "feature map lists must be nonempty and equal length",
                       ConfigError);
  CHECK_THROWS_WITH_AS(FeatureMatchingLoss({u, v}, {u}),
                       "feature map lists must be nonempty and equal length",
                       ConfigError);
  CHECK_THROWS_WITH_AS(FeatureMatchingLoss({u}, {r2}),
                       "feature map shape mismatch", ConfigError);
}

TEST_CASE("adversarial loss gradients match finite differences") {
  testing::CheckGrads(
      {testing::RandTensor({3, 2}, 10), testing::RandTensor({3, 2}, 11)},
      [](const std::vector<Tensor> &in) { return LsganDLoss(in[0], in[1]); },
      1e-5, 1e-6);
  testing::CheckGrads(
      {testing::RandTensor({3, 2}, 12)},
      [](const std::vector<Tensor> &in) { return LsganGLoss(in[0]); }, 1e-5,
      1e-6);
  testing::CheckGrads(
      {testing::RandTensor({2, 3}, 13), testing::RandTensor({2, 3}, 14),
       testing::RandTensor({1, 4}, 15), testing::RandTensor({1, 4}, 16)},
      [](const std::vector<Tensor> &in) {
        return FeatureMatchingLoss({in[0], in[2]}, {in[1], in[3]});
      },
      1e-5, 1e-5);
}

TEST_CASE("normalized kernel has unit top singular value") {
  Rng rng(9);
  SnConv2d conv(2, 3, 3, 1, &rng);
  CHECK(conv.pad == 1);
  for (int i = 0; i < 200; ++i) conv.NormalizedKernel();

  Tensor k = conv.NormalizedKernel();
  CHECK(SpectralNormOracle(k) == doctest::Approx(1.0).epsilon(1e-8));

  double sigma_raw = SpectralNormOracle(conv.w);
  CHECK(sigma_raw > 0.0);
  for (int64_t i = 0; i < k.NumEl(); ++i)
    CHECK(k.Value()[i] * sigma_raw ==
          doctest::Approx(conv.w.Value()[i]).epsilon(1e-8));

  Tensor x = testing::RandTensor({2, 4, 5}, 20);
  Tensor out = conv.Forward(x);
  CHECK(out.Dims() == Shape({3, 4, 5}));
}

TEST_CASE("spectral norm layer gradient matches finite differences") {
  Rng rng(11);
  SnConv2d conv(2, 2, 3, 1, &rng);
  for (int i = 0; i < 300; ++i) conv.NormalizedKernel();

  Tensor x = testing::RandTensor({2, 4, 5}, 6);
  testing::CheckGrads(
      {conv.w, conv.b, x},
      [&](const std::vector<Tensor> &in) {
        return testing::WeightedSum(conv.Forward(in[2]), 77);
      },
      1e-5, 1e-4);
}

TEST_CASE("refiner is the identity map at initialization") {
  GanModel gan(3);
  Tensor y = testing::RandTensor({7, 8}, 12);
  Tensor out = gan.refiner.Forward(y);
  REQUIRE(out.Dims() == y.Dims());
  CHECK(out.Value() == y.Value());

  Tensor again = gan.refiner.Forward(y);
  CHECK(again.Value() == y.Value());

  gan.refiner.proj_w.MutableValue()[0] = 0.05;
  Tensor moved = gan.refiner.Forward(y);
  CHECK(MaxAbs(Sub(moved, y)) > 0.0);
}

TEST_CASE("discriminator emits a score grid and one feature map per layer") {
  GanModel gan(4);
  Discriminator::Output out = gan.disc.Forward(testing::RandTensor({16, 8}, 13));
  REQUIRE(out.features.size() == 4);
  CHECK(out.features[0].Dims() == Shape({16, 8, 4}));
  CHECK(out.features[1].Dims() == Shape({32, 4, 2}));
  CHECK(out.features[2].Dims() == Shape({64, 2, 1}));
  CHECK(out.features[3].Dims() == Shape({1, 1, 1}));
  CHECK(out.score.Dims() == Shape({1, 1}));
  CHECK(out.score.Value()[0] == out.features[3].Value()[0]);

  Discriminator::Output wide = gan.disc.Forward(testing::RandTensor({32, 16}, 14));
  CHECK(wide.score.Dims() == Shape({2, 1}));
}

TEST_CASE("trainability toggle keeps the generator step out of the critic") {
  GanModel gan(5);
  ParamMap d_params = gan.DiscParams();
  for (auto &kv : d_params) kv.second.SetRequiresGrad(true);

  Tensor y = testing::RandTensor({8, 8}, 15);
  y.SetRequiresGrad(true);

  gan.disc.SetTrainable(false);
  Sum(gan.disc.Forward(y).score).Backward();
  for (const auto &kv : d_params) CHECK(kv.second.Grad().empty());
  REQUIRE(!y.Grad().empty());
  double max_in = 0.0;
  for (double g : y.Grad()) max_in = std::max(max_in, std::fabs(g));
  CHECK(max_in > 0.0);

  gan.disc.SetTrainable(true);
  Sum(gan.disc.Forward(y).score).Backward();
  double max_w = 0.0;
  for (const auto &kv : d_params)
    for (double g : kv.second.Grad()) max_w = std::max(max_w, std::fabs(g));
  CHECK(max_w > 0.0);
}

TEST_CASE("reconstruction-only adversarial step equals a plain elbo update") {
  VaeConfig vc = ToyVae();
  Tensor mel = testing::RandTensor({6, vc.d_mel}, 40, 0.5);
  Alignment a = MakeAlignment({3, 6});
  AdvWeights w;
  w.w_g = 0.0;
  w.w_feat = 0.0;

  VaeModel vae_a(vc);
  GanModel gan_a(7);
  ParamMap dp_a = gan_a.DiscParams();
  ParamMap gp_a = gan_a.RefinerParams();
  for (const auto &kv : vae_a.Params()) gp_a.push_back(kv);
  for (auto &kv : dp_a) kv.second.SetRequiresGrad(true);
  for (auto &kv : gp_a) kv.second.SetRequiresGrad(true);
  Adam opt_d_a(dp_a), opt_g_a(gp_a);
  Rng rng_a(99);
  AdvTrainStep(&vae_a, &gan_a, &opt_d_a, &opt_g_a, mel, a, w, &rng_a);

  VaeModel vae_b(vc);
  GanModel gan_b(7);
  ParamMap dp_b = gan_b.DiscParams();
  ParamMap gp_b = gan_b.RefinerParams();
  for (const auto &kv : vae_b.Params()) gp_b.push_back(kv);
  for (auto &kv : dp_b) kv.second.SetRequiresGrad(true);
  for (auto &kv : gp_b) kv.second.SetRequiresGrad(true);
  Adam opt_d_b(dp_b), opt_g_b(gp_b);
  Rng rng_b(99);
  {
    Tensor fake;
    {
      NoGradGuard ng;
      Tensor noise = Tensor::Randn({a.Size(), vc.d_latent}, &rng_b);
      PosteriorParams p = vae_b.Encode(mel, a);
      fake = gan_b.refiner.Forward(
          vae_b.Decode(SamplePosterior(p, noise).z0, a, mel.Rows()));
    }
    Tensor d_loss = LsganDLoss(gan_b.disc.Forward(mel).score,
                               gan_b.disc.Forward(fake).score);
    opt_d_b.ZeroGrad();
    d_loss.Backward();
    opt_d_b.Step();
  }
  {
    Tensor noise = Tensor::Randn({a.Size(), vc.d_latent}, &rng_b);
    PosteriorParams p = vae_b.Encode(mel, a);
    Tensor refined = gan_b.refiner.Forward(
        vae_b.Decode(SamplePosterior(p, noise).z0, a, mel.Rows()));
    Tensor loss =
        Add(KlToStandardNormal(p), LaplaceNll(mel, refined, vc.laplace_b));
    opt_g_b.ZeroGrad();
    loss.Backward();
    opt_g_b.Step();
  }

  CHECK(HashParams(gp_a) == HashParams(gp_b));
  CHECK(HashParams(dp_a) == HashParams(dp_b));
}

TEST_CASE("every kernel keeps unit spectral norm through training") {
  VaeConfig vc = ToyVae();
  VaeModel vae(vc);
  GanModel gan(8);
  ParamMap dp = gan.DiscParams();
  ParamMap gp = gan.RefinerParams();
  for (const auto &kv : vae.Params()) gp.push_back(kv);
  for (auto &kv : dp) kv.second.SetRequiresGrad(true);
  for (auto &kv : gp) kv.second.SetRequiresGrad(true);
  Adam opt_d(dp), opt_g(gp);

  Tensor mel = testing::RandTensor({10, vc.d_mel}, 41, 0.5);
  Alignment a = MakeAlignment({2, 5, 8, 10});
  AdvWeights w;
  Rng rng(55);
  CheckAllNormsNearOne(&gan);
  for (int step = 0; step < 10; ++step) {
    AdvMetrics m = AdvTrainStep(&vae, &gan, &opt_d, &opt_g, mel, a, w, &rng);
    CHECK(m.d_loss >= 0.0);
    CHECK(m.g_loss >= 0.0);
    CHECK(m.feat_loss >= 0.0);
    CheckAllNormsNearOne(&gan);
  }
}

TEST_CASE("gan training is reproducible and moves the refiner") {
  SynthCorpusConfig dc;
  dc.vocab_size = 3;
  dc.num_utterances = 4;
  dc.d_mel = 8;
  dc.seed = 21;
  SynthCorpus corpus = GenCorpus(dc);
  std::vector<Alignment> aligns;
  for (const auto &item : corpus.items) aligns.push_back(item.true_alignment);

  VaeConfig vc = ToyVae();
  GanConfig gc;
  gc.steps = 25;
  gc.seed = 2;

  VaeModel vae1(vc);
  std::vector<AdvMetrics> metrics1;
  GanModel gan1 = TrainGan(corpus, aligns, &vae1, gc, &metrics1);
  REQUIRE(metrics1.size() == static_cast<size_t>(gc.steps));

  VaeModel vae2(vc);
  std::vector<AdvMetrics> metrics2;
  GanModel gan2 = TrainGan(corpus, aligns, &vae2, gc, &metrics2);

  CHECK(HashParams(gan1.RefinerParams()) == HashParams(gan2.RefinerParams()));
  CHECK(HashParams(gan1.DiscParams()) == HashParams(gan2.DiscParams()));
  CHECK(HashParams(vae1.Params()) == HashParams(vae2.Params()));
  for (size_t i = 0; i < metrics1.size(); ++i) {
    CHECK(metrics1[i].d_loss == metrics2[i].d_loss);
    CHECK(metrics1[i].vae_loss == metrics2[i].vae_loss);
  }

  double proj_max = MaxAbs(gan1.refiner.proj_w);
  CHECK(proj_max > 0.0);
  Tensor y = corpus.items[0].mel.values;
  CHECK(MaxAbs(Sub(gan1.refiner.Forward(y), y)) > 0.0);
}

TEST_CASE("freezing the encoder pins posterior weights during gan training") {
  SynthCorpusConfig dc;
  dc.vocab_size = 3;
  dc.num_utterances = 4;
  dc.d_mel = 8;
  dc.seed = 22;
  SynthCorpus corpus = GenCorpus(dc);
  std::vector<Alignment> aligns;
  for (const auto &item : corpus.items) aligns.push_back(item.true_alignment);

  VaeConfig vc = ToyVae();
  VaeModel vae(vc);
  uint64_t enc_before = HashSubset(vae.Params(), {"vae.enc", "vae.post"});
  uint64_t dec_before = HashSubset(vae.Params(), {"vae.dec", "vae.mel_out"});

  GanConfig gc;
  gc.steps = 15;
  gc.seed = 3;
  gc.freeze_encoder = true;
  TrainGan(corpus, aligns, &vae, gc);

  CHECK(HashSubset(vae.Params(), {"vae.enc", "vae.post"}) == enc_before);
  CHECK(HashSubset(vae.Params(), {"vae.dec", "vae.mel_out"}) != dec_before);
}

TEST_CASE("adversarial input validation") {
  GanModel gan(6);
  CHECK_THROWS_WITH_AS(gan.refiner.Forward(Tensor::Zeros({2, 3, 4})),
                       "refiner expects a 2-D spectrogram", ConfigError);
  CHECK_THROWS_WITH_AS(gan.disc.Forward(Tensor::Zeros({2, 3, 4})),
                       "discriminator expects a 2-D spectrogram", ConfigError);

  SynthCorpusConfig dc;
  dc.vocab_size = 3;
  dc.num_utterances = 2;
  dc.d_mel = 8;
  dc.seed = 23;
  SynthCorpus corpus = GenCorpus(dc);
  std::vector<Alignment> aligns;
  for (const auto &item : corpus.items) aligns.push_back(item.true_alignment);
  VaeConfig vc = ToyVae();
  VaeModel vae(vc);

  GanConfig gc;
  gc.steps = 1;
  SynthCorpus empty;
  CHECK_THROWS_WITH_AS(TrainGan(empty, {}, &vae, gc), "empty corpus",
                       ConfigError);
  CHECK_THROWS_WITH_AS(TrainGan(corpus, {aligns[0]}, &vae, gc),
                       "one alignment required per corpus item", ConfigError);

  GanConfig zero = gc;
  zero.weights.w_d = 0.0;
  zero.weights.w_g = 0.0;
  zero.weights.w_feat = 0.0;
  zero.weights.w_vae = 0.0;
  CHECK_THROWS_WITH_AS(TrainGan(corpus, aligns, &vae, zero),
                       "adversarial weights must be nonnegative, not all zero",
                       ConfigError);
  GanConfig neg = gc;
  neg.weights.w_feat = -1.0;
  CHECK_THROWS_WITH_AS(TrainGan(corpus, aligns, &vae, neg),
                       "adversarial weights must be nonnegative, not all zero",
                       ConfigError);
}

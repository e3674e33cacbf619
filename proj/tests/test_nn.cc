// tests/test_nn.cc

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
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "ldspeech/nn.h"
#include "testing.h"

using namespace ldspeech;
using testing::CheckGrads;
using testing::RandTensor;
using testing::WeightedSum;

TEST_CASE("linear layer value and gradient") {
  Rng rng(1);
  Linear lin(3, 2, &rng);
  lin.w = Tensor::FromData({3, 2}, {1, 0, 0, 1, 1, 1}, true);
  lin.b = Tensor::FromData({1, 2}, {0.5, -0.5}, true);
  Tensor x = Tensor::FromData({1, 3}, {2, 3, 4});
  Tensor y = lin.Forward(x);
  CHECK(y.At(0, 0) == doctest::Approx(2 + 4 + 0.5));
  CHECK(y.At(0, 1) == doctest::Approx(3 + 4 - 0.5));

  Tensor xr = RandTensor({4, 3}, 2);
  CheckGrads({xr, lin.w, lin.b}, [&](const std::vector<Tensor> &in) {
    return WeightedSum(lin.Forward(in[0]), 10);
  });
}

TEST_CASE("layer norm module normalizes rows") {
  LayerNorm ln(5);
  Tensor x = RandTensor({3, 5}, 3, 4.0, -1.0);
  Tensor y = ln.Forward(x);
  for (int i = 0; i < 3; ++i) {
    double mu = 0.0;
    for (int j = 0; j < 5; ++j) mu += y.At(i, j);
    CHECK(mu / 5 == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("embedding gathers table rows") {
  Rng rng(4);
  Embedding emb(6, 3, &rng);
  Tensor out = emb.Forward({2, 5, 2});
  CHECK(out.Rows() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(out.At(0, j) == emb.table.At(2, j));
    CHECK(out.At(1, j) == emb.table.At(5, j));
    CHECK(out.At(2, j) == emb.table.At(2, j));
  }
}

TEST_CASE("sinusoidal rows are bounded and position zero is the unit pattern") {
  Tensor pe = SinusoidalRows(10, 8);
  CHECK(pe.Dims() == Shape{10, 8});
  for (double v : pe.Value()) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  CHECK(pe.At(0, 0) == doctest::Approx(0.0));
  CHECK(pe.At(0, 1) == doctest::Approx(1.0));
  CHECK(pe.At(1, 0) == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("time embedding separates nearby diffusion times") {
  Tensor a = TimeEmbedding(0.30, 16);
  Tensor b = TimeEmbedding(0.31, 16);
  double diff = 0.0;
  for (int j = 0; j < 16; ++j) diff += std::fabs(a.At(0, j) - b.At(0, j));
  CHECK(diff > 1e-3);
  Tensor a2 = TimeEmbedding(0.30, 16);
  for (int j = 0; j < 16; ++j) CHECK(a.At(0, j) == a2.At(0, j));
}

TEST_CASE("conformer stack forward shapes and determinism") {
  ConformerConfig cfg;
  cfg.layers = 2;
  cfg.dim = 16;
  cfg.heads = 4;
  cfg.kernel = 3;
  cfg.in_dim = 7;
  cfg.ffn_mult = 2;
  Rng rng(5);
  ConformerStack stack(cfg, &rng);
  Tensor x = RandTensor({6, 7}, 6);
  Tensor y1 = stack.Forward(x);
  Tensor y2 = stack.Forward(x);
  CHECK(y1.Dims() == Shape{6, 16});
  for (int64_t i = 0; i < y1.NumEl(); ++i)
    CHECK(y1.Value()[i] == y2.Value()[i]);

  // Training mode applies dropout and perturbs the output.
  Rng drop(9);
  Tensor yd = stack.Forward(x, &drop);
  double delta = 0.0;
  for (int64_t i = 0; i < y1.NumEl(); ++i)
    delta += std::fabs(yd.Value()[i] - y1.Value()[i]);
  CHECK(delta > 1e-6);
}

TEST_CASE("zero-layer stack is a pointwise map") {
  ConformerConfig cfg;
  cfg.layers = 0;
  cfg.dim = 5;
  cfg.in_dim = 4;
  Rng rng(7);
  ConformerStack stack(cfg, &rng);
  Tensor x = RandTensor({5, 4}, 8);
  Tensor y = stack.Forward(x);
  // Permuting input rows permutes output rows identically.
  std::vector<int> perm = {3, 0, 4, 1, 2};
  Tensor xp = GatherRows(x, perm);
  Tensor yp = stack.Forward(xp);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(yp.At(i, j) == doctest::Approx(y.At(perm[i], j)));
}

TEST_CASE("conformer gradient matches finite differences through all params") {
  ConformerConfig cfg;
  cfg.layers = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kernel = 3;
  cfg.in_dim = 5;
  cfg.ffn_mult = 2;
  cfg.time_dim = 6;
  Rng rng(11);
  ConformerStack stack(cfg, &rng);
  // A nonzero modulation path so the time-conditioning weights see gradient.
  Rng wrng(12);
  for (auto &v : stack.blocks[0].film.w.MutableValue()) v = 0.1 * wrng.Normal();

  Tensor x = RandTensor({4, 5}, 13);
  Tensor t_row = TimeEmbedding(0.42, 6);
  ParamMap params;
  stack.Collect("stack", &params);
  std::vector<Tensor> inputs = {x};
  for (auto &[name, t] : params) inputs.push_back(t);
  CheckGrads(inputs, [&](const std::vector<Tensor> &in) {
    return WeightedSum(stack.Forward(in[0], nullptr, t_row), 20);
  }, 1e-5, 2e-5);
}

TEST_CASE("film time conditioning is identity at init and active after") {
  ConformerConfig cfg;
  cfg.layers = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kernel = 3;
  cfg.in_dim = 8;
  cfg.time_dim = 4;
  Rng rng(14);
  ConformerStack stack(cfg, &rng);
  Tensor x = RandTensor({3, 8}, 15);
  Tensor t_row = TimeEmbedding(0.7, 4);
  Tensor with_t = stack.Forward(x, nullptr, t_row);
  Tensor without_t = stack.Forward(x, nullptr, Tensor());
  for (int64_t i = 0; i < with_t.NumEl(); ++i)
    CHECK(with_t.Value()[i] == doctest::Approx(without_t.Value()[i]));

  Rng wrng(16);
  for (auto &v : stack.blocks[0].film.w.MutableValue()) v = 0.5 * wrng.Normal();
  Tensor with_t2 = stack.Forward(x, nullptr, t_row);
  double delta = 0.0;
  for (int64_t i = 0; i < with_t2.NumEl(); ++i)
    delta += std::fabs(with_t2.Value()[i] - without_t.Value()[i]);
  CHECK(delta > 1e-6);
}

TEST_CASE("parameter names are unique and stable") {
  ConformerConfig cfg;
  cfg.layers = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kernel = 3;
  cfg.in_dim = 4;
  cfg.time_dim = 4;
  Rng rng(17);
  ConformerStack stack(cfg, &rng);
  ParamMap params;
  stack.Collect("enc", &params);
  std::set<std::string> names;
  for (auto &[name, t] : params) {
    CHECK(names.insert(name).second);
    CHECK(t.RequiresGrad());
  }
  CHECK(params.size() > 30);
  ParamMap params2;
  stack.Collect("enc", &params2);
  REQUIRE(params.size() == params2.size());
  for (size_t i = 0; i < params.size(); ++i)
    CHECK(params[i].first == params2[i].first);
}

TEST_CASE("adam converges on a quadratic and clips large gradients") {
  Tensor p = Tensor::FromData({1, 3}, {5.0, -5.0, 5.0}, true);
  Tensor target = Tensor::FromData({1, 3}, {1.0, -2.0, 0.5});
  ParamMap params = {{"p", p}};
  Adam opt(params, 0.05, 1.0);
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 800; ++step) {
    opt.ZeroGrad();
    Tensor loss = Sum(Square(Sub(p, target)));
    if (step == 0) first_loss = loss.Item();
    last_loss = loss.Item();
    loss.Backward();
    opt.Step();
  }
  CHECK(last_loss < first_loss * 1e-3);
  for (int j = 0; j < 3; ++j)
    CHECK(p.At(0, j) == doctest::Approx(target.At(0, j)).epsilon(0.05));

  // A gradient with norm far above the clip moves parameters by a bounded
  // amount in one step.
  Tensor q = Tensor::FromData({1, 2}, {0.0, 0.0}, true);
  Adam opt2({{"q", q}}, 0.1, 1.0);
  opt2.ZeroGrad();
  Tensor big = Sum(MulScalar(q, 1e6));
  big.Backward();
  opt2.Step();
  CHECK(opt2.LastGradNorm() > 1e5);
  for (int j = 0; j < 2; ++j) CHECK(std::fabs(q.At(0, j)) < 0.2);
}

TEST_CASE("attention mixes information across frames") {
  ConformerConfig cfg;
  cfg.layers = 1;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.kernel = 3;
  cfg.in_dim = 8;
  Rng rng(19);
  ConformerStack stack(cfg, &rng);
  Tensor x = RandTensor({6, 8}, 20);
  Tensor y = stack.Forward(x);
  // Changing a distant frame changes the current frame's output.
  Tensor x2 = x.Detach();
  x2.MutableValue()[5 * 8 + 3] += 1.0;
  Tensor y2 = stack.Forward(x2);
  double delta_row0 = 0.0;
  for (int j = 0; j < 8; ++j)
    delta_row0 += std::fabs(y2.At(0, j) - y.At(0, j));
  CHECK(delta_row0 > 1e-9);
}

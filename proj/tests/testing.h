// tests/testing.h

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

#ifndef LDSPEECH_TESTS_TESTING_H_
#define LDSPEECH_TESTS_TESTING_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "ldspeech/tensor.h"

namespace ldspeech {
namespace testing {

// Checks analytic gradients of a scalar loss against central differences,
//   dL/dx_i ~= (L(x + h e_i) - L(x - h e_i)) / (2h),
// for every element of every input. Inputs are shared handles, so the loss
// closure sees in-place perturbations.
inline void CheckGrads(
    std::vector<Tensor> inputs,
    const std::function<Tensor(const std::vector<Tensor> &)> &f,
    double h = 1e-5, double tol = 1e-6) {
  for (auto &in : inputs) in.SetRequiresGrad(true);
  Tensor loss = f(inputs);
  REQUIRE(loss.NumEl() == 1);
  for (auto &in : inputs) in.ZeroGrad();
  loss.Backward();

  for (auto &in : inputs) {
    std::vector<double> analytic = in.Grad();
    REQUIRE(analytic.size() == static_cast<size_t>(in.NumEl()));
    for (int64_t i = 0; i < in.NumEl(); ++i) {
      double saved = in.MutableValue()[i];
      double lp, lm;
      {
        NoGradGuard ng;
        in.MutableValue()[i] = saved + h;
        lp = f(inputs).Item();
        in.MutableValue()[i] = saved - h;
        lm = f(inputs).Item();
      }
      in.MutableValue()[i] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double denom =
          std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
      INFO("element " << i << " analytic " << analytic[i] << " numeric "
                      << numeric);
      CHECK(std::fabs(analytic[i] - numeric) / denom < tol);
    }
  }
}

// Contracts a tensor against a fixed random weighting so a scalar loss sees
// every output element with a distinct coefficient.
inline Tensor WeightedSum(const Tensor &y, uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::Zeros(y.Dims());
  for (auto &v : w.MutableValue()) v = rng.Normal();
  return Sum(Mul(y, w));
}

inline Tensor RandTensor(const Shape &shape, uint64_t seed, double scale = 1.0,
                         double offset = 0.0) {
  Rng rng(seed);
  Tensor t = Tensor::Zeros(shape);
  for (auto &v : t.MutableValue()) v = offset + scale * rng.Normal();
  return t;
}

}  // namespace testing
}  // namespace ldspeech

#endif  // LDSPEECH_TESTS_TESTING_H_

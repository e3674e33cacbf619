// ldspeech/adversarial.h

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

#ifndef LDSPEECH_ADVERSARIAL_H_
#define LDSPEECH_ADVERSARIAL_H_

#include <string>
#include <vector>

#include "ldspeech/autoencoder.h"
#include "ldspeech/data.h"
#include "ldspeech/nn.h"
#include "ldspeech/tensor.h"

namespace ldspeech {

// 2D convolution whose kernel is divided by its leading singular value,
// estimated by a persistent power iteration run to a fixed stationarity
// tolerance on every use. Forward advances the iteration state, so the layer
// is stateful even in evaluation.
class SnConv2d {
 public:
  SnConv2d() = default;
  SnConv2d(int c_in, int c_out, int kernel, int stride, Rng *rng);

  Tensor Forward(const Tensor &x);
  // The kernel the next Forward would apply; advances the power iteration.
  Tensor NormalizedKernel();
  void Collect(const std::string &prefix, ParamMap *out) const;
  void CollectBuffers(const std::string &prefix, ParamMap *out) const;

  Tensor w;  // raw kernel [Co, Ci, k, k]
  Tensor b;  // [1 x Co]
  Tensor u;  // [1 x Co], power iteration state
  Tensor v;  // [Ci k k x 1]
  int stride = 1;
  int pad = 0;
};

// Residual refinement head appended to the decoder output: four
// spectral-norm 3x3 convolutions with leaky-ReLU, then a zero-initialized
// 1x1 projection, so the stack is the identity map at initialization.
class Refiner {
 public:
  Refiner() = default;
  explicit Refiner(Rng *rng);

  Tensor Forward(const Tensor &y);  // [N x D_mel] -> [N x D_mel]
  void Collect(const std::string &prefix, ParamMap *out) const;
  void CollectBuffers(const std::string &prefix, ParamMap *out) const;

  std::vector<SnConv2d> convs;
  Tensor proj_w;  // [1, C, 1, 1], zero at init
  Tensor proj_b;  // [1 x 1], zero at init
};

// Strided spectral-norm conv stack scoring a spectrogram patch-wise. The
// hidden activations are exposed for feature matching.
class Discriminator {
 public:
  struct Output {
    Tensor score;                  // 2D score matrix
    std::vector<Tensor> features;  // one per conv layer
  };

  Discriminator() = default;
  explicit Discriminator(Rng *rng);

  Output Forward(const Tensor &y);
  // Toggles whether forwards record gradients into the discriminator's own
  // parameters; the generator step runs with this off.
  void SetTrainable(bool on);
  void Collect(const std::string &prefix, ParamMap *out) const;
  void CollectBuffers(const std::string &prefix, ParamMap *out) const;

  std::vector<SnConv2d> convs;
};

// Least-squares GAN objectives, summed over score cells.
Tensor LsganDLoss(const Tensor &d_real, const Tensor &d_fake);
Tensor LsganGLoss(const Tensor &d_fake);

// Mean over layers of the per-element-normalized L1 feature distance.
Tensor FeatureMatchingLoss(const std::vector<Tensor> &real_feats,
                           const std::vector<Tensor> &fake_feats);

struct AdvWeights {
  double w_d = 1.0;
  double w_g = 1.0;
  double w_feat = 2.0;
  double w_vae = 1.0;
};

struct GanConfig {
  AdvWeights weights;
  int steps = 600;
  double lr = 2e-4;
  unsigned long long seed = 0;
  bool freeze_encoder = false;  // keep posterior weights out of the G step
};

class GanModel {
 public:
  GanModel() = default;
  explicit GanModel(unsigned long long seed);

  ParamMap RefinerParams() const;
  ParamMap DiscParams() const;
  ParamMap Buffers() const;

  Refiner refiner;
  Discriminator disc;
};

struct AdvMetrics {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double feat_loss = 0.0;
  double vae_loss = 0.0;
};

// One alternating update on a single utterance: discriminator on the LSGAN
// real/fake objective against a detached generator sample, then generator
// (refiner + VAE per opt_g's parameter set) on the weighted sum of the
// adversarial, feature-matching, and refined-reconstruction ELBO terms.
// Draws one posterior noise sample per phase from rng.
AdvMetrics AdvTrainStep(VaeModel *vae, GanModel *gan, Adam *opt_d,
                        Adam *opt_g, const Tensor &mel, const Alignment &a,
                        const AdvWeights &weights, Rng *rng);

// Alternating training over the corpus. The VAE is updated in place through
// the generator objective; metrics carries one row per step.
GanModel TrainGan(const SynthCorpus &corpus,
                  const std::vector<Alignment> &alignments, VaeModel *vae,
                  const GanConfig &cfg,
                  std::vector<AdvMetrics> *metrics = nullptr);

}  // namespace ldspeech

#endif  // LDSPEECH_ADVERSARIAL_H_

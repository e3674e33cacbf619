// ldspeech/aligner.h

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

#ifndef LDSPEECH_ALIGNER_H_
#define LDSPEECH_ALIGNER_H_

#include <string>
#include <vector>

#include "ldspeech/data.h"
#include "ldspeech/nn.h"
#include "ldspeech/tensor.h"
#include "ldspeech/types.h"

namespace ldspeech {

// d_i = a_i - a_{i-1} with an implicit a_0 = 0. Throws "invalid alignment"
// unless the spikes are strictly increasing and start at frame >= 1.
std::vector<int> Durations(const std::vector<int> &spikes);

// Negative log of the summed probability of every path that emits each w_i on
// exactly one frame, in order, with blanks everywhere else. The label states
// have no self-loop, so a sequence of M phonemes over N frames has C(N, M)
// paths. log_probs is [N x (vocab+1)] with column 0 the blank; the returned
// scalar participates in autodiff, with the gradient supplied by the
// forward-backward occupancies.
Tensor MinimalCtcLoss(const Tensor &log_probs, const PhonemeSequence &w);

// Best single path under the same topology. Score ties are broken toward the
// lexicographically earliest spike sequence.
Alignment ForcedAlign(const Tensor &log_probs, const PhonemeSequence &w);

struct AlignerConfig {
  int vocab_size = 6;
  int d_mel = 16;
  ConformerConfig conformer;  // filled in by the constructor default below
  int steps = 2000;
  int eval_every = 200;
  double lr = 2e-4;
  unsigned long long seed = 0;

  AlignerConfig() {
    conformer.layers = 2;
    conformer.dim = 32;
    conformer.heads = 4;
    conformer.kernel = 3;
    conformer.use_pos_enc = true;
  }
};

// Conformer encoder with a per-frame projection to vocab+1 classes, index 0
// reserved for the blank. LogProbs rows are log-softmax normalized.
class AlignerModel {
 public:
  explicit AlignerModel(const AlignerConfig &cfg);

  Tensor LogProbs(const Tensor &mel, Rng *drop = nullptr) const;
  ParamMap Params() const;
  const AlignerConfig &config() const { return cfg_; }

 private:
  AlignerConfig cfg_;
  ConformerStack stack_;
  Linear proj_;
};

// Minimizes the mean minimal-CTC loss over the corpus with seeded stochastic
// steps. Throws NumericalError if the loss stops being finite.
AlignerModel TrainAligner(const SynthCorpus &corpus, const AlignerConfig &cfg,
                          TrainStats *stats = nullptr);

}  // namespace ldspeech

#endif  // LDSPEECH_ALIGNER_H_

// ldspeech/data.h

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

#ifndef LDSPEECH_DATA_H_
#define LDSPEECH_DATA_H_

#include <string>
#include <utility>
#include <vector>

#include "ldspeech/types.h"

namespace ldspeech {

// Synthetic corpus: each phoneme id owns a fixed Gaussian bump over Mel bins
// held for a sampled duration, so ground-truth alignments and an exact
// template table exist for every utterance. num_template_sets > 1 carves the
// Mel axis into disjoint per-set template families, standing in for distinct
// speakers.
struct SynthCorpusConfig {
  int vocab_size = 6;
  int num_utterances = 500;
  std::pair<int, int> frames_per_phoneme_range = {1, 2};
  int d_mel = 16;
  double noise_std = 0.0;
  int seed = 0;
  int num_template_sets = 1;
  std::pair<int, int> phonemes_per_utterance_range = {3, 8};
};

struct CorpusItem {
  MelSpectrogram mel;
  PhonemeSequence phonemes;
  Alignment true_alignment;  // spike = last frame of the phoneme's segment
  int template_set = 0;
};

struct SynthCorpus {
  SynthCorpusConfig config;
  Tensor templates;  // [(num_template_sets * vocab_size) x d_mel]
  std::vector<CorpusItem> items;
};

// Template row for (set, id): bump center ((set + (id+0.5)/vocab) / sets) *
// d_mel, width d_mel / (2 * vocab * sets). With one set this is
// (id+0.5)/vocab * d_mel and d_mel/(2*vocab).
Tensor TemplateTable(const SynthCorpusConfig &cfg);

SynthCorpus GenCorpus(const SynthCorpusConfig &cfg);

// max - min over all Mel cells of the corpus.
double CorpusValueRange(const SynthCorpus &corpus);

uint64_t CorpusFingerprint(const SynthCorpus &corpus);

void SaveCorpus(const std::string &dir, const SynthCorpus &corpus);
SynthCorpus LoadCorpus(const std::string &dir);

// Magnitude STFT -> Mel filter bank -> natural log, floored at 1e-5.
// Center-padded framing gives floor(len/hop)+1 frames.
MelSpectrogram MelFeaturize(const std::vector<double> &samples,
                            int sample_rate, int n_mels, int hop, int win);

// Center frequency in Hz of a Mel filter, for featurizer tests.
double MelBinCenterHz(int bin, int n_mels, int sample_rate);

}  // namespace ldspeech

#endif  // LDSPEECH_DATA_H_

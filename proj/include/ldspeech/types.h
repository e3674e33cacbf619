// ldspeech/types.h

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

#ifndef LDSPEECH_TYPES_H_
#define LDSPEECH_TYPES_H_

#include <vector>

#include "ldspeech/tensor.h"

namespace ldspeech {

// Log-Mel spectrogram, N frames by D_mel bins, natural log energies.
struct MelSpectrogram {
  Tensor values;  // [N x D_mel]
  double frame_hop_s = 0.0;

  int Frames() const { return values.Rows(); }
  int Bins() const { return values.Cols(); }
};

struct PhonemeSequence {
  std::vector<int> ids;

  int Size() const { return static_cast<int>(ids.size()); }
};

// Forced alignment: spikes are 1-based frame indices, one per phoneme,
// strictly increasing; durations are their consecutive differences with an
// implicit zeroth spike at frame 0.
struct Alignment {
  std::vector<int> spikes;
  std::vector<int> durations;

  int Size() const { return static_cast<int>(spikes.size()); }
};

}  // namespace ldspeech

#endif  // LDSPEECH_TYPES_H_

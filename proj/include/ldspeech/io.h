// ldspeech/io.h

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

#ifndef LDSPEECH_IO_H_
#define LDSPEECH_IO_H_

#include <cstdint>
#include <string>

#include "json.hpp"
#include "ldspeech/nn.h"
#include "ldspeech/tensor.h"

namespace ldspeech {

// Tensor files carry an 8-byte little-endian shape header (int32 rows,
// int32 cols) followed by the row-major float64 payload. Tensors of rank
// other than 2 are stored through their canonical 2-D projection
// rows = dim0, cols = numel / dim0.
void WriteTensor(const std::string &path, const Tensor &t);
Tensor ReadTensor(const std::string &path);

// NPY v1.0, dtype '<f8', C order, 2-D shape.
void WriteNpy(const std::string &path, const Tensor &t);
Tensor ReadNpy(const std::string &path);

// 8-bit grayscale heatmap, width = rows(t) (time axis), height = cols(t);
// values min-max normalized, constant input renders a uniform image.
void WritePngHeatmap(const std::string &path, const Tensor &t);

// 64-bit FNV-1a; chained via the seed argument.
uint64_t Fnv1a(const void *data, size_t n,
               uint64_t seed = 14695981039346656037ull);
uint64_t FingerprintTensor(const Tensor &t, uint64_t seed);
std::string HexHash(uint64_t h);

// A checkpoint is a directory holding config.json (stage tag, config
// snapshot, config hash, corpus fingerprint, parameter manifest) and
// weights/<name>.bin per parameter.
void SaveCheckpoint(const std::string &dir, const std::string &stage,
                    const nlohmann::json &config, const ParamMap &params,
                    const std::string &corpus_fingerprint);
// Throws PrereqError when dir holds no checkpoint.
nlohmann::json LoadCheckpointMeta(const std::string &dir);
// Copies stored values into the freshly constructed parameters; validates
// names and shapes against the manifest.
void LoadCheckpointParams(const std::string &dir, ParamMap *params);
// Combined hash of all parameter values, for freeze assertions.
uint64_t HashParams(const ParamMap &params);

// One writer per checkpoint directory; the lock file is removed on
// destruction.
class DirLock {
 public:
  explicit DirLock(const std::string &dir);
  ~DirLock();
  DirLock(const DirLock &) = delete;
  DirLock &operator=(const DirLock &) = delete;

 private:
  std::string path_;
};

bool FileExists(const std::string &path);
void EnsureDir(const std::string &dir);
void WriteTextFile(const std::string &path, const std::string &text);
std::string ReadTextFile(const std::string &path);

}  // namespace ldspeech

#endif  // LDSPEECH_IO_H_

// tests/test_data.cc

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

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ldspeech/data.h"
#include "ldspeech/io.h"

using namespace ldspeech;

namespace {

std::string TmpDir() {
  static int counter = 0;
  std::string dir =
      (std::filesystem::temp_directory_path() /
       ("ldspeech_data_test_" + std::to_string(::getpid()) + "_" +
        std::to_string(counter++)))
          .string();
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("template table peaks at the configured centers") {
  SynthCorpusConfig cfg;
  cfg.vocab_size = 2;
  cfg.d_mel = 8;
  Tensor table = TemplateTable(cfg);
  REQUIRE(table.Dims() == Shape{2, 8});
  // Centers at (id+0.5)/vocab * d_mel = 2 and 6; bump value 4 at the center.
  CHECK(table.At(0, 2) == doctest::Approx(4.0));
  CHECK(table.At(1, 6) == doctest::Approx(4.0));
  for (int j = 0; j < 8; ++j) {
    CHECK(table.At(0, j) <= table.At(0, 2));
    CHECK(table.At(1, j) <= table.At(1, 6));
  }
  // Symmetry around the center.
  CHECK(table.At(0, 1) == doctest::Approx(table.At(0, 3)));
}

TEST_CASE("two template sets occupy disjoint halves of the mel axis") {
  SynthCorpusConfig cfg;
  cfg.vocab_size = 3;
  cfg.d_mel = 24;
  cfg.num_template_sets = 2;
  Tensor table = TemplateTable(cfg);
  REQUIRE(table.Dims() == Shape{6, 24});
  for (int r = 0; r < 6; ++r) {
    int argmax = 0;
    for (int j = 1; j < 24; ++j)
      if (table.At(r, j) > table.At(r, argmax)) argmax = j;
    if (r < 3)
      CHECK(argmax < 12);
    else
      CHECK(argmax >= 12);
  }
}

TEST_CASE("fixed-range corpus has forced durations") {
  SynthCorpusConfig cfg;
  cfg.vocab_size = 2;
  cfg.num_utterances = 1;
  cfg.frames_per_phoneme_range = {3, 3};
  cfg.d_mel = 8;
  cfg.noise_std = 0.0;
  cfg.seed = 7;
  SynthCorpus corpus = GenCorpus(cfg);
  REQUIRE(corpus.items.size() == 1);
  const auto &item = corpus.items[0];
  int m = item.phonemes.Size();
  CHECK(item.mel.Frames() == 3 * m);
  for (int d : item.true_alignment.durations) CHECK(d == 3);
}

TEST_CASE("same seed gives bit-identical corpora") {
  SynthCorpusConfig cfg;
  cfg.num_utterances = 10;
  cfg.noise_std = 0.3;
  cfg.seed = 13;
  SynthCorpus a = GenCorpus(cfg);
  SynthCorpus b = GenCorpus(cfg);
  CHECK(CorpusFingerprint(a) == CorpusFingerprint(b));
  cfg.seed = 14;
  SynthCorpus c = GenCorpus(cfg);
  CHECK(CorpusFingerprint(a) != CorpusFingerprint(c));
}

TEST_CASE("noise-free frames equal the template exactly") {
  SynthCorpusConfig cfg;
  cfg.num_utterances = 5;
  cfg.noise_std = 0.0;
  cfg.seed = 3;
  SynthCorpus corpus = GenCorpus(cfg);
  for (const auto &item : corpus.items) {
    int frame = 0;
    for (int i = 0; i < item.phonemes.Size(); ++i) {
      int trow = item.template_set * cfg.vocab_size + item.phonemes.ids[i];
      for (int r = 0; r < item.true_alignment.durations[i]; ++r, ++frame)
        for (int j = 0; j < cfg.d_mel; ++j)
          CHECK(item.mel.values.At(frame, j) == corpus.templates.At(trow, j));
    }
    CHECK(frame == item.mel.Frames());
  }
}

TEST_CASE("alignment invariants hold on every generated item") {
  SynthCorpusConfig cfg;
  cfg.num_utterances = 50;
  cfg.noise_std = 0.2;
  cfg.seed = 21;
  SynthCorpus corpus = GenCorpus(cfg);
  for (const auto &item : corpus.items) {
    const auto &a = item.true_alignment;
    REQUIRE(a.Size() == item.phonemes.Size());
    int prev = 0, total = 0;
    for (int i = 0; i < a.Size(); ++i) {
      CHECK(a.spikes[i] > prev);
      CHECK(a.durations[i] == a.spikes[i] - prev);
      CHECK(a.durations[i] >= 1);
      prev = a.spikes[i];
      total += a.durations[i];
    }
    CHECK(total == item.mel.Frames());
    CHECK(a.spikes.back() == item.mel.Frames());
  }
}

TEST_CASE("corpus survives a save-load round trip") {
  SynthCorpusConfig cfg;
  cfg.num_utterances = 8;
  cfg.noise_std = 0.1;
  cfg.seed = 5;
  cfg.num_template_sets = 2;
  SynthCorpus corpus = GenCorpus(cfg);
  std::string dir = TmpDir();
  SaveCorpus(dir, corpus);
  SynthCorpus back = LoadCorpus(dir);
  CHECK(CorpusFingerprint(back) == CorpusFingerprint(corpus));
  REQUIRE(back.items.size() == corpus.items.size());
  for (size_t i = 0; i < corpus.items.size(); ++i) {
    CHECK(back.items[i].phonemes.ids == corpus.items[i].phonemes.ids);
    CHECK(back.items[i].template_set == corpus.items[i].template_set);
    for (int64_t j = 0; j < corpus.items[i].mel.values.NumEl(); ++j)
      CHECK(back.items[i].mel.values.Value()[j] ==
            corpus.items[i].mel.values.Value()[j]);
  }
  CHECK(FileExists(dir + "/templates.json"));
  CHECK_THROWS_AS(LoadCorpus(dir + "/nope"), PrereqError);
}

TEST_CASE("corpus value range covers the template amplitude") {
  SynthCorpusConfig cfg;
  cfg.num_utterances = 20;
  cfg.seed = 9;
  SynthCorpus corpus = GenCorpus(cfg);
  double range = CorpusValueRange(corpus);
  CHECK(range > 3.0);
  CHECK(range <= 4.5);
}

TEST_CASE("featurizer rejects empty input and floors zero signal") {
  CHECK_THROWS_WITH_AS(MelFeaturize({}, 16000, 10, 160, 400), "empty signal",
                       ConfigError);
  std::vector<double> silence(1600, 0.0);
  MelSpectrogram mel = MelFeaturize(silence, 16000, 10, 160, 400);
  CHECK(mel.Frames() == 11);
  for (double v : mel.values.Value())
    CHECK(v == doctest::Approx(std::log(1e-5)));
}

TEST_CASE("framing arithmetic gives floor(len/hop)+1 frames") {
  std::vector<double> sig(160 * 10, 0.1);
  MelSpectrogram mel = MelFeaturize(sig, 16000, 8, 160, 320);
  CHECK(mel.Frames() == 11);
  std::vector<double> sig2(165, 0.1);
  CHECK(MelFeaturize(sig2, 16000, 8, 32, 64).Frames() == 6);
}

TEST_CASE("pure sine keeps a constant argmax bin across interior frames") {
  int sr = 16000, n_mels = 10, hop = 160, win = 400;
  double f0 = MelBinCenterHz(3, n_mels, sr);
  std::vector<double> sig(sr);
  for (size_t i = 0; i < sig.size(); ++i)
    sig[i] = std::sin(2.0 * M_PI * f0 * static_cast<double>(i) / sr);
  MelSpectrogram mel = MelFeaturize(sig, sr, n_mels, hop, win);
  REQUIRE(mel.Frames() > 20);
  int ref = -1;
  for (int f = 5; f < mel.Frames() - 5; ++f) {
    int argmax = 0;
    for (int j = 1; j < n_mels; ++j)
      if (mel.values.At(f, j) > mel.values.At(f, argmax)) argmax = j;
    if (ref < 0) ref = argmax;
    CHECK(argmax == ref);
  }
}

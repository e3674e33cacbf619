// ldspeech/data.cc

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

#include "ldspeech/data.h"

#include <cmath>
#include <complex>
#include <cstdio>

#include "json.hpp"
#include "ldspeech/io.h"

namespace ldspeech {

namespace {

void ValidateConfig(const SynthCorpusConfig &cfg) {
  if (cfg.vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (cfg.num_utterances < 1) throw ConfigError("num_utterances must be positive");
  if (cfg.frames_per_phoneme_range.first < 1 ||
      cfg.frames_per_phoneme_range.second < cfg.frames_per_phoneme_range.first)
    throw ConfigError("bad frames_per_phoneme_range");
  if (cfg.phonemes_per_utterance_range.first < 1 ||
      cfg.phonemes_per_utterance_range.second <
          cfg.phonemes_per_utterance_range.first)
    throw ConfigError("bad phonemes_per_utterance_range");
  if (cfg.d_mel < 1) throw ConfigError("d_mel must be positive");
  if (cfg.noise_std < 0) throw ConfigError("noise_std must be nonnegative");
  if (cfg.num_template_sets < 1)
    throw ConfigError("num_template_sets must be positive");
}

constexpr double kTemplateAmplitude = 4.0;

}  // namespace

Tensor TemplateTable(const SynthCorpusConfig &cfg) {
  int sets = cfg.num_template_sets;
  int vocab = cfg.vocab_size;
  Tensor table = Tensor::Zeros({sets * vocab, cfg.d_mel});
  double width = cfg.d_mel / (2.0 * vocab * sets);
  for (int s = 0; s < sets; ++s) {
    for (int k = 0; k < vocab; ++k) {
      double center = (s + (k + 0.5) / vocab) / sets * cfg.d_mel;
      for (int j = 0; j < cfg.d_mel; ++j) {
        double z = (j - center) / width;
        table.Set(s * vocab + k, j,
                  kTemplateAmplitude * std::exp(-0.5 * z * z));
      }
    }
  }
  return table;
}

SynthCorpus GenCorpus(const SynthCorpusConfig &cfg) {
  ValidateConfig(cfg);
  SynthCorpus corpus;
  corpus.config = cfg;
  corpus.templates = TemplateTable(cfg);
  Rng rng(static_cast<uint64_t>(cfg.seed));
  corpus.items.reserve(cfg.num_utterances);
  for (int u = 0; u < cfg.num_utterances; ++u) {
    CorpusItem item;
    item.template_set =
        cfg.num_template_sets > 1 ? rng.UniformInt(0, cfg.num_template_sets - 1)
                                  : 0;
    int m = rng.UniformInt(cfg.phonemes_per_utterance_range.first,
                           cfg.phonemes_per_utterance_range.second);
    item.phonemes.ids.resize(m);
    item.true_alignment.durations.resize(m);
    item.true_alignment.spikes.resize(m);
    int n = 0;
    for (int i = 0; i < m; ++i) {
      item.phonemes.ids[i] = rng.UniformInt(0, cfg.vocab_size - 1);
      int d = rng.UniformInt(cfg.frames_per_phoneme_range.first,
                             cfg.frames_per_phoneme_range.second);
      item.true_alignment.durations[i] = d;
      n += d;
      item.true_alignment.spikes[i] = n;
    }
    item.mel.values = Tensor::Zeros({n, cfg.d_mel});
    item.mel.frame_hop_s = 0.01;
    int frame = 0;
    for (int i = 0; i < m; ++i) {
      int trow = item.template_set * cfg.vocab_size + item.phonemes.ids[i];
      for (int r = 0; r < item.true_alignment.durations[i]; ++r, ++frame) {
        for (int j = 0; j < cfg.d_mel; ++j) {
          double v = corpus.templates.At(trow, j);
          if (cfg.noise_std > 0) v += cfg.noise_std * rng.Normal();
          item.mel.values.Set(frame, j, v);
        }
      }
    }
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

double CorpusValueRange(const SynthCorpus &corpus) {
  double lo = corpus.items[0].mel.values.Value()[0];
  double hi = lo;
  for (const auto &item : corpus.items) {
    for (double v : item.mel.values.Value()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return hi - lo;
}

uint64_t CorpusFingerprint(const SynthCorpus &corpus) {
  uint64_t h = 14695981039346656037ull;
  int32_t n_items = static_cast<int32_t>(corpus.items.size());
  h = Fnv1a(&n_items, 4, h);
  h = FingerprintTensor(corpus.templates, h);
  for (const auto &item : corpus.items) {
    h = Fnv1a(item.phonemes.ids.data(), item.phonemes.ids.size() * sizeof(int),
              h);
    h = Fnv1a(item.true_alignment.spikes.data(),
              item.true_alignment.spikes.size() * sizeof(int), h);
    int32_t set = item.template_set;
    h = Fnv1a(&set, 4, h);
    h = FingerprintTensor(item.mel.values, h);
  }
  return h;
}

void SaveCorpus(const std::string &dir, const SynthCorpus &corpus) {
  EnsureDir(dir);
  nlohmann::json manifest;
  manifest["config"] = {
      {"vocab_size", corpus.config.vocab_size},
      {"num_utterances", corpus.config.num_utterances},
      {"frames_per_phoneme_min", corpus.config.frames_per_phoneme_range.first},
      {"frames_per_phoneme_max", corpus.config.frames_per_phoneme_range.second},
      {"d_mel", corpus.config.d_mel},
      {"noise_std", corpus.config.noise_std},
      {"seed", corpus.config.seed},
      {"num_template_sets", corpus.config.num_template_sets},
      {"phonemes_per_utterance_min",
       corpus.config.phonemes_per_utterance_range.first},
      {"phonemes_per_utterance_max",
       corpus.config.phonemes_per_utterance_range.second},
  };
  manifest["fingerprint"] = HexHash(CorpusFingerprint(corpus));
  nlohmann::json items = nlohmann::json::array();
  for (size_t i = 0; i < corpus.items.size(); ++i) {
    const auto &item = corpus.items[i];
    char name[32];
    std::snprintf(name, sizeof(name), "item_%05zu.bin", i);
    WriteTensor(dir + "/" + name, item.mel.values);
    nlohmann::json entry;
    entry["mel_file"] = name;
    entry["phonemes"] = item.phonemes.ids;
    entry["spikes"] = item.true_alignment.spikes;
    entry["durations"] = item.true_alignment.durations;
    entry["template_set"] = item.template_set;
    entry["frame_hop_s"] = item.mel.frame_hop_s;
    items.push_back(entry);
  }
  manifest["items"] = items;
  WriteTextFile(dir + "/manifest.json", manifest.dump(2));

  // Template table as JSON so external oracles can read it without the
  // binary tensor codec.
  nlohmann::json tmpl = nlohmann::json::array();
  for (int r = 0; r < corpus.templates.Rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < corpus.templates.Cols(); ++c)
      row.push_back(corpus.templates.At(r, c));
    tmpl.push_back(row);
  }
  WriteTextFile(dir + "/templates.json", tmpl.dump());
}

SynthCorpus LoadCorpus(const std::string &dir) {
  std::string manifest_path = dir + "/manifest.json";
  if (!FileExists(manifest_path))
    throw PrereqError("no corpus at: " + dir);
  nlohmann::json manifest = nlohmann::json::parse(ReadTextFile(manifest_path));
  SynthCorpus corpus;
  const auto &c = manifest["config"];
  corpus.config.vocab_size = c["vocab_size"];
  corpus.config.num_utterances = c["num_utterances"];
  corpus.config.frames_per_phoneme_range = {c["frames_per_phoneme_min"],
                                            c["frames_per_phoneme_max"]};
  corpus.config.d_mel = c["d_mel"];
  corpus.config.noise_std = c["noise_std"];
  corpus.config.seed = c["seed"];
  corpus.config.num_template_sets = c["num_template_sets"];
  corpus.config.phonemes_per_utterance_range = {
      c["phonemes_per_utterance_min"], c["phonemes_per_utterance_max"]};
  corpus.templates = TemplateTable(corpus.config);
  for (const auto &entry : manifest["items"]) {
    CorpusItem item;
    item.mel.values = ReadTensor(dir + "/" + entry["mel_file"].get<std::string>());
    item.mel.frame_hop_s = entry["frame_hop_s"];
    item.phonemes.ids = entry["phonemes"].get<std::vector<int>>();
    item.true_alignment.spikes = entry["spikes"].get<std::vector<int>>();
    item.true_alignment.durations = entry["durations"].get<std::vector<int>>();
    item.template_set = entry["template_set"];
    corpus.items.push_back(std::move(item));
  }
  std::string want = manifest["fingerprint"];
  if (HexHash(CorpusFingerprint(corpus)) != want)
    throw ConfigError("corpus fingerprint mismatch at: " + dir);
  return corpus;
}

namespace {

// Iterative radix-2 FFT over a power-of-two length.
void Fft(std::vector<std::complex<double>> *a) {
  size_t n = a->size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap((*a)[i], (*a)[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = (*a)[i + k];
        std::complex<double> v = (*a)[i + k + len / 2] * w;
        (*a)[i + k] = u + v;
        (*a)[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

double MelBinCenterHz(int bin, int n_mels, int sample_rate) {
  double mel_max = HzToMel(sample_rate / 2.0);
  double step = mel_max / (n_mels + 1);
  return MelToHz(step * (bin + 1));
}

MelSpectrogram MelFeaturize(const std::vector<double> &samples,
                            int sample_rate, int n_mels, int hop, int win) {
  if (samples.empty()) throw ConfigError("empty signal");
  if (sample_rate <= 0 || hop <= 0 || win <= 0 || n_mels < 1)
    throw ConfigError("bad featurizer parameters");

  int n_frames = static_cast<int>(samples.size() / hop) + 1;
  size_t nfft = 1;
  while (nfft < static_cast<size_t>(win)) nfft <<= 1;
  int n_bins = static_cast<int>(nfft / 2) + 1;

  std::vector<double> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (win - 1)));

  // Triangular Mel filters over linearly spaced points on the Mel scale.
  double mel_max = HzToMel(sample_rate / 2.0);
  std::vector<double> hz_points(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    hz_points[i] = MelToHz(mel_max * i / (n_mels + 1));
  auto bin_freq = [&](int b) {
    return static_cast<double>(b) * sample_rate / static_cast<double>(nfft);
  };

  MelSpectrogram out;
  out.values = Tensor::Zeros({n_frames, n_mels});
  out.frame_hop_s = static_cast<double>(hop) / sample_rate;

  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> mag(n_bins);
  for (int f = 0; f < n_frames; ++f) {
    int center = f * hop;
    int start = center - win / 2;
    for (size_t i = 0; i < nfft; ++i) buf[i] = 0.0;
    for (int i = 0; i < win; ++i) {
      int src = start + i;
      double s = (src >= 0 && src < static_cast<int>(samples.size()))
                     ? samples[src]
                     : 0.0;
      buf[i] = s * window[i];
    }
    Fft(&buf);
    for (int b = 0; b < n_bins; ++b) mag[b] = std::abs(buf[b]);
    for (int m = 0; m < n_mels; ++m) {
      double lo = hz_points[m], mid = hz_points[m + 1], hi = hz_points[m + 2];
      double acc = 0.0;
      for (int b = 0; b < n_bins; ++b) {
        double fz = bin_freq(b);
        double wgt = 0.0;
        if (fz > lo && fz < mid)
          wgt = (fz - lo) / (mid - lo);
        else if (fz >= mid && fz < hi)
          wgt = (hi - fz) / (hi - mid);
        acc += wgt * mag[b];
      }
      out.values.Set(f, m, std::log(std::max(acc, 1e-5)));
    }
  }
  return out;
}

}  // namespace ldspeech

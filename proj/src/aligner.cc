// ldspeech/aligner.cc

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

#include "ldspeech/aligner.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "ldspeech/common.h"

namespace ldspeech {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// Topology states are laid out [blank_0, w_1, blank_1, ..., w_M, blank_M]:
// even indices are blanks (with self-loops), odd index 2i-1 is the i-th
// label. Emission class of a state, with column 0 the blank.
int StateClass(int s, const std::vector<int> &ids) {
  if (s % 2 == 0) return 0;
  return ids[(s - 1) / 2] + 1;
}

void CheckCtcArgs(const Tensor &log_probs, const PhonemeSequence &w) {
  const int n_frames = log_probs.Rows();
  const int n_classes = log_probs.Cols();
  if (n_frames < 1) throw ConfigError("empty log-prob matrix");
  if (n_frames < w.Size()) throw ConfigError("sequence too long for frames");
  for (int id : w.ids) {
    if (id < 0 || id + 1 >= n_classes)
      throw ConfigError("phoneme id out of range");
  }
}

}  // namespace

std::vector<int> Durations(const std::vector<int> &spikes) {
  std::vector<int> d(spikes.size());
  int prev = 0;
  for (size_t i = 0; i < spikes.size(); ++i) {
    if (spikes[i] <= prev) throw ConfigError("invalid alignment");
    d[i] = spikes[i] - prev;
    prev = spikes[i];
  }
  return d;
}

Tensor MinimalCtcLoss(const Tensor &log_probs, const PhonemeSequence &w) {
  CheckCtcArgs(log_probs, w);
  const int n_frames = log_probs.Rows();
  const int n_classes = log_probs.Cols();
  const int n_states = 2 * w.Size() + 1;
  const std::vector<double> &lp = log_probs.Value();
  auto emit = [&](int t, int s) {
    return lp[t * n_classes + StateClass(s, w.ids)];
  };

  // Forward: alpha[t][s] includes the emission at frame t. Entry states are
  // blank_0 and w_1; a blank is reachable from itself and from its label, a
  // label from the preceding blank and the preceding label.
  std::vector<std::vector<double>> alpha(n_frames,
                                         std::vector<double>(n_states, kNegInf));
  alpha[0][0] = emit(0, 0);
  if (n_states > 1) alpha[0][1] = emit(0, 1);
  for (int t = 1; t < n_frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      double in = s % 2 == 0 ? alpha[t - 1][s] : kNegInf;
      if (s >= 1) in = LogAdd(in, alpha[t - 1][s - 1]);
      if (s >= 2 && s % 2 == 1) in = LogAdd(in, alpha[t - 1][s - 2]);
      alpha[t][s] = in == kNegInf ? kNegInf : in + emit(t, s);
    }
  }
  double log_p = alpha[n_frames - 1][n_states - 1];
  if (n_states > 1)
    log_p = LogAdd(log_p, alpha[n_frames - 1][n_states - 2]);
  if (!std::isfinite(log_p))
    throw NumericalError("no valid alignment path has finite probability");

  // Backward: beta[t][s] excludes the emission at frame t, so that
  // alpha + beta - log_p is the state occupancy.
  std::vector<std::vector<double>> beta(n_frames,
                                        std::vector<double>(n_states, kNegInf));
  beta[n_frames - 1][n_states - 1] = 0.0;
  if (n_states > 1) beta[n_frames - 1][n_states - 2] = 0.0;
  for (int t = n_frames - 2; t >= 0; --t) {
    for (int s = 0; s < n_states; ++s) {
      double out = kNegInf;
      if (s % 2 == 0) out = emit(t + 1, s) + beta[t + 1][s];
      if (s + 1 < n_states)
        out = LogAdd(out, emit(t + 1, s + 1) + beta[t + 1][s + 1]);
      if (s % 2 == 1 && s + 2 < n_states)
        out = LogAdd(out, emit(t + 1, s + 2) + beta[t + 1][s + 2]);
      beta[t][s] = out;
    }
  }

  // d(-log_p)/d lp[t][k] = -sum of occupancies of states emitting class k.
  std::vector<double> occ(static_cast<size_t>(n_frames) * n_classes, 0.0);
  for (int t = 0; t < n_frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      double g = alpha[t][s] + beta[t][s] - log_p;
      if (g == kNegInf || std::isnan(g)) continue;
      occ[t * n_classes + StateClass(s, w.ids)] += std::exp(g);
    }
  }

  return MakeOp({1}, {-log_p}, {log_probs},
                [occ = std::move(occ)](detail::Node &n) {
                  const double g = n.grad[0];
                  n.parents[0]->EnsureGrad();
                  auto &pg = n.parents[0]->grad;
                  for (size_t i = 0; i < occ.size(); ++i) pg[i] -= g * occ[i];
                });
}

Alignment ForcedAlign(const Tensor &log_probs, const PhonemeSequence &w) {
  CheckCtcArgs(log_probs, w);
  const int n_frames = log_probs.Rows();
  const int n_classes = log_probs.Cols();
  const int n_states = 2 * w.Size() + 1;
  const std::vector<double> &lp = log_probs.Value();
  auto emit = [&](int t, int s) {
    return lp[t * n_classes + StateClass(s, w.ids)];
  };

  // Viterbi keeps, per state, the best score together with the spike frames
  // of its best path so exact ties resolve toward the earliest spikes.
  struct Cell {
    double score = kNegInf;
    std::vector<int> spikes;
  };
  auto better = [](const Cell &a, const Cell &b) {
    if (a.score != b.score) return a.score > b.score;
    return a.spikes < b.spikes;
  };

  std::vector<Cell> cur(n_states), next(n_states);
  cur[0].score = emit(0, 0);
  if (n_states > 1) {
    cur[1].score = emit(0, 1);
    cur[1].spikes = {1};
  }
  for (int t = 1; t < n_frames; ++t) {
    for (int s = 0; s < n_states; ++s) {
      Cell best;
      auto consider = [&](const Cell &from) {
        if (from.score == kNegInf) return;
        Cell cand = from;
        cand.score += emit(t, s);
        if (s % 2 == 1) cand.spikes.push_back(t + 1);
        if (better(cand, best)) best = std::move(cand);
      };
      if (s % 2 == 0) consider(cur[s]);
      if (s >= 1) consider(cur[s - 1]);
      if (s >= 2 && s % 2 == 1) consider(cur[s - 2]);
      next[s] = std::move(best);
    }
    std::swap(cur, next);
  }

  const Cell *end = &cur[n_states - 1];
  if (n_states > 1 && better(cur[n_states - 2], *end))
    end = &cur[n_states - 2];
  if (end->score == kNegInf)
    throw NumericalError("no valid alignment path has finite probability");

  Alignment out;
  out.spikes = end->spikes;
  out.durations = Durations(out.spikes);
  return out;
}

AlignerModel::AlignerModel(const AlignerConfig &cfg) : cfg_(cfg) {
  Rng rng(cfg.seed);
  ConformerConfig cc = cfg.conformer;
  cc.in_dim = cfg.d_mel;
  stack_ = ConformerStack(cc, &rng);
  proj_ = Linear(cc.dim, cfg.vocab_size + 1, &rng);
}

Tensor AlignerModel::LogProbs(const Tensor &mel, Rng *drop) const {
  Tensor h = stack_.Forward(mel, drop);
  return LogSoftmaxRows(proj_.Forward(h));
}

ParamMap AlignerModel::Params() const {
  ParamMap out;
  stack_.Collect("aligner.stack", &out);
  proj_.Collect("aligner.proj", &out);
  return out;
}

AlignerModel TrainAligner(const SynthCorpus &corpus, const AlignerConfig &cfg,
                          TrainStats *stats) {
  if (corpus.items.empty()) throw ConfigError("empty corpus");
  AlignerModel model(cfg);
  ParamMap params = model.Params();
  for (auto &kv : params) kv.second.SetRequiresGrad(true);
  Adam opt(params, cfg.lr);
  Rng rng(cfg.seed + 1);

  auto eval_mean_loss = [&]() {
    NoGradGuard ng;
    double total = 0.0;
    for (const CorpusItem &item : corpus.items) {
      Tensor lp = model.LogProbs(item.mel.values);
      total += MinimalCtcLoss(lp, item.phonemes).Item();
    }
    return total / static_cast<double>(corpus.items.size());
  };

  for (int step = 0; step < cfg.steps; ++step) {
    if (stats && cfg.eval_every > 0 && step % cfg.eval_every == 0)
      stats->eval_losses.push_back(eval_mean_loss());
    const CorpusItem &item =
        corpus.items[rng.UniformInt(0, static_cast<int>(corpus.items.size()) - 1)];
    Tensor lp = model.LogProbs(item.mel.values, &rng);
    Tensor loss = MinimalCtcLoss(lp, item.phonemes);
    const double val = loss.Item();
    if (!std::isfinite(val)) {
      std::ostringstream msg;
      msg << "aligner training diverged: loss " << val << " at step " << step;
      throw NumericalError(msg.str());
    }
    opt.ZeroGrad();
    loss.Backward();
    opt.Step();
  }
  if (stats && cfg.eval_every > 0) stats->eval_losses.push_back(eval_mean_loss());
  return model;
}

}  // namespace ldspeech

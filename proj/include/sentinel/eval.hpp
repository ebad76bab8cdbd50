// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sentinel/attack.hpp"
#include "sentinel/train.hpp"

namespace sentinel {

// (true class, predicted class) counts
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n) : n_(n), counts_(static_cast<std::size_t>(n) * n, 0) {}
  long& at(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
  long at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
  int classes() const { return n_; }
  long total() const;

 private:
  int n_;
  std::vector<long> counts_;
};

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0, far = 0, fnr = 0;
  bool degenerate = false;  // some denominator was zero
};

Metrics metrics_from_counts(long tp, long fp, long tn, long fn);

// Binary (2x2, class 1 positive) or macro-averaged one-vs-rest multiclass.
Metrics compute_metrics(const ConfusionMatrix& cm);
std::vector<Metrics> per_class_metrics(const ConfusionMatrix& cm);

struct LatencyStats {
  double mean_s = 0, p50_s = 0, p95_s = 0, max_s = 0;
  bool within_ssr_window = false;  // mean within [5, 12] s
  bool under_5s = false;
};

struct EvalReport {
  ConfusionMatrix cm{4};
  Metrics metrics;
  std::vector<Metrics> per_class;
  double benign_far = 0;  // true-benign windows predicted as some attack
  long unseen_total = 0;
  long unseen_nonbenign = 0;  // standing-still windows classified as an attack
};

struct Classification {
  int cls = 0;  // kClassAltitude..kClassBenign
  std::array<double, 4> probs{};
};

// Four binary detectors (ALT, GS, HDG, GN) sharing one normalization; the
// highest-probability detector wins, ties broken in ALT < GS < HDG < GN order.
class EnsembleIDS {
 public:
  EnsembleIDS(Checkpoint alt, Checkpoint gs, Checkpoint hdg, Checkpoint gn);

  Classification classify(const ag::RowMat& raw_window) const;
  const NormalizationStats& stats() const { return stats_; }
  int sequence_length() const { return seq_len_; }
  const SequenceModel& detector(int cls) const { return *models_[static_cast<std::size_t>(cls)]; }

 private:
  std::array<std::unique_ptr<SequenceModel>, 4> models_;
  NormalizationStats stats_;
  int seq_len_;
};

// Evaluates labeled windows (class labels, plus kClassUnseenAttack windows
// which are scored as correctly handled iff the prediction is not benign).
EvalReport evaluate(const EnsembleIDS& ids, const std::vector<FeatureWindow>& windows,
                    int workers = 0);

// per-window results for CSV export
struct WindowVerdict {
  int truth = 0, predicted = 0;
  std::array<double, 4> probs{};
};
std::vector<WindowVerdict> classify_all(const EnsembleIDS& ids,
                                        const std::vector<FeatureWindow>& windows, int workers = 0);

LatencyStats bench_latency(const EnsembleIDS& ids, const std::vector<FeatureWindow>& windows,
                           int repetitions);

// Forecasting-reconstruction baseline: anomaly iff accumulated one-step error
// exceeds mean + 3*std of benign validation scores.
class ReconstructionDetector {
 public:
  explicit ReconstructionDetector(const Checkpoint& forecaster);
  void calibrate(const std::vector<FeatureWindow>& benign_validation);
  bool calibrated() const { return calibrated_; }
  double threshold() const;
  double score(const FeatureWindow& w) const;
  std::pair<double, bool> verdict(const FeatureWindow& w) const;  // (score, anomalous)

 private:
  std::unique_ptr<SequenceModel> model_;
  NormalizationStats stats_;
  int input_len_;
  double threshold_ = 0;
  bool calibrated_ = false;
};

int thread_budget();  // ADSB_SENTINEL_THREADS, default hardware concurrency

}  // namespace sentinel

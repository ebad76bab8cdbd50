// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace sentinel {

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts_) t += c;
  return t;
}

Metrics metrics_from_counts(long tp, long fp, long tn, long fn) {
  Metrics m;
  auto ratio = [&m](long num, long den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.far = ratio(fp, fp + tn);
  m.fnr = ratio(fn, fn + tp);
  m.accuracy = ratio(tp + tn, tp + fp + tn + fn);
  m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                      : 0.0;
  return m;
}

std::vector<Metrics> per_class_metrics(const ConfusionMatrix& cm) {
  int n = cm.classes();
  std::vector<Metrics> out;
  for (int c = 0; c < n; ++c) {
    long tp = cm.at(c, c), fp = 0, fn = 0, tn = 0;
    for (int t = 0; t < n; ++t)
      for (int p = 0; p < n; ++p) {
        if (t == c && p == c) continue;
        if (p == c) fp += cm.at(t, p);
        else if (t == c) fn += cm.at(t, p);
        else tn += cm.at(t, p);
      }
    out.push_back(metrics_from_counts(tp, fp, tn, fn));
  }
  return out;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.classes() == 2)
    return metrics_from_counts(cm.at(1, 1), cm.at(0, 1), cm.at(0, 0), cm.at(1, 0));
  auto per = per_class_metrics(cm);
  Metrics m;
  for (const auto& p : per) {
    m.accuracy += p.accuracy;
    m.precision += p.precision;
    m.recall += p.recall;
    m.f1 += p.f1;
    m.far += p.far;
    m.fnr += p.fnr;
    m.degenerate = m.degenerate || p.degenerate;
  }
  double n = static_cast<double>(per.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  m.far /= n;
  m.fnr /= n;
  return m;
}

int thread_budget() {
  if (const char* env = std::getenv("ADSB_SENTINEL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

namespace {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace

EnsembleIDS::EnsembleIDS(Checkpoint alt, Checkpoint gs, Checkpoint hdg, Checkpoint gn) {
  std::array<Checkpoint*, 4> cks = {&alt, &gs, &hdg, &gn};
  seq_len_ = alt.train.sequence_length;
  stats_ = alt.stats;
  for (std::size_t i = 0; i < 4; ++i) {
    const Checkpoint& c = *cks[i];
    if (c.model.head != HeadKind::Detect)
      throw CheckpointError("ensemble detector " + std::to_string(i) +
                            " does not have a detection head");
    if (c.train.sequence_length != seq_len_)
      throw CheckpointError("ensemble detectors disagree on sequence length");
    if (c.stats.mean != stats_.mean || c.stats.stddev != stats_.stddev)
      throw CheckpointError("ensemble detectors carry different normalization stats");
    models_[i] = model_from_checkpoint(c);
  }
}

Classification EnsembleIDS::classify(const ag::RowMat& raw_window) const {
  if (raw_window.rows() != seq_len_ || raw_window.cols() != kFeatureCount)
    throw ag::ShapeError("classify: expected " + std::to_string(seq_len_) + "x" +
                         std::to_string(kFeatureCount) + " window, got " +
                         std::to_string(raw_window.rows()) + "x" +
                         std::to_string(raw_window.cols()));
  ag::RowMat normalized = apply_normalizer(stats_, raw_window);
  ag::Tensor x = ag::Tensor::from_vec({seq_len_, kFeatureCount},
                                      Eigen::Map<const ag::Vec>(normalized.data(),
                                                                normalized.size()));
  Classification out;
  for (std::size_t i = 0; i < 4; ++i) {
    ag::Tape tape;
    out.probs[i] = models_[i]->detect(tape, x).item();
  }
  out.cls = 0;
  for (int i = 1; i < 4; ++i)
    if (out.probs[static_cast<std::size_t>(i)] > out.probs[static_cast<std::size_t>(out.cls)])
      out.cls = i;  // strict >: ties keep the earlier key
  return out;
}

std::vector<WindowVerdict> classify_all(const EnsembleIDS& ids,
                                        const std::vector<FeatureWindow>& windows, int workers) {
  if (workers <= 0) workers = thread_budget();
  std::vector<WindowVerdict> out(windows.size());
  parallel_for(windows.size(), workers, [&](std::size_t i) {
    Classification c = ids.classify(windows[i].values);
    out[i] = {windows[i].label, c.cls, c.probs};
  });
  return out;
}

EvalReport evaluate(const EnsembleIDS& ids, const std::vector<FeatureWindow>& windows,
                    int workers) {
  auto verdicts = classify_all(ids, windows, workers);
  EvalReport report;
  long benign_total = 0, benign_flagged = 0;
  for (const auto& v : verdicts) {
    if (v.truth == kClassUnseenAttack) {
      ++report.unseen_total;
      if (v.predicted != kClassBenign) ++report.unseen_nonbenign;
      continue;
    }
    if (v.truth < 0 || v.truth > kClassBenign)
      throw SchemaError("evaluate: window label " + std::to_string(v.truth) +
                        " is not a known class");
    report.cm.at(v.truth, v.predicted)++;
    if (v.truth == kClassBenign) {
      ++benign_total;
      if (v.predicted != kClassBenign) ++benign_flagged;
    }
  }
  report.metrics = compute_metrics(report.cm);
  report.per_class = per_class_metrics(report.cm);
  report.benign_far = benign_total > 0
                          ? static_cast<double>(benign_flagged) / static_cast<double>(benign_total)
                          : 0.0;
  return report;
}

LatencyStats bench_latency(const EnsembleIDS& ids, const std::vector<FeatureWindow>& windows,
                           int repetitions) {
  LatencyStats stats;
  if (windows.empty() || repetitions < 1) return stats;
  ids.classify(windows.front().values);  // warm-up, excluded
  std::vector<double> samples;
  samples.reserve(windows.size() * static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    for (const auto& w : windows) {
      auto t0 = std::chrono::steady_clock::now();
      ids.classify(w.values);
      auto t1 = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }
  std::sort(samples.begin(), samples.end());
  auto pct = [&](double p) {
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(samples.size()))) ;
    if (idx > 0) --idx;
    return samples[std::min(idx, samples.size() - 1)];
  };
  double sum = 0;
  for (double s : samples) sum += s;
  stats.mean_s = sum / static_cast<double>(samples.size());
  stats.p50_s = pct(0.50);
  stats.p95_s = pct(0.95);
  stats.max_s = samples.back();
  stats.within_ssr_window = stats.mean_s >= 5.0 && stats.mean_s <= 12.0;
  stats.under_5s = stats.mean_s < 5.0;
  return stats;
}

ReconstructionDetector::ReconstructionDetector(const Checkpoint& forecaster)
    : model_(model_from_checkpoint(forecaster)),
      stats_(forecaster.stats),
      input_len_(forecaster.train.sequence_length) {
  if (forecaster.model.head != HeadKind::Forecast)
    throw CheckpointError("reconstruction detector needs a forecast-headed checkpoint");
}

double ReconstructionDetector::score(const FeatureWindow& w) const {
  ag::RowMat normalized = apply_normalizer(stats_, w.values);
  Eigen::Index L = normalized.rows();
  if (L <= input_len_)
    throw SchemaError("reconstruction score: window shorter than forecaster input length");
  double acc = 0;
  long n = 0;
  for (Eigen::Index t = input_len_; t < L; ++t) {
    ag::RowMat slice = normalized.middleRows(t - input_len_, input_len_);
    ag::Tensor x = ag::Tensor::from_vec({input_len_, kFeatureCount},
                                        Eigen::Map<const ag::Vec>(slice.data(), slice.size()));
    ag::Tape tape;
    ag::Tensor pred = model_->forecast(tape, x);
    Eigen::Map<const Eigen::RowVectorXd> p(pred.values().data(), kFeatureCount);
    acc += (p - normalized.row(t)).squaredNorm() / kFeatureCount;
    ++n;
  }
  return acc / static_cast<double>(n);
}

void ReconstructionDetector::calibrate(const std::vector<FeatureWindow>& benign_validation) {
  if (benign_validation.empty())
    throw SchemaError("reconstruction calibrate: empty validation set");
  std::vector<double> scores;
  scores.reserve(benign_validation.size());
  for (const auto& w : benign_validation) scores.push_back(score(w));
  double mean = 0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  threshold_ = mean + 3.0 * std::sqrt(var);
  calibrated_ = true;
}

double ReconstructionDetector::threshold() const {
  if (!calibrated_) throw std::logic_error("reconstruction detector used before calibration");
  return threshold_;
}

std::pair<double, bool> ReconstructionDetector::verdict(const FeatureWindow& w) const {
  if (!calibrated_) throw std::logic_error("reconstruction detector used before calibration");
  double s = score(w);
  return {s, s > threshold_};
}

}  // namespace sentinel

// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: ten independently checkable criteria, one verdict line
// each. Exit code is the number of failed criteria.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdarg>
#include <iterator>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "sentinel/attack.hpp"
#include "sentinel/data.hpp"
#include "sentinel/eval.hpp"
#include "sentinel/train.hpp"

namespace fs = std::filesystem;
using namespace sentinel;
using sentinel::testing::max_grad_error;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

void progress(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

ag::Tensor random_tensor(int r, int c, Rng& rng, double s = 0.5) {
  ag::Tensor t = ag::Tensor::zeros({r, c});
  for (Eigen::Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(-s, s);
  return t;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Verdict criterion_gradients() {
  auto t0 = Clock::now();
  using namespace ag;
  double worst = 0.0;
  Rng rng(123);
  Tensor a = random_tensor(3, 4, rng), w = random_tensor(4, 4, rng), b = random_tensor(1, 4, rng);
  Tensor g = random_tensor(1, 4, rng, 0.2), bb = random_tensor(1, 4, rng, 0.2);
  g.values().array() += 1.0;
  Tensor target = random_tensor(3, 4, rng);
  Tensor s = Tensor::scalar(0.7);

  auto track = [&](const std::function<Tensor(Tape&)>& fn, const std::vector<Tensor>& in) {
    worst = std::max(worst, max_grad_error(fn, in));
  };
  track([&](Tape& tp) {
    return mse_loss(tp, sigmoid(tp, add_rowvec(tp, matmul(tp, a, w), b)), target);
  }, {a, w, b});
  track([&](Tape& tp) {
    return mse_loss(tp, tanh_t(tp, layer_norm(tp, a, g, bb)), target);
  }, {a, g, bb});
  track([&](Tape& tp) {
    Tensor scores = matmul(tp, a, transpose(tp, a));
    return mse_loss(tp, matmul(tp, softmax_rows(tp, scores), a), target);
  }, {a});
  track([&](Tape& tp) {
    Tensor e = exp_t(tp, mul_scalar(tp, a, 0.3));
    Tensor l = log_t(tp, add_scalar(tp, abs_t(tp, a), 1.0));
    Tensor mx = maximum(tp, e, l);
    Tensor relu = max_scalar(tp, sub(tp, mx, Tensor::full({3, 4}, 0.9)), 0.0);
    return mse_loss(tp, scale(tp, add(tp, mx, relu), s), target);
  }, {a, s});
  track([&](Tape& tp) {
    Tensor prob = sigmoid(tp, sum_all(tp, mul(tp, a, a)));
    return bce_loss(tp, prob, Tensor::scalar(1.0));
  }, {a});
  track([&](Tape& tp) {
    std::vector<Tensor> rows;
    for (int i = 2; i >= 0; --i) rows.push_back(row(tp, a, i));
    return mse_loss(tp, div(tp, stack_rows(tp, rows), add_scalar(tp, abs_t(tp, a), 2.0)), target);
  }, {a});

  // full architectures, 2 blocks/layers, d = 8, L = 5
  for (Arch arch : {Arch::XLstm, Arch::Transformer}) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.embedding_dim = 8;
    cfg.num_blocks = 2;
    cfg.slstm_positions = {1};
    cfg.ffn_dim = 16;
    SequenceModel model(cfg, 13);
    Rng r2(29);
    Tensor x = random_tensor(5, cfg.input_dim, r2);
    Tensor tgt = random_tensor(1, cfg.output_dim, r2);
    std::vector<Tensor> checked = {x, model.params().find("head.W"),
                                   model.params().find("input_proj.W")};
    if (arch == Arch::XLstm) {
      checked.push_back(model.params().find("block1.slstm.Wi"));
      checked.push_back(model.params().find("block1.slstm.Rf"));
      checked.push_back(model.params().find("block0.mlstm.Wv"));
      checked.push_back(model.params().find("block0.mlstm.wf"));
      checked.push_back(model.params().find("block0.ln.g"));
    } else {
      checked.push_back(model.params().find("layer0.attn.Wq"));
      checked.push_back(model.params().find("layer0.attn.Wk"));
      checked.push_back(model.params().find("layer1.ffn.W1"));
      checked.push_back(model.params().find("layer0.ln2.b"));
    }
    worst = std::max(worst, max_grad_error(
                                [&](Tape& tp) { return mse_loss(tp, model.forecast(tp, x), tgt); },
                                checked));
  }
  double dt = seconds_since(t0);
  return {worst <= 1e-4 && dt < 120.0,
          fmt("max relative gradient error %.3e, %.1f s", worst, dt)};
}

// ---------------------------------------------------------------------------
// 2. recurrence oracles

Verdict criterion_recurrences() {
  using namespace ag;
  auto dense = [](const Tensor& t) {
    return RowMat(ConstMatMap(t.values().data(), t.rows(), t.cols()));
  };
  double worst = 0.0;

  {  // stabilized sLSTM vs naive recurrence
    ParamStore store;
    Rng rng(11);
    const int d = 4, T = 6;
    SLstmCell cell(store, "s", d, rng);
    auto W = [&](const char* n) { return dense(store.find(std::string("s.") + n)); };
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(d), n = Eigen::RowVectorXd::Zero(d),
                       h = Eigen::RowVectorXd::Zero(d);
    SLstmState st = cell.initial_state();
    Tape tape;
    for (int t = 0; t < T; ++t) {
      Tensor x = random_tensor(1, d, rng);
      Eigen::RowVectorXd xv = dense(x);
      auto pre = [&](const char* Wn, const char* Rn, const char* bn) {
        return Eigen::RowVectorXd(xv * W(Wn) + h * W(Rn) + W(bn));
      };
      Eigen::RowVectorXd zt = pre("Wz", "Rz", "bz").array().tanh();
      Eigen::RowVectorXd it = pre("Wi", "Ri", "bi").array().exp();
      Eigen::RowVectorXd ft = pre("Wf", "Rf", "bf").array().exp();
      Eigen::RowVectorXd ot = pre("Wo", "Ro", "bo");
      c = ft.cwiseProduct(c) + it.cwiseProduct(zt);
      n = ft.cwiseProduct(n) + it;
      for (int i = 0; i < d; ++i) h[i] = 1.0 / (1.0 + std::exp(-ot[i])) * c[i] / n[i];
      auto [ns, hs] = cell.step(tape, st, x);
      st = ns;
      for (int i = 0; i < d; ++i) worst = std::max(worst, std::abs(hs.values()[i] - h[i]));
    }
  }

  {  // mLSTM vs brute-force unrolled discounted outer-product sum
    ParamStore store;
    Rng rng(17);
    const int d = 4, T = 6;
    MLstmCell cell(store, "m", d, rng);
    auto W = [&](const char* n) { return dense(store.find(std::string("m.") + n)); };
    // keep every step's raw gate values, then rebuild C_t and n_t from scratch
    std::vector<Eigen::VectorXd> qs, ks, vs, os;
    std::vector<double> is, fsv;
    MLstmState st = cell.initial_state();
    Tape tape;
    for (int t = 0; t < T; ++t) {
      Tensor x = random_tensor(1, d, rng);
      Eigen::VectorXd xc = dense(x).transpose();
      qs.push_back(W("Wq") * xc + W("bq").col(0));
      ks.push_back((W("Wk") * xc + W("bk").col(0)) / std::sqrt(double(d)));
      vs.push_back(W("Wv") * xc + W("bv").col(0));
      os.push_back(W("Wo") * xc + W("bo").col(0));
      is.push_back((W("wi") * xc)(0, 0) + W("bi")(0, 0));
      fsv.push_back((W("wf") * xc)(0, 0) + W("bf")(0, 0));

      // unrolled sum: C_t = sum_j (prod_{r=j+1..t} f_r) i_j v_j k_j^T, in the
      // shared stabilized scale exp(-m_t). The stabilizer starts at zero, so
      // the all-forget path sum(log f) is also a candidate for the max.
      double m = 0.0;
      for (int r = 0; r <= t; ++r) m += fsv[static_cast<std::size_t>(r)];
      for (int j = 0; j <= t; ++j) {
        double acc = is[static_cast<std::size_t>(j)];
        for (int r = j + 1; r <= t; ++r) acc += fsv[static_cast<std::size_t>(r)];
        m = std::max(m, acc);
      }
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
      Eigen::VectorXd nv = Eigen::VectorXd::Zero(d);
      for (int j = 0; j <= t; ++j) {
        double logw = is[static_cast<std::size_t>(j)];
        for (int r = j + 1; r <= t; ++r) logw += fsv[static_cast<std::size_t>(r)];
        double wgt = std::exp(logw - m);
        C += wgt * vs[static_cast<std::size_t>(j)] * ks[static_cast<std::size_t>(j)].transpose();
        nv += wgt * ks[static_cast<std::size_t>(j)];
      }
      Eigen::VectorXd ht = (C * qs.back()) / std::max(std::abs(nv.dot(qs.back())), 1.0);
      for (int i = 0; i < d; ++i) ht[i] *= 1.0 / (1.0 + std::exp(-os.back()[i]));

      auto [ns, hs] = cell.step(tape, st, x);
      st = ns;
      for (int i = 0; i < d; ++i) worst = std::max(worst, std::abs(hs.values()[i] - ht[i]));
    }
  }

  bool finite = true;
  {  // 10,000-step rollout
    ParamStore store;
    Rng rng(23);
    const int d = 8;
    SLstmCell scell(store, "s", d, rng);
    MLstmCell mcell(store, "m", d, rng);
    SLstmState ss = scell.initial_state();
    MLstmState ms = mcell.initial_state();
    for (int t = 0; t < 10000 && finite; ++t) {
      Tape tape;
      Tensor x = random_tensor(1, d, rng, 2.0);
      auto [ns, hs] = scell.step(tape, ss, x);
      auto [nm, hm] = mcell.step(tape, ms, x);
      // detach so the tape can be dropped each step
      ss = {Tensor::from_vec({1, d}, ns.c.values()), Tensor::from_vec({1, d}, ns.n.values()),
            Tensor::from_vec({1, d}, ns.h.values()), Tensor::from_vec({1, d}, ns.m.values())};
      ms = {Tensor::from_vec({d, d}, nm.C.values()), Tensor::from_vec({d, 1}, nm.n.values()),
            Tensor::from_vec({1, 1}, nm.m.values())};
      for (Eigen::Index i = 0; i < d; ++i)
        finite = finite && std::isfinite(hs.values()[i]) && std::isfinite(hm.values()[i]);
    }
  }

  return {worst <= 1e-10 && finite,
          fmt("max oracle deviation %.3e, 10k-step rollout %s", worst,
              finite ? "finite" : "DIVERGED")};
}

// ---------------------------------------------------------------------------
// 3. injection oracle over 1,000 random triples

Verdict criterion_injection() {
  if (kAltitudeDeltaFt != 82.0 || kGroundspeedDeltaKn != 1.9 || kHeadingDeltaDeg != 1.0)
    return {false, "drift increments do not match the +82 ft / +1.9 kn / +1 deg rule"};
  auto flights = synthesize_flights(50, 314);
  Rng rng(2025);
  int ok = 0;
  const int kTrials = 1000;
  for (int trial = 0; trial < kTrials; ++trial) {
    const FlightSequence& fl = flights[rng.below(flights.size())];
    int len = static_cast<int>(fl.size());
    int kindi = static_cast<int>(rng.below(4));
    if (kindi == 3) {
      int k = 10 + static_cast<int>(rng.below(20));
      int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - k)));
      Injection inj = inject_standing_still(fl, k, start);
      OracleFinding f = attack_oracle(fl, inj.flight);
      if (f.result == OracleFinding::Result::Detected && f.kind == AttackKind::StandingStill &&
          f.begin == start && f.end == start + k)
        ++ok;
    } else {
      AttackKind kind = kindi == 0   ? AttackKind::AltitudeDrift
                        : kindi == 1 ? AttackKind::GroundspeedDrift
                                     : AttackKind::HeadingDrift;
      double delta = default_delta(kind);
      int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 2)));
      Injection inj = inject_gradual(fl, kind, delta, start);
      OracleFinding f = attack_oracle(fl, inj.flight);
      if (f.result == OracleFinding::Result::Detected && f.kind == kind && f.begin == start &&
          f.end == len && std::abs(f.delta - delta) <= 1e-9 * delta)
        ++ok;
    }
  }
  return {ok == kTrials, fmt("%d/%d triples recovered exactly", ok, kTrials)};
}

// ---------------------------------------------------------------------------
// 4. dataset contracts over 20 seeded builds

Verdict criterion_datasets() {
  auto flights = synthesize_flights(60, 2718);
  BuildOptions opts;
  opts.windows_per_flight = 2;
  int bad_balance = 0, leaks = 0, bad_classes = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DatasetB b = build_dataset_b(flights, seed, opts);
    for (const auto& subset : b.subsets) {
      for (const auto* part : {&subset.train, &subset.test}) {
        long pos = 0;
        for (const auto& w : *part) pos += w.label == 1;
        long half = static_cast<long>(part->size()) - pos;
        if (std::labs(pos - half) > 1) ++bad_balance;
      }
      std::set<std::string> train_fl;
      for (const auto& w : subset.train) train_fl.insert(w.flight_id);
      for (const auto& w : subset.test)
        if (train_fl.count(w.flight_id)) ++leaks;
    }
    DatasetC c = build_dataset_c(flights, seed, opts);
    std::array<long, 4> counts{};
    for (const auto& w : c.windows.train) counts[static_cast<std::size_t>(w.label)]++;
    for (const auto& w : c.windows.test) counts[static_cast<std::size_t>(w.label)]++;
    long total = counts[0] + counts[1] + counts[2] + counts[3];
    for (long cnt : counts)
      if (std::abs(static_cast<double>(cnt) - total / 4.0) > 0.01 * total) ++bad_classes;
    std::set<std::string> ctrain;
    for (const auto& w : c.windows.train) ctrain.insert(w.flight_id);
    for (const auto& w : c.windows.test)
      if (ctrain.count(w.flight_id)) ++leaks;
  }
  return {bad_balance == 0 && leaks == 0 && bad_classes == 0,
          fmt("20 seeds: %d imbalance, %d leaked windows, %d class skews", bad_balance, leaks,
              bad_classes)};
}

// ---------------------------------------------------------------------------
// 5. desk-scale pipeline; artifacts reused by criteria 7 and 10

struct PipelineArtifacts {
  std::vector<FlightSequence> flights;
  std::optional<EnsembleIDS> xl, tx;
  std::vector<FeatureWindow> test_windows;
  double xl_f1 = 0, xl_far = 1, tx_f1 = 0;
  double runtime_s = 0;
};
PipelineArtifacts g_pipe;

EnsembleIDS train_ensemble(Arch arch, const Checkpoint& pre, const DatasetB& b,
                           const char* tag) {
  std::array<Checkpoint, 4> cks;
  static const char* kCls[4] = {"ALT", "GS", "HDG", "GN"};
  for (int i = 0; i < 4; ++i) {
    TrainConfig cfg = default_finetune_config(arch, kCls[i]);
    cfg.seed = 100 + static_cast<std::uint64_t>(i);
    auto t0 = Clock::now();
    cks[static_cast<std::size_t>(i)] =
        finetune(cfg, pre, b.subsets[static_cast<std::size_t>(i)].train);
    progress(fmt("%s %s fine-tuned: %zu windows, loss %.4f -> %.4f (%.0f s)", tag, kCls[i],
                 b.subsets[static_cast<std::size_t>(i)].train.size(),
                 cks[static_cast<std::size_t>(i)].prov.epoch_losses.front(),
                 cks[static_cast<std::size_t>(i)].prov.epoch_losses.back(), seconds_since(t0)));
  }
  return EnsembleIDS(cks[0], cks[1], cks[2], cks[3]);
}

Verdict criterion_pipeline() {
  auto t0 = Clock::now();
  g_pipe.flights = synthesize_flights(2400, 4242);
  NormalizationStats stats = fit_normalizer(g_pipe.flights);

  std::vector<FeatureWindow> pre_windows;
  for (const auto& fl : g_pipe.flights) {
    auto w = make_windows(fl, 10, 30, WindowMode::Forecasting);
    pre_windows.insert(pre_windows.end(), w.begin(), w.end());
  }
  progress(fmt("pretraining corpus: %zu flights, %zu windows", g_pipe.flights.size(),
               pre_windows.size()));

  BuildOptions bopt;
  bopt.windows_per_flight = 5;
  DatasetB b = build_dataset_b(g_pipe.flights, 1234, bopt);
  DatasetC c = build_dataset_c(g_pipe.flights, 1234, bopt);
  g_pipe.test_windows = c.windows.test;

  for (Arch arch : {Arch::XLstm, Arch::Transformer}) {
    TrainConfig pc = default_pretrain_config(arch);
    pc.seed = 7;
    auto tp = Clock::now();
    Checkpoint pre = pretrain(pc, pre_windows, stats);
    progress(fmt("%s pretrained: loss %.4f -> %.4f (%.0f s)", arch_name(arch).c_str(),
                 pre.prov.epoch_losses.front(), pre.prov.epoch_losses.back(),
                 seconds_since(tp)));
    EnsembleIDS ids = train_ensemble(arch, pre, b, arch_name(arch).c_str());
    EvalReport r = evaluate(ids, g_pipe.test_windows);
    progress(fmt("%s ensemble: macro F1 %.4f, macro FAR %.4f over %zu test windows",
                 arch_name(arch).c_str(), r.metrics.f1, r.metrics.far,
                 g_pipe.test_windows.size()));
    if (arch == Arch::XLstm) {
      g_pipe.xl = std::move(ids);
      g_pipe.xl_f1 = r.metrics.f1;
      g_pipe.xl_far = r.metrics.far;
    } else {
      g_pipe.tx = std::move(ids);
      g_pipe.tx_f1 = r.metrics.f1;
    }
  }
  g_pipe.runtime_s = seconds_since(t0);
  bool pass = g_pipe.xl_f1 >= 0.95 && g_pipe.xl_far <= 0.05 && g_pipe.xl_f1 >= g_pipe.tx_f1 &&
              g_pipe.runtime_s <= 3600.0;
  return {pass, fmt("xLSTM F1 %.4f FAR %.4f, transformer F1 %.4f, %.0f s total", g_pipe.xl_f1,
                    g_pipe.xl_far, g_pipe.tx_f1, g_pipe.runtime_s)};
}

// ---------------------------------------------------------------------------
// 6. transfer-learning benefit over 10 paired seeds

Verdict criterion_transfer() {
  auto flights = synthesize_flights(300, 99);
  NormalizationStats stats = fit_normalizer(flights);
  std::vector<FeatureWindow> pre_windows;
  for (const auto& fl : flights) {
    auto w = make_windows(fl, 10, 30, WindowMode::Forecasting);
    pre_windows.insert(pre_windows.end(), w.begin(), w.end());
  }
  TrainConfig pc = default_pretrain_config(Arch::XLstm);
  pc.epochs = 5;
  pc.seed = 5;
  Checkpoint pre = pretrain(pc, pre_windows, stats);
  progress(fmt("transfer baseline pretrained, final loss %.4f", pre.prov.epoch_losses.back()));

  auto val_loss = [&](const Checkpoint& ck, const std::vector<FeatureWindow>& ws) {
    auto model = model_from_checkpoint(ck);
    double acc = 0;
    for (const auto& w : ws) {
      ag::Tape tape;
      double p = model->detect(tape, window_tensor(ck.stats, w)).item();
      p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
      acc += w.label == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return acc / static_cast<double>(ws.size());
  };

  int wins = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    BuildOptions opts;
    opts.sequence_length = 30;
    // Enough windows and a large enough step size that one epoch moves the
    // detector measurably: at a handful of optimizer steps both
    // initializations sit at chance and the comparison is decided by noise.
    // The heading classifier is the probe because it depends the most on
    // representation quality (its drift has no out-of-envelope signature).
    opts.windows_per_flight = 30;
    DatasetB b = build_dataset_b(flights, 500 + s, opts);
    TrainConfig fc = default_finetune_config(Arch::XLstm, "HDG");
    fc.epochs = 1;
    fc.sequence_length = 30;
    fc.learning_rate = 5e-4;
    fc.batch_size = 20;
    fc.seed = s;

    Checkpoint fine_pre = finetune(fc, pre, b.subsets[2].train);

    SequenceModel rnd_model(default_model_config(Arch::XLstm, HeadKind::Forecast, 0.0), 1000 + s);
    TrainConfig rc = pc;
    rc.stage = "random";
    Checkpoint rnd = checkpoint_from_model(rnd_model, rc, stats, {"random", 1000 + s, 0, {}});
    Checkpoint fine_rnd = finetune(fc, rnd, b.subsets[2].train);

    double lp = val_loss(fine_pre, b.subsets[2].test);
    double lr = val_loss(fine_rnd, b.subsets[2].test);
    progress(fmt("seed %llu: epoch-1 val loss pretrained %.4f vs random %.4f",
                 static_cast<unsigned long long>(s), lp, lr));
    if (lp < lr) ++wins;
  }
  return {wins >= 8, fmt("pretrained initialization won %d/10 paired seeds", wins)};
}

// ---------------------------------------------------------------------------
// 7. unseen-attack generalization

Verdict criterion_unseen() {
  if (!g_pipe.xl) return {false, "pipeline ensemble unavailable (criterion 5 failed earlier)"};
  auto unseen = build_unseen_windows(g_pipe.flights, 777, BuildOptions{.windows_per_flight = 1});
  EvalReport r = evaluate(*g_pipe.xl, unseen);
  if (r.unseen_total == 0) return {false, "no standing-still windows were generated"};
  double flagged = static_cast<double>(r.unseen_nonbenign) / static_cast<double>(r.unseen_total);
  return {flagged >= 0.80 && r.benign_far <= 0.08,
          fmt("%.1f%% of %ld standing-still windows flagged non-benign, benign FAR %.4f",
              100.0 * flagged, r.unseen_total, r.benign_far)};
}

// ---------------------------------------------------------------------------
// 8. metric arithmetic

Verdict criterion_metrics() {
  Metrics m = metrics_from_counts(9, 1, 9, 1);
  bool hand = m.precision == 9.0 / 10.0 && m.recall == 9.0 / 10.0 && m.far == 1.0 / 10.0 &&
              m.fnr == 1.0 / 10.0 && m.accuracy == 18.0 / 20.0 &&
              std::abs(m.f1 - 0.9) < 1e-15 && !m.degenerate;
  Metrics d = metrics_from_counts(0, 0, 5, 0);
  hand = hand && d.degenerate && d.precision == 0.0;

  double worst = 0.0;
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionMatrix cm(4);
    for (int t = 0; t < 4; ++t)
      for (int p = 0; p < 4; ++p) cm.at(t, p) = 1 + static_cast<long>(rng.below(40));
    double precision = 0, recall = 0, far = 0, f1 = 0, fnr = 0, acc = 0;
    for (int c = 0; c < 4; ++c) {
      long tp = cm.at(c, c), fp = 0, fn = 0, tn = 0;
      for (int t = 0; t < 4; ++t)
        for (int p = 0; p < 4; ++p) {
          if (t == c && p == c) continue;
          else if (p == c) fp += cm.at(t, p);
          else if (t == c) fn += cm.at(t, p);
          else tn += cm.at(t, p);
        }
      double pr = double(tp) / double(tp + fp), rc = double(tp) / double(tp + fn);
      precision += pr;
      recall += rc;
      far += double(fp) / double(fp + tn);
      fnr += double(fn) / double(fn + tp);
      acc += double(tp + tn) / double(tp + fp + tn + fn);
      f1 += 2 * pr * rc / (pr + rc);
    }
    Metrics got = compute_metrics(cm);
    worst = std::max({worst, std::abs(got.precision - precision / 4),
                      std::abs(got.recall - recall / 4), std::abs(got.far - far / 4),
                      std::abs(got.f1 - f1 / 4), std::abs(got.fnr - fnr / 4),
                      std::abs(got.accuracy - acc / 4)});
  }
  return {hand && worst <= 1e-12,
          fmt("hand examples %s, max deviation from per-class oracle %.2e",
              hand ? "exact" : "WRONG", worst)};
}

// ---------------------------------------------------------------------------
// 9. byte-identical CLI reruns

int run_cli(const std::string& args) {
  std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing:" + p.string() + ">";
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict criterion_reproducibility() {
  fs::path dir = fs::temp_directory_path() / "sentinel_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto at = [&](const char* n) { return (dir / n).string(); };

  std::string cfg = at("tiny.json");
  std::ofstream(cfg) << R"({"epochs": 1, "sequence_length": 6, "batch_size": 8})";

  auto stage = [&](const char* suffix) -> bool {
    std::string tag = suffix;
    // 40 flights = 10 per condition, so the 80/20 flight-level split leaves
    // every condition with test flights (16 would leave zero).
    if (run_cli("synth --n 40 --seed 5 --out " + at(("raw" + tag + ".csv").c_str())) != 0)
      return false;
    std::string raw = at(("raw" + tag + ".csv").c_str());
    if (run_cli("inject --in " + raw + " --dataset b --L 6 --seed 9 --out " +
                at(("b" + tag).c_str())) != 0)
      return false;
    if (run_cli("inject --in " + raw + " --dataset c --L 6 --seed 9 --out " +
                at(("c" + tag).c_str())) != 0)
      return false;
    if (run_cli("pretrain --arch xlstm --data " + raw + " --config " + cfg +
                " --stride 60 --seed 4 --out " + at(("pre" + tag + ".json").c_str())) != 0)
      return false;
    fs::create_directories(dir / ("ck" + tag));
    for (const char* cls : {"alt", "gs", "hdg", "gn"}) {
      std::string subset = std::string("b") + tag + "/b_" +
                           (std::string(cls) == "alt"  ? "altitude"
                            : std::string(cls) == "gs" ? "groundspeed"
                            : std::string(cls) == "hdg" ? "heading"
                                                        : "benign") +
                           ".csv";
      if (run_cli("finetune --arch xlstm --classifier " + std::string(cls) + " --pretrained " +
                  at(("pre" + tag + ".json").c_str()) + " --data " + (dir / subset).string() +
                  " --config " + cfg + " --seed 6 --out " +
                  (dir / ("ck" + tag) / (std::string(cls) + ".json")).string()) != 0)
        return false;
    }
    return run_cli("evaluate --ckpt-dir " + (dir / ("ck" + tag)).string() + " --data " +
                   (dir / ("c" + tag) / "c.csv").string() + " --out " +
                   at(("report" + tag + ".json").c_str())) == 0;
  };

  if (!stage("1")) return {false, "first CLI pipeline run failed"};
  if (!stage("2")) return {false, "second CLI pipeline run failed"};

  std::vector<std::pair<std::string, std::string>> pairs = {
      {"raw1.csv", "raw2.csv"},
      {"b1/b_altitude.csv", "b2/b_altitude.csv"},
      {"b1/b_benign.csv", "b2/b_benign.csv"},
      {"c1/c.csv", "c2/c.csv"},
      {"pre1.json", "pre2.json"},
      {"ck1/alt.json", "ck2/alt.json"},
      {"ck1/gn.json", "ck2/gn.json"},
      {"report1.json", "report2.json"},
  };
  int mismatches = 0;
  for (const auto& [a, b] : pairs)
    if (slurp(dir / a) != slurp(dir / b)) ++mismatches;
  fs::remove_all(dir);
  return {mismatches == 0,
          fmt("%zu artifact pairs compared, %d differed", pairs.size(), mismatches)};
}

// ---------------------------------------------------------------------------
// 10. latency report invariants

Verdict criterion_latency() {
  if (!g_pipe.xl || g_pipe.test_windows.empty())
    return {false, "pipeline ensemble unavailable (criterion 5 failed earlier)"};
  std::vector<FeatureWindow> sample(g_pipe.test_windows.begin(),
                                    g_pipe.test_windows.begin() +
                                        std::min<std::size_t>(20, g_pipe.test_windows.size()));
  LatencyStats s = bench_latency(*g_pipe.xl, sample, 2);
  bool ordered = s.mean_s > 0 && s.p50_s > 0 && s.p50_s <= s.p95_s && s.p95_s <= s.max_s &&
                 s.mean_s <= s.max_s;
  bool flags = s.within_ssr_window == (s.mean_s >= 5.0 && s.mean_s <= 12.0) &&
               s.under_5s == (s.mean_s < 5.0);
  return {ordered && flags,
          fmt("mean %.4fs p50 %.4fs p95 %.4fs max %.4fs, SSR-window=%d under5s=%d "
              "(absolute values informational)",
              s.mean_s, s.p50_s, s.p95_s, s.max_s, int(s.within_ssr_window), int(s.under_5s))};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_cli = argv[1];
  // Optional development filter: a second argument like "5,6" runs only those
  // criteria. The registered ctest invocation never passes it, so the
  // acceptance gate always covers all ten.
  std::set<std::size_t> only;
  if (argc > 2) {
    std::string spec(argv[2]);
    for (std::size_t pos = 0; pos < spec.size();) {
      std::size_t next = spec.find(',', pos);
      if (next == std::string::npos) next = spec.size();
      only.insert(static_cast<std::size_t>(std::stoul(spec.substr(pos, next - pos))));
      pos = next + 1;
    }
  }
  struct Entry {
    const char* name;
    Verdict (*fn)();
  };
  const Entry entries[] = {
      {"gradient suite", criterion_gradients},
      {"recurrence oracles", criterion_recurrences},
      {"injection oracle", criterion_injection},
      {"dataset contracts", criterion_datasets},
      {"desk-scale pipeline reproduction", criterion_pipeline},
      {"transfer-learning benefit", criterion_transfer},
      {"unseen-attack generalization", criterion_unseen},
      {"metric arithmetic", criterion_metrics},
      {"byte-identical CLI reruns", criterion_reproducibility},
      {"latency report", criterion_latency},
  };
  int failures = 0;
  for (std::size_t i = 0; i < std::size(entries); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    std::fprintf(stderr, "== criterion %zu: %s\n", i + 1, entries[i].name);
    Verdict v;
    try {
      v = entries[i].fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("[%2zu/10] %s — %s (%s)\n", i + 1, v.pass ? "PASS" : "FAIL", entries[i].name,
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures;
}

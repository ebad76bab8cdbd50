// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
//
// adsb-sentinel: end-to-end pipeline driver. One subcommand per pipeline
// stage; every command writes a replayable run manifest next to its outputs.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sentinel/attack.hpp"
#include "sentinel/data.hpp"
#include "sentinel/eval.hpp"
#include "sentinel/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sentinel;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitUsage = 2;    // unknown flag / bad invocation
constexpr int kExitSchema = 3;   // config or data schema violation
constexpr int kExitMissing = 4;  // missing input file / checkpoint

std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

json input_entry(const std::string& path) {
  return json{{"path", path}, {"fnv1a64", fnv1a64_file(path)}};
}

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const std::string& path, const std::string& command, const json& config,
                    std::uint64_t seed, const json& inputs, const json& outputs) {
  json m{{"command", command}, {"tool_version", kVersion}, {"timestamp", timestamp_utc()},
         {"seed", seed},       {"config", config},        {"inputs", inputs},
         {"outputs", outputs}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << m.dump(2) << "\n";
}

std::vector<FlightSequence> load_flights(const std::string& path, Units units,
                                         std::size_t min_len) {
  auto ingested = ingest_csv(path, units);
  return clean(group_flights(std::move(ingested.records)), min_len);
}

// Optional JSON override file for training configs; unknown keys are rejected.
void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("config file " + path + " is not valid JSON: " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "batch_size") cfg.batch_size = value.get<int>();
      else if (key == "sequence_length") cfg.sequence_length = value.get<int>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "dropout") cfg.dropout = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw SchemaError("config file " + path + ": unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw SchemaError("config file " + path + ": bad value for '" + key + "': " + e.what());
    }
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.sequence_length < 2 ||
      cfg.learning_rate <= 0.0 || cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw SchemaError("config file " + path + ": values out of range");
}

json config_json(const TrainConfig& c) {
  return json{{"stage", c.stage},
              {"arch", arch_name(c.arch)},
              {"classifier", c.classifier},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"sequence_length", c.sequence_length},
              {"learning_rate", c.learning_rate},
              {"dropout", c.dropout}};
}

json metrics_json(const Metrics& m) {
  return json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
              {"f1", m.f1},             {"far", m.far},             {"fnr", m.fnr},
              {"degenerate", m.degenerate}};
}

Checkpoint load_classifier(const std::string& dir, const std::string& name) {
  fs::path p = fs::path(dir) / (name + ".json");
  if (!fs::exists(p))
    throw IoError("missing checkpoint for classifier " + name + ": " + p.string());
  return load_checkpoint(p.string());
}

EnsembleIDS load_ensemble(const std::string& dir) {
  Checkpoint alt = load_classifier(dir, "alt");
  Checkpoint gs = load_classifier(dir, "gs");
  Checkpoint hdg = load_classifier(dir, "hdg");
  Checkpoint gn = load_classifier(dir, "gn");
  return EnsembleIDS(std::move(alt), std::move(gs), std::move(hdg), std::move(gn));
}

void print_report_table(const EvalReport& r) {
  static const char* names[4] = {"ALT", "GS", "HDG", "GN"};
  std::printf("confusion matrix (rows=true, cols=predicted):\n      ");
  for (auto* n : names) std::printf("%8s", n);
  std::printf("\n");
  for (int t = 0; t < 4; ++t) {
    std::printf("%5s ", names[t]);
    for (int p = 0; p < 4; ++p) std::printf("%8ld", r.cm.at(t, p));
    std::printf("\n");
  }
  std::printf("\n%-10s %9s %9s %9s %9s %9s %9s\n", "class", "acc", "prec", "recall", "f1", "far",
              "fnr");
  for (int c = 0; c < 4; ++c) {
    const Metrics& m = r.per_class[static_cast<std::size_t>(c)];
    std::printf("%-10s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", names[c], m.accuracy, m.precision,
                m.recall, m.f1, m.far, m.fnr);
  }
  const Metrics& m = r.metrics;
  std::printf("%-10s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", "macro", m.accuracy, m.precision,
              m.recall, m.f1, m.far, m.fnr);
  std::printf("benign FAR: %.4f\n", r.benign_far);
  if (r.unseen_total > 0)
    std::printf("unseen standing-still windows: %ld/%ld classified as non-benign (%.1f%%)\n",
                r.unseen_nonbenign, r.unseen_total,
                100.0 * static_cast<double>(r.unseen_nonbenign) /
                    static_cast<double>(r.unseen_total));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adsb-sentinel: ADS-B intrusion detection pipeline"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic benign flights");
  int synth_n = 200;
  std::uint64_t synth_seed = 42;
  std::string synth_out;
  synth->add_option("--n", synth_n, "Number of flights")->capture_default_str();
  synth->add_option("--seed", synth_seed, "RNG seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output flights CSV")->required();

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "Ingest, group and clean a state-vector CSV");
  std::string ingest_in, ingest_out, ingest_units = "aviation";
  std::size_t ingest_min_len = 52;
  ingest->add_option("--in", ingest_in, "Input state-vector CSV")->required();
  ingest->add_option("--units", ingest_units, "Input units: aviation (kn/ft) or metric (m/s, m)")
      ->check(CLI::IsMember({"aviation", "metric"}))
      ->capture_default_str();
  ingest->add_option("--min-len", ingest_min_len, "Minimum flight length to keep")
      ->capture_default_str();
  ingest->add_option("--out", ingest_out, "Output cleaned flights CSV")->required();

  // ---- inject ----
  auto* inject = app.add_subcommand("inject", "Build labeled attack datasets");
  std::string inject_in, inject_out, inject_dataset, inject_attack;
  double inject_delta = 0.0;
  int inject_k = kStandingStillK, inject_len = 50, inject_wpf = 2;
  std::uint64_t inject_seed = 42;
  inject->add_option("--in", inject_in, "Input benign flights CSV")->required();
  inject->add_option("--dataset", inject_dataset, "b = OvR binary subsets, c = multiclass")
      ->check(CLI::IsMember({"b", "c"}))
      ->required();
  inject
      ->add_option("--attack", inject_attack,
                   "With --dataset c: 'still' builds the unseen standing-still set; "
                   "a drift name scopes --delta")
      ->check(CLI::IsMember({"alt", "gs", "hdg", "still"}));
  inject->add_option("--delta", inject_delta,
                     "Override per-message drift increment for the attack named by --attack "
                     "(defaults: +82 ft, +1.9 kn, +1 deg)");
  inject->add_option("--k", inject_k, "Standing-still span in messages")->capture_default_str();
  inject->add_option("--L", inject_len, "Window sequence length")->capture_default_str();
  inject->add_option("--windows-per-flight", inject_wpf, "Windows sampled per flight")
      ->capture_default_str();
  inject->add_option("--seed", inject_seed, "RNG seed")->capture_default_str();
  inject->add_option("--out", inject_out, "Output dataset directory")->required();

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "Unsupervised forecasting pre-training");
  std::string pre_arch = "xlstm", pre_data, pre_config, pre_out;
  std::uint64_t pre_seed = 7;
  int pre_stride = 20;
  pre->add_option("--arch", pre_arch, "xlstm or tx")
      ->check(CLI::IsMember({"xlstm", "tx", "transformer"}))
      ->capture_default_str();
  pre->add_option("--data", pre_data, "Benign flights CSV")->required();
  pre->add_option("--config", pre_config, "JSON config overriding the Table I defaults");
  pre->add_option("--seed", pre_seed, "RNG seed")->capture_default_str();
  pre->add_option("--stride", pre_stride, "Forecast window stride")->capture_default_str();
  pre->add_option("--out", pre_out, "Output checkpoint path")->required();

  // ---- finetune ----
  auto* fine = app.add_subcommand("finetune", "Supervised binary fine-tuning");
  std::string fine_arch = "xlstm", fine_cls, fine_pre, fine_data, fine_config, fine_out;
  std::uint64_t fine_seed = 7;
  fine->add_option("--arch", fine_arch, "xlstm or tx")
      ->check(CLI::IsMember({"xlstm", "tx", "transformer"}))
      ->capture_default_str();
  fine->add_option("--classifier", fine_cls, "alt, gs, hdg or gn")
      ->check(CLI::IsMember({"alt", "gs", "hdg", "gn"}))
      ->required();
  fine->add_option("--pretrained", fine_pre, "Pre-trained checkpoint")->required();
  fine->add_option("--data", fine_data, "Labeled windows CSV (train split used)")->required();
  fine->add_option("--config", fine_config, "JSON config overriding the Table II defaults");
  fine->add_option("--seed", fine_seed, "RNG seed")->capture_default_str();
  fine->add_option("--out", fine_out, "Output checkpoint path")->required();

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "Multiclass ensemble evaluation");
  std::string eval_dir, eval_data, eval_out, eval_split = "test", eval_pw;
  bool eval_unseen = false;
  eval->add_option("--ckpt-dir", eval_dir, "Directory with alt/gs/hdg/gn.json checkpoints")
      ->required();
  eval->add_option("--data", eval_data, "Labeled windows CSV")->required();
  eval->add_option("--split", eval_split, "Split tag to evaluate")->capture_default_str();
  eval->add_flag("--unseen", eval_unseen, "Allow standing-still (label 4) windows");
  eval->add_option("--per-window", eval_pw, "Optional per-window verdict CSV");
  eval->add_option("--out", eval_out, "Output report JSON")->required();

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "Inference latency benchmark");
  std::string bench_dir, bench_data, bench_out;
  int bench_reps = 3;
  bench->add_option("--ckpt-dir", bench_dir, "Directory with alt/gs/hdg/gn.json checkpoints")
      ->required();
  bench->add_option("--data", bench_data, "Labeled windows CSV")->required();
  bench->add_option("--reps", bench_reps, "Repetitions per window")->capture_default_str();
  bench->add_option("--out", bench_out, "Output latency report JSON")->required();

  try {
    app.parse(argc, argv);

    if (*synth) {
      auto flights = synthesize_flights(synth_n, synth_seed);
      write_flights_csv(synth_out, flights);
      write_manifest(synth_out + ".manifest.json", "synth",
                     json{{"n", synth_n}}, synth_seed, json::array(),
                     json::array({synth_out}));
    } else if (*ingest) {
      Units units = ingest_units == "metric" ? Units::Metric : Units::Aviation;
      auto ingested = ingest_csv(ingest_in, units);
      auto flights = clean(group_flights(std::move(ingested.records)), ingest_min_len);
      write_flights_csv(ingest_out, flights);
      std::printf("flights: %zu, skipped rows: %zu\n", flights.size(), ingested.skipped);
      write_manifest(ingest_out + ".manifest.json", "ingest",
                     json{{"units", ingest_units}, {"min_len", ingest_min_len}}, 0,
                     json::array({input_entry(ingest_in)}), json::array({ingest_out}));
    } else if (*inject) {
      BuildOptions opts;
      opts.sequence_length = inject_len;
      opts.windows_per_flight = inject_wpf;
      opts.standing_still_k = inject_k;
      if (inject_delta > 0.0) {
        if (inject_attack == "alt") opts.deltas[0] = inject_delta;
        else if (inject_attack == "gs") opts.deltas[1] = inject_delta;
        else if (inject_attack == "hdg") opts.deltas[2] = inject_delta;
        else throw SchemaError("--delta requires --attack alt|gs|hdg");
      }
      auto flights = load_flights(inject_in, Units::Aviation,
                                  static_cast<std::size_t>(inject_len) + inject_k + 5);
      fs::create_directories(inject_out);
      json outputs = json::array();
      json counts;
      if (inject_dataset == "b") {
        DatasetB b = build_dataset_b(flights, inject_seed, opts);
        for (std::size_t s = 0; s < 4; ++s) {
          std::string path =
              (fs::path(inject_out) / ("b_" + DatasetB::kSubsetNames[s] + ".csv")).string();
          write_windows_csv(path, b.subsets[s].train, "train");
          append_windows_csv(path, b.subsets[s].test, "test", false);
          outputs.push_back(path);
          counts[DatasetB::kSubsetNames[s]] = {{"train", b.subsets[s].train.size()},
                                               {"test", b.subsets[s].test.size()}};
        }
      } else if (inject_attack == "still") {
        auto unseen = build_unseen_windows(flights, inject_seed, opts);
        std::string path = (fs::path(inject_out) / "unseen.csv").string();
        write_windows_csv(path, unseen, "test");
        outputs.push_back(path);
        counts["unseen"] = unseen.size();
      } else {
        DatasetC c = build_dataset_c(flights, inject_seed, opts);
        std::string path = (fs::path(inject_out) / "c.csv").string();
        write_windows_csv(path, c.windows.train, "train");
        append_windows_csv(path, c.windows.test, "test", false);
        outputs.push_back(path);
        counts["c"] = {{"train", c.windows.train.size()}, {"test", c.windows.test.size()}};
      }
      write_manifest((fs::path(inject_out) / "manifest.json").string(), "inject",
                     json{{"dataset", inject_dataset},
                          {"attack", inject_attack},
                          {"L", inject_len},
                          {"windows_per_flight", inject_wpf},
                          {"k", inject_k},
                          {"deltas", opts.deltas},
                          {"counts", counts}},
                     inject_seed, json::array({input_entry(inject_in)}), outputs);
    } else if (*pre) {
      TrainConfig cfg = default_pretrain_config(arch_from_name(pre_arch));
      if (!pre_config.empty()) apply_config_file(cfg, pre_config);
      cfg.seed = pre_seed;
      auto flights = load_flights(pre_data, Units::Aviation,
                                  static_cast<std::size_t>(cfg.sequence_length) + 2);
      if (flights.empty()) throw SchemaError("pretrain: no usable flights in " + pre_data);
      NormalizationStats stats = fit_normalizer(flights);
      std::vector<FeatureWindow> windows;
      for (const auto& fl : flights) {
        auto w = make_windows(fl, cfg.sequence_length, pre_stride, WindowMode::Forecasting);
        windows.insert(windows.end(), w.begin(), w.end());
      }
      Checkpoint ckpt = pretrain(cfg, windows, stats);
      save_checkpoint(ckpt, pre_out);
      std::printf("pretrain %s: %zu windows, epoch losses %.6f -> %.6f\n", pre_arch.c_str(),
                  windows.size(), ckpt.prov.epoch_losses.front(), ckpt.prov.epoch_losses.back());
      json inputs = json::array({input_entry(pre_data)});
      if (!pre_config.empty()) inputs.push_back(input_entry(pre_config));
      write_manifest(pre_out + ".manifest.json", "pretrain", config_json(cfg), pre_seed, inputs,
                     json::array({pre_out}));
    } else if (*fine) {
      std::string cls = fine_cls;
      for (auto& ch : cls) ch = static_cast<char>(std::toupper(ch));
      TrainConfig cfg = default_finetune_config(arch_from_name(fine_arch), cls);
      if (!fine_config.empty()) apply_config_file(cfg, fine_config);
      cfg.seed = fine_seed;
      Checkpoint pretrained = load_checkpoint(fine_pre);
      auto windows = read_windows_csv(fine_data, "train");
      Checkpoint ckpt = finetune(cfg, pretrained, windows);
      save_checkpoint(ckpt, fine_out);
      std::printf("finetune %s/%s: %zu windows, epoch losses %.6f -> %.6f\n", fine_arch.c_str(),
                  cls.c_str(), windows.size(), ckpt.prov.epoch_losses.front(),
                  ckpt.prov.epoch_losses.back());
      json inputs = json::array({input_entry(fine_pre), input_entry(fine_data)});
      if (!fine_config.empty()) inputs.push_back(input_entry(fine_config));
      write_manifest(fine_out + ".manifest.json", "finetune", config_json(cfg), fine_seed, inputs,
                     json::array({fine_out}));
    } else if (*eval) {
      EnsembleIDS ids = load_ensemble(eval_dir);
      auto windows = read_windows_csv(eval_data, eval_split);
      if (windows.empty())
        throw SchemaError("evaluate: no windows with split '" + eval_split + "' in " + eval_data);
      if (!eval_unseen)
        for (const auto& w : windows)
          if (w.label == kClassUnseenAttack)
            throw SchemaError("evaluate: standing-still windows present; pass --unseen");
      EvalReport r = evaluate(ids, windows);
      print_report_table(r);
      json rep;
      rep["confusion"] = json::array();
      for (int t = 0; t < 4; ++t) {
        json rowj = json::array();
        for (int p = 0; p < 4; ++p) rowj.push_back(r.cm.at(t, p));
        rep["confusion"].push_back(rowj);
      }
      rep["macro"] = metrics_json(r.metrics);
      rep["per_class"] = json::array();
      for (const auto& m : r.per_class) rep["per_class"].push_back(metrics_json(m));
      rep["benign_far"] = r.benign_far;
      rep["unseen_total"] = r.unseen_total;
      rep["unseen_nonbenign"] = r.unseen_nonbenign;
      {
        std::ofstream outj(eval_out);
        if (!outj) throw IoError("cannot open report for writing: " + eval_out);
        outj << rep.dump(2) << "\n";
      }
      if (!eval_pw.empty()) {
        auto verdicts = classify_all(ids, windows);
        std::ofstream pw(eval_pw);
        if (!pw) throw IoError("cannot open per-window CSV for writing: " + eval_pw);
        pw << "true,predicted,p_alt,p_gs,p_hdg,p_gn\n";
        for (const auto& v : verdicts)
          pw << v.truth << ',' << v.predicted << ',' << v.probs[0] << ',' << v.probs[1] << ','
             << v.probs[2] << ',' << v.probs[3] << '\n';
      }
      write_manifest(eval_out + ".manifest.json", "evaluate",
                     json{{"split", eval_split}, {"unseen", eval_unseen}}, 0,
                     json::array({input_entry(eval_data)}), json::array({eval_out}));
    } else if (*bench) {
      EnsembleIDS ids = load_ensemble(bench_dir);
      auto windows = read_windows_csv(bench_data, "test");
      if (windows.empty()) throw SchemaError("bench: no test windows in " + bench_data);
      LatencyStats st = bench_latency(ids, windows, bench_reps);
      std::printf("latency per window (s): mean %.6f p50 %.6f p95 %.6f max %.6f\n", st.mean_s,
                  st.p50_s, st.p95_s, st.max_s);
      std::printf("SSR refresh window [5,12] s: mean %s; under 5 s: %s\n",
                  st.within_ssr_window ? "within" : "outside", st.under_5s ? "yes" : "no");
      json rep{{"mean_s", st.mean_s},
               {"p50_s", st.p50_s},
               {"p95_s", st.p95_s},
               {"max_s", st.max_s},
               {"within_ssr_window", st.within_ssr_window},
               {"under_5s", st.under_5s},
               {"note", "absolute values are hardware-dependent and informational only"}};
      std::ofstream outj(bench_out);
      if (!outj) throw IoError("cannot open report for writing: " + bench_out);
      outj << rep.dump(2) << "\n";
      write_manifest(bench_out + ".manifest.json", "bench", json{{"reps", bench_reps}}, 0,
                     json::array({input_entry(bench_data)}), json::array({bench_out}));
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: schema: %s\n", e.what());
    return kExitSchema;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: checkpoint: %s\n", e.what());
    return kExitSchema;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: missing: %s\n", e.what());
    return kExitMissing;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/train.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sentinel/adam.hpp"

namespace sentinel {

using json = nlohmann::json;

namespace {

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t n) {
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    unsigned v = data[i] << 16;
    if (i + 1 < n) v |= data[i + 1] << 8;
    if (i + 2 < n) v |= data[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < n ? kB64[(v >> 6) & 63] : '=';
    out += i + 2 < n ? kB64[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  int buf = 0, bits = 0;
  for (char c : s) {
    if (c == '=') break;
    int v = val(c);
    if (v < 0) throw CheckpointError("invalid base64 payload");
    buf = (buf << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

std::string encode_values(const ag::Vec& v) {
  // little-endian 64-bit floats
  return base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                       static_cast<std::size_t>(v.size()) * sizeof(double));
}

ag::Vec decode_values(const std::string& s, Eigen::Index expected) {
  auto bytes = base64_decode(s);
  if (bytes.size() != static_cast<std::size_t>(expected) * sizeof(double))
    throw CheckpointError("parameter payload size mismatch");
  ag::Vec v(expected);
  std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

json config_to_json(const TrainConfig& c) {
  return json{{"stage", c.stage},
              {"arch", arch_name(c.arch)},
              {"classifier", c.classifier},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"sequence_length", c.sequence_length},
              {"learning_rate", c.learning_rate},
              {"dropout", c.dropout},
              {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.stage = j.at("stage").get<std::string>();
  c.arch = arch_from_name(j.at("arch").get<std::string>());
  c.classifier = j.at("classifier").get<std::string>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.sequence_length = j.at("sequence_length").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json model_to_json(const ModelConfig& m) {
  return json{{"arch", arch_name(m.arch)},
              {"input_dim", m.input_dim},
              {"embedding_dim", m.embedding_dim},
              {"num_blocks", m.num_blocks},
              {"slstm_positions", m.slstm_positions},
              {"heads", m.heads},
              {"ffn_dim", m.ffn_dim},
              {"dropout", m.dropout},
              {"head", m.head == HeadKind::Forecast ? "forecast" : "detect"},
              {"output_dim", m.output_dim}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.arch = arch_from_name(j.at("arch").get<std::string>());
  m.input_dim = j.at("input_dim").get<int>();
  m.embedding_dim = j.at("embedding_dim").get<int>();
  m.num_blocks = j.at("num_blocks").get<int>();
  m.slstm_positions = j.at("slstm_positions").get<std::vector<int>>();
  m.heads = j.at("heads").get<int>();
  m.ffn_dim = j.at("ffn_dim").get<int>();
  m.dropout = j.at("dropout").get<double>();
  m.head = j.at("head").get<std::string>() == "forecast" ? HeadKind::Forecast : HeadKind::Detect;
  m.output_dim = j.at("output_dim").get<int>();
  return m;
}

}  // namespace

TrainConfig default_pretrain_config(Arch arch) {
  TrainConfig c;
  c.stage = "pretrain";
  c.arch = arch;
  c.epochs = 20;
  c.batch_size = 32;
  c.sequence_length = 10;
  if (arch == Arch::XLstm) {
    c.learning_rate = 8.4e-4;
    c.dropout = 0.0;
  } else {
    c.learning_rate = 1.3e-4;
    c.dropout = 0.005;
  }
  return c;
}

TrainConfig default_finetune_config(Arch arch, const std::string& classifier) {
  TrainConfig c;
  c.stage = "finetune";
  c.arch = arch;
  c.classifier = classifier;
  c.sequence_length = 50;
  if (arch == Arch::XLstm) {
    if (classifier == "ALT") { c.epochs = 5;  c.batch_size = 50; c.learning_rate = 6e-5; }
    else if (classifier == "GS")  { c.epochs = 10; c.batch_size = 40; c.learning_rate = 2e-4; }
    else if (classifier == "HDG") { c.epochs = 10; c.batch_size = 50; c.learning_rate = 5e-5; }
    else if (classifier == "GN")  { c.epochs = 15; c.batch_size = 30; c.learning_rate = 1e-4; }
    else throw std::invalid_argument("unknown classifier: " + classifier);
    c.dropout = 0.0;
  } else {
    if (classifier == "ALT")      { c.epochs = 15; c.batch_size = 50; c.learning_rate = 8.5e-5; c.dropout = 0.14; }
    else if (classifier == "GS")  { c.epochs = 10; c.batch_size = 40; c.learning_rate = 1.5e-5; c.dropout = 0.056; }
    else if (classifier == "HDG") { c.epochs = 10; c.batch_size = 40; c.learning_rate = 4e-4;   c.dropout = 0.028; }
    else if (classifier == "GN")  { c.epochs = 15; c.batch_size = 30; c.learning_rate = 1e-4;   c.dropout = 0.24; }
    else throw std::invalid_argument("unknown classifier: " + classifier);
  }
  return c;
}

ModelConfig default_model_config(Arch arch, HeadKind head, double dropout) {
  ModelConfig m;
  m.arch = arch;
  m.head = head;
  m.dropout = dropout;
  if (arch == Arch::Transformer) m.slstm_positions.clear();
  return m;
}

ag::Tensor window_tensor(const NormalizationStats& stats, const FeatureWindow& w) {
  ag::RowMat normalized = apply_normalizer(stats, w.values);
  return ag::Tensor::from_vec({static_cast<int>(normalized.rows()), kFeatureCount},
                              Eigen::Map<const ag::Vec>(normalized.data(), normalized.size()));
}

ag::Tensor target_tensor(const NormalizationStats& stats, const FeatureWindow& w) {
  if (!w.has_target) throw SchemaError("window has no forecasting target");
  ag::RowMat t(1, kFeatureCount);
  t.row(0) = w.target;
  ag::RowMat normalized = apply_normalizer(stats, t);
  return ag::Tensor::from_vec({1, kFeatureCount},
                              Eigen::Map<const ag::Vec>(normalized.data(), normalized.size()));
}

namespace {

// Shared epoch loop: per-window forward/backward with loss scaled by 1/batch,
// one Adam update per batch. Returns per-epoch mean losses.
template <typename LossFn>
std::vector<double> run_epochs(SequenceModel& model, const TrainConfig& cfg, std::size_t n_windows,
                               LossFn&& window_loss) {
  Adam opt(cfg.learning_rate);
  Rng shuffle_rng = Rng(cfg.seed).fork(1);
  Rng drop_rng = Rng(cfg.seed).fork(2);
  std::vector<double> epoch_losses;
  std::vector<std::size_t> order(n_windows);
  for (std::size_t i = 0; i < n_windows; ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t done = 0;
    while (done < n_windows) {
      std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                n_windows - done);
      for (std::size_t b = 0; b < batch; ++b) {
        ag::Tape tape;
        ag::Tensor loss = window_loss(tape, order[done + b], drop_rng);
        loss_sum += loss.item();
        ag::Tensor scaled = ag::mul_scalar(tape, loss, 1.0 / static_cast<double>(batch));
        tape.backward(scaled);
      }
      opt.step(model.params());
      done += batch;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(n_windows));
  }
  return epoch_losses;
}

}  // namespace

Checkpoint pretrain(const TrainConfig& config, const std::vector<FeatureWindow>& windows,
                    const NormalizationStats& stats) {
  if (windows.empty()) throw SchemaError("pretrain: empty dataset");
  for (const auto& w : windows)
    if (!w.has_target) throw SchemaError("pretrain: window without forecasting target");

  SequenceModel model(default_model_config(config.arch, HeadKind::Forecast, config.dropout),
                      config.seed);
  std::vector<ag::Tensor> xs, ys;
  xs.reserve(windows.size());
  ys.reserve(windows.size());
  for (const auto& w : windows) {
    xs.push_back(window_tensor(stats, w));
    ys.push_back(target_tensor(stats, w));
  }
  auto losses = run_epochs(model, config, windows.size(),
                           [&](ag::Tape& tape, std::size_t i, Rng& drop_rng) {
                             ag::Tensor pred = model.forecast(tape, xs[i], true, &drop_rng);
                             return ag::mse_loss(tape, pred, ys[i]);
                           });
  Provenance prov{"pretrain", config.seed, config.epochs, losses};
  return checkpoint_from_model(model, config, stats, std::move(prov));
}

Checkpoint finetune(const TrainConfig& config, const Checkpoint& pretrained,
                    const std::vector<FeatureWindow>& labeled_windows) {
  if (config.arch != pretrained.model.arch)
    throw CheckpointError("finetune: architecture mismatch between config (" +
                          arch_name(config.arch) + ") and checkpoint (" +
                          arch_name(pretrained.model.arch) + ")");
  if (labeled_windows.empty()) throw SchemaError("finetune: empty dataset");

  auto model = model_from_checkpoint(pretrained);
  model->reset_head(HeadKind::Detect, config.seed ^ 0x9e3779b97f4a7c15ULL);
  model->set_dropout(config.dropout);

  std::vector<ag::Tensor> xs, ys;
  xs.reserve(labeled_windows.size());
  for (const auto& w : labeled_windows) {
    if (w.label != 0 && w.label != 1)
      throw SchemaError("finetune: window label must be binary, got " + std::to_string(w.label));
    xs.push_back(window_tensor(pretrained.stats, w));
    ys.push_back(ag::Tensor::scalar(static_cast<double>(w.label)));
  }
  auto losses = run_epochs(*model, config, labeled_windows.size(),
                           [&](ag::Tape& tape, std::size_t i, Rng& drop_rng) {
                             ag::Tensor prob = model->detect(tape, xs[i], true, &drop_rng);
                             return ag::bce_loss(tape, prob, ys[i]);
                           });
  Provenance prov{"finetune", config.seed, config.epochs, losses};
  return checkpoint_from_model(*model, config, pretrained.stats, std::move(prov));
}

Checkpoint checkpoint_from_model(const SequenceModel& model, const TrainConfig& config,
                                 const NormalizationStats& stats, Provenance prov) {
  Checkpoint ckpt;
  ckpt.model = model.config();
  ckpt.train = config;
  ckpt.stats = stats;
  ckpt.prov = std::move(prov);
  for (const auto& [name, t] : model.params().items())
    ckpt.params.push_back({name, t.shape(), t.values()});
  return ckpt;
}

std::unique_ptr<SequenceModel> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<SequenceModel>(ckpt.model, /*seed=*/0);
  auto& items = model->params().items();
  if (items.size() != ckpt.params.size())
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " parameters, architecture declares " + std::to_string(items.size()));
  for (auto& [name, t] : items) {
    auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                           [&](const ParamEntry& e) { return e.name == name; });
    if (it == ckpt.params.end())
      throw CheckpointError("checkpoint missing parameter '" + name + "'");
    if (it->shape != t.shape())
      throw CheckpointError("shape mismatch for parameter '" + name + "': checkpoint " +
                            ag::shape_str(it->shape) + " vs model " + ag::shape_str(t.shape()));
    t.values() = it->values;
  }
  return model;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["version"] = ckpt.version;
  j["architecture"] = model_to_json(ckpt.model);
  j["config"] = config_to_json(ckpt.train);
  j["normalization"] = json{{"mean", ckpt.stats.mean}, {"stddev", ckpt.stats.stddev}};
  j["provenance"] = json{{"stage", ckpt.prov.stage},
                         {"seed", ckpt.prov.seed},
                         {"epochs_completed", ckpt.prov.epochs_completed},
                         {"epoch_losses", ckpt.prov.epoch_losses}};
  json params = json::array();
  for (const auto& p : ckpt.params)
    params.push_back(
        json{{"name", p.name}, {"shape", p.shape}, {"values", encode_values(p.values)}});
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != 1)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.model = model_from_json(j.at("architecture"));
    ckpt.train = config_from_json(j.at("config"));
    if (!j.contains("normalization"))
      throw CheckpointError("checkpoint missing normalization stats");
    ckpt.stats.mean = j.at("normalization").at("mean").get<std::array<double, kFeatureCount>>();
    ckpt.stats.stddev =
        j.at("normalization").at("stddev").get<std::array<double, kFeatureCount>>();
    const auto& prov = j.at("provenance");
    ckpt.prov.stage = prov.at("stage").get<std::string>();
    ckpt.prov.seed = prov.at("seed").get<std::uint64_t>();
    ckpt.prov.epochs_completed = prov.at("epochs_completed").get<int>();
    ckpt.prov.epoch_losses = prov.at("epoch_losses").get<std::vector<double>>();
    for (const auto& p : j.at("params")) {
      ParamEntry e;
      e.name = p.at("name").get<std::string>();
      e.shape = p.at("shape").get<std::vector<int>>();
      Eigen::Index n = 1;
      for (int d : e.shape) n *= d;
      e.values = decode_values(p.at("values").get<std::string>(), n);
      ckpt.params.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint " + path + ": " + e.what());
  }
  // validate completeness and shapes against the declared architecture
  model_from_checkpoint(ckpt);
  return ckpt;
}

}  // namespace sentinel

// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sentinel/data.hpp"
#include "sentinel/model.hpp"

namespace sentinel {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::string stage;       // "pretrain" | "finetune"
  Arch arch = Arch::XLstm;
  std::string classifier;  // "", or "ALT" | "GS" | "HDG" | "GN"
  int epochs = 20;
  int batch_size = 32;
  int sequence_length = 10;
  double learning_rate = 8.4e-4;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

// Table defaults: pre-training uses epochs 20 / batch 32 / length 10 with
// per-architecture learning rates; fine-tuning uses per-classifier settings
// at sequence length 50.
TrainConfig default_pretrain_config(Arch arch);
TrainConfig default_finetune_config(Arch arch, const std::string& classifier);

struct Provenance {
  std::string stage;
  std::uint64_t seed = 0;
  int epochs_completed = 0;
  std::vector<double> epoch_losses;
};

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  ag::Vec values;
};

struct Checkpoint {
  int version = 1;
  ModelConfig model;
  TrainConfig train;
  NormalizationStats stats;
  Provenance prov;
  std::vector<ParamEntry> params;
};

ModelConfig default_model_config(Arch arch, HeadKind head, double dropout);

// Unsupervised forecasting pre-training (MSE) on benign windows with targets.
// Windows hold raw values; `stats` defines the shared normalization.
Checkpoint pretrain(const TrainConfig& config, const std::vector<FeatureWindow>& windows,
                    const NormalizationStats& stats);

// Supervised binary fine-tuning (BCE) from pre-trained weights; the forecast
// head is replaced by a fresh detection head and all weights stay trainable.
Checkpoint finetune(const TrainConfig& config, const Checkpoint& pretrained,
                    const std::vector<FeatureWindow>& labeled_windows);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model and loads every parameter tensor from the checkpoint.
std::unique_ptr<SequenceModel> model_from_checkpoint(const Checkpoint& ckpt);
Checkpoint checkpoint_from_model(const SequenceModel& model, const TrainConfig& config,
                                 const NormalizationStats& stats, Provenance prov);

// Normalized L x 6 input tensor for one window (and its forecast target).
ag::Tensor window_tensor(const NormalizationStats& stats, const FeatureWindow& w);
ag::Tensor target_tensor(const NormalizationStats& stats, const FeatureWindow& w);

}  // namespace sentinel

// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sentinel/params.hpp"
#include "sentinel/rng.hpp"
#include "sentinel/tensor.hpp"

namespace sentinel {

enum class Arch { XLstm, Transformer };
enum class HeadKind { Forecast, Detect };

struct ModelConfig {
  Arch arch = Arch::XLstm;
  int input_dim = 6;
  int embedding_dim = 64;
  int num_blocks = 4;  // xLSTM blocks, or encoder layers for the transformer
  std::vector<int> slstm_positions = {1};
  int heads = 1;
  int ffn_dim = 256;
  double dropout = 0.0;
  HeadKind head = HeadKind::Forecast;
  int output_dim = 6;
};

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& s);

// sLSTM scalar-memory state; every component is a 1xD row vector.
// m is the log-domain running max that keeps the exponential gates finite.
struct SLstmState {
  ag::Tensor c, n, h, m;
};

// mLSTM matrix-memory state: C is DxD, n is Dx1, m is a 1x1 scalar.
struct MLstmState {
  ag::Tensor C, n, m;
};

class SLstmCell {
 public:
  // Creates fresh parameters under `prefix.` in the store.
  SLstmCell(ParamStore& store, const std::string& prefix, int dim, Rng& init);
  SLstmState initial_state() const;
  std::pair<SLstmState, ag::Tensor> step(ag::Tape& tape, const SLstmState& s,
                                         const ag::Tensor& x) const;
  // Runs the whole recurrence over an L x D input as one fused tape node with
  // a hand-written backward; mathematically identical to iterating step().
  ag::Tensor sequence(ag::Tape& tape, const ag::Tensor& xs) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  ag::Tensor Wz_, Rz_, bz_, Wi_, Ri_, bi_, Wf_, Rf_, bf_, Wo_, Ro_, bo_;
};

class MLstmCell {
 public:
  MLstmCell(ParamStore& store, const std::string& prefix, int dim, Rng& init);
  MLstmState initial_state() const;
  // Gates and q/k/v are functions of x only; there is no hidden recurrence.
  std::pair<MLstmState, ag::Tensor> step(ag::Tape& tape, const MLstmState& s,
                                         const ag::Tensor& x) const;
  // Fused whole-sequence forward/backward, identical to iterating step().
  ag::Tensor sequence(ag::Tape& tape, const ag::Tensor& xs) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  ag::Tensor Wq_, bq_, Wk_, bk_, Wv_, bv_, Wo_, bo_, wi_, bi_, wf_, bf_;
};

// One model family with an input projection and a forecast or detection head.
class SequenceModel {
 public:
  SequenceModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // window: L x input_dim (normalized features). Returns L x embedding_dim.
  ag::Tensor core_output(ag::Tape& tape, const ag::Tensor& window, bool training = false,
                         Rng* drop_rng = nullptr) const;

  // Forecast head: predicted next feature row, 1 x output_dim.
  ag::Tensor forecast(ag::Tape& tape, const ag::Tensor& window, bool training = false,
                      Rng* drop_rng = nullptr) const;

  // Detection head: probability in (0,1) as a 1x1 tensor.
  ag::Tensor detect(ag::Tape& tape, const ag::Tensor& window, bool training = false,
                    Rng* drop_rng = nullptr) const;

  // Replaces the head with a freshly initialized one of the given kind.
  void reset_head(HeadKind kind, std::uint64_t seed);

  void set_dropout(double rate) { cfg_.dropout = rate; }

  // Test hook: when enabled, each forward stores per-layer attention matrices.
  void set_record_attention(bool b) { record_attention_ = b; }
  const std::vector<ag::Tensor>& last_attention() const { return last_attention_; }

 private:
  ag::Tensor xlstm_forward(ag::Tape& tape, const ag::Tensor& seq) const;
  ag::Tensor transformer_forward(ag::Tape& tape, const ag::Tensor& seq, bool training,
                                 Rng* drop_rng) const;
  ag::Tensor head_input(ag::Tape& tape, const ag::Tensor& window, bool training,
                        Rng* drop_rng) const;
  void build_head(HeadKind kind, Rng& rng);

  ModelConfig cfg_;
  ParamStore params_;
  std::vector<SLstmCell> slstm_cells_;   // indexed per block when used
  std::vector<MLstmCell> mlstm_cells_;
  std::vector<int> block_is_slstm_;      // 1 if block i is an sLSTM block
  bool record_attention_ = false;
  mutable std::vector<ag::Tensor> last_attention_;
};

// Sinusoidal position table, L x d, not a parameter.
ag::Tensor positional_encoding(int length, int dim);

ag::Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace sentinel

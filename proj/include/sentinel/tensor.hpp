// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentinel/rng.hpp"

namespace sentinel::ag {

using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// domain errors, overflow, non-finite values surfacing from a forward pass
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GradError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorData {
  std::vector<int> shape;
  Vec values;
  Vec grad;  // empty until the first backward accumulation
  bool requires_grad = false;
};

// Shared-ownership handle over a dense row-major 64-bit tensor.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, const std::vector<double>& vals,
                     bool requires_grad = false);
  static Tensor from_vec(std::vector<int> shape, Vec vals, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const { return d_->shape; }
  Eigen::Index size() const { return d_->values.size(); }
  int rows() const;
  int cols() const;
  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }

  Vec& values() { return d_->values; }
  const Vec& values() const { return d_->values; }
  // Gradient state lives in the shared payload, so these are const on the
  // handle: backward closures hold const copies.
  bool has_grad() const { return d_->grad.size() != 0; }
  Vec& grad() const;                      // allocates zeros on first use
  void zero_grad() const;                 // keeps allocation
  void accumulate(const Vec& g) const;    // += into grad, allocating if needed

  double item() const;
  double at(int r, int c) const { return d_->values[static_cast<Eigen::Index>(r) * cols() + c]; }

  MatMap mat();
  ConstMatMap mat() const;

  std::shared_ptr<TensorData> data_ptr() const { return d_; }
  bool same_as(const Tensor& o) const { return d_ == o.d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Ordered record of executed differentiable operations. Single-threaded
// during forward/backward; cleared between windows.
class Tape {
 public:
  void record(std::function<void()> backward_fn) { back_.push_back(std::move(backward_fn)); }
  // Seeds d(loss)/d(loss)=1 and runs recorded rules in reverse order.
  void backward(const Tensor& loss);
  void clear() { back_.clear(); }
  std::size_t size() const { return back_.size(); }

 private:
  std::vector<std::function<void()>> back_;
};

std::string shape_str(const std::vector<int>& s);
void check_finite(const Tensor& t, const char* op);

// --- differentiable operations ----------------------------------------------
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add_scalar(Tape& tape, const Tensor& a, double s);
Tensor mul_scalar(Tape& tape, const Tensor& a, double s);
// broadcast a 1xD row vector across every row of an LxD matrix
Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& row);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh_t(Tape& tape, const Tensor& a);
Tensor exp_t(Tape& tape, const Tensor& a);   // argument > 700 is an overflow error
Tensor log_t(Tape& tape, const Tensor& a);   // non-positive argument is a domain error
Tensor abs_t(Tape& tape, const Tensor& a);
Tensor max_scalar(Tape& tape, const Tensor& a, double s);
Tensor maximum(Tape& tape, const Tensor& a, const Tensor& b);
// multiply / divide a tensor by a 1x1 scalar tensor
Tensor scale(Tape& tape, const Tensor& a, const Tensor& s);
Tensor div_by(Tape& tape, const Tensor& a, const Tensor& s);
Tensor row(Tape& tape, const Tensor& a, int i);
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor mse_loss(Tape& tape, const Tensor& prediction, const Tensor& target);
Tensor bce_loss(Tape& tape, const Tensor& prediction, const Tensor& target);
Tensor dropout(Tape& tape, const Tensor& a, double rate, Rng& rng, bool training);
Tensor sum_all(Tape& tape, const Tensor& a);

}  // namespace sentinel::ag

// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sentinel::ag {

namespace {

Eigen::Index shape_size(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.values().allFinite())
    throw NumericError(std::string(op) + ": non-finite value in forward result");
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->values = Vec::Zero(shape_size(shape));
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  t.values().setConstant(v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, const std::vector<double>& vals, bool requires_grad) {
  if (shape_size(shape) != static_cast<Eigen::Index>(vals.size()))
    throw ShapeError("from: " + shape_str(shape) + " does not hold " +
                     std::to_string(vals.size()) + " values");
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::from_vec(std::vector<int> shape, Vec vals, bool requires_grad) {
  if (shape_size(shape) != vals.size())
    throw ShapeError("from_vec: " + shape_str(shape) + " does not hold " +
                     std::to_string(vals.size()) + " values");
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(vals);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1, 1}, v, requires_grad); }

int Tensor::rows() const {
  if (d_->shape.size() != 2) throw ShapeError("rows: tensor is not 2-D " + shape_str(d_->shape));
  return d_->shape[0];
}

int Tensor::cols() const {
  if (d_->shape.size() != 2) throw ShapeError("cols: tensor is not 2-D " + shape_str(d_->shape));
  return d_->shape[1];
}

Vec& Tensor::grad() const {
  if (d_->grad.size() == 0) d_->grad = Vec::Zero(d_->values.size());
  return d_->grad;
}

void Tensor::zero_grad() const {
  if (d_->grad.size() != 0) d_->grad.setZero();
}

void Tensor::accumulate(const Vec& g) const {
  if (g.size() != d_->values.size())
    throw GradError("gradient size mismatch: " + std::to_string(g.size()) + " vs " +
                    std::to_string(d_->values.size()));
  grad() += g;
}

double Tensor::item() const {
  if (d_->values.size() != 1) throw ShapeError("item: tensor is not scalar " + shape_str(d_->shape));
  return d_->values[0];
}

MatMap Tensor::mat() { return MatMap(d_->values.data(), rows(), cols()); }
ConstMatMap Tensor::mat() const { return ConstMatMap(d_->values.data(), rows(), cols()); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw GradError("backward: loss must be scalar");
  const_cast<Tensor&>(loss).grad()[0] += 1.0;
  for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
}

// --- op helpers --------------------------------------------------------------

namespace {

// Fetch the output gradient if any flowed; empty Vec means "skip".
const Vec* out_grad(const Tensor& out) {
  return out.has_grad() ? &const_cast<Tensor&>(out).grad() : nullptr;
}

Tensor unary_elementwise(Tape& tape, const Tensor& a, const char* name,
                         const std::function<double(double)>& f,
                         const std::function<double(double, double)>& dfdx_of_x_y) {
  Tensor out = Tensor::from_vec(a.shape(), a.values().unaryExpr(f), false);
  check_finite(out, name);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, dfdx_of_x_y]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      Vec da(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i)
        da[i] = (*g)[i] * dfdx_of_x_y(a.values()[i], out.values()[i]);
      a.accumulate(da);
    });
  }
  return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  out.mat().noalias() = a.mat() * b.mat();
  check_finite(out, "matmul");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      ConstMatMap gm(g->data(), out.rows(), out.cols());
      if (a.requires_grad()) {
        RowMat da = gm * b.mat().transpose();
        a.accumulate(Eigen::Map<const Vec>(da.data(), da.size()));
      }
      if (b.requires_grad()) {
        RowMat db = a.mat().transpose() * gm;
        b.accumulate(Eigen::Map<const Vec>(db.data(), db.size()));
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros({a.cols(), a.rows()});
  out.mat() = a.mat().transpose();
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      ConstMatMap gm(g->data(), out.rows(), out.cols());
      RowMat da = gm.transpose();
      a.accumulate(Eigen::Map<const Vec>(da.data(), da.size()));
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::from_vec(a.shape(), a.values() + b.values());
  check_finite(out, "add");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(*g);
      if (b.requires_grad()) b.accumulate(*g);
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::from_vec(a.shape(), a.values() - b.values());
  check_finite(out, "sub");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(*g);
      if (b.requires_grad()) b.accumulate(-*g);
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::from_vec(a.shape(), a.values().cwiseProduct(b.values()));
  check_finite(out, "mul");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(g->cwiseProduct(b.values()));
      if (b.requires_grad()) b.accumulate(g->cwiseProduct(a.values()));
    });
  }
  return out;
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = Tensor::from_vec(a.shape(), a.values().cwiseQuotient(b.values()));
  check_finite(out, "div");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(g->cwiseQuotient(b.values()));
      if (b.requires_grad())
        b.accumulate(-g->cwiseProduct(out.values()).cwiseQuotient(b.values()));
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
  Tensor out = Tensor::from_vec(a.shape(), Vec((a.values().array() + s).matrix()));
  check_finite(out, "add_scalar");
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      const Vec* g = out_grad(out);
      if (g) a.accumulate(*g);
    });
  }
  return out;
}

Tensor mul_scalar(Tape& tape, const Tensor& a, double s) {
  Tensor out = Tensor::from_vec(a.shape(), a.values() * s);
  check_finite(out, "mul_scalar");
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, s]() mutable {
      const Vec* g = out_grad(out);
      if (g) a.accumulate(*g * s);
    });
  }
  return out;
}

Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& rv) {
  if (rv.rows() != 1 || rv.cols() != a.cols())
    throw ShapeError("add_rowvec: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(rv.shape()));
  Tensor out = Tensor::zeros({a.rows(), a.cols()});
  out.mat() = a.mat().rowwise() + rv.mat().row(0);
  check_finite(out, "add_rowvec");
  if (any_grad(a, rv)) {
    out.set_requires_grad(true);
    tape.record([a, rv, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(*g);
      if (rv.requires_grad()) {
        ConstMatMap gm(g->data(), out.rows(), out.cols());
        Eigen::RowVectorXd col_sum = gm.colwise().sum();
        rv.accumulate(Eigen::Map<const Vec>(col_sum.data(), col_sum.size()));
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary_elementwise(
      tape, a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(Tape& tape, const Tensor& a) {
  return unary_elementwise(
      tape, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(Tape& tape, const Tensor& a) {
  if ((a.values().array() > 700.0).any())
    throw NumericError("exp: argument exceeds 700, overflow at exp_t");
  return unary_elementwise(
      tape, a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log_t(Tape& tape, const Tensor& a) {
  if ((a.values().array() <= 0.0).any())
    throw NumericError("log: non-positive argument at log_t");
  return unary_elementwise(
      tape, a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs_t(Tape& tape, const Tensor& a) {
  return unary_elementwise(
      tape, a, "abs", [](double x) { return std::abs(x); },
      [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

Tensor max_scalar(Tape& tape, const Tensor& a, double s) {
  return unary_elementwise(
      tape, a, "max_scalar", [s](double x) { return std::max(x, s); },
      [s](double x, double) { return x > s ? 1.0 : 0.0; });
}

Tensor maximum(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "maximum");
  Tensor out = Tensor::from_vec(a.shape(), a.values().cwiseMax(b.values()));
  check_finite(out, "maximum");
  if (any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      Vec da = Vec::Zero(a.size()), db = Vec::Zero(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a.values()[i] >= b.values()[i])
          da[i] = (*g)[i];
        else
          db[i] = (*g)[i];
      }
      if (a.requires_grad()) a.accumulate(da);
      if (b.requires_grad()) b.accumulate(db);
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale: scalar tensor expected, got " + shape_str(s.shape()));
  Tensor out = Tensor::from_vec(a.shape(), a.values() * s.item());
  check_finite(out, "scale");
  if (any_grad(a, s)) {
    out.set_requires_grad(true);
    tape.record([a, s, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      if (a.requires_grad()) a.accumulate(*g * s.item());
      if (s.requires_grad()) {
        Vec ds(1);
        ds[0] = g->dot(a.values());
        s.accumulate(ds);
      }
    });
  }
  return out;
}

Tensor div_by(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("div_by: scalar tensor expected, got " + shape_str(s.shape()));
  Tensor out = Tensor::from_vec(a.shape(), a.values() / s.item());
  check_finite(out, "div_by");
  if (any_grad(a, s)) {
    out.set_requires_grad(true);
    tape.record([a, s, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      double sv = s.item();
      if (a.requires_grad()) a.accumulate(*g / sv);
      if (s.requires_grad()) {
        Vec ds(1);
        ds[0] = -g->dot(out.values()) / sv;
        s.accumulate(ds);
      }
    });
  }
  return out;
}

Tensor row(Tape& tape, const Tensor& a, int i) {
  if (i < 0 || i >= a.rows())
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     shape_str(a.shape()));
  int n = a.cols();
  Tensor out = Tensor::zeros({1, n});
  out.mat().row(0) = a.mat().row(i);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, i, n]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      Vec da = Vec::Zero(a.size());
      Eigen::Map<RowMat>(da.data(), a.rows(), a.cols()).row(i) =
          Eigen::Map<const Eigen::RowVectorXd>(g->data(), n);
      a.accumulate(da);
    });
  }
  return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty row list");
  int n = rows[0].cols();
  int m = static_cast<int>(rows.size());
  Tensor out = Tensor::zeros({m, n});
  bool needs = false;
  for (int i = 0; i < m; ++i) {
    if (rows[i].rows() != 1 || rows[i].cols() != n)
      throw ShapeError("stack_rows: inconsistent row shape " + shape_str(rows[i].shape()));
    out.mat().row(i) = rows[i].mat().row(0);
    needs = needs || rows[i].requires_grad();
  }
  if (needs) {
    out.set_requires_grad(true);
    tape.record([rows, out, n]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].requires_grad()) continue;
        rows[i].accumulate(g->segment(static_cast<Eigen::Index>(i) * n, n));
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  check_finite(a, "softmax_rows input");
  Tensor out = Tensor::zeros({a.rows(), a.cols()});
  for (int i = 0; i < a.rows(); ++i) {
    Eigen::RowVectorXd r = a.mat().row(i);
    double mx = r.maxCoeff();
    Eigen::RowVectorXd e = (r.array() - mx).exp();
    out.mat().row(i) = e / e.sum();
  }
  check_finite(out, "softmax_rows");
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      ConstMatMap gm(g->data(), out.rows(), out.cols());
      RowMat da(a.rows(), a.cols());
      for (int i = 0; i < a.rows(); ++i) {
        Eigen::RowVectorXd p = out.mat().row(i);
        Eigen::RowVectorXd gp = gm.row(i).cwiseProduct(p);
        da.row(i) = gp.array() - p.array() * gp.sum();
      }
      a.accumulate(Eigen::Map<const Vec>(da.data(), da.size()));
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias) {
  constexpr double kEps = 1e-5;
  int d = a.cols();
  if (d < 2) throw ShapeError("layer_norm: last axis must be >= 2");
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm: gain/bias size mismatch with " + shape_str(a.shape()));
  Tensor xhat = Tensor::zeros({a.rows(), d});
  Vec inv_std(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    Eigen::RowVectorXd r = a.mat().row(i);
    double mean = r.mean();
    double var = (r.array() - mean).square().mean();  // population variance
    inv_std[i] = 1.0 / std::sqrt(var + kEps);
    xhat.mat().row(i) = (r.array() - mean) * inv_std[i];
  }
  Tensor out = Tensor::zeros({a.rows(), d});
  Eigen::Map<const Eigen::RowVectorXd> gv(gain.values().data(), d);
  Eigen::Map<const Eigen::RowVectorXd> bv(bias.values().data(), d);
  out.mat() = (xhat.mat().array().rowwise() * gv.array()).rowwise() + bv.array();
  check_finite(out, "layer_norm");
  if (a.requires_grad() || gain.requires_grad() || bias.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, gain, bias, xhat, inv_std, out, d]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      ConstMatMap gm(g->data(), out.rows(), out.cols());
      Eigen::Map<const Eigen::RowVectorXd> gv(gain.values().data(), d);
      if (bias.requires_grad()) {
        Eigen::RowVectorXd db = gm.colwise().sum();
        bias.accumulate(Eigen::Map<const Vec>(db.data(), d));
      }
      if (gain.requires_grad()) {
        Eigen::RowVectorXd dg = gm.cwiseProduct(xhat.mat()).colwise().sum();
        gain.accumulate(Eigen::Map<const Vec>(dg.data(), d));
      }
      if (a.requires_grad()) {
        RowMat da(a.rows(), d);
        for (int i = 0; i < a.rows(); ++i) {
          Eigen::RowVectorXd dxhat = gm.row(i).cwiseProduct(gv);
          Eigen::RowVectorXd xh = xhat.mat().row(i);
          double m1 = dxhat.mean();
          double m2 = dxhat.cwiseProduct(xh).mean();
          da.row(i) = ((dxhat.array() - m1) - xh.array() * m2) * inv_std[i];
        }
        a.accumulate(Eigen::Map<const Vec>(da.data(), da.size()));
      }
    });
  }
  return out;
}

Tensor mse_loss(Tape& tape, const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse_loss");
  Vec diff = prediction.values() - target.values();
  double n = static_cast<double>(diff.size());
  Tensor out = Tensor::scalar(diff.squaredNorm() / n);
  check_finite(out, "mse_loss");
  if (prediction.requires_grad() || target.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([prediction, target, out, diff, n]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      Vec d = diff * (2.0 / n) * (*g)[0];
      if (prediction.requires_grad()) prediction.accumulate(d);
      if (target.requires_grad()) target.accumulate(-d);
    });
  }
  return out;
}

Tensor bce_loss(Tape& tape, const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "bce_loss");
  constexpr double kClamp = 1e-7;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    double y = target.values()[i];
    if (y != 0.0 && y != 1.0)
      throw NumericError("bce_loss: target must be 0 or 1, got " + std::to_string(y));
  }
  double n = static_cast<double>(prediction.size());
  Vec p = prediction.values().cwiseMax(kClamp).cwiseMin(1.0 - kClamp);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double y = target.values()[i];
    acc += y * std::log(p[i]) + (1.0 - y) * std::log(1.0 - p[i]);
  }
  Tensor out = Tensor::scalar(-acc / n);
  check_finite(out, "bce_loss");
  if (prediction.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([prediction, target, out, p, n]() mutable {
      const Vec* g = out_grad(out);
      if (!g) return;
      Vec d(p.size());
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        double y = target.values()[i];
        double raw = prediction.values()[i];
        // clamp is flat outside its range
        if (raw < 1e-7 || raw > 1.0 - 1e-7) {
          d[i] = 0.0;
        } else {
          d[i] = ((1.0 - y) / (1.0 - p[i]) - y / p[i]) * (*g)[0] / n;
        }
      }
      prediction.accumulate(d);
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  double keep = 1.0 - rate;
  Vec mask(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out = Tensor::from_vec(a.shape(), a.values().cwiseProduct(mask));
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, mask]() mutable {
      const Vec* g = out_grad(out);
      if (g) a.accumulate(g->cwiseProduct(mask));
    });
  }
  return out;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::scalar(a.values().sum());
  check_finite(out, "sum_all");
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      const Vec* g = out_grad(out);
      if (g) a.accumulate(Vec::Constant(a.size(), (*g)[0]));
    });
  }
  return out;
}

}  // namespace sentinel::ag

#pragma once

// Parameter containers, affine/MLP/LSTM building blocks, Adam, and a
// central-difference gradient checker.

#include "cmta/rng.hpp"
#include "cmta/tape.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cmta::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  // Adam state
  Mat m;
  Mat v;

  Param() = default;
  Param(std::string n, Eigen::Index r, Eigen::Index c)
      : name(std::move(n)),
        value(Mat::Zero(r, c)),
        grad(Mat::Zero(r, c)),
        m(Mat::Zero(r, c)),
        v(Mat::Zero(r, c)) {}

  void zero_grad() { grad.setZero(); }

  Var use(Tape& t) { return t.leaf(value, &grad); }
};

inline void init_uniform(Param& p, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = rng.uniform(-bound, bound);
}

struct Linear {
  Param W;  // out x in
  Param b;  // out x 1
  Eigen::Index in = 0, out = 0;

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in_dim, Eigen::Index out_dim, Rng& rng)
      : W(name + ".W", out_dim, in_dim), b(name + ".b", out_dim, 1), in(in_dim), out(out_dim) {
    init_uniform(W, in_dim, rng);
    init_uniform(b, in_dim, rng);
  }

  Var forward(Tape& t, Var x) {
    if (x.rows() != in)
      throw std::invalid_argument("layer " + W.name + ": input dim " +
                                  std::to_string(x.rows()) + ", expected " +
                                  std::to_string(in));
    return ad::add_colwise(ad::matmul(W.use(t), x), b.use(t));
  }

  // Forward on raw values, no tape.
  Mat eval(const Mat& x) const {
    if (x.rows() != in)
      throw std::invalid_argument("layer " + W.name + ": input dim mismatch");
    return (W.value * x).colwise() + Eigen::VectorXd(b.value.col(0));
  }

  void params(std::vector<Param*>& out_list) {
    out_list.push_back(&W);
    out_list.push_back(&b);
  }
};

// Affine stack with ReLU between hidden layers, linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(const std::string& name, Eigen::Index in_dim, const std::vector<Eigen::Index>& hidden,
      Eigen::Index out_dim, Rng& rng) {
    Eigen::Index d = in_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers.emplace_back(name + ".fc" + std::to_string(i), d, hidden[i], rng);
      d = hidden[i];
    }
    layers.emplace_back(name + ".fc" + std::to_string(hidden.size()), d, out_dim, rng);
  }

  Var forward(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(t, x);
      if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
  }

  Mat eval(const Mat& x) const {
    Mat h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].eval(h);
      if (i + 1 < layers.size()) h = h.cwiseMax(0.0);
    }
    return h;
  }

  Eigen::Index in_dim() const { return layers.front().in; }
  Eigen::Index out_dim() const { return layers.back().out; }

  void params(std::vector<Param*>& out_list) {
    for (auto& l : layers) l.params(out_list);
  }
};

struct LstmState {
  Eigen::VectorXd hidden;
  Eigen::VectorXd cell;

  static LstmState zero(Eigen::Index h) {
    return {Eigen::VectorXd::Zero(h), Eigen::VectorXd::Zero(h)};
  }
};

// Standard LSTM cell. Gate block rows are ordered [input; forget; candidate;
// output].
struct LstmCell {
  Param Wx;  // 4H x X
  Param Wh;  // 4H x H
  Param b;   // 4H x 1
  Eigen::Index input = 0, hidden = 0;

  LstmCell() = default;
  LstmCell(const std::string& name, Eigen::Index in_dim, Eigen::Index hidden_dim, Rng& rng)
      : Wx(name + ".Wx", 4 * hidden_dim, in_dim),
        Wh(name + ".Wh", 4 * hidden_dim, hidden_dim),
        b(name + ".b", 4 * hidden_dim, 1),
        input(in_dim),
        hidden(hidden_dim) {
    init_uniform(Wx, in_dim + hidden_dim, rng);
    init_uniform(Wh, in_dim + hidden_dim, rng);
    init_uniform(b, in_dim + hidden_dim, rng);
  }

  // x: X x B, h/c: H x B. Returns (h', c').
  std::pair<Var, Var> step(Tape& t, Var x, Var h, Var c) {
    if (x.rows() != input)
      throw std::invalid_argument("lstm " + Wx.name + ": input dim mismatch");
    if (h.rows() != hidden || c.rows() != hidden)
      throw std::invalid_argument("lstm " + Wx.name + ": state dim mismatch");
    Var pre = ad::add_colwise(ad::matmul(Wx.use(t), x) + ad::matmul(Wh.use(t), h), b.use(t));
    const Eigen::Index H = hidden;
    Var gi = ad::sigmoid(ad::rows(pre, 0, H));
    Var gf = ad::sigmoid(ad::rows(pre, H, H));
    Var gc = ad::tanh_(ad::rows(pre, 2 * H, H));
    Var go = ad::sigmoid(ad::rows(pre, 3 * H, H));
    Var c_new = gf * c + gi * gc;
    Var h_new = go * ad::tanh_(c_new);
    return {h_new, c_new};
  }

  // Value-only step for action selection.
  LstmState eval(const Eigen::VectorXd& x, const LstmState& s) const {
    Eigen::VectorXd pre = Wx.value * x + Wh.value * s.hidden + b.value.col(0);
    const Eigen::Index H = hidden;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    LstmState out = LstmState::zero(H);
    for (Eigen::Index i = 0; i < H; ++i) {
      const double gi = sig(pre(i));
      const double gf = sig(pre(H + i));
      const double gc = std::tanh(pre(2 * H + i));
      const double go = sig(pre(3 * H + i));
      out.cell(i) = gf * s.cell(i) + gi * gc;
      out.hidden(i) = go * std::tanh(out.cell(i));
    }
    return out;
  }

  void params(std::vector<Param*>& out_list) {
    out_list.push_back(&Wx);
    out_list.push_back(&Wh);
    out_list.push_back(&b);
  }
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (Param* p : params) {
      p->m = beta1_ * p->m + (1.0 - beta1_) * p->grad;
      p->v = beta2_ * p->v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
      Mat mhat = p->m / bc1;
      Mat vhat = p->v / bc2;
      p->value -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// Max over all parameter entries of |analytic - central difference| /
// max(1, |central difference|). `loss` must be a pure function of the
// current parameter values; when `with_grad` it must also accumulate
// gradients into the params (which are zeroed here first).
inline double grad_check(const std::vector<Param*>& params,
                         const std::function<double(bool with_grad)>& loss,
                         double step = 1e-5) {
  for (Param* p : params) p->zero_grad();
  (void)loss(true);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param* p = params[k];
    for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
      for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
        const double orig = p->value(i, j);
        p->value(i, j) = orig + step;
        const double up = loss(false);
        p->value(i, j) = orig - step;
        const double dn = loss(false);
        p->value(i, j) = orig;
        if (!std::isfinite(up) || !std::isfinite(dn))
          throw std::runtime_error("grad_check: non-finite loss at perturbed point");
        const double fd = (up - dn) / (2.0 * step);
        const double rel = std::abs(analytic[k](i, j) - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

}  // namespace cmta::nn

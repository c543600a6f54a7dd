#pragma once

// Reverse-mode automatic differentiation over dense matrices. A Tape owns a
// DAG of matrix-valued nodes; backward() propagates adjoints from a scalar
// root and accumulates into leaf gradient buffers. Columns are batch
// elements throughout.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cmta::ad {

using Mat = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& val() const;
  double scalar() const { return val()(0, 0); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

namespace detail {
struct Node {
  Mat val;
  Mat adj;                 // sized lazily during backward
  Mat* grad_sink = nullptr;  // leaf: external gradient accumulator
  std::function<void(Tape&, const Mat&)> back;  // pull adjoint into inputs
};
}  // namespace detail

class Tape {
 public:
  Var constant(Mat v) { return push(std::move(v), nullptr, {}); }

  // Leaf whose adjoint is added into *grad on backward(). grad may be null
  // for inputs that do not need gradients.
  Var leaf(const Mat& value, Mat* grad) {
    return push(value, grad, {});
  }

  Var make(Mat v, std::function<void(Tape&, const Mat&)> back) {
    return push(std::move(v), nullptr, std::move(back));
  }

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

  void accumulate(int id, const Mat& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adj.size() == 0) n.adj = Mat::Zero(n.val.rows(), n.val.cols());
    n.adj += g;
  }

  // Backward pass from a 1x1 root. Node adjoints are reset first so several
  // roots on one tape can be differentiated independently; leaf sinks are
  // accumulated into (callers zero them as needed).
  void backward(Var root) {
    if (root.tape != this) throw std::logic_error("backward: foreign var");
    const auto& rv = nodes_[static_cast<std::size_t>(root.id)].val;
    if (rv.rows() != 1 || rv.cols() != 1)
      throw std::logic_error("backward: root must be scalar");
    for (auto& n : nodes_) n.adj.resize(0, 0);
    accumulate(root.id, Mat::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.adj.size() == 0) continue;
      if (n.grad_sink) *n.grad_sink += n.adj;
      if (n.back) n.back(*this, n.adj);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Var push(Mat v, Mat* grad, std::function<void(Tape&, const Mat&)> back) {
    detail::Node n;
    n.val = std::move(v);
    n.grad_sink = grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<detail::Node> nodes_;
};

inline const Mat& Var::val() const { return tape->value(id); }

namespace detail {
inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("vars from different tapes");
}
}  // namespace detail

// ---- elementwise arithmetic ----

inline Var operator+(Var a, Var b) {
  detail::same_tape(a, b);
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.make(a.val() + b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

inline Var operator-(Var a, Var b) {
  detail::same_tape(a, b);
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.make(a.val() - b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

inline Var operator*(Var a, Var b) {  // Hadamard
  detail::same_tape(a, b);
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.make(a.val().cwiseProduct(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.make(a.val() * c, [ia, c](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g * c);
  });
}

inline Var operator-(Var a) { return scale(a, -1.0); }

inline Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  int ia = a.id;
  return t.make(a.val().array() + c, [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
  });
}

// ---- linear algebra ----

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.val().cols() != b.val().rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.make(a.val() * b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g * tp.value(ib).transpose());
    tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

// x: n x B, b: n x 1 broadcast over columns.
inline Var add_colwise(Var x, Var b) {
  detail::same_tape(x, b);
  if (x.val().rows() != b.val().rows() || b.val().cols() != 1)
    throw std::invalid_argument("add_colwise: bias shape mismatch");
  Tape& t = *x.tape;
  int ix = x.id, ib = b.id;
  return t.make(x.val().colwise() + Eigen::VectorXd(b.val().col(0)),
                [ix, ib](Tape& tp, const Mat& g) {
                  tp.accumulate(ix, g);
                  tp.accumulate(ib, g.rowwise().sum());
                });
}

inline Var vcat(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.val().cols() != b.val().cols())
    throw std::invalid_argument("vcat: column count mismatch");
  Tape& t = *a.tape;
  Mat v(a.val().rows() + b.val().rows(), a.val().cols());
  v << a.val(), b.val();
  int ia = a.id, ib = b.id;
  const Eigen::Index ra = a.val().rows(), rb = b.val().rows();
  return t.make(std::move(v), [ia, ib, ra, rb](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.topRows(ra));
    tp.accumulate(ib, g.bottomRows(rb));
  });
}

inline Var rows(Var x, Eigen::Index start, Eigen::Index n) {
  Tape& t = *x.tape;
  int ix = x.id;
  const Eigen::Index total = x.val().rows();
  return t.make(x.val().middleRows(start, n),
                [ix, start, n, total](Tape& tp, const Mat& g) {
                  Mat full = Mat::Zero(total, g.cols());
                  full.middleRows(start, n) = g;
                  tp.accumulate(ix, full);
                });
}

inline Var row(Var x, Eigen::Index r) { return rows(x, r, 1); }

// x: n x 1 repeated into n x cols.
inline Var repeat_col(Var x, Eigen::Index cols) {
  if (x.val().cols() != 1) throw std::invalid_argument("repeat_col: need column vector");
  Tape& t = *x.tape;
  int ix = x.id;
  return t.make(x.val().replicate(1, cols), [ix](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.rowwise().sum());
  });
}

// x: n x B scaled per column by r: 1 x B.
inline Var mul_rowbcast(Var x, Var r) {
  detail::same_tape(x, r);
  if (r.val().rows() != 1 || r.val().cols() != x.val().cols())
    throw std::invalid_argument("mul_rowbcast: shape mismatch");
  Tape& t = *x.tape;
  int ix = x.id, ir = r.id;
  Mat v = x.val().array().rowwise() * r.val().row(0).array();
  return t.make(std::move(v), [ix, ir](Tape& tp, const Mat& g) {
    const Mat& xv = tp.value(ix);
    const Mat& rv = tp.value(ir);
    tp.accumulate(ix, g.array().rowwise() * rv.row(0).array());
    tp.accumulate(ir, g.cwiseProduct(xv).colwise().sum());
  });
}

// 1 x B of per-column dot products of two n x B matrices.
inline Var colwise_dot(Var a, Var b) {
  detail::same_tape(a, b);
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
    throw std::invalid_argument("colwise_dot: shape mismatch");
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  Mat v = a.val().cwiseProduct(b.val()).colwise().sum();
  return t.make(std::move(v), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, tp.value(ib).array().rowwise() * g.row(0).array());
    tp.accumulate(ib, tp.value(ia).array().rowwise() * g.row(0).array());
  });
}

inline Var colwise_sum(Var x) {  // 1 x B
  Tape& t = *x.tape;
  int ix = x.id;
  const Eigen::Index r = x.val().rows();
  return t.make(x.val().colwise().sum(), [ix, r](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.replicate(r, 1));
  });
}

inline Var sum(Var x) {  // 1 x 1
  Tape& t = *x.tape;
  int ix = x.id;
  Mat v(1, 1);
  v(0, 0) = x.val().sum();
  return t.make(std::move(v), [ix](Tape& tp, const Mat& g) {
    const Mat& xv = tp.value(ix);
    tp.accumulate(ix, Mat::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

inline Var mean_all(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.val().size()));
}

// ---- nonlinearities ----

inline Var relu(Var x) {
  Tape& t = *x.tape;
  int ix = x.id;
  return t.make(x.val().cwiseMax(0.0), [ix](Tape& tp, const Mat& g) {
    tp.accumulate(ix, (tp.value(ix).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

inline Var tanh_(Var x) {
  Tape& t = *x.tape;
  Mat y = x.val().array().tanh();
  int ix = x.id;
  Mat deriv = 1.0 - y.array().square();
  return t.make(std::move(y), [ix, deriv](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.cwiseProduct(deriv));
  });
}

inline Var sigmoid(Var x) {
  Tape& t = *x.tape;
  Mat y = (0.5 * (x.val().array() * 0.5).tanh() + 0.5);
  int ix = x.id;
  Mat deriv = y.array() * (1.0 - y.array());
  return t.make(std::move(y), [ix, deriv](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.cwiseProduct(deriv));
  });
}

inline Var exp_(Var x) {
  Tape& t = *x.tape;
  Mat y = x.val().array().exp();
  int ix = x.id;
  Mat yc = y;
  return t.make(std::move(y), [ix, yc](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.cwiseProduct(yc));
  });
}

inline Var log_(Var x) {
  Tape& t = *x.tape;
  int ix = x.id;
  return t.make(x.val().array().log(), [ix](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.cwiseQuotient(tp.value(ix)));
  });
}

inline Var square(Var x) {
  Tape& t = *x.tape;
  int ix = x.id;
  return t.make(x.val().array().square(), [ix](Tape& tp, const Mat& g) {
    tp.accumulate(ix, 2.0 * g.cwiseProduct(tp.value(ix)));
  });
}

// log(1 + exp(x)), overflow-safe.
inline Var softplus(Var x) {
  Tape& t = *x.tape;
  Mat y = x.val().unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  int ix = x.id;
  Mat deriv = x.val().unaryExpr([](double v) {
    return v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return t.make(std::move(y), [ix, deriv](Tape& tp, const Mat& g) {
    tp.accumulate(ix, g.cwiseProduct(deriv));
  });
}

// Hard clamp; gradient is zero outside [lo, hi].
inline Var clamp(Var x, double lo, double hi) {
  Tape& t = *x.tape;
  int ix = x.id;
  return t.make(x.val().cwiseMax(lo).cwiseMin(hi), [ix, lo, hi](Tape& tp, const Mat& g) {
    const Mat& xv = tp.value(ix);
    Mat mask = ((xv.array() >= lo) && (xv.array() <= hi)).cast<double>();
    tp.accumulate(ix, g.cwiseProduct(mask));
  });
}

inline Var cwise_min(Var a, Var b) {
  detail::same_tape(a, b);
  Tape& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.make(a.val().cwiseMin(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    Mat take_a = (tp.value(ia).array() <= tp.value(ib).array()).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(take_a));
    tp.accumulate(ib, g.cwiseProduct((1.0 - take_a.array()).matrix()));
  });
}

// ---- normalizers ----

inline Var softmax_colwise(Var x) {
  Tape& t = *x.tape;
  Mat shifted = x.val().rowwise() - x.val().colwise().maxCoeff();
  Mat e = shifted.array().exp();
  Mat y = e.array().rowwise() / e.colwise().sum().array();
  int ix = x.id;
  Mat yc = y;
  return t.make(std::move(y), [ix, yc](Tape& tp, const Mat& g) {
    Mat gy = g.cwiseProduct(yc);
    Mat corr = yc.array().rowwise() * gy.colwise().sum().row(0).array();
    tp.accumulate(ix, gy - corr);
  });
}

inline Var logsumexp_colwise(Var x) {  // 1 x B
  Tape& t = *x.tape;
  Eigen::RowVectorXd m = x.val().colwise().maxCoeff();
  Mat e = (x.val().rowwise() - m).array().exp();
  Eigen::RowVectorXd s = e.colwise().sum();
  Mat v = (s.array().log() + m.array()).matrix();
  Mat soft = e.array().rowwise() / s.array();
  int ix = x.id;
  return t.make(std::move(v), [ix, soft](Tape& tp, const Mat& g) {
    tp.accumulate(ix, soft.array().rowwise() * g.row(0).array());
  });
}

}  // namespace cmta::ad

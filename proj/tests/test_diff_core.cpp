#include "cmta/distributions.hpp"
#include "cmta/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cmta;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

nn::Mlp make_mlp(Eigen::Index in, std::vector<Eigen::Index> hidden, Eigen::Index out,
                 std::uint64_t seed = 1) {
  Rng rng(seed);
  return nn::Mlp("m", in, hidden, out, rng);
}

}  // namespace

TEST(MlpForward, IdentityLayer) {
  nn::Mlp m = make_mlp(2, {}, 2);
  m.layers[0].W.value = Mat::Identity(2, 2);
  m.layers[0].b.value.setZero();
  Eigen::VectorXd in(2);
  in << 1, 2;
  Eigen::VectorXd out = m.eval(in);
  EXPECT_DOUBLE_EQ(out(0), 1.0);
  EXPECT_DOUBLE_EQ(out(1), 2.0);
}

TEST(MlpForward, ZeroWeightsReturnBias) {
  nn::Mlp m = make_mlp(3, {}, 1);
  m.layers[0].W.value.setZero();
  m.layers[0].b.value(0, 0) = 3.0;
  Eigen::VectorXd in(3);
  in << -7, 0.5, 2;
  EXPECT_DOUBLE_EQ(m.eval(in)(0), 3.0);
}

TEST(MlpForward, TwoLayerReluComposition) {
  // W1 = [[1,0],[0,-1]], b = 0, ReLU, W2 = [[1,1]]: input [2,5] -> [2,-5]
  // -> relu [2,0] -> 2.
  nn::Mlp m = make_mlp(2, {2}, 1);
  m.layers[0].W.value << 1, 0, 0, -1;
  m.layers[0].b.value.setZero();
  m.layers[1].W.value << 1, 1;
  m.layers[1].b.value.setZero();
  Eigen::VectorXd in(2);
  in << 2, 5;
  EXPECT_DOUBLE_EQ(m.eval(in)(0), 2.0);

  Tape t;
  Var out = m.forward(t, t.constant(in));
  EXPECT_DOUBLE_EQ(out.scalar(), 2.0);
}

TEST(MlpForward, DimensionMismatchNamesLayer) {
  nn::Mlp m = make_mlp(2, {}, 1);
  Eigen::VectorXd in(3);
  in.setZero();
  try {
    m.eval(in);
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("m.fc0"), std::string::npos);
  }
}

TEST(MlpForward, TapeAndEvalAgree) {
  nn::Mlp m = make_mlp(4, {8, 8}, 3, 99);
  Rng rng(7);
  Mat x(4, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 4; ++i) x(i, j) = rng.uniform(-1, 1);
  Tape t;
  Var out = m.forward(t, t.constant(x));
  EXPECT_LT((out.val() - m.eval(x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MlpForward, PureNoParamMutation) {
  nn::Mlp m = make_mlp(3, {4}, 2, 5);
  std::vector<nn::Param*> ps;
  m.params(ps);
  std::vector<Mat> before;
  for (auto* p : ps) before.push_back(p->value);
  Eigen::VectorXd in(3);
  in << 0.1, -0.2, 0.3;
  (void)m.eval(in);
  Tape t;
  (void)m.forward(t, t.constant(in));
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_TRUE(ps[i]->value == before[i]);
}

TEST(LstmStep, AllZeroParamsGiveZeroState) {
  Rng rng(0);
  nn::LstmCell cell("lstm", 3, 4, rng);
  cell.Wx.value.setZero();
  cell.Wh.value.setZero();
  cell.b.value.setZero();
  Eigen::VectorXd x(3);
  x << 5, -2, 1;
  nn::LstmState s = cell.eval(x, nn::LstmState::zero(4));
  EXPECT_LT(s.hidden.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(s.cell.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LstmStep, BiasOnlyMatchesHandComputedGates) {
  Rng rng(0);
  nn::LstmCell cell("lstm", 2, 1, rng);
  cell.Wx.value.setZero();
  cell.Wh.value.setZero();
  cell.b.value << 0.5, -1.0, 0.25, 1.0;  // [input; forget; candidate; output]
  nn::LstmState s = cell.eval(Eigen::VectorXd::Zero(2), nn::LstmState::zero(1));
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double c = sig(0.5) * std::tanh(0.25);
  const double h = sig(1.0) * std::tanh(c);
  EXPECT_NEAR(s.cell(0), c, 1e-15);
  EXPECT_NEAR(s.hidden(0), h, 1e-15);
}

TEST(LstmStep, DeterministicAndHiddenBounded) {
  Rng rng(11);
  nn::LstmCell cell("lstm", 3, 5, rng);
  Eigen::VectorXd x(3);
  x << 0.3, -0.7, 2.0;
  nn::LstmState s0 = nn::LstmState::zero(5);
  s0.hidden.setConstant(0.4);
  s0.cell.setConstant(-1.2);
  nn::LstmState a = cell.eval(x, s0);
  nn::LstmState b = cell.eval(x, s0);
  EXPECT_TRUE(a.hidden == b.hidden);
  EXPECT_TRUE(a.cell == b.cell);
  EXPECT_LT(a.hidden.cwiseAbs().maxCoeff(), 1.0);
}

TEST(LstmStep, TapeMatchesEval) {
  Rng rng(3);
  nn::LstmCell cell("lstm", 2, 3, rng);
  Eigen::VectorXd x(2);
  x << 0.5, -0.25;
  nn::LstmState s0 = nn::LstmState::zero(3);
  s0.hidden << 0.1, -0.2, 0.3;
  s0.cell << 0.4, 0.0, -0.6;
  Tape t;
  auto [h, c] = cell.step(t, t.constant(x), t.constant(s0.hidden), t.constant(s0.cell));
  nn::LstmState ref = cell.eval(x, s0);
  EXPECT_LT((h.val().col(0) - ref.hidden).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((c.val().col(0) - ref.cell).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Softmax, UniformOnZeroLogits) {
  Tape t;
  Var y = ad::softmax_colwise(t.constant(Mat::Zero(3, 1)));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y.val()(i, 0), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Mat logits(4, 1), shifted(4, 1);
    const double c = rng.uniform(-100, 100);
    for (int i = 0; i < 4; ++i) {
      logits(i, 0) = rng.uniform(-10, 10);
      shifted(i, 0) = logits(i, 0) + c;
    }
    Tape t;
    Var a = ad::softmax_colwise(t.constant(logits));
    Var b = ad::softmax_colwise(t.constant(shifted));
    EXPECT_LT((a.val() - b.val()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Softmax, ClosedFormLogOdds) {
  Mat logits(2, 1);
  logits << std::log(1.0), std::log(3.0);
  Tape t;
  Var y = ad::softmax_colwise(t.constant(logits));
  EXPECT_NEAR(y.val()(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(y.val()(1, 0), 0.75, 1e-12);
}

TEST(Softmax, SimplexUnderLargeMagnitudes) {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    Mat logits(6, 1);
    for (int i = 0; i < 6; ++i) logits(i, 0) = rng.uniform(-1e4, 1e4);
    Tape t;
    Var y = ad::softmax_colwise(t.constant(logits));
    double sum = 0;
    for (int i = 0; i < 6; ++i) {
      EXPECT_GE(y.val()(i, 0), 0.0);
      sum += y.val()(i, 0);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(SquashedGaussian, DeterministicLimitAtTinyStd) {
  Tape t;
  Mat mean = Mat::Zero(2, 1);
  Mat log_std = Mat::Constant(2, 1, -40.0);  // clamps to -20
  Mat noise(2, 1);
  noise << 1.7, -0.3;
  auto s = dist::squashed_gaussian_sample(t, t.constant(mean), t.constant(log_std),
                                          t.constant(noise));
  EXPECT_LT(s.action.val().cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SquashedGaussian, LogProbAtZeroIsStandardNormalDensity) {
  // std = 1, noise = 0: tanh correction vanishes at 0, so log_prob is the
  // standard normal log density, -d/2 * log(2*pi).
  Tape t;
  const int d = 3;
  auto s = dist::squashed_gaussian_sample(t, t.constant(Mat::Zero(d, 1)),
                                          t.constant(Mat::Zero(d, 1)),
                                          t.constant(Mat::Zero(d, 1)));
  EXPECT_NEAR(s.log_prob.scalar(), -0.5 * d * std::log(2.0 * M_PI), 1e-12);
}

TEST(SquashedGaussian, DeterministicGivenInputs) {
  Rng rng(9);
  Mat mean(2, 1), log_std(2, 1), noise(2, 1);
  for (int i = 0; i < 2; ++i) {
    mean(i, 0) = rng.uniform(-1, 1);
    log_std(i, 0) = rng.uniform(-2, 0.5);
    noise(i, 0) = rng.normal();
  }
  Tape t1, t2;
  auto a = dist::squashed_gaussian_sample(t1, t1.constant(mean), t1.constant(log_std),
                                          t1.constant(noise));
  auto b = dist::squashed_gaussian_sample(t2, t2.constant(mean), t2.constant(log_std),
                                          t2.constant(noise));
  EXPECT_TRUE(a.action.val() == b.action.val());
  EXPECT_TRUE(a.log_prob.val() == b.log_prob.val());
  EXPECT_LT(a.action.val().cwiseAbs().maxCoeff(), 1.0);
}

TEST(GradCheck, QuadraticLoss) {
  Rng rng(13);
  nn::Param p("p", 3, 2);
  nn::init_uniform(p, 3, rng);
  auto loss = [&](bool with_grad) {
    if (with_grad) {
      Tape t;
      Var v = p.use(t);
      Var l = ad::scale(ad::sum(ad::square(v)), 0.5);
      t.backward(l);
      return l.scalar();
    }
    return 0.5 * p.value.squaredNorm();
  };
  EXPECT_LT(nn::grad_check({&p}, loss), 1e-8);
  // Analytic gradient of 1/2 ||p||^2 is p itself.
  p.zero_grad();
  (void)loss(true);
  EXPECT_LT((p.grad - p.value).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GradCheck, ConstantLoss) {
  nn::Param p("p", 2, 2);
  p.value.setRandom();
  auto loss = [&](bool with_grad) {
    if (with_grad) {
      Tape t;
      Var v = p.use(t);
      Var l = ad::scale(ad::sum(v), 0.0);
      t.backward(l);
      return l.scalar();
    }
    return 0.0;
  };
  EXPECT_LT(nn::grad_check({&p}, loss), 1e-8);
}

TEST(GradCheck, MlpWithLstmAndSoftmaxChain) {
  // End-to-end composite through every op family used by the model.
  Rng rng(31);
  nn::Mlp mlp("mlp", 3, {5}, 4, rng);
  nn::LstmCell cell("lstm", 3, 4, rng);
  Mat x(3, 2);
  x << 0.2, -0.5, 0.8, 0.1, -0.3, 0.6;
  Mat h0 = Mat::Zero(4, 2), c0 = Mat::Zero(4, 2);
  std::vector<nn::Param*> ps;
  mlp.params(ps);
  cell.params(ps);
  auto build = [&](Tape& t) {
    auto [h, c] = cell.step(t, t.constant(x), t.constant(h0), t.constant(c0));
    Var z = mlp.forward(t, t.constant(x));
    Var alpha = ad::softmax_colwise(z + h);
    return ad::mean_all(ad::square(alpha - ad::tanh_(c)));
  };
  auto loss = [&](bool with_grad) {
    Tape t;
    Var l = build(t);
    if (with_grad) t.backward(l);
    return l.scalar();
  };
  EXPECT_LT(nn::grad_check(ps, loss), 1e-6);
}

TEST(GradCheck, NonFiniteLossThrows) {
  nn::Param p("p", 1, 1);
  p.value(0, 0) = 0.0;
  auto loss = [&](bool with_grad) {
    if (with_grad) {
      Tape t;
      Var v = p.use(t);
      Var l = ad::log_(v);  // -inf at 0, non-finite when perturbed below
      t.backward(l);
      return l.scalar();
    }
    return std::log(p.value(0, 0));
  };
  EXPECT_THROW(nn::grad_check({&p}, loss), std::runtime_error);
}

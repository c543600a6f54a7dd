#include "cmta/contrastive.hpp"
#include "cmta/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace cmta;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

// Independent naive oracle: direct double-loop over experts and negatives,
// no log-sum-exp, no tape.
double naive_contrastive(const std::vector<Mat>& enc_t, const std::vector<Mat>& enc_t1,
                         double tau) {
  const std::size_t K = enc_t.size();
  const Eigen::Index B = enc_t[0].cols();
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < K; ++i) {
      const Eigen::VectorXd q = enc_t[i].col(b);
      const double pos = std::exp(q.dot(enc_t1[i].col(b)) / tau);
      double denom = pos;
      for (std::size_t j = 0; j < K; ++j)
        if (j != i) denom += std::exp(q.dot(enc_t[j].col(b)) / tau);
      total += -std::log(pos / denom);
    }
  }
  return total / static_cast<double>(B);
}

std::vector<Mat> random_encodings(std::size_t K, Eigen::Index d, Eigen::Index B, Rng& rng,
                                  double scale = 1.0) {
  std::vector<Mat> out;
  for (std::size_t k = 0; k < K; ++k) {
    Mat m(d, B);
    for (Eigen::Index j = 0; j < B; ++j)
      for (Eigen::Index i = 0; i < d; ++i) m(i, j) = scale * rng.uniform(-1.0, 1.0);
    out.push_back(m);
  }
  return out;
}

double eval_contrastive(const std::vector<Mat>& enc_t, const std::vector<Mat>& enc_t1,
                        double tau) {
  Tape t;
  contrastive::ContrastiveBatch b;
  b.tau = tau;
  for (const auto& m : enc_t) b.enc_t.push_back(t.constant(m));
  for (const auto& m : enc_t1) b.enc_t1.push_back(t.constant(m));
  return contrastive::contrastive_loss(t, b).scalar();
}

}  // namespace

TEST(InfoNce, SymmetricLogitsGiveLn2) {
  Tape t;
  Mat q(2, 1), k(2, 1);
  q << 1, 0;
  k << 1, 0;
  Var loss = contrastive::info_nce(t, t.constant(q), t.constant(k), {t.constant(k)}, 1.0);
  EXPECT_NEAR(loss.scalar(), std::log(2.0), 1e-12);
}

TEST(InfoNce, SaturatesWhenPositiveDominates) {
  Tape t;
  Mat q(2, 1), kp(2, 1), kn(2, 1);
  q << 1, 0;
  kp << 41, 0;
  kn << 0, 1;
  Var loss = contrastive::info_nce(t, t.constant(q), t.constant(kp), {t.constant(kn)}, 1.0);
  EXPECT_LT(loss.scalar(), 1e-15);
  EXPECT_GE(loss.scalar(), 0.0);
}

TEST(InfoNce, ClosedFormOrthogonalPair) {
  Tape t;
  Mat q(2, 1), kp(2, 1), kn(2, 1);
  q << 1, 0;
  kp << 1, 0;
  kn << 0, 1;
  Var loss = contrastive::info_nce(t, t.constant(q), t.constant(kp), {t.constant(kn)}, 1.0);
  EXPECT_NEAR(loss.scalar(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(loss.scalar(), 0.31326168751822286, 1e-10);
}

TEST(InfoNce, RejectsBadInputs) {
  Tape t;
  Mat q = Mat::Ones(2, 1);
  EXPECT_THROW(contrastive::info_nce(t, t.constant(q), t.constant(q), {t.constant(q)}, 0.0),
               std::invalid_argument);
  EXPECT_THROW(contrastive::info_nce(t, t.constant(q), t.constant(q), {}, 1.0),
               std::invalid_argument);
}

TEST(ContrastiveLoss, DegenerateEqualEncodings) {
  // K=2, all encodings identical: every logit equal, each term is ln 2.
  Mat e = Mat::Constant(3, 4, 0.7);
  EXPECT_NEAR(eval_contrastive({e, e}, {e, e}, 0.5), 2.0 * std::log(2.0), 1e-12);
}

TEST(ContrastiveLoss, OrthonormalClosedForm) {
  Mat e1(2, 1), e2(2, 1);
  e1 << 1, 0;
  e2 << 0, 1;
  const double expected = 2.0 * (-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)));
  EXPECT_NEAR(eval_contrastive({e1, e2}, {e1, e2}, 1.0), expected, 1e-12);
  EXPECT_NEAR(expected, 0.62652337503644573, 1e-10);
}

TEST(ContrastiveLoss, MatchesNaiveOracle) {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    auto enc_t = random_encodings(3, 4, 5, rng);
    auto enc_t1 = random_encodings(3, 4, 5, rng);
    const double tau = rng.uniform(0.05, 2.0);
    EXPECT_NEAR(eval_contrastive(enc_t, enc_t1, tau), naive_contrastive(enc_t, enc_t1, tau),
                1e-10);
  }
}

TEST(ContrastiveLoss, RejectsSingleExpert) {
  Tape t;
  contrastive::ContrastiveBatch b;
  b.enc_t = {t.constant(Mat::Ones(2, 1))};
  b.enc_t1 = {t.constant(Mat::Ones(2, 1))};
  EXPECT_THROW(contrastive::contrastive_loss(t, b), std::invalid_argument);
}

TEST(ContrastiveLoss, NonNegative) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    auto enc_t = random_encodings(4, 3, 2, rng, 3.0);
    auto enc_t1 = random_encodings(4, 3, 2, rng, 3.0);
    EXPECT_GE(eval_contrastive(enc_t, enc_t1, 0.3), 0.0);
  }
}

TEST(ContrastiveLoss, PermutationInvariant) {
  Rng rng(55);
  auto enc_t = random_encodings(4, 5, 3, rng);
  auto enc_t1 = random_encodings(4, 5, 3, rng);
  const double base = eval_contrastive(enc_t, enc_t1, 0.7);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<Mat> pt, pt1;
  for (auto i : perm) {
    pt.push_back(enc_t[i]);
    pt1.push_back(enc_t1[i]);
  }
  EXPECT_NEAR(eval_contrastive(pt, pt1, 0.7), base, 1e-12);
}

TEST(ContrastiveLoss, L2NormalizedScaleInvariant) {
  Rng rng(91);
  auto enc_t = random_encodings(3, 4, 2, rng);
  auto enc_t1 = random_encodings(3, 4, 2, rng);
  auto eval_normalized = [&](const std::vector<Mat>& a, const std::vector<Mat>& b) {
    Tape t;
    contrastive::ContrastiveBatch cb;
    cb.tau = 0.4;
    for (const auto& m : a) cb.enc_t.push_back(contrastive::l2_normalize_cols(t, t.constant(m)));
    for (const auto& m : b) cb.enc_t1.push_back(contrastive::l2_normalize_cols(t, t.constant(m)));
    return contrastive::contrastive_loss(t, cb).scalar();
  };
  const double base = eval_normalized(enc_t, enc_t1);
  std::vector<Mat> scaled_t = enc_t, scaled_t1 = enc_t1;
  scaled_t[1] *= 7.5;
  scaled_t1[2] *= 0.03;
  EXPECT_NEAR(eval_normalized(scaled_t, scaled_t1), base, 1e-9);
}

TEST(ContrastiveLoss, GradientMatchesFiniteDifferences) {
  Rng rng(400);
  const std::size_t K = 3;
  nn::Param pt("enc_t", 4, K * 2), pt1("enc_t1", 4, K * 2);
  nn::init_uniform(pt, 4, rng);
  nn::init_uniform(pt1, 4, rng);
  auto loss = [&](bool with_grad) {
    Tape t;
    contrastive::ContrastiveBatch b;
    b.tau = 0.3;
    Var vt = pt.use(t), vt1 = pt1.use(t);
    // Expert k reads columns [2k, 2k+1] of the parameter block, selected
    // through a constant matmul so gradients flow back to the right slice.
    auto cols = [&](Var v, std::size_t k) {
      Mat sel = Mat::Zero(K * 2, 2);
      sel(static_cast<Eigen::Index>(2 * k), 0) = 1.0;
      sel(static_cast<Eigen::Index>(2 * k + 1), 1) = 1.0;
      return ad::matmul(v, t.constant(sel));
    };
    for (std::size_t k = 0; k < K; ++k) {
      b.enc_t.push_back(cols(vt, k));
      b.enc_t1.push_back(cols(vt1, k));
    }
    Var l = contrastive::contrastive_loss(t, b);
    if (with_grad) t.backward(l);
    return l.scalar();
  };
  EXPECT_LT(nn::grad_check({&pt, &pt1}, loss), 1e-4);
}

#pragma once

// Tanh-squashed diagonal Gaussian policy head.

#include "cmta/tape.hpp"

#include <cmath>

namespace cmta::dist {

using ad::Mat;
using ad::Tape;
using ad::Var;

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

struct SquashedSample {
  Var action;    // d x B, entries in (-1, 1)
  Var log_prob;  // 1 x B
};

// Reparameterized sample: action = tanh(mean + std * noise) with the tanh
// change-of-variables correction
//   log pi(a) = log N(u; mean, std) - sum_i log(1 - tanh(u_i)^2),
// where log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)) for stability.
inline SquashedSample squashed_gaussian_sample(Tape& t, Var mean, Var log_std, Var noise) {
  Var ls = ad::clamp(log_std, kLogStdMin, kLogStdMax);
  Var std = ad::exp_(ls);
  Var pre = mean + std * noise;
  Var action = ad::tanh_(pre);

  // Gaussian log density of pre under (mean, std); (pre-mean)/std == noise,
  // but written through the graph so gradients reach mean and log_std.
  Var zscore = (pre - mean) * ad::exp_(ad::scale(ls, -1.0));
  Var gauss = ad::scale(ad::square(zscore), -0.5) - ls;
  Var gauss_lp = ad::add_scalar(ad::colwise_sum(gauss),
                                -0.5 * kLogTwoPi * static_cast<double>(mean.rows()));

  Var log_one_minus_tanh_sq =
      ad::scale(ad::add_scalar(-(pre + ad::softplus(ad::scale(pre, -2.0))), std::log(2.0)), 2.0);
  Var log_prob = gauss_lp - ad::colwise_sum(log_one_minus_tanh_sq);
  return {action, log_prob};
}

// Deterministic action used for evaluation.
inline Mat deterministic_action(const Mat& mean) { return mean.array().tanh(); }

}  // namespace cmta::dist

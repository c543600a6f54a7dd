#pragma once

// InfoNCE regularizer that pushes the K expert encodings apart: the query is
// expert i's encoding at time t, the positive is the same expert at t+1, the
// negatives are the other experts at time t.

#include "cmta/tape.hpp"

#include <stdexcept>
#include <vector>

namespace cmta::contrastive {

using ad::Mat;
using ad::Tape;
using ad::Var;

// Single InfoNCE term via log-sum-exp:
//   -log( exp(q.k+/tau) / (exp(q.k+/tau) + sum_j exp(q.k-_j/tau)) )
// Inputs are d x B; the result is the batch mean (scalar) when B > 1 and the
// per-element value for B = 1 either way.
inline Var info_nce(Tape& t, Var q, Var k_pos, const std::vector<Var>& k_negs, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
  if (k_negs.empty()) throw std::invalid_argument("info_nce: need at least one negative");
  const double inv_tau = 1.0 / tau;
  Var pos = ad::scale(ad::colwise_dot(q, k_pos), inv_tau);  // 1 x B
  Var logits = pos;
  for (Var kn : k_negs) logits = ad::vcat(logits, ad::scale(ad::colwise_dot(q, kn), inv_tau));
  Var per_sample = ad::logsumexp_colwise(logits) - pos;  // 1 x B, each >= 0
  return ad::mean_all(per_sample);
}

struct ContrastiveBatch {
  // enc_t[j], enc_t1[j]: d x B encodings of expert j at consecutive states.
  std::vector<Var> enc_t;
  std::vector<Var> enc_t1;
  double tau = 0.1;
};

// Sum over experts of InfoNCE terms, averaged over the batch.
inline Var contrastive_loss(Tape& t, const ContrastiveBatch& batch) {
  const std::size_t K = batch.enc_t.size();
  if (K < 2) throw std::invalid_argument("contrastive_loss: need K >= 2 experts");
  if (batch.enc_t1.size() != K)
    throw std::invalid_argument("contrastive_loss: enc_t/enc_t1 expert count mismatch");
  Var total{};
  for (std::size_t i = 0; i < K; ++i) {
    std::vector<Var> negs;
    negs.reserve(K - 1);
    for (std::size_t j = 0; j < K; ++j)
      if (j != i) negs.push_back(batch.enc_t[j]);
    Var term = info_nce(t, batch.enc_t[i], batch.enc_t1[i], negs, batch.tau);
    total = (i == 0) ? term : total + term;
  }
  return total;
}

// Optional L2 normalization of encodings before the dot products; off by
// default (the loss uses raw dot products otherwise).
inline Var l2_normalize_cols(Tape& t, Var x) {
  Var norm_sq = ad::colwise_sum(ad::square(x));              // 1 x B
  Var inv = ad::exp_(ad::scale(ad::log_(ad::add_scalar(norm_sq, 1e-12)), -0.5));
  return ad::mul_rowbcast(x, inv);
}

}  // namespace cmta::contrastive

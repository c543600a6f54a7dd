#pragma once

// Multi-task SAC update and data collection. One train step samples a
// stratified batch (128 per task by default), rebuilds the forward graph
// with a one-step LSTM gradient (stored h_{t-1} is a constant), and applies
// the three-way gradient partition: the contrastive loss updates only the
// experts, the actor loss only the policy, and the critic loss (together
// with the temperature loss) everything except the policy.

#include "cmta/contrastive.hpp"
#include "cmta/envs.hpp"
#include "cmta/model.hpp"
#include "cmta/replay.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cmta::train {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct TrainConfig {
  int n_tasks = 1;
  int batch_per_task = 128;      // total batch = 128 x number of tasks
  double gamma = 0.99;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double beta = 2500.0;          // weight of the contrastive term in L_i
  double contrastive_tau = 0.1;
  bool contrastive_l2_normalize = false;
  bool contrastive_enabled = true;
  int horizon = 150;
  int warmup_steps = 1500;       // uniform exploration at the start
  int train_every = 1;           // env steps (per task) per train step
  int eval_every = 3000;
  double polyak = 0.005;
  double target_entropy = -2.0;  // -action_dim
  std::size_t buffer_capacity = 5'000'000;

  void validate() const {
    if (n_tasks <= 0 || batch_per_task <= 0 || horizon <= 0 || train_every <= 0)
      throw std::invalid_argument("train config: counts must be positive");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("train config: gamma in (0,1)");
    if (polyak <= 0.0 || polyak > 1.0) throw std::invalid_argument("train config: polyak in (0,1]");
    if (contrastive_tau <= 0.0) throw std::invalid_argument("train config: tau must be positive");
  }
};

// Column-major batch for one task.
struct TaskBatch {
  int task_id = 0;
  Mat state;       // S x B
  Mat action;      // a x B
  Mat reward;      // 1 x B
  Mat next_state;  // S x B
  Mat h_prev, c_prev;  // H x B, stored LSTM state before s_t
  Mat h_curr, c_curr;  // H x B, stored LSTM state after s_t
  Mat terminal;    // 1 x B, 1.0 where the transition is a true terminal

  Eigen::Index size() const { return state.cols(); }
};

inline TaskBatch make_batch(const std::vector<const replay::TransitionRecord*>& recs) {
  TaskBatch b;
  if (recs.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Eigen::Index B = static_cast<Eigen::Index>(recs.size());
  const Eigen::Index S = recs[0]->state.size();
  const Eigen::Index A = recs[0]->action.size();
  const Eigen::Index H = recs[0]->h_prev.hidden.size();
  b.task_id = recs[0]->task_id;
  b.state.resize(S, B);
  b.action.resize(A, B);
  b.reward.resize(1, B);
  b.next_state.resize(S, B);
  b.h_prev.resize(H, B);
  b.c_prev.resize(H, B);
  b.h_curr.resize(H, B);
  b.c_curr.resize(H, B);
  b.terminal.resize(1, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto* r = recs[static_cast<std::size_t>(i)];
    b.state.col(i) = r->state;
    b.action.col(i) = r->action;
    b.reward(0, i) = r->reward;
    b.next_state.col(i) = r->next_state;
    b.h_prev.col(i) = r->h_prev.hidden;
    b.c_prev.col(i) = r->h_prev.cell;
    b.h_curr.col(i) = r->h_curr.hidden;
    b.c_curr.col(i) = r->h_curr.cell;
    b.terminal(0, i) = r->terminal ? 1.0 : 0.0;
  }
  return b;
}

// Shared per-task graph: h_t recomputed from the stored h_{t-1} (constant),
// then the full CMTA forward at s_t.
struct TaskGraph {
  model::ForwardOutput fwd;
  Var h_t;
  Var state;
};

inline TaskGraph build_forward(Tape& t, model::CmtaModel& m, const TaskBatch& b) {
  TaskGraph g;
  g.state = t.constant(b.state);
  auto [h, c] = m.temporal_step(t, g.state, t.constant(b.h_prev), t.constant(b.c_prev));
  g.h_t = h;
  g.fwd = m.forward(t, g.state, b.task_id, g.h_t);
  return g;
}

// Entropy-regularized twin-target bootstrap values, computed with no
// gradient: y = r + gamma * (1-terminal) * (min(Qbar1,Qbar2)(z',a') -
// alpha * log pi(a'|s')). `noise` drives the fresh policy sample at s'.
inline Mat compute_targets(model::CmtaModel& m, const TaskBatch& b, const Mat& noise,
                           double alpha, double gamma) {
  Tape t;  // scratch; values only
  Var s2 = t.constant(b.next_state);
  auto [h2, c2] = m.temporal_step(t, s2, t.constant(b.h_curr), t.constant(b.c_curr));
  model::ForwardOutput fwd = m.forward(t, s2, b.task_id, h2);
  auto [mean, log_std] = m.actor_heads(t, fwd.z);
  auto sample = dist::squashed_gaussian_sample(t, mean, log_std, t.constant(noise));
  Var qin = ad::vcat(fwd.z, sample.action);
  Var q1 = m.target1.forward(t, qin);
  Var q2 = m.target2.forward(t, qin);
  Mat qmin = q1.val().cwiseMin(q2.val());
  Mat value = qmin - alpha * sample.log_prob.val();
  Mat not_term = (1.0 - b.terminal.array()).matrix();
  return b.reward + gamma * value.cwiseProduct(not_term);
}

// J_Q: mean over the batch of 0.5*(Q - y)^2, summed over the twin critics.
inline Var critic_loss(Tape& t, model::CmtaModel& m, const TaskGraph& g, const TaskBatch& b,
                       const Mat& targets) {
  if (b.size() == 0) throw std::invalid_argument("critic_loss: empty batch");
  Var qin = ad::vcat(g.fwd.z, t.constant(b.action));
  Var y = t.constant(targets);
  Var l1 = ad::scale(ad::mean_all(ad::square(m.critic1.forward(t, qin) - y)), 0.5);
  Var l2 = ad::scale(ad::mean_all(ad::square(m.critic2.forward(t, qin) - y)), 0.5);
  return l1 + l2;
}

// J_pi: mean of log pi(a|s) - (1/alpha) * min(Q1,Q2)(s,a) with a
// reparameterized action. alpha enters as a constant. Also exposes the
// sampled log-probabilities for the temperature update.
inline Var actor_loss(Tape& t, model::CmtaModel& m, const TaskGraph& g, const Mat& noise,
                      double alpha, Mat* log_probs_out = nullptr) {
  if (alpha <= 0.0) throw std::logic_error("actor_loss: alpha must be positive");
  auto [mean, log_std] = m.actor_heads(t, g.fwd.z);
  auto sample = dist::squashed_gaussian_sample(t, mean, log_std, t.constant(noise));
  Var qin = ad::vcat(g.fwd.z, sample.action);
  Var qmin = ad::cwise_min(m.critic1.forward(t, qin), m.critic2.forward(t, qin));
  if (log_probs_out) *log_probs_out = sample.log_prob.val();
  return ad::mean_all(sample.log_prob - ad::scale(qmin, 1.0 / alpha));
}

// Per-task temperature adaptation: loss = -log(alpha_i) * mean(log pi +
// target_entropy); the log-probability term is a constant, so gradients
// reach only log_alpha_i.
inline Var temperature_loss(Tape& t, model::CmtaModel& m, int task_id, const Mat& log_probs,
                            double target_entropy) {
  const double c = log_probs.mean() + target_entropy;
  Var la = m.log_alpha.use(t);
  return ad::scale(ad::row(la, task_id), -c);
}

// Inter-expert InfoNCE on the (s_t, s_{t+1}) pairs of the batch.
inline Var contrastive_term(Tape& t, model::CmtaModel& m, const TaskGraph& g, const TaskBatch& b,
                            const TrainConfig& cfg) {
  contrastive::ContrastiveBatch cb;
  cb.tau = cfg.contrastive_tau;
  cb.enc_t = g.fwd.expert_encodings;
  cb.enc_t1 = m.encode_experts(t, t.constant(b.next_state));
  if (cfg.contrastive_l2_normalize) {
    for (auto& v : cb.enc_t) v = contrastive::l2_normalize_cols(t, v);
    for (auto& v : cb.enc_t1) v = contrastive::l2_normalize_cols(t, v);
  }
  return contrastive::contrastive_loss(t, cb);
}

struct LossToggles {
  bool contrastive = true;
  bool actor = true;
  bool critic = true;  // includes the temperature loss
  bool polyak = true;
};

struct StepDiagnostics {
  bool updated = false;
  double contrastive_loss = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double temperature_loss = 0.0;
};

class Trainer {
 public:
  Trainer(model::CmtaModel& m, const TrainConfig& cfg)
      : model_(m),
        cfg_(cfg),
        opt_(cfg.lr_critic, cfg.adam_beta1, cfg.adam_beta2),
        actor_opt_(cfg.lr_actor, cfg.adam_beta1, cfg.adam_beta2) {
    cfg_.validate();
    if (m.config().arch == model::Arch::Shared && cfg_.contrastive_enabled)
      throw std::invalid_argument("shared-encoder reference cannot use the contrastive loss");
  }

  const TrainConfig& config() const { return cfg_; }
  nn::Adam& optimizer() { return opt_; }
  nn::Adam& actor_optimizer() { return actor_opt_; }

  // One SAC update from a stratified batch. No-op (with diagnostic) if any
  // task ring holds fewer than batch_per_task records.
  StepDiagnostics train_step(const replay::ReplayBuffer& buffer, Rng& rng,
                             const LossToggles& toggles = {}) {
    StepDiagnostics diag;
    for (int i = 0; i < cfg_.n_tasks; ++i)
      if (buffer.size(i) < static_cast<std::size_t>(cfg_.batch_per_task)) return diag;

    Tape t;
    const double inv_n = 1.0 / static_cast<double>(cfg_.n_tasks);
    Var l_con{}, l_actor{}, l_critic{};
    bool first = true;

    const bool use_con = toggles.contrastive && cfg_.contrastive_enabled && cfg_.beta != 0.0;

    for (int task = 0; task < cfg_.n_tasks; ++task) {
      TaskBatch b = make_batch(
          buffer.sample_task(task, static_cast<std::size_t>(cfg_.batch_per_task), rng));
      const double alpha = model_.alpha_for_task(task);

      Mat target_noise = draw_noise(b.size(), rng);
      Mat targets = compute_targets(model_, b, target_noise, alpha, cfg_.gamma);

      TaskGraph g = build_forward(t, model_, b);
      Var lc = critic_loss(t, model_, g, b, targets);

      Mat actor_noise = draw_noise(b.size(), rng);
      Mat log_probs;
      Var la = actor_loss(t, model_, g, actor_noise, alpha, &log_probs);
      Var lt = temperature_loss(t, model_, task, log_probs, cfg_.target_entropy);
      diag.temperature_loss += lt.scalar() * inv_n;
      lc = lc + lt;  // temperature adaptation rides the critic-phase update

      Var task_critic = ad::scale(lc, inv_n);
      Var task_actor = ad::scale(la, inv_n);
      if (first) {
        l_critic = task_critic;
        l_actor = task_actor;
      } else {
        l_critic = l_critic + task_critic;
        l_actor = l_actor + task_actor;
      }

      if (use_con) {
        Var con = ad::scale(contrastive_term(t, model_, g, b, cfg_), cfg_.beta * inv_n);
        l_con = first ? con : l_con + con;
      }
      first = false;
    }

    model_.zero_all_grads();

    // Contrastive phase: gradients kept for the experts only.
    std::vector<Mat> expert_grads;
    if (use_con) {
      t.backward(l_con);
      diag.contrastive_loss = l_con.scalar();
      for (nn::Param* p : model_.expert_params()) expert_grads.push_back(p->grad);
      model_.zero_all_grads();
    }

    // Actor phase: gradients kept for the policy only.
    std::vector<Mat> actor_grads;
    if (toggles.actor) {
      t.backward(l_actor);
      diag.actor_loss = l_actor.scalar();
      for (nn::Param* p : model_.actor_params()) actor_grads.push_back(p->grad);
      model_.zero_all_grads();
    }

    // Critic (+ temperature) phase: everything except the policy.
    if (toggles.critic) {
      t.backward(l_critic);
      diag.critic_loss = l_critic.scalar() - diag.temperature_loss;
      for (nn::Param* p : model_.actor_params()) p->zero_grad();
    }

    if (use_con) {
      auto experts = model_.expert_params();
      for (std::size_t i = 0; i < experts.size(); ++i) experts[i]->grad += expert_grads[i];
    }
    if (toggles.actor) {
      auto actor = model_.actor_params();
      for (std::size_t i = 0; i < actor.size(); ++i) actor[i]->grad = actor_grads[i];
    }

    opt_.step(model_.non_actor_params());
    actor_opt_.step(model_.actor_params());
    if (toggles.polyak) model_.polyak_update(cfg_.polyak);

    diag.updated = true;
    return diag;
  }

  // One environment slot per task; carries the LSTM state across steps and
  // resets it to zero on episode boundaries.
  struct EnvSlot {
    envs::Env env;
    Eigen::VectorXd obs;
    nn::LstmState hidden;
    bool need_reset = true;

    EnvSlot(envs::TaskSpec spec, int horizon) : env(std::move(spec), horizon) {}
  };

  // Steps every task environment once and appends one TransitionRecord per
  // task. `env_steps_so_far` selects warmup (uniform) vs policy actions.
  void collect_step(std::vector<EnvSlot>& slots, replay::ReplayBuffer& buffer, Rng& rng,
                    long env_steps_so_far) {
    for (std::size_t task = 0; task < slots.size(); ++task) {
      EnvSlot& slot = slots[task];
      if (slot.need_reset) {
        slot.obs = slot.env.reset_random(rng);
        slot.hidden = model_.zero_state();
        slot.need_reset = false;
      }

      const nn::LstmState h_prev = slot.hidden;
      const nn::LstmState h_curr = model_.lstm.eval(slot.obs, h_prev);

      Eigen::VectorXd action(model_.config().action_dim);
      if (env_steps_so_far < cfg_.warmup_steps) {
        for (int i = 0; i < model_.config().action_dim; ++i) action(i) = rng.uniform(-1.0, 1.0);
      } else {
        auto fwd = model_.eval_forward(slot.obs, static_cast<int>(task), h_curr);
        action = model_.sample_action(fwd.z, rng);
      }

      auto result = slot.env.step(envs::Vec2(action(0), action(1)));

      replay::TransitionRecord rec;
      rec.state = slot.obs;
      rec.action = action;
      rec.reward = result.reward;
      rec.next_state = result.observation;
      rec.h_prev = h_prev;
      rec.h_curr = h_curr;
      rec.task_id = static_cast<int>(task);
      rec.terminal = result.done && !result.timeout;
      buffer.append(std::move(rec));

      if (result.done) {
        slot.need_reset = true;
      } else {
        slot.obs = result.observation;
        slot.hidden = h_curr;
      }
    }
  }

 private:
  Mat draw_noise(Eigen::Index batch, Rng& rng) {
    Mat n(model_.config().action_dim, batch);
    for (Eigen::Index j = 0; j < batch; ++j)
      for (Eigen::Index i = 0; i < n.rows(); ++i) n(i, j) = rng.normal();
    return n;
  }

  model::CmtaModel& model_;
  TrainConfig cfg_;
  nn::Adam opt_;        // critic-phase groups (everything except the policy)
  nn::Adam actor_opt_;  // policy
};

}  // namespace cmta::train

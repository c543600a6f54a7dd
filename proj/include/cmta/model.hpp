#pragma once

// CMTA forward path: K expert encoders, a task encoder over one-hot task
// ids, an LSTM carrying temporal context, a softmax attention over expert
// encodings, and SAC actor/critic heads consuming z = z_task || z_enc.

#include "cmta/distributions.hpp"
#include "cmta/nn.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmta::model {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nn::LstmState;
using nn::Param;

enum class Arch {
  Cmta,    // K >= 2 experts composed by temporal attention
  Shared,  // single-expert reference: no attention, no LSTM in the path
};

struct ModelConfig {
  Arch arch = Arch::Cmta;
  int state_dim = 8;
  int action_dim = 2;
  int n_tasks = 1;
  int n_experts = 6;
  std::vector<Eigen::Index> expert_hidden = {64, 64};  // FC 64 + FC 64
  int expert_out = 64;
  int task_embedding_dim = 64;                              // embedding layer dim 64
  std::vector<Eigen::Index> task_encoder_hidden = {128, 64};  // FC 128 + FC 64 (+ FC 64 out)
  int task_encoder_out = 64;
  int lstm_hidden = 64;
  std::vector<Eigen::Index> actor_hidden = {512, 512, 512};
  std::vector<Eigen::Index> critic_hidden = {512, 512, 512};
  bool temporal_attention = true;  // off: attention sees a zeroed hidden state

  int z_dim() const { return task_encoder_out + expert_out; }

  void validate() const {
    if (arch == Arch::Cmta && n_experts < 2)
      throw std::invalid_argument("CMTA requires at least 2 experts (no contrastive negatives otherwise)");
    if (arch == Arch::Shared && n_experts != 1)
      throw std::invalid_argument("shared-encoder reference uses exactly 1 expert");
    if (state_dim <= 0 || action_dim <= 0 || n_tasks <= 0)
      throw std::invalid_argument("model dimensions must be positive");
  }
};

struct AttentionWeights {
  Eigen::VectorXd alpha;  // length K, simplex
};

struct ForwardOutput {
  Var z_task;                        // T x B
  std::vector<Var> expert_encodings;  // K of d x B
  Var alpha;                         // K x B simplex columns
  Var z_enc;                         // d x B
  Var z;                             // (T+d) x B
};

class CmtaModel {
 public:
  CmtaModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    for (int j = 0; j < cfg_.n_experts; ++j)
      experts.emplace_back("expert" + std::to_string(j), cfg_.state_dim, cfg_.expert_hidden,
                           cfg_.expert_out, rng);
    task_embedding = Param("task_embedding", cfg_.task_embedding_dim, cfg_.n_tasks);
    init_uniform(task_embedding, cfg_.n_tasks, rng);
    task_mlp = nn::Mlp("task_encoder", cfg_.task_embedding_dim, cfg_.task_encoder_hidden,
                       cfg_.task_encoder_out, rng);
    lstm = nn::LstmCell("lstm", cfg_.state_dim, cfg_.lstm_hidden, rng);
    attention_proj = nn::Linear("attention", cfg_.task_encoder_out + cfg_.lstm_hidden,
                                cfg_.n_experts, rng);
    actor = nn::Mlp("actor", cfg_.z_dim(), cfg_.actor_hidden, 2 * cfg_.action_dim, rng);
    critic1 = nn::Mlp("critic1", cfg_.z_dim() + cfg_.action_dim, cfg_.critic_hidden, 1, rng);
    critic2 = nn::Mlp("critic2", cfg_.z_dim() + cfg_.action_dim, cfg_.critic_hidden, 1, rng);
    target1 = critic1;
    target2 = critic2;
    log_alpha = Param("log_alpha", cfg_.n_tasks, 1);  // temperatures start at alpha = 1
  }

  const ModelConfig& config() const { return cfg_; }

  LstmState zero_state() const { return LstmState::zero(cfg_.lstm_hidden); }

  // --- tape-building pieces (batched, columns are samples) ---

  std::vector<Var> encode_experts(Tape& t, Var state) {
    std::vector<Var> out;
    out.reserve(experts.size());
    for (auto& e : experts) out.push_back(e.forward(t, state));
    return out;
  }

  Var encode_task(Tape& t, int task_id, Eigen::Index batch) {
    if (task_id < 0 || task_id >= cfg_.n_tasks)
      throw std::invalid_argument("task id out of range: " + std::to_string(task_id));
    // One-hot through the embedding layer is a column select.
    Var emb = ad::repeat_col(
        ad::rows(/*column-major trick below*/ embed_col(t, task_id), 0, cfg_.task_embedding_dim),
        batch);
    return task_mlp.forward(t, emb);
  }

  Var attention_weights(Tape& t, Var z_task, Var hidden) {
    Var logits = attention_proj.forward(t, ad::vcat(z_task, hidden));
    return ad::softmax_colwise(logits);
  }

  static Var compose(Tape& t, const std::vector<Var>& encodings, Var alpha) {
    if (alpha.rows() != static_cast<Eigen::Index>(encodings.size()))
      throw std::invalid_argument("compose: attention/encoding count mismatch");
    Var acc{};
    for (std::size_t j = 0; j < encodings.size(); ++j) {
      Var term = ad::mul_rowbcast(encodings[j], ad::row(alpha, static_cast<Eigen::Index>(j)));
      acc = (j == 0) ? term : acc + term;
    }
    return acc;
  }

  // Full forward over a single-task batch. `hidden` is the temporal context
  // (H x B); callers pass stored/recomputed hidden states.
  ForwardOutput forward(Tape& t, Var state, int task_id, Var hidden) {
    ForwardOutput out;
    out.expert_encodings = encode_experts(t, state);
    out.z_task = encode_task(t, task_id, state.cols());
    if (cfg_.arch == Arch::Shared) {
      out.z_enc = out.expert_encodings[0];
      Mat one = Mat::Ones(1, state.cols());
      out.alpha = t.constant(one);
    } else {
      Var h = cfg_.temporal_attention
                  ? hidden
                  : t.constant(Mat::Zero(cfg_.lstm_hidden, state.cols()));
      out.alpha = attention_weights(t, out.z_task, h);
      out.z_enc = compose(t, out.expert_encodings, out.alpha);
    }
    out.z = ad::vcat(out.z_task, out.z_enc);
    return out;
  }

  // One LSTM step on the raw environment state.
  std::pair<Var, Var> temporal_step(Tape& t, Var state, Var h, Var c) {
    return lstm.step(t, state, h, c);
  }

  // Actor head: returns (mean, log_std), each action_dim x B.
  std::pair<Var, Var> actor_heads(Tape& t, Var z) {
    Var out = actor.forward(t, z);
    return {ad::rows(out, 0, cfg_.action_dim), ad::rows(out, cfg_.action_dim, cfg_.action_dim)};
  }

  // --- value-only path for action selection / evaluation ---

  struct EvalForward {
    Eigen::VectorXd z;
    Eigen::VectorXd alpha;
    std::vector<Eigen::VectorXd> expert_encodings;
  };

  EvalForward eval_forward(const Eigen::VectorXd& state, int task_id,
                           const LstmState& hidden) const {
    if (task_id < 0 || task_id >= cfg_.n_tasks)
      throw std::invalid_argument("task id out of range: " + std::to_string(task_id));
    EvalForward out;
    for (const auto& e : experts) out.expert_encodings.push_back(e.eval(state));
    Eigen::VectorXd z_task = task_mlp.eval(task_embedding.value.col(task_id));
    Eigen::VectorXd z_enc;
    if (cfg_.arch == Arch::Shared) {
      out.alpha = Eigen::VectorXd::Ones(1);
      z_enc = out.expert_encodings[0];
    } else {
      Eigen::VectorXd h = cfg_.temporal_attention ? hidden.hidden
                                                  : Eigen::VectorXd::Zero(cfg_.lstm_hidden);
      Eigen::VectorXd att_in(z_task.size() + h.size());
      att_in << z_task, h;
      Eigen::VectorXd logits = attention_proj.eval(att_in);
      Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
      out.alpha = (e / e.sum()).matrix();
      z_enc = Eigen::VectorXd::Zero(cfg_.expert_out);
      for (int j = 0; j < cfg_.n_experts; ++j) z_enc += out.alpha(j) * out.expert_encodings[j];
    }
    out.z.resize(z_task.size() + z_enc.size());
    out.z << z_task, z_enc;
    return out;
  }

  Eigen::VectorXd actor_mean(const Eigen::VectorXd& z) const {
    Eigen::VectorXd heads = actor.eval(z);
    return heads.head(cfg_.action_dim);
  }

  // Stochastic action for data collection; also returns updated LSTM state.
  Eigen::VectorXd sample_action(const Eigen::VectorXd& z, Rng& rng) const {
    Eigen::VectorXd heads = actor.eval(z);
    Eigen::VectorXd mean = heads.head(cfg_.action_dim);
    Eigen::VectorXd log_std = heads.tail(cfg_.action_dim)
                                  .cwiseMax(dist::kLogStdMin)
                                  .cwiseMin(dist::kLogStdMax);
    Eigen::VectorXd a(cfg_.action_dim);
    for (int i = 0; i < cfg_.action_dim; ++i)
      a(i) = std::tanh(mean(i) + std::exp(log_std(i)) * rng.normal());
    return a;
  }

  // --- parameter groups (the gradient-partitioning contract) ---

  std::vector<Param*> expert_params() {
    std::vector<Param*> out;
    for (auto& e : experts) e.params(out);
    return out;
  }

  std::vector<Param*> actor_params() {
    std::vector<Param*> out;
    actor.params(out);
    return out;
  }

  // Everything the critic loss (plus temperature loss) updates: all
  // components except the policy. Target networks are excluded; they move
  // only via polyak averaging.
  std::vector<Param*> non_actor_params() {
    std::vector<Param*> out = expert_params();
    out.push_back(&task_embedding);
    task_mlp.params(out);
    lstm.params(out);
    attention_proj.params(out);
    critic1.params(out);
    critic2.params(out);
    out.push_back(&log_alpha);
    return out;
  }

  std::vector<Param*> all_params() {
    std::vector<Param*> out = non_actor_params();
    actor.params(out);
    return out;
  }

  std::vector<Param*> target_params() {
    std::vector<Param*> out;
    target1.params(out);
    target2.params(out);
    return out;
  }

  void zero_all_grads() {
    for (Param* p : all_params()) p->zero_grad();
  }

  void polyak_update(double tau) {
    std::vector<Param*> src, dst;
    critic1.params(src);
    critic2.params(src);
    target1.params(dst);
    target2.params(dst);
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i]->value = (1.0 - tau) * dst[i]->value + tau * src[i]->value;
  }

  double alpha_for_task(int task_id) const { return std::exp(log_alpha.value(task_id, 0)); }

  // members are public: the trainer and checkpointing walk them directly
  std::vector<nn::Mlp> experts;
  Param task_embedding;  // E x N, column per task
  nn::Mlp task_mlp;
  nn::LstmCell lstm;
  nn::Linear attention_proj;
  nn::Mlp actor;
  nn::Mlp critic1, critic2;
  nn::Mlp target1, target2;
  Param log_alpha;  // N x 1

 private:
  Var embed_col(Tape& t, int task_id) {
    // Leaf over the full embedding then a column pick, so gradients land in
    // the right column of task_embedding.
    Var emb = task_embedding.use(t);
    int id = emb.id;
    Mat col = task_embedding.value.col(task_id);
    const Eigen::Index r = task_embedding.value.rows(), c = task_embedding.value.cols();
    return t.make(col, [id, task_id, r, c](Tape& tp, const Mat& g) {
      Mat full = Mat::Zero(r, c);
      full.col(task_id) = g;
      tp.accumulate(id, full);
    });
  }

  ModelConfig cfg_;
};

}  // namespace cmta::model

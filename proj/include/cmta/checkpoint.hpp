#pragma once

// Versioned binary checkpoints: model architecture, every parameter with its
// Adam state, target networks, temperatures, RNG state, and the env-step
// counter. Loading into a model restores bit-identical training behavior.

#include "cmta/model.hpp"
#include "cmta/nn.hpp"
#include "cmta/rng.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmta::ckpt {

inline constexpr char kMagic[8] = {'C', 'M', 'T', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline void write_mat(std::ostream& os, const nn::Mat& m) {
  write_i64(os, m.rows());
  write_i64(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

inline nn::Mat read_mat(std::istream& is) {
  const auto r = read_i64(is);
  const auto c = read_i64(is);
  if (r < 0 || c < 0 || r * c > (1LL << 32)) throw CheckpointError("corrupt matrix header");
  nn::Mat m(r, c);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  return m;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_i64(os, static_cast<std::int64_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_i64(is);
  if (n < 0 || n > (1 << 20)) throw CheckpointError("corrupt string header");
  std::string s(static_cast<std::size_t>(n), '\0');
  is.read(s.data(), n);
  return s;
}

inline void write_index_vec(std::ostream& os, const std::vector<Eigen::Index>& v) {
  write_i64(os, static_cast<std::int64_t>(v.size()));
  for (auto x : v) write_i64(os, x);
}

inline std::vector<Eigen::Index> read_index_vec(std::istream& is) {
  const auto n = read_i64(is);
  if (n < 0 || n > 64) throw CheckpointError("corrupt layer list");
  std::vector<Eigen::Index> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = read_i64(is);
  return v;
}

}  // namespace detail

inline void write_model_config(std::ostream& os, const model::ModelConfig& c) {
  using namespace detail;
  write_u32(os, c.arch == model::Arch::Cmta ? 0u : 1u);
  write_i64(os, c.state_dim);
  write_i64(os, c.action_dim);
  write_i64(os, c.n_tasks);
  write_i64(os, c.n_experts);
  write_index_vec(os, c.expert_hidden);
  write_i64(os, c.expert_out);
  write_i64(os, c.task_embedding_dim);
  write_index_vec(os, c.task_encoder_hidden);
  write_i64(os, c.task_encoder_out);
  write_i64(os, c.lstm_hidden);
  write_index_vec(os, c.actor_hidden);
  write_index_vec(os, c.critic_hidden);
  write_u32(os, c.temporal_attention ? 1u : 0u);
}

inline model::ModelConfig read_model_config(std::istream& is) {
  using namespace detail;
  model::ModelConfig c;
  c.arch = read_u32(is) == 0u ? model::Arch::Cmta : model::Arch::Shared;
  c.state_dim = static_cast<int>(read_i64(is));
  c.action_dim = static_cast<int>(read_i64(is));
  c.n_tasks = static_cast<int>(read_i64(is));
  c.n_experts = static_cast<int>(read_i64(is));
  c.expert_hidden = read_index_vec(is);
  c.expert_out = static_cast<int>(read_i64(is));
  c.task_embedding_dim = static_cast<int>(read_i64(is));
  c.task_encoder_hidden = read_index_vec(is);
  c.task_encoder_out = static_cast<int>(read_i64(is));
  c.lstm_hidden = static_cast<int>(read_i64(is));
  c.actor_hidden = read_index_vec(is);
  c.critic_hidden = read_index_vec(is);
  c.temporal_attention = read_u32(is) != 0u;
  return c;
}

struct TrainerState {
  std::int64_t critic_adam_steps = 0;
  std::int64_t actor_adam_steps = 0;
  std::string rng_state;
  std::int64_t env_steps = 0;
};

inline void save(const std::string& path, model::CmtaModel& m, const TrainerState& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof kMagic);
  detail::write_u32(os, kVersion);
  write_model_config(os, m.config());

  auto params = m.all_params();
  auto targets = m.target_params();
  detail::write_i64(os, static_cast<std::int64_t>(params.size()));
  for (nn::Param* p : params) {
    detail::write_string(os, p->name);
    detail::write_mat(os, p->value);
    detail::write_mat(os, p->m);
    detail::write_mat(os, p->v);
  }
  detail::write_i64(os, static_cast<std::int64_t>(targets.size()));
  for (nn::Param* p : targets) detail::write_mat(os, p->value);

  detail::write_i64(os, ts.critic_adam_steps);
  detail::write_i64(os, ts.actor_adam_steps);
  detail::write_string(os, ts.rng_state);
  detail::write_i64(os, ts.env_steps);
  if (!os) throw CheckpointError("write failure: " + path);
}

// Reads the header only; the caller constructs a model from the returned
// config and then calls load_into.
inline model::ModelConfig peek_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw CheckpointError("not a checkpoint file: " + path);
  const auto version = detail::read_u32(is);
  if (version != kVersion)
    throw CheckpointError("checkpoint version mismatch: found " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
  return read_model_config(is);
}

inline TrainerState load_into(const std::string& path, model::CmtaModel& m) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  is.seekg(8 + sizeof(std::uint32_t));
  (void)read_model_config(is);

  auto params = m.all_params();
  const auto n = detail::read_i64(is);
  if (n != static_cast<std::int64_t>(params.size()))
    throw CheckpointError("checkpoint parameter count mismatch");
  for (nn::Param* p : params) {
    const std::string name = detail::read_string(is);
    if (name != p->name) throw CheckpointError("parameter order mismatch at " + name);
    nn::Mat value = detail::read_mat(is);
    nn::Mat mm = detail::read_mat(is);
    nn::Mat vv = detail::read_mat(is);
    if (value.rows() != p->value.rows() || value.cols() != p->value.cols())
      throw CheckpointError("parameter shape mismatch at " + name);
    p->value = value;
    p->m = mm;
    p->v = vv;
    p->zero_grad();
  }
  auto targets = m.target_params();
  const auto nt = detail::read_i64(is);
  if (nt != static_cast<std::int64_t>(targets.size()))
    throw CheckpointError("checkpoint target count mismatch");
  for (nn::Param* p : targets) p->value = detail::read_mat(is);

  TrainerState ts;
  ts.critic_adam_steps = detail::read_i64(is);
  ts.actor_adam_steps = detail::read_i64(is);
  ts.rng_state = detail::read_string(is);
  ts.env_steps = detail::read_i64(is);
  if (!is) throw CheckpointError("truncated checkpoint: " + path);
  return ts;
}

}  // namespace cmta::ckpt

#pragma once

// Run configuration: documented defaults, INI-style config files
// (section/key=value), and an echo of the resolved config for
// reproducibility. Unknown keys are rejected.

#include "cmta/model.hpp"
#include "cmta/trainer.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmta::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // [run]
  std::string suite = "MT3-Mixed";
  std::uint64_t seed = 0;
  long steps_per_task = 2'400'000;
  std::string output_dir = "runs/default";
  int eval_episodes = 10;
  long checkpoint_every = 50'000;

  // [model]
  std::string arch = "cmta";  // cmta | shared
  int experts = 6;
  std::vector<Eigen::Index> expert_hidden = {64, 64};
  int expert_out = 64;
  int task_embedding_dim = 64;
  std::vector<Eigen::Index> task_encoder_hidden = {128, 64};
  int task_encoder_out = 64;
  int lstm_hidden = 64;
  std::vector<Eigen::Index> actor_hidden = {512, 512, 512};
  std::vector<Eigen::Index> critic_hidden = {512, 512, 512};
  bool temporal = true;

  // [train]
  int batch_per_task = 128;
  double gamma = 0.99;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double beta = 2500.0;
  bool contrastive = true;
  double contrastive_tau = 0.1;
  bool contrastive_l2_normalize = false;
  int horizon = 150;
  int warmup_steps = 1500;
  int train_every = 1;
  int eval_every = 3000;
  double polyak = 0.005;
  std::uint64_t buffer_capacity = 5'000'000;

  model::ModelConfig to_model_config(int n_tasks) const {
    model::ModelConfig mc;
    if (arch == "cmta") {
      mc.arch = model::Arch::Cmta;
    } else if (arch == "shared") {
      mc.arch = model::Arch::Shared;
    } else {
      throw ConfigError("model.arch must be 'cmta' or 'shared', got '" + arch + "'");
    }
    mc.state_dim = envs::kObsDim;
    mc.action_dim = envs::kActDim;
    mc.n_tasks = n_tasks;
    mc.n_experts = mc.arch == model::Arch::Shared ? 1 : experts;
    mc.expert_hidden = expert_hidden;
    mc.expert_out = expert_out;
    mc.task_embedding_dim = task_embedding_dim;
    mc.task_encoder_hidden = task_encoder_hidden;
    mc.task_encoder_out = task_encoder_out;
    mc.lstm_hidden = lstm_hidden;
    mc.actor_hidden = actor_hidden;
    mc.critic_hidden = critic_hidden;
    mc.temporal_attention = temporal;
    return mc;
  }

  train::TrainConfig to_train_config(int n_tasks) const {
    train::TrainConfig tc;
    tc.n_tasks = n_tasks;
    tc.batch_per_task = batch_per_task;
    tc.gamma = gamma;
    tc.lr_actor = lr_actor;
    tc.lr_critic = lr_critic;
    tc.beta = beta;
    tc.contrastive_enabled = contrastive && arch != "shared";
    tc.contrastive_tau = contrastive_tau;
    tc.contrastive_l2_normalize = contrastive_l2_normalize;
    tc.horizon = horizon;
    tc.warmup_steps = warmup_steps;
    tc.train_every = train_every;
    tc.eval_every = eval_every;
    tc.polyak = polyak;
    tc.target_entropy = -static_cast<double>(envs::kActDim);
    tc.buffer_capacity = buffer_capacity;
    return tc;
  }

  void validate() const {
    (void)envs::register_suite(suite);  // throws on unknown suite
    if (steps_per_task <= 0) throw ConfigError("run.steps_per_task must be positive");
    if (eval_episodes <= 0) throw ConfigError("run.eval_episodes must be positive");
    if (checkpoint_every <= 0) throw ConfigError("run.checkpoint_every must be positive");
    if (arch == "cmta" && experts < 2)
      throw ConfigError("model.experts must be >= 2 for the cmta arch");
    if (arch == "shared" && contrastive)
      throw ConfigError("train.contrastive must be off for the shared arch");
    if (contrastive_tau <= 0.0) throw ConfigError("train.contrastive_tau must be positive");
    if (batch_per_task <= 0 || horizon <= 0 || train_every <= 0 || eval_every <= 0)
      throw ConfigError("train counts must be positive");
    if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("train.gamma must be in (0,1)");
    if (polyak <= 0.0 || polyak > 1.0) throw ConfigError("train.polyak must be in (0,1]");
    if (buffer_capacity == 0) throw ConfigError("train.buffer_capacity must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<Eigen::Index> parse_dims(const std::string& s, const std::string& key) {
  std::vector<Eigen::Index> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stol(item));
    } catch (const std::exception&) {
      throw ConfigError("bad layer list for " + key + ": '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty layer list for " + key);
  return out;
}

inline std::string dims_to_string(const std::vector<Eigen::Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw ConfigError(key + " must be on/off, got '" + s + "'");
}

template <typename T>
T parse_num(const std::string& s, const std::string& key) {
  std::istringstream is(s);
  T v{};
  is >> v;
  if (is.fail()) throw ConfigError("bad numeric value for " + key + ": '" + s + "'");
  return v;
}

}  // namespace detail

// Applies one "section.key" assignment. Throws ConfigError on unknown keys.
inline void set_key(RunConfig& c, const std::string& section, const std::string& key,
                    const std::string& value) {
  using namespace detail;
  const std::string full = section + "." + key;
  if (section == "run") {
    if (key == "suite") c.suite = value;
    else if (key == "seed") c.seed = parse_num<std::uint64_t>(value, full);
    else if (key == "steps_per_task") c.steps_per_task = parse_num<long>(value, full);
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "eval_episodes") c.eval_episodes = parse_num<int>(value, full);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_num<long>(value, full);
    else throw ConfigError("unknown config key: " + full);
  } else if (section == "model") {
    if (key == "arch") c.arch = value;
    else if (key == "experts") c.experts = parse_num<int>(value, full);
    else if (key == "expert_hidden") c.expert_hidden = parse_dims(value, full);
    else if (key == "expert_out") c.expert_out = parse_num<int>(value, full);
    else if (key == "task_embedding_dim") c.task_embedding_dim = parse_num<int>(value, full);
    else if (key == "task_encoder_hidden") c.task_encoder_hidden = parse_dims(value, full);
    else if (key == "task_encoder_out") c.task_encoder_out = parse_num<int>(value, full);
    else if (key == "lstm_hidden") c.lstm_hidden = parse_num<int>(value, full);
    else if (key == "actor_hidden") c.actor_hidden = parse_dims(value, full);
    else if (key == "critic_hidden") c.critic_hidden = parse_dims(value, full);
    else if (key == "temporal") c.temporal = parse_bool(value, full);
    else throw ConfigError("unknown config key: " + full);
  } else if (section == "train") {
    if (key == "batch_per_task") c.batch_per_task = parse_num<int>(value, full);
    else if (key == "gamma") c.gamma = parse_num<double>(value, full);
    else if (key == "lr_actor") c.lr_actor = parse_num<double>(value, full);
    else if (key == "lr_critic") c.lr_critic = parse_num<double>(value, full);
    else if (key == "beta") c.beta = parse_num<double>(value, full);
    else if (key == "contrastive") c.contrastive = parse_bool(value, full);
    else if (key == "contrastive_tau") c.contrastive_tau = parse_num<double>(value, full);
    else if (key == "contrastive_l2_normalize")
      c.contrastive_l2_normalize = parse_bool(value, full);
    else if (key == "horizon") c.horizon = parse_num<int>(value, full);
    else if (key == "warmup_steps") c.warmup_steps = parse_num<int>(value, full);
    else if (key == "train_every") c.train_every = parse_num<int>(value, full);
    else if (key == "eval_every") c.eval_every = parse_num<int>(value, full);
    else if (key == "polyak") c.polyak = parse_num<double>(value, full);
    else if (key == "buffer_capacity") c.buffer_capacity = parse_num<std::uint64_t>(value, full);
    else throw ConfigError("unknown config key: " + full);
  } else {
    throw ConfigError("unknown config section: [" + section + "]");
  }
}

inline RunConfig parse_ini(std::istream& is, RunConfig base = {}) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      section = detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    set_key(base, section, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_file(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  return parse_ini(is, std::move(base));
}

inline std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "[run]\n";
  os << "suite = " << c.suite << "\n";
  os << "seed = " << c.seed << "\n";
  os << "steps_per_task = " << c.steps_per_task << "\n";
  os << "output_dir = " << c.output_dir << "\n";
  os << "eval_episodes = " << c.eval_episodes << "\n";
  os << "checkpoint_every = " << c.checkpoint_every << "\n";
  os << "\n[model]\n";
  os << "arch = " << c.arch << "\n";
  os << "experts = " << c.experts << "\n";
  os << "expert_hidden = " << detail::dims_to_string(c.expert_hidden) << "\n";
  os << "expert_out = " << c.expert_out << "\n";
  os << "task_embedding_dim = " << c.task_embedding_dim << "\n";
  os << "task_encoder_hidden = " << detail::dims_to_string(c.task_encoder_hidden) << "\n";
  os << "task_encoder_out = " << c.task_encoder_out << "\n";
  os << "lstm_hidden = " << c.lstm_hidden << "\n";
  os << "actor_hidden = " << detail::dims_to_string(c.actor_hidden) << "\n";
  os << "critic_hidden = " << detail::dims_to_string(c.critic_hidden) << "\n";
  os << "temporal = " << (c.temporal ? "on" : "off") << "\n";
  os << "\n[train]\n";
  os << "batch_per_task = " << c.batch_per_task << "\n";
  os << "gamma = " << c.gamma << "\n";
  os << "lr_actor = " << c.lr_actor << "\n";
  os << "lr_critic = " << c.lr_critic << "\n";
  os << "beta = " << c.beta << "\n";
  os << "contrastive = " << (c.contrastive ? "on" : "off") << "\n";
  os << "contrastive_tau = " << c.contrastive_tau << "\n";
  os << "contrastive_l2_normalize = " << (c.contrastive_l2_normalize ? "on" : "off") << "\n";
  os << "horizon = " << c.horizon << "\n";
  os << "warmup_steps = " << c.warmup_steps << "\n";
  os << "train_every = " << c.train_every << "\n";
  os << "eval_every = " << c.eval_every << "\n";
  os << "polyak = " << c.polyak << "\n";
  os << "buffer_capacity = " << c.buffer_capacity << "\n";
  return os.str();
}

}  // namespace cmta::config

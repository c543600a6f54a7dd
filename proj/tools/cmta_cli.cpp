// Command-line front end: train / eval / export-embeddings.
//
// Exit codes: 0 success, 2 configuration error, 3 checkpoint error,
// 4 runtime fault.

#include "cmta/cmta.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitRuntime = 4;

std::string default_output_root() {
  if (const char* env = std::getenv("CMTA_OUTPUT_ROOT")) return env;
  return "runs";
}

struct TrainFlags {
  std::string config_file;
  std::optional<std::string> suite, arch, out;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<int> experts, horizon, batch, eval_every, warmup, train_every, eval_episodes;
  std::optional<double> beta, tau, gamma, lr, polyak;
  std::optional<std::string> contrastive, temporal;  // on/off
  std::optional<std::string> actor_hidden, critic_hidden, expert_hidden;
  std::optional<int> expert_out, lstm_hidden;
  std::optional<long> checkpoint_every;
};

cmta::config::RunConfig resolve_config(const TrainFlags& f) {
  cmta::config::RunConfig cfg;
  if (!f.config_file.empty()) cfg = cmta::config::load_file(f.config_file, cfg);
  // Flags win over the config file.
  if (f.suite) cfg.suite = *f.suite;
  if (f.arch) cfg.arch = *f.arch;
  if (f.out) cfg.output_dir = *f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.steps) cfg.steps_per_task = *f.steps;
  if (f.experts) cfg.experts = *f.experts;
  if (f.horizon) cfg.horizon = *f.horizon;
  if (f.batch) cfg.batch_per_task = *f.batch;
  if (f.eval_every) cfg.eval_every = *f.eval_every;
  if (f.eval_episodes) cfg.eval_episodes = *f.eval_episodes;
  if (f.warmup) cfg.warmup_steps = *f.warmup;
  if (f.train_every) cfg.train_every = *f.train_every;
  if (f.beta) cfg.beta = *f.beta;
  if (f.tau) cfg.contrastive_tau = *f.tau;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.lr) {
    cfg.lr_actor = *f.lr;
    cfg.lr_critic = *f.lr;
  }
  if (f.polyak) cfg.polyak = *f.polyak;
  if (f.contrastive) {
    cfg.contrastive = cmta::config::detail::parse_bool(*f.contrastive, "--contrastive");
    if (!cfg.contrastive) cfg.beta = 0.0;  // 'off' is the beta = 0 ablation
  }
  if (f.temporal) cfg.temporal = cmta::config::detail::parse_bool(*f.temporal, "--temporal");
  if (f.expert_hidden)
    cfg.expert_hidden = cmta::config::detail::parse_dims(*f.expert_hidden, "--expert-hidden");
  if (f.actor_hidden)
    cfg.actor_hidden = cmta::config::detail::parse_dims(*f.actor_hidden, "--actor-hidden");
  if (f.critic_hidden)
    cfg.critic_hidden = cmta::config::detail::parse_dims(*f.critic_hidden, "--critic-hidden");
  if (f.expert_out) cfg.expert_out = *f.expert_out;
  if (f.lstm_hidden) cfg.lstm_hidden = *f.lstm_hidden;
  if (f.checkpoint_every) cfg.checkpoint_every = *f.checkpoint_every;
  if (cfg.arch == "shared") cfg.contrastive = false;
  if (!f.out && f.config_file.empty())
    cfg.output_dir = default_output_root() + "/" + cfg.suite + "-seed" + std::to_string(cfg.seed);
  cfg.validate();
  return cfg;
}

// Loads a checkpoint into a freshly constructed model.
std::unique_ptr<cmta::model::CmtaModel> load_model(const std::string& path) {
  cmta::model::ModelConfig mc = cmta::ckpt::peek_config(path);
  cmta::Rng init_rng(0);
  auto m = std::make_unique<cmta::model::CmtaModel>(mc, init_rng);
  cmta::ckpt::load_into(path, *m);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CMTA multi-task RL laboratory: contrastively-regularized expert\n"
               "modules composed per time step by temporal attention, trained with\n"
               "SAC on a built-in planar control suite."};
  app.require_subcommand(1);

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train an agent and write metrics/checkpoints");
  TrainFlags tf;
  train->add_option("--config", tf.config_file, "INI config file; flags override its values");
  train->add_option("--suite", tf.suite, "MT3-Fixed | MT3-Mixed | MT5-Fixed | MT5-Mixed");
  train->add_option("--arch", tf.arch, "cmta | shared (single-expert reference)");
  train->add_option("--seed", tf.seed, "master seed (default 0)");
  train->add_option("--steps", tf.steps, "env steps per task (default 2400000)");
  train->add_option("--out", tf.out, "output directory (default $CMTA_OUTPUT_ROOT/<suite>-seed<seed>)");
  train->add_option("--experts", tf.experts, "number of expert encoders K (default 6)");
  train->add_option("--beta", tf.beta, "contrastive loss weight (default 2500)");
  train->add_option("--tau", tf.tau, "contrastive temperature (default 0.1)");
  train->add_option("--contrastive", tf.contrastive, "on|off; off forces beta = 0");
  train->add_option("--temporal", tf.temporal, "on|off attention over temporal context");
  train->add_option("--horizon", tf.horizon, "episode step limit (default 150)");
  train->add_option("--batch", tf.batch, "batch size per task (default 128)");
  train->add_option("--gamma", tf.gamma, "discount (default 0.99)");
  train->add_option("--lr", tf.lr, "actor and critic learning rate (default 3e-4)");
  train->add_option("--polyak", tf.polyak, "target update rate (default 0.005)");
  train->add_option("--warmup", tf.warmup, "uniform exploration steps (default 1500)");
  train->add_option("--train-every", tf.train_every, "env steps per train step (default 1)");
  train->add_option("--eval-every", tf.eval_every, "evaluation cadence in steps (default 3000)");
  train->add_option("--eval-episodes", tf.eval_episodes, "episodes per task per eval (default 10)");
  train->add_option("--expert-hidden", tf.expert_hidden, "expert hidden sizes, e.g. 64,64");
  train->add_option("--expert-out", tf.expert_out, "expert encoding dim (default 64)");
  train->add_option("--lstm-hidden", tf.lstm_hidden, "LSTM hidden dim (default 64)");
  train->add_option("--actor-hidden", tf.actor_hidden, "actor hidden sizes, e.g. 512,512,512");
  train->add_option("--critic-hidden", tf.critic_hidden, "critic hidden sizes");
  train->add_option("--checkpoint-every", tf.checkpoint_every, "checkpoint cadence (default 50000)");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's deterministic policy");
  std::string eval_ckpt, eval_suite = "MT3-Fixed", eval_csv;
  int eval_episodes = 10, eval_horizon = 150;
  std::uint64_t eval_seed = 0;
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--suite", eval_suite, "suite to evaluate on");
  eval->add_option("--episodes", eval_episodes, "episodes per task");
  eval->add_option("--horizon", eval_horizon, "episode step limit");
  eval->add_option("--seed", eval_seed, "seed for Mixed-variant draws");
  eval->add_option("--csv", eval_csv, "also write the report as CSV");

  // ---- export-embeddings ----
  auto* exp = app.add_subcommand("export-embeddings",
                                 "Roll episodes and dump per-step expert encodings + attention");
  std::string exp_ckpt, exp_suite = "MT3-Fixed", exp_out = "embeddings.csv";
  int exp_episodes = 10, exp_horizon = 150;
  std::uint64_t exp_seed = 0;
  exp->add_option("checkpoint", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--suite", exp_suite, "suite to roll out on");
  exp->add_option("--episodes", exp_episodes, "episodes per task (default 10)");
  exp->add_option("--horizon", exp_horizon, "episode step limit");
  exp->add_option("--seed", exp_seed, "seed for Mixed-variant draws");
  exp->add_option("--out", exp_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      cmta::config::RunConfig cfg;
      try {
        cfg = resolve_config(tf);
      } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      } catch (const cmta::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
      }
      auto result = cmta::run::train_run(cfg);
      std::cout << "max = " << result.max << "\n";
      std::cout << "max_smoothed@0.8 = " << result.max_smoothed << "\n";
      std::cout << "artifacts in " << cfg.output_dir << "\n";
      return 0;
    }

    if (eval->parsed()) {
      std::unique_ptr<cmta::model::CmtaModel> m;
      try {
        m = load_model(eval_ckpt);
      } catch (const cmta::ckpt::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
      }
      auto specs = cmta::envs::register_suite(eval_suite);
      if (static_cast<int>(specs.size()) != m->config().n_tasks) {
        std::cerr << "config error: checkpoint was trained for " << m->config().n_tasks
                  << " tasks but suite '" << eval_suite << "' has " << specs.size() << "\n";
        return kExitConfig;
      }
      cmta::Rng rng(eval_seed);
      auto report = cmta::metrics::evaluate(*m, specs, eval_horizon, eval_episodes, rng);
      for (std::size_t i = 0; i < specs.size(); ++i)
        std::cout << specs[i].name << ": " << report.per_task[i] << "\n";
      std::cout << "mean: " << report.mean << "\n";
      if (!eval_csv.empty()) {
        std::ofstream out(eval_csv);
        out.precision(17);
        out << "task_id,task_name,success_rate,mean_success_rate\n";
        for (std::size_t i = 0; i < specs.size(); ++i)
          out << i << ',' << specs[i].name << ',' << report.per_task[i] << ',' << report.mean
              << '\n';
      }
      return 0;
    }

    if (exp->parsed()) {
      std::unique_ptr<cmta::model::CmtaModel> m;
      try {
        m = load_model(exp_ckpt);
      } catch (const cmta::ckpt::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return kExitCheckpoint;
      }
      auto specs = cmta::envs::register_suite(exp_suite);
      if (static_cast<int>(specs.size()) != m->config().n_tasks) {
        std::cerr << "config error: checkpoint/suite task count mismatch\n";
        return kExitConfig;
      }
      cmta::Rng rng(exp_seed);
      cmta::run::export_embeddings(*m, specs, exp_horizon, exp_episodes, exp_out, rng);
      std::cout << "wrote " << exp_out << "\n";
      return 0;
    }
  } catch (const cmta::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const cmta::ckpt::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

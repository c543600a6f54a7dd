#pragma once

// Full training run orchestration: collection, updates, periodic evaluation,
// metrics/checkpoint/summary artifacts, and the expert-embedding export.

#include "cmta/checkpoint.hpp"
#include "cmta/config.hpp"
#include "cmta/metrics.hpp"
#include "cmta/trainer.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace cmta::run {

namespace fs = std::filesystem;

// Exclusive lock on an output directory. Holding process removes the lock
// file on destruction; a stale or concurrent lock is a hard error.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw std::runtime_error("output directory is locked by another run: " + dir.string());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

inline std::string format_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct RunResult {
  metrics::MetricSeries mean_success;
  double final_mean = 0.0;
  double max = 0.0;
  double max_smoothed = 0.0;
  std::string final_checkpoint;
};

// Writes the embedding CSV: one row per (task, episode, step, expert).
inline void export_embeddings(const model::CmtaModel& m, const std::vector<envs::TaskSpec>& specs,
                              int horizon, int episodes_per_task, const std::string& path,
                              Rng& rng) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embeddings: " + path);
  out.precision(17);
  const int d = m.config().expert_out;
  out << "task_id,episode,step,expert_index";
  for (int i = 0; i < d; ++i) out << ",dim_" << i;
  out << ",alpha\n";
  for (std::size_t task = 0; task < specs.size(); ++task) {
    envs::Env env(specs[task], horizon);
    for (int ep = 0; ep < episodes_per_task; ++ep) {
      Eigen::VectorXd obs = env.reset_random(rng);
      nn::LstmState hidden = m.zero_state();
      for (int step = 0;; ++step) {
        const nn::LstmState h_curr = m.lstm.eval(obs, hidden);
        auto fwd = m.eval_forward(obs, static_cast<int>(task), h_curr);
        for (int j = 0; j < m.config().n_experts; ++j) {
          out << task << ',' << ep << ',' << step << ',' << j;
          for (int i = 0; i < d; ++i) out << ',' << fwd.expert_encodings[j](i);
          out << ',' << fwd.alpha(j) << '\n';
        }
        Eigen::VectorXd a = dist::deterministic_action(m.actor_mean(fwd.z));
        auto result = env.step(envs::Vec2(a(0), a(1)));
        if (result.done) break;
        obs = result.observation;
        hidden = h_curr;
      }
    }
  }
}

// Trains per the config, producing metrics.csv, summary.txt, the resolved
// config, a suite manifest, and periodic + final checkpoints under
// cfg.output_dir. `quiet` suppresses progress lines.
inline RunResult train_run(const config::RunConfig& cfg, bool quiet = false) {
  cfg.validate();
  const auto specs = envs::register_suite(cfg.suite);
  const int n_tasks = static_cast<int>(specs.size());

  fs::path out_dir(cfg.output_dir);
  DirLock lock(out_dir);

  {
    std::ofstream cfg_out(out_dir / "config_resolved.ini");
    cfg_out << config::to_ini(cfg);
  }
  envs::write_manifest(specs, (out_dir / "suite_manifest.txt").string());

  Rng rng(cfg.seed);
  // Separate evaluation stream so eval cadence never perturbs training.
  Rng eval_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);

  model::ModelConfig mc = cfg.to_model_config(n_tasks);
  train::TrainConfig tc = cfg.to_train_config(n_tasks);
  model::CmtaModel m(mc, rng);
  train::Trainer trainer(m, tc);
  replay::ReplayBuffer buffer(n_tasks, tc.buffer_capacity);

  std::vector<train::Trainer::EnvSlot> slots;
  slots.reserve(static_cast<std::size_t>(n_tasks));
  for (const auto& spec : specs) slots.emplace_back(spec, tc.horizon);

  std::ofstream metrics_csv(out_dir / "metrics.csv");
  metrics_csv << "step,task_id,success_rate,mean_success_rate\n";

  RunResult result;
  auto run_eval = [&](long step) {
    auto report = metrics::evaluate(m, specs, tc.horizon, cfg.eval_episodes, eval_rng);
    for (int task = 0; task < n_tasks; ++task)
      metrics_csv << step << ',' << task << ',' << format_value(report.per_task[task]) << ','
                  << format_value(report.mean) << '\n';
    metrics_csv.flush();
    result.mean_success.add(step, report.mean);
    result.final_mean = report.mean;
    if (!quiet)
      std::cout << "step " << step << "  mean success " << report.mean << std::endl;
  };

  auto save_ckpt = [&](const std::string& name, long step) {
    ckpt::TrainerState ts;
    ts.critic_adam_steps = trainer.optimizer().step_count();
    ts.actor_adam_steps = trainer.actor_optimizer().step_count();
    ts.rng_state = rng.serialize();
    ts.env_steps = step;
    const std::string path = (out_dir / name).string();
    ckpt::save(path, m, ts);
    return path;
  };

  for (long step = 1; step <= cfg.steps_per_task; ++step) {
    trainer.collect_step(slots, buffer, rng, step - 1);
    if (step > tc.warmup_steps && step % tc.train_every == 0) trainer.train_step(buffer, rng);
    if (step % tc.eval_every == 0) run_eval(step);
    if (step % cfg.checkpoint_every == 0)
      save_ckpt("ckpt_" + std::to_string(step) + ".bin", step);
  }
  if (cfg.steps_per_task % tc.eval_every != 0) run_eval(cfg.steps_per_task);

  result.final_checkpoint = save_ckpt("final.bin", cfg.steps_per_task);
  result.max = metrics::max_raw(result.mean_success);
  result.max_smoothed = metrics::max_smoothed(result.mean_success, 0.8);

  std::ofstream summary(out_dir / "summary.txt");
  summary << "suite = " << cfg.suite << "\n";
  summary << "seed = " << cfg.seed << "\n";
  summary << "steps_per_task = " << cfg.steps_per_task << "\n";
  summary << "max = " << format_value(result.max) << "\n";
  summary << "max_smoothed@0.8 = " << format_value(result.max_smoothed) << "\n";
  summary << "final_mean_success = " << format_value(result.final_mean) << "\n";
  return result;
}

}  // namespace cmta::run

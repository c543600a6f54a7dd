#pragma once

// Success-rate evaluation with a deterministic policy, plus the smoothed
// series machinery behind the max-smoothed success-rate metric.

#include "cmta/envs.hpp"
#include "cmta/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace cmta::metrics {

struct MetricSeries {
  struct Point {
    long step;
    double value;
  };
  std::vector<Point> points;

  void add(long step, double value) {
    if (!points.empty() && step <= points.back().step)
      throw std::invalid_argument("metric series: steps must be strictly increasing");
    points.push_back({step, value});
  }
};

// s[0] = p[0]; s[i] = s[i-1]*factor + p[i]*(1-factor).
inline MetricSeries smooth(const MetricSeries& series, double factor) {
  if (factor < 0.0 || factor >= 1.0)
    throw std::invalid_argument("smooth: factor must be in [0,1)");
  MetricSeries out;
  double prev = 0.0;
  for (std::size_t i = 0; i < series.points.size(); ++i) {
    const double v = i == 0 ? series.points[i].value
                            : prev * factor + series.points[i].value * (1.0 - factor);
    out.points.push_back({series.points[i].step, v});
    prev = v;
  }
  return out;
}

inline double max_raw(const MetricSeries& series) {
  if (series.points.empty()) throw std::invalid_argument("max_raw: empty series");
  double m = series.points[0].value;
  for (const auto& p : series.points) m = std::max(m, p.value);
  return m;
}

inline double max_smoothed(const MetricSeries& series, double factor = 0.8) {
  return max_raw(smooth(series, factor));
}

struct EvalReport {
  std::vector<double> per_task;
  double mean = 0.0;
};

// Runs `episodes_per_task` episodes per task with the deterministic policy
// (tanh of the actor mean). On Fixed suites this is fully deterministic; on
// Mixed suites variants are drawn from `rng`.
inline EvalReport evaluate(const model::CmtaModel& m, const std::vector<envs::TaskSpec>& specs,
                           int horizon, int episodes_per_task, Rng& rng) {
  if (episodes_per_task <= 0) throw std::invalid_argument("evaluate: need at least one episode");
  EvalReport report;
  for (std::size_t task = 0; task < specs.size(); ++task) {
    envs::Env env(specs[task], horizon);
    int successes = 0;
    for (int ep = 0; ep < episodes_per_task; ++ep) {
      Eigen::VectorXd obs = env.reset_random(rng);
      nn::LstmState hidden = m.zero_state();
      bool success = false;
      while (true) {
        const nn::LstmState h_curr = m.lstm.eval(obs, hidden);
        auto fwd = m.eval_forward(obs, static_cast<int>(task), h_curr);
        Eigen::VectorXd a = dist::deterministic_action(m.actor_mean(fwd.z));
        auto result = env.step(envs::Vec2(a(0), a(1)));
        if (result.done) {
          success = result.success;
          break;
        }
        obs = result.observation;
        hidden = h_curr;
      }
      if (success) ++successes;
    }
    report.per_task.push_back(static_cast<double>(successes) / episodes_per_task);
  }
  double sum = 0.0;
  for (double v : report.per_task) sum += v;
  report.mean = sum / static_cast<double>(report.per_task.size());
  return report;
}

}  // namespace cmta::metrics

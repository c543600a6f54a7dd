#pragma once

// Shared replay buffer partitioned per task: FIFO ring per task id, uniform
// sampling within a task. Each record carries the LSTM states observed when
// the action was taken, so updates can recompute h_t with a one-step
// gradient.

#include "cmta/nn.hpp"
#include "cmta/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cmta::replay {

struct TransitionRecord {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  nn::LstmState h_prev;  // state fed to the LSTM when acting (h_{t-1})
  nn::LstmState h_curr;  // LSTM output at this step (h_t)
  int task_id = 0;
  bool terminal = false;  // true terminal only; horizon timeouts keep the bootstrap
};

class ReplayBuffer {
 public:
  // `capacity` is per task.
  ReplayBuffer(int n_tasks, std::size_t capacity)
      : capacity_(capacity), rings_(static_cast<std::size_t>(n_tasks)) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void append(TransitionRecord rec) {
    auto& ring = rings_.at(static_cast<std::size_t>(rec.task_id));
    if (ring.data.size() < capacity_) {
      ring.data.push_back(std::move(rec));
    } else {
      ring.data[ring.head] = std::move(rec);
      ring.head = (ring.head + 1) % capacity_;
    }
  }

  std::size_t size(int task_id) const {
    return rings_.at(static_cast<std::size_t>(task_id)).data.size();
  }

  std::size_t total_size() const {
    std::size_t s = 0;
    for (const auto& r : rings_) s += r.data.size();
    return s;
  }

  std::size_t capacity() const { return capacity_; }
  int n_tasks() const { return static_cast<int>(rings_.size()); }

  // Uniform sample with replacement from one task's ring.
  std::vector<const TransitionRecord*> sample_task(int task_id, std::size_t n, Rng& rng) const {
    const auto& ring = rings_.at(static_cast<std::size_t>(task_id));
    if (ring.data.empty()) throw std::runtime_error("sample from empty task buffer");
    std::vector<const TransitionRecord*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&ring.data[rng.index(ring.data.size())]);
    return out;
  }

  // Oldest-first view of one task's ring (for tests).
  std::vector<const TransitionRecord*> ordered(int task_id) const {
    const auto& ring = rings_.at(static_cast<std::size_t>(task_id));
    std::vector<const TransitionRecord*> out;
    out.reserve(ring.data.size());
    for (std::size_t i = 0; i < ring.data.size(); ++i)
      out.push_back(&ring.data[(ring.head + i) % ring.data.size()]);
    return out;
  }

 private:
  struct Ring {
    std::vector<TransitionRecord> data;
    std::size_t head = 0;  // next eviction slot once full
  };

  std::size_t capacity_;
  std::vector<Ring> rings_;
};

}  // namespace cmta::replay

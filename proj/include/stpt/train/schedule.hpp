#pragma once

#include <cstdint>
#include <vector>

#include "stpt/common.hpp"

namespace stpt::train {

// Mini-batch interleaving by task ratios. The ratios are expanded with the
// smallest integer multiplier that makes every per-cycle count whole; each
// cycle realizes those counts exactly, in an order shuffled from the schedule
// seed and the cycle index.
class TaskSchedule {
 public:
  static TaskSchedule from_ratios(const std::vector<std::pair<Task, double>>& ratios);

  const std::vector<Task>& tasks() const { return tasks_; }
  const std::vector<int>& cycle_counts() const { return counts_; }
  int cycle_length() const { return cycle_length_; }

  std::vector<Task> cycle_order(std::uint64_t seed, std::int64_t cycle_index) const;
  Task task_at(std::uint64_t seed, std::int64_t update_index) const;

 private:
  std::vector<Task> tasks_;
  std::vector<double> ratios_;
  std::vector<int> counts_;
  int cycle_length_ = 0;
};

// Linear warmup to the peak, then inverse square-root decay. t is 1-based.
double learning_rate_at(double peak, std::int64_t warmup, std::int64_t t);

}  // namespace stpt::train

#include "stpt/train/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "stpt/num/rng.hpp"

namespace stpt::train {

TaskSchedule TaskSchedule::from_ratios(const std::vector<std::pair<Task, double>>& ratios) {
  if (ratios.empty()) throw std::invalid_argument("task schedule: no ratios");
  TaskSchedule s;
  double total = 0.0;
  for (const auto& [task, r] : ratios) {
    if (r < 0.0) throw std::invalid_argument("task schedule: negative ratio for " + task_name(task));
    s.tasks_.push_back(task);
    s.ratios_.push_back(r);
    total += r;
  }
  if (total <= 0.0) throw std::invalid_argument("task schedule: all ratios are zero");

  // smallest integer expansion
  const double tol = 1e-9;
  for (int m = 1; m <= 1000000; ++m) {
    bool whole = true;
    for (double r : s.ratios_) {
      const double scaled = r * m;
      if (std::abs(scaled - std::round(scaled)) > tol) {
        whole = false;
        break;
      }
    }
    if (whole) {
      for (double r : s.ratios_) s.counts_.push_back(static_cast<int>(std::llround(r * m)));
      break;
    }
  }
  if (s.counts_.empty()) throw std::invalid_argument("task schedule: ratios have no small integer expansion");
  for (int c : s.counts_) s.cycle_length_ += c;
  return s;
}

std::vector<Task> TaskSchedule::cycle_order(std::uint64_t seed, std::int64_t cycle_index) const {
  std::vector<Task> order;
  order.reserve(static_cast<std::size_t>(cycle_length_));
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    for (int k = 0; k < counts_[i]; ++k) order.push_back(tasks_[i]);
  }
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(cycle_index)));
  rng.shuffle(order);
  return order;
}

Task TaskSchedule::task_at(std::uint64_t seed, std::int64_t update_index) const {
  const std::int64_t cycle = update_index / cycle_length_;
  const std::int64_t pos = update_index % cycle_length_;
  return cycle_order(seed, cycle)[static_cast<std::size_t>(pos)];
}

double learning_rate_at(double peak, std::int64_t warmup, std::int64_t t) {
  if (t < 1) throw std::invalid_argument("learning_rate_at: t is 1-based");
  if (warmup < 1) warmup = 1;
  if (t <= warmup) return peak * static_cast<double>(t) / static_cast<double>(warmup);
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(t));
}

}  // namespace stpt::train

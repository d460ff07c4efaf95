#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stpt/num/tensor.hpp"

namespace stpt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

// Per-parameter moments; step counters advance only when that parameter is
// stepped, so parameters a training stage never touches stay bit-identical.
struct AdamState {
  Arr m;
  Arr v;
  std::int64_t t = 0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg);

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamConfig& config() const { return cfg_; }

  // Bias-corrected Adam update of one parameter; the grad must be populated.
  void apply(const std::string& name, Tensor& param);

  // Updates every registered parameter that has a populated grad, then drops
  // the grads. Returns the number of parameters stepped.
  int step();

  void zero_grads();

  const std::map<std::string, AdamState>& states() const { return states_; }
  std::map<std::string, AdamState>& states() { return states_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, AdamState> states_;
  AdamConfig cfg_;
};

}  // namespace stpt

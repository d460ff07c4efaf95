#include "stpt/num/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace stpt {

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (auto& [name, p] : params_) {
    AdamState st;
    st.m = Arr::Zero(p.numel());
    st.v = Arr::Zero(p.numel());
    states_.emplace(name, std::move(st));
  }
}

void AdamOptimizer::apply(const std::string& name, Tensor& param) {
  if (!param.has_grad()) {
    throw std::runtime_error("adam: parameter '" + name + "' has no populated gradient");
  }
  auto it = states_.find(name);
  if (it == states_.end()) throw std::runtime_error("adam: unknown parameter '" + name + "'");
  AdamState& st = it->second;
  const Arr& g = param.grad_array();
  if (g.size() != st.m.size()) {
    throw std::runtime_error("adam: gradient size mismatch for '" + name + "'");
  }
  st.t += 1;
  st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
  st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.square();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
  Arr mhat = st.m / bc1;
  Arr vhat = st.v / bc2;
  param.mutable_array() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
}

int AdamOptimizer::step() {
  int stepped = 0;
  for (auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    apply(name, p);
    ++stepped;
  }
  zero_grads();
  return stepped;
}

void AdamOptimizer::zero_grads() {
  for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace stpt

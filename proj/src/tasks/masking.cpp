#include "stpt/tasks/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stpt/num/ops.hpp"
#include "stpt/num/rng.hpp"

namespace stpt::tasks {

MaskPlan sample_spans(std::int64_t length, double p_start, int span_length, std::uint64_t seed) {
  if (length < 0) throw std::invalid_argument("sample_spans: negative length");
  if (p_start < 0.0 || p_start > 1.0) {
    throw std::invalid_argument("sample_spans: start probability must be in [0,1]");
  }
  if (span_length <= 0) throw std::invalid_argument("sample_spans: span length must be positive");

  MaskPlan plan;
  plan.length = length;
  plan.span_length = span_length;
  Rng rng(seed);
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(length), 0);
  for (std::int64_t pos = 0; pos < length; ++pos) {
    if (rng.uniform() < p_start) {
      plan.starts.push_back(pos);
      const std::int64_t end = std::min<std::int64_t>(length, pos + span_length);
      for (std::int64_t j = pos; j < end; ++j) hit[static_cast<std::size_t>(j)] = 1;
    }
  }
  for (std::int64_t j = 0; j < length; ++j) {
    if (hit[static_cast<std::size_t>(j)]) plan.masked.push_back(j);
  }
  return plan;
}

Tensor corrupt_features(const Tensor& z, const MaskPlan& plan, const Tensor& mask_embedding) {
  if (plan.length != z.rows()) {
    throw std::invalid_argument("corrupt_features: plan length " + std::to_string(plan.length) +
                                " does not match features " + shape_str(z.shape()));
  }
  if (plan.empty()) return z;
  return mask_rows(z, plan.masked, mask_embedding);
}

std::vector<int> noise_text(std::span<const int> y, double mask_rate, int mask_id,
                            std::uint64_t seed) {
  if (y.empty()) throw std::invalid_argument("noise_text: empty token sequence");
  if (mask_rate < 0.0 || mask_rate > 1.0) {
    throw std::invalid_argument("noise_text: mask rate must be in [0,1]");
  }
  std::vector<int> out(y.begin(), y.end());
  if (mask_rate == 0.0) return out;

  const std::int64_t n = static_cast<std::int64_t>(y.size());
  Rng rng(seed);
  std::vector<std::uint8_t> hit(y.size(), 0);
  std::int64_t covered = 0;
  while (static_cast<double>(covered) < mask_rate * static_cast<double>(n)) {
    const std::int64_t start = rng.uniform_int(n);
    int span = 0;
    while (span == 0) span = rng.poisson(3.0);
    const std::int64_t end = std::min<std::int64_t>(n, start + span);
    for (std::int64_t j = start; j < end; ++j) {
      if (!hit[static_cast<std::size_t>(j)]) {
        hit[static_cast<std::size_t>(j)] = 1;
        ++covered;
      }
    }
  }
  for (std::int64_t j = 0; j < n; ++j) {
    if (hit[static_cast<std::size_t>(j)]) out[static_cast<std::size_t>(j)] = mask_id;
  }
  return out;
}

}  // namespace stpt::tasks

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stpt/num/tensor.hpp"

namespace stpt::tasks {

// Span mask over [0, L): every start position is drawn independently, spans
// may overlap and are truncated at the sequence end. Fully reproducible from
// (seed, L, p_start, span_length).
struct MaskPlan {
  std::int64_t length = 0;
  int span_length = 0;
  std::vector<std::int64_t> starts;  // sorted
  std::vector<std::int64_t> masked;  // sorted, unique

  bool empty() const { return masked.empty(); }
};

MaskPlan sample_spans(std::int64_t length, double p_start, int span_length, std::uint64_t seed);

// Replaces the masked rows of z with the learned mask embedding; unmasked
// rows pass through bit-identically.
Tensor corrupt_features(const Tensor& z, const MaskPlan& plan, const Tensor& mask_embedding);

// BART-style span masking over a token sequence: span lengths are Poisson
// with mean 3 (zero-length draws are resampled) and spans are added until at
// least mask_rate of the tokens are replaced by mask_id. mask_rate == 0
// returns the input unchanged.
std::vector<int> noise_text(std::span<const int> y, double mask_rate, int mask_id,
                            std::uint64_t seed);

}  // namespace stpt::tasks

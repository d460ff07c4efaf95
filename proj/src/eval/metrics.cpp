#include "stpt/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace stpt::eval {

namespace {

template <class T>
std::int64_t levenshtein(const std::vector<T>& a, const std::vector<T>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::int64_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

std::int64_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return levenshtein(a, b);
}

std::int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  return levenshtein(a, b);
}

double word_error_rate(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  if (ref.empty()) throw std::invalid_argument("word_error_rate: empty reference");
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

double token_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty()) throw std::invalid_argument("token_error_rate: empty reference");
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

double bleu(const std::vector<std::vector<std::string>>& hyps,
            const std::vector<std::vector<std::string>>& refs) {
  if (hyps.empty() || hyps.size() != refs.size()) {
    throw std::invalid_argument("bleu: hypothesis and reference corpora must be non-empty and equal in size");
  }
  constexpr int kMaxOrder = 4;
  std::int64_t matches[kMaxOrder] = {0, 0, 0, 0};
  std::int64_t totals[kMaxOrder] = {0, 0, 0, 0};
  std::int64_t hyp_len = 0, ref_len = 0;

  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto& hyp = hyps[s];
    const auto& ref = refs[s];
    hyp_len += static_cast<std::int64_t>(hyp.size());
    ref_len += static_cast<std::int64_t>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      if (static_cast<std::int64_t>(hyp.size()) < n) continue;
      std::map<std::vector<std::string>, std::int64_t> hyp_counts, ref_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        hyp_counts[std::vector<std::string>(hyp.begin() + static_cast<std::ptrdiff_t>(i),
                                            hyp.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
      }
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= ref.size(); ++i) {
        ref_counts[std::vector<std::string>(ref.begin() + static_cast<std::ptrdiff_t>(i),
                                            ref.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
      }
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        const std::int64_t clipped = it == ref_counts.end() ? 0 : std::min(count, it->second);
        matches[n - 1] += clipped;
        totals[n - 1] += count;
      }
    }
  }

  if (hyp_len == 0) return 0.0;

  double log_precision = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p;
    if (totals[n] == 0) {
      // corpus shorter than the order; smoothed to 1
      p = 1.0;
    } else if (matches[n] == 0 && n >= 1) {
      p = 1.0 / static_cast<double>(totals[n] + 1);  // add-one fallback
    } else if (matches[n] == 0) {
      return 0.0;  // no unigram overlap at all
    } else {
      p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    }
    log_precision += std::log(p);
  }
  log_precision /= kMaxOrder;

  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_precision);
}

}  // namespace stpt::eval

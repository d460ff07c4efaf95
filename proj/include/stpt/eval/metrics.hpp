#pragma once

#include <string>
#include <vector>

namespace stpt::eval {

// Levenshtein distance with unit costs.
std::int64_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);
std::int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// distance / |ref|; the reference must be non-empty. Can exceed 1.
double word_error_rate(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);
double token_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref);

// Corpus-level geometric mean of clipped n-gram precisions (n = 1..4) times
// the brevity penalty, scaled to [0, 100]. Single reference per hypothesis.
// A zero precision at n >= 2 falls back to add-one smoothing for that order.
double bleu(const std::vector<std::vector<std::string>>& hyps,
            const std::vector<std::vector<std::string>>& refs);

}  // namespace stpt::eval

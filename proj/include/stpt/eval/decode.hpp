#pragma once

#include <string>
#include <vector>

#include "stpt/data/batch.hpp"
#include "stpt/model/net.hpp"
#include "stpt/train/trainer.hpp"

namespace stpt::eval {

// Argmax decoding from BOS until EOS or max_len tokens; deterministic, no
// masking. Returns content tokens (BOS/EOS stripped). truncated reports
// whether max_len cut the sequence.
std::vector<int> greedy_decode(model::STPTModel& m, const Tensor& frames, int max_len,
                               bool* truncated = nullptr);

struct EvalReport {
  std::string split;
  std::int64_t n_utterances = 0;
  double token_error_rate = 0.0;
  double word_error_rate = 0.0;
  double bleu = 0.0;
  std::int64_t truncated = 0;
  int max_len = 0;

  std::string to_json(const std::vector<std::string>& config_header) const;
};

EvalReport evaluate_split(model::STPTModel& m, const data::Manifest& split_manifest,
                          const std::string& split_name, const train::DataBundle& data,
                          int max_len);

}  // namespace stpt::eval

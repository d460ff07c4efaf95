#include "stpt/eval/decode.hpp"

#include <sstream>

#include <json.hpp>

#include "stpt/eval/metrics.hpp"

namespace stpt::eval {

std::vector<int> greedy_decode(model::STPTModel& m, const Tensor& frames, int max_len,
                               bool* truncated) {
  NoGradGuard ng;
  Tensor memory = m.s2t_memory(frames, nullptr);
  std::vector<int> tokens{kBosToken};
  if (truncated) *truncated = false;
  while (static_cast<int>(tokens.size()) - 1 < max_len) {
    Tensor logits = m.decode(tokens, memory);
    const std::int64_t last = logits.rows() - 1;
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < logits.cols(); ++c) {
      if (logits.at(last, c) > logits.at(last, best)) best = c;
    }
    if (best == kEosToken) return {tokens.begin() + 1, tokens.end()};
    tokens.push_back(static_cast<int>(best));
  }
  if (truncated) *truncated = true;
  return {tokens.begin() + 1, tokens.end()};
}

EvalReport evaluate_split(model::STPTModel& m, const data::Manifest& split_manifest,
                          const std::string& split_name, const train::DataBundle& data,
                          int max_len) {
  EvalReport report;
  report.split = split_name;
  report.max_len = max_len;

  double ter_num = 0.0, wer_num = 0.0;
  std::int64_t ter_den = 0, wer_den = 0;
  std::vector<std::vector<std::string>> hyp_words, ref_words;
  for (const auto& rec : split_manifest.records) {
    if (rec.frame_offset < 0 || rec.target_text.empty()) continue;
    Tensor frames = data.frames->load(rec.id, data.inventory.frame_dim());
    bool truncated = false;
    auto hyp = greedy_decode(m, frames, max_len, &truncated);
    if (truncated) ++report.truncated;

    auto ref = data::tokens_of_text(rec.target_text, data.vocab);
    ter_num += static_cast<double>(edit_distance(hyp, ref));
    ter_den += static_cast<std::int64_t>(ref.size());

    auto hw = data.vocab.detokenize(hyp);
    auto rw = data.vocab.detokenize(ref);
    wer_num += static_cast<double>(edit_distance(hw, rw));
    wer_den += static_cast<std::int64_t>(rw.size());
    hyp_words.push_back(std::move(hw));
    ref_words.push_back(std::move(rw));
    ++report.n_utterances;
  }
  if (report.n_utterances == 0) {
    throw std::runtime_error("evaluate_split: split '" + split_name + "' has no decodable records");
  }
  report.token_error_rate = ter_num / static_cast<double>(ter_den);
  report.word_error_rate = wer_num / static_cast<double>(wer_den);
  report.bleu = bleu(hyp_words, ref_words);
  return report;
}

std::string EvalReport::to_json(const std::vector<std::string>& config_header) const {
  nlohmann::json j;
  j["split"] = split;
  j["n_utterances"] = n_utterances;
  j["token_error_rate"] = token_error_rate;
  j["word_error_rate"] = word_error_rate;
  j["bleu"] = bleu;
  j["truncated"] = truncated;
  j["max_len"] = max_len;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& line : config_header) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfg;
  return j.dump(2);
}

}  // namespace stpt::eval

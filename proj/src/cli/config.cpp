#include "stpt/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stpt::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(std::stoi(trim(cur)));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::registry() {
  static const std::vector<std::pair<std::string, std::string>> reg = {
      {"model.variant", "fse"},
      {"model.conv_channels", "32"},
      {"model.conv_strides", "2,2"},
      {"model.conv_kernels", "2,2"},
      {"model.speech_layers", "2"},
      {"model.shared_layers", "2"},
      {"model.decoder_layers", "2"},
      {"model.dim", "64"},
      {"model.ffn_dim", "128"},
      {"model.heads", "4"},
      {"model.max_positions", "512"},
      {"model.dropout", "0.0"},
      {"model.seed", "1"},

      {"data.dir", "data"},
      {"data.mode", "asr"},
      {"data.n_unlabeled", "1000"},
      {"data.n_supervised", "200"},
      {"data.n_text", "2000"},
      {"data.n_dev", "40"},
      {"data.n_test", "40"},
      {"data.n_words", "40"},
      {"data.n_base_phonemes", "30"},
      {"data.frame_dim", "8"},
      {"data.noise_sd", "0.1"},
      {"data.min_words", "2"},
      {"data.max_words", "3"},
      {"data.min_duration", "2"},
      {"data.max_duration", "5"},
      {"data.seed", "1"},

      {"train.seed", "1"},
      {"train.stage1_updates", "2000"},
      {"train.stage2_updates", "5000"},
      {"train.stage3_updates", "1000"},
      {"train.stage1_lr", "1e-3"},
      {"train.stage2_lr", "1e-3"},
      {"train.stage3_lr", "5e-4"},
      {"train.warmup", "100"},
      {"train.batch_text", "8"},
      {"train.batch_speech", "4"},
      {"train.ratio_t2t", "1.0"},
      {"train.ratio_ssl", "7.0"},
      {"train.ratio_s2p", "0.5"},
      {"train.ratio_s2t", "0.5"},
      {"train.ssl_mask_start", "0.07"},
      {"train.supervised_mask_start", "0.03"},
      {"train.span_length", "10"},
      {"train.t2t_mask_rate", "0.3"},
      {"train.finetune_tasks", "t2t,s2t"},
      {"train.mask_supervised_in_finetune", "true"},
      {"train.loss", "kl"},
      {"train.distractors", "100"},
      {"train.temperature", "0.1"},
      {"train.alpha", "1.0"},
      {"train.beta", "1.0"},
      {"train.gamma", "1.0"},
      {"train.checkpoint_every", "500"},
      {"train.average_last", "10"},
      {"train.ablate_skip_t2t_pt", "false"},
      {"train.ablate_drop_s2t", "false"},
      {"train.ablate_drop_joint_pt", "false"},

      {"eval.max_len", "64"},
      {"eval.split", "dev"},

      {"analysis.batches", "20"},
      {"analysis.batch_size", "4"},
      {"analysis.seed", "1"},
  };
  return reg;
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (const auto& [k, v] : registry()) c.values_[k] = v;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& reg = registry();
  const bool known = std::any_of(reg.begin(), reg.end(), [&](const auto& kv) { return kv.first == key; });
  if (!known) {
    std::ostringstream os;
    os << "unknown config key '" << key << "'; valid keys are:";
    for (const auto& [k, v] : reg) os << " " << k;
    throw std::invalid_argument(os.str());
  }
  values_[key] = value;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c = defaults();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return from_text(os.str());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("config: no key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer: '" + get(key) + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not a number: '" + get(key) + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' is not a boolean: '" + v + "'");
}

void RunConfig::validate() const {
  model_config().validate();  // also checks strides/kernels and divisibility
  data::parse_corpus_mode(get("data.mode"));

  const std::string loss = get("train.loss");
  if (loss != "kl" && loss != "contrastive") {
    throw std::invalid_argument("config: train.loss must be 'kl' or 'contrastive', got '" + loss + "'");
  }
  for (const char* k : {"train.ratio_t2t", "train.ratio_ssl", "train.ratio_s2p", "train.ratio_s2t",
                        "train.alpha", "train.beta", "train.gamma"}) {
    if (get_double(k) < 0.0) throw std::invalid_argument(std::string("config: ") + k + " must be non-negative");
  }
  for (const char* k : {"train.ssl_mask_start", "train.supervised_mask_start", "train.t2t_mask_rate"}) {
    const double v = get_double(k);
    if (v < 0.0 || v > 1.0) throw std::invalid_argument(std::string("config: ") + k + " must be in [0,1]");
  }
  if (get_int("train.span_length") <= 0) throw std::invalid_argument("config: train.span_length must be positive");
  if (get_int("data.n_words") < 2) throw std::invalid_argument("config: data.n_words must be at least 2");
  if (get_int("data.min_words") < 1 || get_int("data.max_words") < get_int("data.min_words")) {
    throw std::invalid_argument("config: bad word-count range");
  }
  if (get_int("data.min_duration") < 1 || get_int("data.max_duration") < get_int("data.min_duration")) {
    throw std::invalid_argument("config: bad duration range");
  }

  // the fine-tuning stage is restricted to the sequence-to-sequence tasks
  std::istringstream ts(get("train.finetune_tasks"));
  std::string item;
  while (std::getline(ts, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const Task t = parse_task(item);
    if (t != Task::T2T && t != Task::S2T) {
      throw std::invalid_argument("config: train.finetune_tasks may not include '" + item +
                                  "'; only t2t and s2t run in fine-tuning");
    }
  }
  if (get_int("eval.max_len") < 2) throw std::invalid_argument("config: eval.max_len too small");
  const std::string split = get("eval.split");
  if (split != "dev" && split != "test") {
    throw std::invalid_argument("config: eval.split must be dev or test, got '" + split + "'");
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, d] : registry()) os << k << " = " << values_.at(k) << "\n";
  return os.str();
}

std::map<std::string, std::string> RunConfig::as_map() const { return values_; }

std::vector<std::string> RunConfig::header_lines() const {
  std::vector<std::string> out;
  for (const auto& [k, d] : registry()) out.push_back(k + "=" + values_.at(k));
  return out;
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig mc;
  mc.variant = model::parse_variant(get("model.variant"));
  mc.conv_channels = static_cast<int>(get_int("model.conv_channels"));
  mc.conv_strides = parse_int_list(get("model.conv_strides"));
  mc.conv_kernels = parse_int_list(get("model.conv_kernels"));
  mc.n_speech_layers = static_cast<int>(get_int("model.speech_layers"));
  mc.n_shared_layers = static_cast<int>(get_int("model.shared_layers"));
  mc.n_decoder_layers = static_cast<int>(get_int("model.decoder_layers"));
  mc.model_dim = static_cast<int>(get_int("model.dim"));
  mc.ffn_dim = static_cast<int>(get_int("model.ffn_dim"));
  mc.n_heads = static_cast<int>(get_int("model.heads"));
  mc.max_positions = static_cast<int>(get_int("model.max_positions"));
  mc.dropout = get_double("model.dropout");
  mc.frame_dim = static_cast<int>(get_int("data.frame_dim"));
  mc.phoneme_vocab_size = 2 * static_cast<int>(get_int("data.n_base_phonemes")) +
                          data::PhonemeInventory::kSpecials;
  mc.token_vocab_size = static_cast<int>(data::TokenVocab().size());
  return mc;
}

data::CorpusConfig RunConfig::corpus_config() const {
  data::CorpusConfig cc;
  cc.n_unlabeled = static_cast<int>(get_int("data.n_unlabeled"));
  cc.n_supervised = static_cast<int>(get_int("data.n_supervised"));
  cc.n_text = static_cast<int>(get_int("data.n_text"));
  cc.n_dev = static_cast<int>(get_int("data.n_dev"));
  cc.n_test = static_cast<int>(get_int("data.n_test"));
  cc.n_words = static_cast<int>(get_int("data.n_words"));
  cc.n_base_phonemes = static_cast<int>(get_int("data.n_base_phonemes"));
  cc.frame_dim = static_cast<int>(get_int("data.frame_dim"));
  cc.utterance.min_words = static_cast<int>(get_int("data.min_words"));
  cc.utterance.max_words = static_cast<int>(get_int("data.max_words"));
  cc.utterance.min_duration = static_cast<int>(get_int("data.min_duration"));
  cc.utterance.max_duration = static_cast<int>(get_int("data.max_duration"));
  cc.utterance.noise_sd = get_double("data.noise_sd");
  cc.utterance.mode = data::parse_corpus_mode(get("data.mode"));
  cc.utterance.downsample_factor = model_config().downsample_factor();
  return cc;
}

}  // namespace stpt::cli

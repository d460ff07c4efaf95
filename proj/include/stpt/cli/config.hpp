#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stpt/data/corpus.hpp"
#include "stpt/model/config.hpp"

namespace stpt::cli {

// Flat dotted-key configuration with a fixed key registry. Files are plain
// "key = value" lines; '#' starts a comment. Unknown keys are rejected with
// the list of valid options; normalization fills defaults, validates
// cross-field constraints and is idempotent.
class RunConfig {
 public:
  // All documented keys with their defaults.
  static const std::vector<std::pair<std::string, std::string>>& registry();

  static RunConfig defaults();
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void validate() const;

  // Canonical form: registry order, one "key = value" per line.
  std::string serialize() const;
  std::map<std::string, std::string> as_map() const;
  std::vector<std::string> header_lines() const;  // "key=value" for artifacts

  model::ModelConfig model_config() const;
  data::CorpusConfig corpus_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stpt::cli

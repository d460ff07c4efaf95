#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "stpt/common.hpp"

namespace stpt::data {

// Synthetic phoneme inventory: a base set of consonant-vowel symbols, a
// word-initial "_" variant of each, and the specials. Every symbol owns one
// prototype vector; frames are noisy copies of prototypes, so nearest
// prototype recovers the label when the noise is small.
class PhonemeInventory {
 public:
  static PhonemeInventory synthetic(int n_base, int frame_dim, std::uint64_t seed);

  static constexpr int kPad = 0;
  static constexpr int kSil = 1;
  static constexpr int kMsk = 2;
  static constexpr int kSpecials = 3;

  int size() const { return static_cast<int>(symbols_.size()); }
  int n_base() const { return n_base_; }
  int frame_dim() const { return frame_dim_; }

  int base_id(int ordinal) const { return kSpecials + ordinal; }
  int initial_id(int ordinal) const { return kSpecials + n_base_ + ordinal; }
  bool is_initial(int id) const { return id >= kSpecials + n_base_; }
  // The base symbol ordinal of a lexical id (initial variants fold back).
  int base_ordinal(int id) const;

  const std::string& symbol(int id) const;
  int id_of(const std::string& symbol) const;

  const Eigen::VectorXd& prototype(int id) const { return prototypes_.at(static_cast<std::size_t>(id)); }
  double min_pairwise_distance() const;

  void save(const std::string& path) const;
  static PhonemeInventory load(const std::string& path);

 private:
  int n_base_ = 0;
  int frame_dim_ = 0;
  std::vector<std::string> symbols_;
  std::vector<Eigen::VectorXd> prototypes_;
  std::unordered_map<std::string, int> index_;

  void rebuild_index();
};

// Fixed synthetic tokenizer: specials, a word separator, lowercase source
// letters and uppercase target letters. No training, no merges.
class TokenVocab {
 public:
  TokenVocab();

  static constexpr int kSep = 3;  // word boundary marker

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  int id_of(const std::string& symbol) const;

  // "baki" -> [sep, b, a, k, i]; one sep before every word.
  std::vector<int> tokenize(const std::vector<std::string>& words) const;
  std::vector<std::string> detokenize(std::span<const int> tokens) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace stpt::data

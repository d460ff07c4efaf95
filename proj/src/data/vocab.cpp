#include "stpt/data/vocab.hpp"

#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>

#include "stpt/num/rng.hpp"

namespace stpt::data {

namespace {
const char* kConsonants = "bdfghjklmnprstwz";
const char* kVowels = "aeiou";
}  // namespace

PhonemeInventory PhonemeInventory::synthetic(int n_base, int frame_dim, std::uint64_t seed) {
  if (n_base < 2) throw std::invalid_argument("phoneme inventory: need at least 2 base symbols");
  const int max_base = static_cast<int>(std::string(kConsonants).size() * std::string(kVowels).size());
  if (n_base > max_base) {
    throw std::invalid_argument("phoneme inventory: at most " + std::to_string(max_base) +
                                " base symbols");
  }
  PhonemeInventory inv;
  inv.n_base_ = n_base;
  inv.frame_dim_ = frame_dim;
  inv.symbols_ = {"<pad>", "<sil>", "<msk>"};
  for (int i = 0; i < n_base; ++i) {
    std::string s;
    s += kConsonants[i / 5];
    s += kVowels[i % 5];
    inv.symbols_.push_back(s);
  }
  for (int i = 0; i < n_base; ++i) inv.symbols_.push_back("_" + inv.symbols_[kSpecials + i]);

  // Prototypes: unit-variance Gaussian draws, resampled until every pairwise
  // distance clears 0.5.
  Rng rng(seed);
  const double min_dist = 0.5;
  for (std::size_t s = 0; s < inv.symbols_.size(); ++s) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw std::runtime_error("phoneme inventory: prototype sampling failed");
      Eigen::VectorXd p(frame_dim);
      for (int i = 0; i < frame_dim; ++i) p[i] = rng.gauss();
      bool ok = true;
      for (const auto& q : inv.prototypes_) {
        if ((p - q).norm() <= min_dist) {
          ok = false;
          break;
        }
      }
      if (ok) {
        inv.prototypes_.push_back(std::move(p));
        break;
      }
    }
  }
  inv.rebuild_index();
  return inv;
}

void PhonemeInventory::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < symbols_.size(); ++i) index_[symbols_[i]] = static_cast<int>(i);
}

int PhonemeInventory::base_ordinal(int id) const {
  if (id < kSpecials || id >= size()) {
    throw std::out_of_range("phoneme inventory: id " + std::to_string(id) + " is not lexical");
  }
  const int ord = id - kSpecials;
  return ord >= n_base_ ? ord - n_base_ : ord;
}

const std::string& PhonemeInventory::symbol(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("phoneme inventory: bad id " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

int PhonemeInventory::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::out_of_range("phoneme inventory: unknown symbol '" + symbol + "'");
  return it->second;
}

double PhonemeInventory::min_pairwise_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prototypes_.size(); ++i) {
    for (std::size_t j = i + 1; j < prototypes_.size(); ++j) {
      best = std::min(best, (prototypes_[i] - prototypes_[j]).norm());
    }
  }
  return best;
}

void PhonemeInventory::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("phoneme inventory: cannot write '" + path + "'");
  os << n_base_ << "\t" << frame_dim_ << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    os << symbols_[i];
    for (int k = 0; k < frame_dim_; ++k) os << "\t" << prototypes_[i][k];
    os << "\n";
  }
  if (!os) throw std::runtime_error("phoneme inventory: write failed for '" + path + "'");
}

PhonemeInventory PhonemeInventory::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("phoneme inventory: cannot open '" + path + "'");
  PhonemeInventory inv;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("phoneme inventory: empty file '" + path + "'");
  {
    std::istringstream hs(line);
    hs >> inv.n_base_ >> inv.frame_dim_;
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string sym;
    std::getline(ls, sym, '\t');
    Eigen::VectorXd p(inv.frame_dim_);
    std::string cell;
    for (int k = 0; k < inv.frame_dim_; ++k) {
      if (!std::getline(ls, cell, '\t')) throw std::runtime_error("phoneme inventory: short row in '" + path + "'");
      p[k] = std::stod(cell);
    }
    inv.symbols_.push_back(sym);
    inv.prototypes_.push_back(std::move(p));
  }
  inv.rebuild_index();
  return inv;
}

TokenVocab::TokenVocab() {
  symbols_ = {"<pad>", "<bos>", "<eos>", "_"};
  for (char c = 'a'; c <= 'z'; ++c) symbols_.push_back(std::string(1, c));
  for (char c = 'A'; c <= 'Z'; ++c) symbols_.push_back(std::string(1, c));
  for (std::size_t i = 0; i < symbols_.size(); ++i) index_[symbols_[i]] = static_cast<int>(i);
}

int TokenVocab::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::out_of_range("token vocab: unknown symbol '" + symbol + "'");
  return it->second;
}

std::vector<int> TokenVocab::tokenize(const std::vector<std::string>& words) const {
  std::vector<int> out;
  for (const auto& w : words) {
    out.push_back(kSep);
    for (char c : w) out.push_back(id_of(std::string(1, c)));
  }
  return out;
}

std::vector<std::string> TokenVocab::detokenize(std::span<const int> tokens) const {
  std::vector<std::string> words;
  std::string current;
  for (int t : tokens) {
    if (t == kPadToken || t == kBosToken || t == kEosToken) continue;
    if (t == kSep) {
      if (!current.empty()) words.push_back(current);
      current.clear();
      continue;
    }
    current += symbol(t);
  }
  if (!current.empty()) words.push_back(current);
  return words;
}

}  // namespace stpt::data

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stpt/data/vocab.hpp"
#include "stpt/num/tensor.hpp"

namespace stpt::data {

enum class CorpusMode { ASR, ST };

std::string corpus_mode_name(CorpusMode m);
CorpusMode parse_corpus_mode(const std::string& s);

// Word list with pronunciations (first phoneme uses its word-initial variant)
// and, for translation, an injective mapping into a disjoint uppercase
// vocabulary. Word text is the concatenation of the base phoneme symbols, so
// text and pronunciation determine each other.
struct Lexicon {
  std::vector<std::string> words;
  std::vector<std::vector<int>> phonemes;   // inventory ids
  std::vector<std::string> translations;    // uppercase target words

  int size() const { return static_cast<int>(words.size()); }
  void save(const std::string& path) const;
  static Lexicon load(const std::string& path);
};

Lexicon gen_lexicon(const PhonemeInventory& inv, int n_words, std::uint64_t seed);

// Per-word dictionary substitution followed by a swap of each adjacent word
// pair; a bijection on word sequences, so an oracle translator is exact.
std::vector<std::string> toy_translate(const Lexicon& lex, const std::vector<int>& word_ids);

struct UtteranceSample {
  std::string id;
  Tensor frames;                      // [T, frame_dim]
  std::vector<int> phonemes;          // inventory ids, silence included
  std::vector<int> frame_alignment;   // per raw frame phoneme id, length T
  std::vector<std::string> source_words;
  std::vector<int> source_tokens;     // fixed-tokenizer ids of source_words
  std::vector<int> target_tokens;     // == source_tokens (ASR) or translation (ST)
};

struct UtteranceParams {
  int min_words = 2;
  int max_words = 3;
  int min_duration = 2;  // context frames per phoneme
  int max_duration = 5;
  int sil_max_duration = 2;
  int downsample_factor = 4;  // phoneme durations are multiples of this
  double noise_sd = 0.1;
  CorpusMode mode = CorpusMode::ASR;
};

UtteranceSample gen_utterance(const Lexicon& lex, const PhonemeInventory& inv,
                              const TokenVocab& vocab, const UtteranceParams& params,
                              std::uint64_t seed, const std::string& id);

// One manifest row. Fields may be empty depending on the pool: the unlabeled
// pool has frames only, the text pool has no frames.
struct ManifestRecord {
  std::string id;
  std::int64_t frame_offset = -1;  // doubles into the blob, -1 = no frames
  std::int64_t n_frames = 0;
  std::vector<std::string> phonemes;      // symbols
  std::vector<std::int64_t> align_runs;   // raw-frame run lengths, one per phoneme
  std::string source_text;                // space-separated words
  std::string target_text;
};

// Tab-separated, one utterance per line; '#'-prefixed header lines carry the
// generating config. parse(serialize(m)) == m.
struct Manifest {
  std::vector<std::string> header;  // without the leading '#'
  std::vector<ManifestRecord> records;

  std::string serialize() const;
  static Manifest parse(const std::string& text);
  void save(const std::string& path) const;
  static Manifest load(const std::string& path);
};

std::string serialize_record(const ManifestRecord& r);
ManifestRecord parse_record(const std::string& line);

// Frame blobs: little-endian float64, with a text sidecar index
// "id offset count" per line.
class FrameStore {
 public:
  static void write(const std::string& bin_path, const std::string& index_path,
                    const std::vector<std::pair<std::string, Tensor>>& frames);
  FrameStore(std::string bin_path, std::string index_path);

  Tensor load(const std::string& id, int frame_dim) const;
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

 private:
  std::string bin_path_;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> index_;  // offset, count
};

struct CorpusConfig {
  int n_unlabeled = 1000;
  int n_supervised = 200;
  int n_text = 2000;
  int n_dev = 40;
  int n_test = 40;
  int n_words = 40;
  int n_base_phonemes = 30;
  int frame_dim = 8;
  UtteranceParams utterance;
};

struct CorpusPaths {
  std::string dir;
  std::string inventory() const { return dir + "/inventory.tsv"; }
  std::string lexicon() const { return dir + "/lexicon.tsv"; }
  std::string frames_bin() const { return dir + "/frames.bin"; }
  std::string frames_index() const { return dir + "/frames.idx"; }
  std::string manifest(const std::string& split) const { return dir + "/" + split + ".tsv"; }
};

// Splits: unlabeled (frames only), supervised (everything), text (no frames),
// dev and test (everything, held out). Ids are disjoint across splits; a
// fixed seed reproduces every file byte for byte.
void gen_corpus(const CorpusConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                const std::vector<std::string>& config_header = {});

ManifestRecord record_from_sample(const UtteranceSample& s, const PhonemeInventory& inv,
                                  std::int64_t frame_offset, bool with_frames, bool with_text,
                                  bool with_alignment);

}  // namespace stpt::data

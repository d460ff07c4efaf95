#include "stpt/data/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stpt/num/rng.hpp"

namespace stpt::data {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

void write_doubles_le(std::ostream& os, const Arr& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    std::uint64_t bits;
    double v = a[i];
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

}  // namespace

std::string corpus_mode_name(CorpusMode m) { return m == CorpusMode::ASR ? "asr" : "st"; }

CorpusMode parse_corpus_mode(const std::string& s) {
  if (s == "asr") return CorpusMode::ASR;
  if (s == "st") return CorpusMode::ST;
  throw std::invalid_argument("unknown corpus mode '" + s + "' (expected asr or st)");
}

Lexicon gen_lexicon(const PhonemeInventory& inv, int n_words, std::uint64_t seed) {
  if (n_words < 2) throw std::invalid_argument("gen_lexicon: need at least 2 words");
  Rng rng(seed);
  Lexicon lex;
  std::set<std::string> seen_words;
  std::set<std::string> seen_translations;
  const int max_attempts = 1000 * n_words;
  int attempts = 0;
  while (lex.size() < n_words) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("gen_lexicon: inventory too small to build " +
                               std::to_string(n_words) + " distinct words");
    }
    const int len = 2 + static_cast<int>(rng.uniform_int(4));  // 2..5 phonemes
    std::vector<int> phon;
    std::string text;
    int prev = -1;
    bool ok = true;
    for (int k = 0; k < len; ++k) {
      int ord = static_cast<int>(rng.uniform_int(inv.n_base()));
      int guard = 0;
      while (ord == prev) {  // no immediate repeats, so alignment runs stay separable
        ord = static_cast<int>(rng.uniform_int(inv.n_base()));
        if (++guard > 64) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
      prev = ord;
      phon.push_back(k == 0 ? inv.initial_id(ord) : inv.base_id(ord));
      text += inv.symbol(inv.base_id(ord));
    }
    if (!ok || seen_words.count(text)) continue;
    seen_words.insert(text);
    lex.words.push_back(text);
    lex.phonemes.push_back(std::move(phon));
  }
  // Disjoint-vocabulary translations (uppercase), injective by construction.
  attempts = 0;
  while (lex.translations.size() < lex.words.size()) {
    if (++attempts > max_attempts) throw std::runtime_error("gen_lexicon: translation sampling failed");
    const int len = 2 + static_cast<int>(rng.uniform_int(4));
    std::string t;
    for (int k = 0; k < len; ++k) t += static_cast<char>('A' + rng.uniform_int(26));
    if (seen_translations.count(t)) continue;
    seen_translations.insert(t);
    lex.translations.push_back(t);
  }
  return lex;
}

std::vector<std::string> toy_translate(const Lexicon& lex, const std::vector<int>& word_ids) {
  std::vector<std::string> out;
  out.reserve(word_ids.size());
  for (int w : word_ids) out.push_back(lex.translations.at(static_cast<std::size_t>(w)));
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  return out;
}

void Lexicon::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("lexicon: cannot write '" + path + "'");
  for (int i = 0; i < size(); ++i) {
    os << words[static_cast<std::size_t>(i)] << "\t" << translations[static_cast<std::size_t>(i)] << "\t";
    for (std::size_t k = 0; k < phonemes[static_cast<std::size_t>(i)].size(); ++k) {
      if (k) os << " ";
      os << phonemes[static_cast<std::size_t>(i)][k];
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("lexicon: write failed for '" + path + "'");
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("lexicon: cannot open '" + path + "'");
  Lexicon lex;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3) throw std::runtime_error("lexicon: bad row in '" + path + "'");
    lex.words.push_back(cols[0]);
    lex.translations.push_back(cols[1]);
    std::vector<int> phon;
    std::istringstream ps(cols[2]);
    int id;
    while (ps >> id) phon.push_back(id);
    lex.phonemes.push_back(std::move(phon));
  }
  return lex;
}

UtteranceSample gen_utterance(const Lexicon& lex, const PhonemeInventory& inv,
                              const TokenVocab& vocab, const UtteranceParams& params,
                              std::uint64_t seed, const std::string& id) {
  if (lex.size() == 0) throw std::invalid_argument("gen_utterance: empty lexicon");
  Rng rng(seed);
  UtteranceSample s;
  s.id = id;

  const int n_words = params.min_words +
                      static_cast<int>(rng.uniform_int(params.max_words - params.min_words + 1));
  std::vector<int> word_ids;
  for (int i = 0; i < n_words; ++i) word_ids.push_back(static_cast<int>(rng.uniform_int(lex.size())));

  s.phonemes.push_back(PhonemeInventory::kSil);
  for (int w : word_ids) {
    const auto& phon = lex.phonemes[static_cast<std::size_t>(w)];
    s.phonemes.insert(s.phonemes.end(), phon.begin(), phon.end());
  }
  s.phonemes.push_back(PhonemeInventory::kSil);

  // Context-rate durations, scaled to raw frames by the conv downsample
  // factor so the post-extractor length equals the alignment length.
  std::vector<int> durations;
  durations.reserve(s.phonemes.size());
  for (int ph : s.phonemes) {
    int d;
    if (ph == PhonemeInventory::kSil) {
      d = 1 + static_cast<int>(rng.uniform_int(params.sil_max_duration));
    } else {
      d = params.min_duration +
          static_cast<int>(rng.uniform_int(params.max_duration - params.min_duration + 1));
    }
    durations.push_back(d);
  }

  std::int64_t total_raw = 0;
  for (int d : durations) total_raw += static_cast<std::int64_t>(d) * params.downsample_factor;
  const int f = inv.frame_dim();
  Arr frames(total_raw * f);
  s.frame_alignment.reserve(static_cast<std::size_t>(total_raw));
  std::int64_t row = 0;
  for (std::size_t k = 0; k < s.phonemes.size(); ++k) {
    const int ph = s.phonemes[k];
    const auto& proto = inv.prototype(ph);
    const std::int64_t raw = static_cast<std::int64_t>(durations[k]) * params.downsample_factor;
    for (std::int64_t r = 0; r < raw; ++r) {
      for (int c = 0; c < f; ++c) {
        frames[(row + r) * f + c] = proto[c] + rng.gauss(0.0, params.noise_sd);
      }
      s.frame_alignment.push_back(ph);
    }
    row += raw;
  }
  s.frames = Tensor::from_array({total_raw, f}, std::move(frames), false);

  for (int w : word_ids) s.source_words.push_back(lex.words[static_cast<std::size_t>(w)]);
  s.source_tokens = vocab.tokenize(s.source_words);
  if (params.mode == CorpusMode::ASR) {
    s.target_tokens = s.source_tokens;
  } else {
    s.target_tokens = vocab.tokenize(toy_translate(lex, word_ids));
  }
  return s;
}

std::string serialize_record(const ManifestRecord& r) {
  std::ostringstream os;
  os << r.id << "\t" << r.frame_offset << "\t" << r.n_frames << "\t";
  os << join(r.phonemes, " ") << "\t";
  {
    std::vector<std::string> runs;
    runs.reserve(r.align_runs.size());
    for (auto v : r.align_runs) runs.push_back(std::to_string(v));
    os << join(runs, " ");
  }
  os << "\t" << r.source_text << "\t" << r.target_text;
  return os.str();
}

ManifestRecord parse_record(const std::string& line) {
  auto cols = split(line, '\t');
  if (cols.size() != 7) {
    throw std::runtime_error("manifest: expected 7 tab-separated columns, got " +
                             std::to_string(cols.size()));
  }
  ManifestRecord r;
  r.id = cols[0];
  r.frame_offset = std::stoll(cols[1]);
  r.n_frames = std::stoll(cols[2]);
  if (!cols[3].empty()) {
    for (auto& s : split(cols[3], ' ')) {
      if (!s.empty()) r.phonemes.push_back(s);
    }
  }
  if (!cols[4].empty()) {
    for (auto& s : split(cols[4], ' ')) {
      if (!s.empty()) r.align_runs.push_back(std::stoll(s));
    }
  }
  r.source_text = cols[5];
  r.target_text = cols[6];
  return r;
}

std::string Manifest::serialize() const {
  std::ostringstream os;
  for (const auto& h : header) os << "#" << h << "\n";
  for (const auto& r : records) os << serialize_record(r) << "\n";
  return os.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      m.header.push_back(line.substr(1));
    } else {
      m.records.push_back(parse_record(line));
    }
  }
  return m;
}

void Manifest::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("manifest: cannot write '" + path + "'");
  os << serialize();
  if (!os) throw std::runtime_error("manifest: write failed for '" + path + "'");
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("manifest: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

void FrameStore::write(const std::string& bin_path, const std::string& index_path,
                       const std::vector<std::pair<std::string, Tensor>>& frames) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("frame store: cannot write '" + bin_path + "'");
  std::ofstream idx(index_path, std::ios::trunc | std::ios::binary);
  if (!idx) throw std::runtime_error("frame store: cannot write '" + index_path + "'");
  std::int64_t offset = 0;
  for (const auto& [id, t] : frames) {
    write_doubles_le(bin, t.array());
    idx << id << " " << offset << " " << t.numel() << "\n";
    offset += t.numel();
  }
  if (!bin || !idx) throw std::runtime_error("frame store: write failed for '" + bin_path + "'");
}

FrameStore::FrameStore(std::string bin_path, std::string index_path) : bin_path_(std::move(bin_path)) {
  std::ifstream idx(index_path);
  if (!idx) throw std::runtime_error("frame store: cannot open index '" + index_path + "'");
  std::string id;
  std::int64_t offset, count;
  while (idx >> id >> offset >> count) index_[id] = {offset, count};
}

Tensor FrameStore::load(const std::string& id, int frame_dim) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::runtime_error("frame store: unknown utterance '" + id + "'");
  const auto [offset, count] = it->second;
  if (count % frame_dim != 0) {
    throw std::runtime_error("frame store: count for '" + id + "' is not a multiple of the frame width");
  }
  std::ifstream bin(bin_path_, std::ios::binary);
  if (!bin) throw std::runtime_error("frame store: cannot open '" + bin_path_ + "'");
  bin.seekg(offset * 8);
  Arr a(count);
  for (std::int64_t i = 0; i < count; ++i) {
    unsigned char b[8];
    bin.read(reinterpret_cast<char*>(b), 8);
    if (!bin) throw std::runtime_error("frame store: truncated read for '" + id + "'");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &bits, 8);
    a[i] = v;
  }
  return Tensor::from_array({count / frame_dim, frame_dim}, std::move(a), false);
}

ManifestRecord record_from_sample(const UtteranceSample& s, const PhonemeInventory& inv,
                                  std::int64_t frame_offset, bool with_frames, bool with_text,
                                  bool with_alignment) {
  ManifestRecord r;
  r.id = s.id;
  r.frame_offset = with_frames ? frame_offset : -1;
  r.n_frames = with_frames ? s.frames.rows() : 0;
  if (with_alignment) {
    for (int ph : s.phonemes) r.phonemes.push_back(inv.symbol(ph));
    // run lengths recovered from the per-frame labels
    std::int64_t run = 0;
    int cur = s.frame_alignment.empty() ? -1 : s.frame_alignment[0];
    for (int ph : s.frame_alignment) {
      if (ph == cur) {
        ++run;
      } else {
        r.align_runs.push_back(run);
        cur = ph;
        run = 1;
      }
    }
    if (run > 0) r.align_runs.push_back(run);
  } else if (with_text) {
    // text pool still needs pronunciations for the text-to-text input
    for (int ph : s.phonemes) {
      if (ph != PhonemeInventory::kSil) r.phonemes.push_back(inv.symbol(ph));
    }
  }
  if (with_text) {
    std::vector<std::string> src = s.source_words;
    r.source_text = join(src, " ");
    std::vector<std::string> tgt_words;
    // reconstruct target words from tokens via the fixed tokenizer
    TokenVocab vocab;
    tgt_words = vocab.detokenize(s.target_tokens);
    r.target_text = join(tgt_words, " ");
  }
  return r;
}

void gen_corpus(const CorpusConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                const std::vector<std::string>& config_header) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("gen_corpus: cannot create '" + out_dir + "': " + ec.message());

  CorpusPaths paths{out_dir};
  auto inv = PhonemeInventory::synthetic(cfg.n_base_phonemes, cfg.frame_dim, Rng::derive(seed, 0));
  auto lex = gen_lexicon(inv, cfg.n_words, Rng::derive(seed, 1));
  inv.save(paths.inventory());
  lex.save(paths.lexicon());

  TokenVocab vocab;
  std::vector<std::pair<std::string, Tensor>> blobs;

  struct SplitSpec {
    const char* name;
    int count;
    bool frames, text, alignment;
    std::uint64_t stream;
  };
  const SplitSpec splits[] = {
      {"unlabeled", cfg.n_unlabeled, true, false, false, 10},
      {"supervised", cfg.n_supervised, true, true, true, 11},
      {"text", cfg.n_text, false, true, false, 12},
      {"dev", cfg.n_dev, true, true, true, 13},
      {"test", cfg.n_test, true, true, true, 14},
  };

  std::int64_t offset = 0;
  for (const auto& sp : splits) {
    Manifest m;
    m.header = config_header;
    m.header.push_back("corpus.seed=" + std::to_string(seed));
    m.header.push_back("corpus.split=" + std::string(sp.name));
    m.header.push_back("corpus.count=" + std::to_string(sp.count));
    m.header.push_back("corpus.mode=" + corpus_mode_name(cfg.utterance.mode));
    for (int i = 0; i < sp.count; ++i) {
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "%s%06d", sp.name, i);
      auto sample = gen_utterance(lex, inv, vocab, cfg.utterance,
                                  Rng::derive(seed, sp.stream * 1000003ULL + static_cast<std::uint64_t>(i)),
                                  idbuf);
      ManifestRecord rec = record_from_sample(sample, inv, offset, sp.frames, sp.text, sp.alignment);
      if (sp.frames) {
        blobs.emplace_back(sample.id, sample.frames);
        offset += sample.frames.numel();
      }
      m.records.push_back(std::move(rec));
    }
    m.save(paths.manifest(sp.name));
  }
  FrameStore::write(paths.frames_bin(), paths.frames_index(), blobs);
}

}  // namespace stpt::data

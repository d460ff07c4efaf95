#include "stpt/data/batch.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "stpt/num/rng.hpp"
#include "stpt/tasks/masking.hpp"

namespace stpt::data {

std::vector<int> IdBatch::sequence(std::int64_t row) const {
  std::vector<int> out;
  const std::int64_t len = lengths.at(static_cast<std::size_t>(row));
  out.reserve(static_cast<std::size_t>(len));
  for (std::int64_t i = 0; i < len; ++i) {
    out.push_back(ids[static_cast<std::size_t>(row * width + i)]);
  }
  return out;
}

IdBatch IdBatch::from_sequences(const std::vector<std::vector<int>>& seqs, int pad_id) {
  IdBatch b;
  b.batch = static_cast<std::int64_t>(seqs.size());
  for (const auto& s : seqs) b.width = std::max<std::int64_t>(b.width, static_cast<std::int64_t>(s.size()));
  b.ids.assign(static_cast<std::size_t>(b.batch * b.width), pad_id);
  b.mask.assign(static_cast<std::size_t>(b.batch * b.width), 0);
  for (std::int64_t r = 0; r < b.batch; ++r) {
    const auto& s = seqs[static_cast<std::size_t>(r)];
    b.lengths.push_back(static_cast<std::int64_t>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      b.ids[static_cast<std::size_t>(r * b.width) + i] = s[i];
      b.mask[static_cast<std::size_t>(r * b.width) + i] = 1;
    }
  }
  return b;
}

Tensor TaskBatch::item_frames(std::int64_t row) const {
  if (!frames.defined()) throw std::runtime_error("task batch: no frames present");
  const std::int64_t t_max = frames.extent(1);
  const std::int64_t f = frames.extent(2);
  const std::int64_t len = frame_lengths.at(static_cast<std::size_t>(row));
  Arr out(len * f);
  out = frames.array().segment(row * t_max * f, len * f);
  return Tensor::from_array({len, f}, std::move(out), false);
}

std::vector<int> tokens_of_text(const std::string& text, const TokenVocab& vocab) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return vocab.tokenize(words);
}

namespace {

[[noreturn]] void missing_field(Task task, const ManifestRecord& r, const char* field) {
  throw std::runtime_error("build_batch: record '" + r.id + "' lacks " + field + " required by the " +
                           task_name(task) + " task");
}

}  // namespace

TaskBatch build_batch(Task task, const Manifest& pool, std::span<const std::size_t> rows,
                      const FrameStore* frames, const PhonemeInventory& inv,
                      const TokenVocab& vocab, const model::ModelConfig& mc,
                      const BatchOptions& opt, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("build_batch: empty selection");
  TaskBatch batch;
  batch.task = task;

  const bool needs_frames = task != Task::T2T;
  const bool needs_alignment = task == Task::S2P;
  const bool needs_text = task == Task::T2T || task == Task::S2T;

  std::vector<Tensor> frame_mats;
  std::vector<std::vector<int>> aligns, sources, targets;

  std::uint64_t noise_stream = 0;
  for (std::size_t row : rows) {
    if (row >= pool.records.size()) throw std::out_of_range("build_batch: row index out of range");
    const ManifestRecord& r = pool.records[row];
    batch.ids.push_back(r.id);

    if (needs_frames) {
      if (r.frame_offset < 0 || !frames) missing_field(task, r, "frames");
      Tensor t = frames->load(r.id, inv.frame_dim());
      batch.frame_lengths.push_back(t.rows());
      batch.context_lengths.push_back(mc.context_length(t.rows()));
      frame_mats.push_back(std::move(t));
    }
    if (needs_alignment) {
      if (r.align_runs.empty() || r.phonemes.empty()) missing_field(task, r, "alignment");
      if (r.align_runs.size() != r.phonemes.size()) {
        throw std::runtime_error("build_batch: record '" + r.id + "' has " +
                                 std::to_string(r.align_runs.size()) + " runs for " +
                                 std::to_string(r.phonemes.size()) + " phonemes");
      }
      // context-rate labels: one per downsample_factor raw frames
      const int factor = mc.downsample_factor();
      std::vector<int> ctx;
      for (std::size_t k = 0; k < r.align_runs.size(); ++k) {
        const std::int64_t raw = r.align_runs[k];
        if (raw % factor != 0) {
          throw std::runtime_error("build_batch: record '" + r.id +
                                   "' has a run length that is not a multiple of the conv stride product");
        }
        const int id = inv.id_of(r.phonemes[k]);
        for (std::int64_t j = 0; j < raw / factor; ++j) ctx.push_back(id);
      }
      aligns.push_back(std::move(ctx));
    }
    if (needs_text) {
      if (r.target_text.empty()) missing_field(task, r, "target text");
      targets.push_back(tokens_of_text(r.target_text, vocab));
      if (task == Task::T2T) {
        if (r.phonemes.empty()) missing_field(task, r, "phonemes");
        std::vector<int> src;
        for (const auto& sym : r.phonemes) {
          const int id = inv.id_of(sym);
          if (id != PhonemeInventory::kSil) src.push_back(id);
        }
        if (opt.mode == CorpusMode::ASR && opt.t2t_mask_rate > 0.0) {
          src = tasks::noise_text(src, opt.t2t_mask_rate, PhonemeInventory::kMsk,
                                  Rng::derive(seed, 7000 + noise_stream));
        }
        sources.push_back(std::move(src));
      }
    }
    ++noise_stream;
  }

  if (needs_frames) {
    const std::int64_t B = static_cast<std::int64_t>(frame_mats.size());
    std::int64_t t_max = 0;
    for (const auto& t : frame_mats) t_max = std::max(t_max, t.rows());
    const int f = inv.frame_dim();
    Arr data = Arr::Zero(B * t_max * f);
    Arr mask = Arr::Zero(B * t_max);
    for (std::int64_t b = 0; b < B; ++b) {
      const auto& t = frame_mats[static_cast<std::size_t>(b)];
      data.segment(b * t_max * f, t.numel()) = t.array();
      mask.segment(b * t_max, t.rows()).setOnes();
    }
    batch.frames = Tensor::from_array({B, t_max, f}, std::move(data), false);
    batch.frame_mask = Tensor::from_array({B, t_max}, std::move(mask), false);
  }
  if (needs_alignment) batch.alignment = IdBatch::from_sequences(aligns, PhonemeInventory::kPad);
  if (task == Task::T2T) batch.source = IdBatch::from_sequences(sources, PhonemeInventory::kPad);
  if (needs_text) batch.target = IdBatch::from_sequences(targets, kPadToken);
  return batch;
}

TaskBatch build_batch(Task task, const Manifest& pool, std::int64_t batch_size,
                      const FrameStore* frames, const PhonemeInventory& inv,
                      const TokenVocab& vocab, const model::ModelConfig& mc,
                      const BatchOptions& opt, std::uint64_t seed) {
  if (pool.records.empty()) throw std::invalid_argument("build_batch: empty pool");
  if (batch_size <= 0) throw std::invalid_argument("build_batch: batch size must be positive");
  std::vector<std::size_t> order(pool.records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(batch_size));
  order.resize(take);
  return build_batch(task, pool, order, frames, inv, vocab, mc, opt, seed);
}

}  // namespace stpt::data

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stpt/common.hpp"
#include "stpt/data/corpus.hpp"
#include "stpt/data/vocab.hpp"
#include "stpt/model/config.hpp"
#include "stpt/num/tensor.hpp"

namespace stpt::data {

// Padded integer tensor plus its mask; rows are pad-filled to a common width.
struct IdBatch {
  std::int64_t batch = 0;
  std::int64_t width = 0;
  std::vector<std::int32_t> ids;    // row-major [batch, width]
  std::vector<std::uint8_t> mask;   // 1 = real
  std::vector<std::int64_t> lengths;

  bool empty() const { return batch == 0; }
  std::vector<int> sequence(std::int64_t row) const;
  static IdBatch from_sequences(const std::vector<std::vector<int>>& seqs, int pad_id);
};

// One mini-batch tagged with its subtask. Only the tensors that subtask
// consumes are populated: SSL has frames alone, S2P adds frame-level labels,
// T2T is text only, S2T pairs frames with target tokens.
struct TaskBatch {
  Task task = Task::T2T;
  std::vector<std::string> ids;

  Tensor frames;                        // [B, T_max, frame_dim], zero-padded
  Tensor frame_mask;                    // [B, T_max], 1 = real
  std::vector<std::int64_t> frame_lengths;
  std::vector<std::int64_t> context_lengths;

  IdBatch alignment;  // context-rate phoneme ids (S2P)
  IdBatch source;     // encoder-side ids: phonemes for T2T
  IdBatch target;     // decoder-side token ids (no BOS/EOS)

  std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
  // Real-length frame matrix of one item, sliced out of the padded tensor.
  Tensor item_frames(std::int64_t row) const;
};

struct BatchOptions {
  CorpusMode mode = CorpusMode::ASR;
  double t2t_mask_rate = 0.3;  // BART-style span masking in ASR mode; ST uses none
};

// Deterministically samples batch_size records from the pool slice and pads
// them into one TaskBatch. The frame store may be null for text-only tasks.
// Missing per-task fields raise a data error naming the field and record.
TaskBatch build_batch(Task task, const Manifest& pool, std::span<const std::size_t> rows,
                      const FrameStore* frames, const PhonemeInventory& inv,
                      const TokenVocab& vocab, const model::ModelConfig& mc,
                      const BatchOptions& opt, std::uint64_t seed);

TaskBatch build_batch(Task task, const Manifest& pool, std::int64_t batch_size,
                      const FrameStore* frames, const PhonemeInventory& inv,
                      const TokenVocab& vocab, const model::ModelConfig& mc,
                      const BatchOptions& opt, std::uint64_t seed);

std::vector<int> tokens_of_text(const std::string& text, const TokenVocab& vocab);

}  // namespace stpt::data

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "stpt/cli/config.hpp"
#include "stpt/data/batch.hpp"
#include "stpt/model/checkpoint.hpp"
#include "stpt/model/net.hpp"
#include "stpt/train/schedule.hpp"

namespace stpt::train {

// Everything a training or evaluation run reads from a generated corpus
// directory.
struct DataBundle {
  data::PhonemeInventory inventory{};
  data::TokenVocab vocab;
  data::Manifest unlabeled, supervised, text, dev, test;
  std::optional<data::FrameStore> frames;

  static DataBundle load(const std::string& dir);
};

// Tab-separated, machine-parseable run log: update index, task tag, loss,
// learning rate. A null stream silences it.
class TrainLog {
 public:
  explicit TrainLog(std::ostream* os) : os_(os) {}
  void line(std::int64_t update, Task task, double loss, double lr);
  void note(const std::string& text);

 private:
  std::ostream* os_;
};

using CheckpointSink = std::function<void(const model::Checkpoint&, std::int64_t update)>;

// Text-only pre-training. With the skip ablation set this returns the
// randomly initialized checkpoint untouched.
model::Checkpoint run_stage1_t2t(const cli::RunConfig& cfg, const DataBundle& data, TrainLog& log,
                                 const CheckpointSink& sink = nullptr);

// Joint pre-training over the four subtasks with ratio scheduling. Aborts
// with a collapse diagnosis when the clean-pass targets degenerate onto one
// or two phonemes for 100 consecutive speech batches, and on NaN losses.
model::Checkpoint run_stage2_joint(const cli::RunConfig& cfg, const DataBundle& data,
                                   const model::Checkpoint& init, TrainLog& log,
                                   const CheckpointSink& sink = nullptr);

// Fine-tuning restricted to the sequence-to-sequence tasks.
model::Checkpoint run_stage3_finetune(const cli::RunConfig& cfg, const DataBundle& data,
                                      const model::Checkpoint& init, TrainLog& log,
                                      const CheckpointSink& sink = nullptr);

// Resume a stage from a mid-stage checkpoint (parameters, optimizer moments
// and update counter); with unchanged seeds the continuation reproduces the
// uninterrupted run bit for bit.
model::Checkpoint resume_stage(int stage, const cli::RunConfig& cfg, const DataBundle& data,
                               const model::Checkpoint& from, TrainLog& log,
                               const CheckpointSink& sink = nullptr);

}  // namespace stpt::train

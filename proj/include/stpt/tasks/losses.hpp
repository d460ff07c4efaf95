#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "stpt/data/batch.hpp"
#include "stpt/model/net.hpp"
#include "stpt/tasks/masking.hpp"

namespace stpt::tasks {

// Loss-scale weights for the combined objective; task weighting is otherwise
// realized through the mini-batch schedule, so these default to 1.
struct TaskWeights {
  double alpha = 1.0;  // SSL
  double beta = 1.0;   // S2P
  double gamma = 1.0;  // S2T
};

enum class SslLossKind { MaskedKL, Contrastive };

struct ContrastiveOptions {
  int n_distractors = 100;
  double temperature = 0.1;
};

// --- per-utterance losses ---

// Denoising / translation text task: src phonemes in, token negative
// log-likelihood out, mean per predicted token (targets plus EOS).
Tensor t2t_loss(model::STPTModel& m, std::span<const int> src_phonemes,
                std::span<const int> tgt_tokens);

// Clean-pass phoneme distributions, computed with gradients off; these are
// the detached targets of the masked losses.
Tensor ssl_targets(model::STPTModel& m, const Tensor& frames);

// Masked KL between the clean-pass distributions and the corrupted-pass
// distributions at masked frames, normalized by masked count. Empty plans
// yield an exact zero.
Tensor ssl_masked_kl_loss(model::STPTModel& m, const Tensor& frames, const MaskPlan& plan);
// Same loss with externally supplied (frozen) targets; lets a finite
// difference probe hold pass-1 fixed while parameters move.
Tensor ssl_masked_kl_loss_given_targets(model::STPTModel& m, const Tensor& frames,
                                        const MaskPlan& plan, const Tensor& targets);

// Frame-level phoneme classification on corrupted input, mean over frames.
Tensor s2p_loss(model::STPTModel& m, const Tensor& frames, std::span<const int> alignment,
                const MaskPlan& plan);

// Sequence-to-sequence cross entropy on corrupted speech, mean per token.
Tensor s2t_loss(model::STPTModel& m, const Tensor& frames, std::span<const int> tgt_tokens,
                const MaskPlan& plan);

// InfoNCE-style alternative to the masked KL: positives are the clean-pass
// outputs at the same frame, distractors are clean-pass outputs at other
// masked frames of the same utterance.
Tensor contrastive_loss(model::STPTModel& m, const Tensor& frames, const MaskPlan& plan,
                        const ContrastiveOptions& opt, std::uint64_t seed);
Tensor contrastive_loss_given_targets(model::STPTModel& m, const Tensor& frames,
                                      const MaskPlan& plan, const Tensor& clean_context,
                                      const ContrastiveOptions& opt, std::uint64_t seed);

// l_t2t + alpha*l_ssl + beta*l_s2p + gamma*l_s2t; a NaN component raises a
// numeric error naming the subtask.
Tensor combine_losses(const Tensor& l_t2t, const Tensor& l_ssl, const Tensor& l_s2p,
                      const Tensor& l_s2t, const TaskWeights& w);

// --- batch-level wrappers ---

struct BatchLossOptions {
  double ssl_mask_start = 0.07;
  double supervised_mask_start = 0.03;
  int span_length = 10;
  bool mask_supervised = true;  // turned off for evaluation
  SslLossKind ssl_kind = SslLossKind::MaskedKL;
  ContrastiveOptions contrastive;
};

// Collapse telemetry: share of the mean clean-pass target mass on its two
// most likely phonemes, over the batch's masked frames.
struct SslBatchStats {
  double top2_target_mass = 0.0;
  std::int64_t masked_frames = 0;
};

// Dispatches on batch.task; losses are normalized per token / frame / masked
// frame across the whole batch. Per-item mask plans derive from `seed`.
Tensor batch_task_loss(model::STPTModel& m, const data::TaskBatch& batch,
                       const BatchLossOptions& opt, std::uint64_t seed,
                       SslBatchStats* stats = nullptr);

}  // namespace stpt::tasks

#include "stpt/tasks/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stpt/num/rng.hpp"

namespace stpt::tasks {

using model::STPTModel;

namespace {

// Decoder input [BOS, y...] and labels [y..., EOS].
std::pair<std::vector<int>, std::vector<int>> teacher_forcing(std::span<const int> tgt) {
  std::vector<int> input{kBosToken};
  input.insert(input.end(), tgt.begin(), tgt.end());
  std::vector<int> labels(tgt.begin(), tgt.end());
  labels.push_back(kEosToken);
  return {std::move(input), std::move(labels)};
}

Tensor decoder_nll_sum(STPTModel& m, const Tensor& memory, std::span<const int> tgt) {
  auto [input, labels] = teacher_forcing(tgt);
  Tensor logits = m.decode(input, memory);
  return cross_entropy_rows(logits, labels, Reduction::Sum);
}

}  // namespace

Tensor t2t_loss(STPTModel& m, std::span<const int> src_phonemes, std::span<const int> tgt_tokens) {
  if (tgt_tokens.empty()) throw std::invalid_argument("t2t_loss: empty target sequence");
  if (src_phonemes.empty()) throw std::invalid_argument("t2t_loss: empty source sequence");
  Tensor memory = m.t2t_memory(src_phonemes);
  Tensor nll = decoder_nll_sum(m, memory, tgt_tokens);
  return scale(nll, 1.0 / static_cast<double>(tgt_tokens.size() + 1));
}

Tensor ssl_targets(STPTModel& m, const Tensor& frames) {
  NoGradGuard ng;
  Tensor context = m.speech_context(frames, nullptr);
  return softmax(m.phoneme_logits(context));
}

Tensor ssl_masked_kl_loss_given_targets(STPTModel& m, const Tensor& frames, const MaskPlan& plan,
                                        const Tensor& targets) {
  if (plan.empty()) return Tensor::scalar(0.0);
  Tensor context = m.speech_context(frames, &plan.masked);
  Tensor log_q = log_softmax(m.phoneme_logits(context));
  Tensor p_masked = gather_rows(targets, plan.masked);
  Tensor q_masked = gather_rows(log_q, plan.masked);
  Tensor total = kl_divergence_rows_sum(p_masked, q_masked);
  return scale(total, 1.0 / static_cast<double>(plan.masked.size()));
}

Tensor ssl_masked_kl_loss(STPTModel& m, const Tensor& frames, const MaskPlan& plan) {
  if (plan.empty()) return Tensor::scalar(0.0);
  return ssl_masked_kl_loss_given_targets(m, frames, plan, ssl_targets(m, frames));
}

Tensor s2p_loss(STPTModel& m, const Tensor& frames, std::span<const int> alignment,
                const MaskPlan& plan) {
  Tensor context = m.speech_context(frames, plan.empty() ? nullptr : &plan.masked);
  if (static_cast<std::int64_t>(alignment.size()) != context.rows()) {
    throw std::runtime_error("s2p_loss: alignment length " + std::to_string(alignment.size()) +
                             " does not match context length " + std::to_string(context.rows()));
  }
  Tensor logits = m.phoneme_logits(context);
  return cross_entropy_rows(logits, alignment, Reduction::Mean);
}

Tensor s2t_loss(STPTModel& m, const Tensor& frames, std::span<const int> tgt_tokens,
                const MaskPlan& plan) {
  if (tgt_tokens.empty()) throw std::invalid_argument("s2t_loss: empty target sequence");
  Tensor memory = m.s2t_memory(frames, plan.empty() ? nullptr : &plan.masked);
  Tensor nll = decoder_nll_sum(m, memory, tgt_tokens);
  return scale(nll, 1.0 / static_cast<double>(tgt_tokens.size() + 1));
}

Tensor contrastive_loss_given_targets(STPTModel& m, const Tensor& frames, const MaskPlan& plan,
                                      const Tensor& clean_context, const ContrastiveOptions& opt,
                                      std::uint64_t seed) {
  if (plan.empty()) return Tensor::scalar(0.0);
  const auto& masked = plan.masked;
  if (masked.size() < 2) {
    throw std::runtime_error("contrastive_loss: batch is degenerate, a masked frame has no "
                             "candidate distractors");
  }
  Tensor context = m.speech_context(frames, &masked);
  const std::int64_t d = context.cols();

  Rng rng(seed);
  std::vector<Tensor> per_frame;
  per_frame.reserve(masked.size());
  for (std::size_t j = 0; j < masked.size(); ++j) {
    // candidate block: positive first, then distractors drawn from the other
    // masked positions (with replacement; the candidate set is small)
    Arr cand(static_cast<std::int64_t>(opt.n_distractors + 1) * d);
    cand.segment(0, d) = clean_context.array().segment(masked[j] * d, d);
    for (int k = 0; k < opt.n_distractors; ++k) {
      std::size_t pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(masked.size()) - 1));
      if (pick >= j) ++pick;  // skip the positive
      cand.segment((k + 1) * d, d) = clean_context.array().segment(masked[pick] * d, d);
    }
    Tensor candidates = Tensor::from_array({opt.n_distractors + 1, d}, std::move(cand), false);
    Tensor scores = scale(cosine_rows(select_row(context, masked[j]), candidates),
                          1.0 / opt.temperature);
    per_frame.push_back(reshape(cross_entropy(scores, 0), {1}));
  }
  return mean(concat(per_frame, 0));
}

Tensor contrastive_loss(STPTModel& m, const Tensor& frames, const MaskPlan& plan,
                        const ContrastiveOptions& opt, std::uint64_t seed) {
  if (plan.empty()) return Tensor::scalar(0.0);
  Tensor clean;
  {
    NoGradGuard ng;
    clean = m.speech_context(frames, nullptr);
  }
  return contrastive_loss_given_targets(m, frames, plan, clean, opt, seed);
}

Tensor combine_losses(const Tensor& l_t2t, const Tensor& l_ssl, const Tensor& l_s2p,
                      const Tensor& l_s2t, const TaskWeights& w) {
  const std::pair<const Tensor*, const char*> parts[] = {
      {&l_t2t, "t2t"}, {&l_ssl, "ssl"}, {&l_s2p, "s2p"}, {&l_s2t, "s2t"}};
  for (const auto& [t, name] : parts) {
    if (!t->defined() || t->numel() != 1) {
      throw std::invalid_argument(std::string("combine_losses: ") + name + " component is not a scalar");
    }
    if (std::isnan(t->scalar_value())) {
      throw std::runtime_error(std::string("combine_losses: NaN in ") + name + " component");
    }
  }
  return add(add(l_t2t, scale(l_ssl, w.alpha)), add(scale(l_s2p, w.beta), scale(l_s2t, w.gamma)));
}

namespace {

MaskPlan item_plan(std::int64_t context_len, double p_start, int span_length, std::uint64_t seed,
                   std::int64_t item) {
  return sample_spans(context_len, p_start, span_length, Rng::derive(seed, 977 + static_cast<std::uint64_t>(item)));
}

}  // namespace

Tensor batch_task_loss(STPTModel& m, const data::TaskBatch& batch, const BatchLossOptions& opt,
                       std::uint64_t seed, SslBatchStats* stats) {
  const std::int64_t B = batch.size();
  if (B == 0) throw std::invalid_argument("batch_task_loss: empty batch");

  switch (batch.task) {
    case Task::T2T: {
      std::vector<Tensor> sums;
      std::int64_t total_tokens = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        auto src = batch.source.sequence(b);
        auto tgt = batch.target.sequence(b);
        if (tgt.empty()) throw std::invalid_argument("batch_task_loss: empty t2t target");
        Tensor memory = m.t2t_memory(src);
        sums.push_back(reshape(decoder_nll_sum(m, memory, tgt), {1}));
        total_tokens += static_cast<std::int64_t>(tgt.size()) + 1;
      }
      return scale(sum(concat(sums, 0)), 1.0 / static_cast<double>(total_tokens));
    }

    case Task::S2T: {
      std::vector<Tensor> sums;
      std::int64_t total_tokens = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        Tensor frames = batch.item_frames(b);
        auto tgt = batch.target.sequence(b);
        if (tgt.empty()) throw std::invalid_argument("batch_task_loss: empty s2t target");
        MaskPlan plan;
        if (opt.mask_supervised) {
          plan = item_plan(batch.context_lengths[static_cast<std::size_t>(b)],
                           opt.supervised_mask_start, opt.span_length, seed, b);
        }
        Tensor memory = m.s2t_memory(frames, plan.empty() ? nullptr : &plan.masked);
        sums.push_back(reshape(decoder_nll_sum(m, memory, tgt), {1}));
        total_tokens += static_cast<std::int64_t>(tgt.size()) + 1;
      }
      return scale(sum(concat(sums, 0)), 1.0 / static_cast<double>(total_tokens));
    }

    case Task::S2P: {
      std::vector<Tensor> sums;
      std::int64_t total_frames = 0;
      for (std::int64_t b = 0; b < B; ++b) {
        Tensor frames = batch.item_frames(b);
        auto align = batch.alignment.sequence(b);
        MaskPlan plan;
        if (opt.mask_supervised) {
          plan = item_plan(batch.context_lengths[static_cast<std::size_t>(b)],
                           opt.supervised_mask_start, opt.span_length, seed, b);
        }
        Tensor context = m.speech_context(frames, plan.empty() ? nullptr : &plan.masked);
        if (static_cast<std::int64_t>(align.size()) != context.rows()) {
          throw std::runtime_error("batch_task_loss: alignment length mismatch for '" +
                                   batch.ids[static_cast<std::size_t>(b)] + "'");
        }
        Tensor logits = m.phoneme_logits(context);
        sums.push_back(reshape(cross_entropy_rows(logits, align, Reduction::Sum), {1}));
        total_frames += context.rows();
      }
      return scale(sum(concat(sums, 0)), 1.0 / static_cast<double>(total_frames));
    }

    case Task::SSL: {
      std::vector<Tensor> sums;
      std::int64_t total_masked = 0;
      Arr mean_target;
      for (std::int64_t b = 0; b < B; ++b) {
        Tensor frames = batch.item_frames(b);
        MaskPlan plan = item_plan(batch.context_lengths[static_cast<std::size_t>(b)],
                                  opt.ssl_mask_start, opt.span_length, seed, b);
        if (plan.empty()) continue;
        if (opt.ssl_kind == SslLossKind::MaskedKL) {
          Tensor targets = ssl_targets(m, frames);
          if (stats) {
            for (auto row : plan.masked) {
              auto seg = targets.array().segment(row * targets.cols(), targets.cols());
              if (mean_target.size() == 0) mean_target = Arr::Zero(targets.cols());
              mean_target += seg;
            }
          }
          Tensor kl_sum = scale(ssl_masked_kl_loss_given_targets(m, frames, plan, targets),
                                static_cast<double>(plan.masked.size()));
          sums.push_back(reshape(kl_sum, {1}));
        } else {
          if (plan.masked.size() < 2) continue;  // no candidate distractors, no signal
          Tensor ctr = scale(contrastive_loss(m, frames, plan, opt.contrastive,
                                              Rng::derive(seed, 555 + static_cast<std::uint64_t>(b))),
                             static_cast<double>(plan.masked.size()));
          sums.push_back(reshape(ctr, {1}));
          if (stats) {
            NoGradGuard ng;
            Tensor targets = ssl_targets(m, frames);
            for (auto row : plan.masked) {
              auto seg = targets.array().segment(row * targets.cols(), targets.cols());
              if (mean_target.size() == 0) mean_target = Arr::Zero(targets.cols());
              mean_target += seg;
            }
          }
        }
        total_masked += static_cast<std::int64_t>(plan.masked.size());
      }
      if (stats) {
        stats->masked_frames = total_masked;
        stats->top2_target_mass = 0.0;
        if (total_masked > 0 && mean_target.size() > 0) {
          Arr dist = mean_target / static_cast<double>(total_masked);
          double top1 = 0.0, top2 = 0.0;
          for (Eigen::Index i = 0; i < dist.size(); ++i) {
            if (dist[i] > top1) {
              top2 = top1;
              top1 = dist[i];
            } else if (dist[i] > top2) {
              top2 = dist[i];
            }
          }
          stats->top2_target_mass = top1 + top2;
        }
      }
      if (sums.empty()) return Tensor::scalar(0.0);
      return scale(sum(concat(sums, 0)), 1.0 / static_cast<double>(total_masked));
    }
  }
  throw std::invalid_argument("batch_task_loss: unknown task tag");
}

}  // namespace stpt::tasks

#include "stpt/train/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "stpt/num/rng.hpp"
#include "stpt/tasks/losses.hpp"

namespace stpt::train {

DataBundle DataBundle::load(const std::string& dir) {
  data::CorpusPaths paths{dir};
  DataBundle b;
  b.inventory = data::PhonemeInventory::load(paths.inventory());
  b.unlabeled = data::Manifest::load(paths.manifest("unlabeled"));
  b.supervised = data::Manifest::load(paths.manifest("supervised"));
  b.text = data::Manifest::load(paths.manifest("text"));
  b.dev = data::Manifest::load(paths.manifest("dev"));
  b.test = data::Manifest::load(paths.manifest("test"));
  b.frames.emplace(paths.frames_bin(), paths.frames_index());
  return b;
}

void TrainLog::line(std::int64_t update, Task task, double loss, double lr) {
  if (!os_) return;
  *os_ << update << "\t" << task_name(task) << "\t" << std::setprecision(12) << loss << "\t" << lr
       << "\n";
}

void TrainLog::note(const std::string& text) {
  if (!os_) return;
  *os_ << "# " << text << "\n";
}

namespace {

struct StagePlan {
  int stage = 1;
  double peak_lr = 1e-3;
  std::int64_t max_updates = 0;
  TaskSchedule schedule;
};

StagePlan plan_for_stage(int stage, const cli::RunConfig& cfg) {
  StagePlan p;
  p.stage = stage;
  switch (stage) {
    case 1:
      p.peak_lr = cfg.get_double("train.stage1_lr");
      p.max_updates = cfg.get_int("train.stage1_updates");
      p.schedule = TaskSchedule::from_ratios({{Task::T2T, 1.0}});
      break;
    case 2: {
      p.peak_lr = cfg.get_double("train.stage2_lr");
      p.max_updates = cfg.get_int("train.stage2_updates");
      const double s2t_ratio =
          cfg.get_bool("train.ablate_drop_s2t") ? 0.0 : cfg.get_double("train.ratio_s2t");
      p.schedule = TaskSchedule::from_ratios({{Task::T2T, cfg.get_double("train.ratio_t2t")},
                                              {Task::SSL, cfg.get_double("train.ratio_ssl")},
                                              {Task::S2P, cfg.get_double("train.ratio_s2p")},
                                              {Task::S2T, s2t_ratio}});
      break;
    }
    case 3: {
      p.peak_lr = cfg.get_double("train.stage3_lr");
      p.max_updates = cfg.get_int("train.stage3_updates");
      std::vector<std::pair<Task, double>> ratios;
      std::istringstream ts(cfg.get("train.finetune_tasks"));
      std::string item;
      while (std::getline(ts, item, ',')) {
        if (item.empty()) continue;
        ratios.emplace_back(parse_task(item), 1.0);
      }
      if (ratios.empty()) throw std::invalid_argument("trainer: no fine-tuning tasks configured");
      p.schedule = TaskSchedule::from_ratios(ratios);
      break;
    }
    default:
      throw std::invalid_argument("trainer: unknown stage " + std::to_string(stage));
  }
  return p;
}

const data::Manifest& pool_for_task(Task task, const DataBundle& data) {
  switch (task) {
    case Task::T2T: return data.text;
    case Task::SSL: return data.unlabeled;
    case Task::S2P:
    case Task::S2T: return data.supervised;
  }
  throw std::invalid_argument("trainer: unknown task tag");
}

double task_weight(Task task, const cli::RunConfig& cfg) {
  switch (task) {
    case Task::T2T: return 1.0;
    case Task::SSL: return cfg.get_double("train.alpha");
    case Task::S2P: return cfg.get_double("train.beta");
    case Task::S2T: return cfg.get_double("train.gamma");
  }
  return 1.0;
}

tasks::BatchLossOptions loss_options(const cli::RunConfig& cfg, bool mask_supervised) {
  tasks::BatchLossOptions o;
  o.ssl_mask_start = cfg.get_double("train.ssl_mask_start");
  o.supervised_mask_start = cfg.get_double("train.supervised_mask_start");
  o.span_length = static_cast<int>(cfg.get_int("train.span_length"));
  o.mask_supervised = mask_supervised;
  o.ssl_kind = cfg.get("train.loss") == "contrastive" ? tasks::SslLossKind::Contrastive
                                                      : tasks::SslLossKind::MaskedKL;
  o.contrastive.n_distractors = static_cast<int>(cfg.get_int("train.distractors"));
  o.contrastive.temperature = cfg.get_double("train.temperature");
  return o;
}

model::Checkpoint run_stage(const StagePlan& plan, const cli::RunConfig& cfg, const DataBundle& data,
                            model::STPTModel& model, AdamOptimizer& opt, std::int64_t start_update,
                            TrainLog& log, const CheckpointSink& sink) {
  const std::uint64_t train_seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
  const std::uint64_t schedule_seed = Rng::derive(train_seed, 1000 + static_cast<std::uint64_t>(plan.stage));
  const std::int64_t warmup = cfg.get_int("train.warmup");
  const std::int64_t checkpoint_every = cfg.get_int("train.checkpoint_every");
  const bool mask_supervised =
      plan.stage == 3 ? cfg.get_bool("train.mask_supervised_in_finetune") : true;
  const tasks::BatchLossOptions opts = loss_options(cfg, mask_supervised);

  data::BatchOptions batch_opt;
  batch_opt.mode = data::parse_corpus_mode(cfg.get("data.mode"));
  batch_opt.t2t_mask_rate = batch_opt.mode == data::CorpusMode::ASR ? cfg.get_double("train.t2t_mask_rate") : 0.0;
  const auto mc = cfg.model_config();

  int collapse_streak = 0;
  for (std::int64_t u = start_update; u < plan.max_updates; ++u) {
    const Task task = plan.schedule.task_at(schedule_seed, u);
    const auto& pool = pool_for_task(task, data);
    const std::int64_t batch_size =
        task == Task::T2T ? cfg.get_int("train.batch_text") : cfg.get_int("train.batch_speech");
    const std::uint64_t batch_seed =
        Rng::derive(train_seed, static_cast<std::uint64_t>(plan.stage) * 1000000007ULL +
                                    static_cast<std::uint64_t>(u));
    const data::FrameStore* frames = data.frames ? &*data.frames : nullptr;
    auto batch = data::build_batch(task, pool, batch_size, frames, data.inventory, data.vocab, mc,
                                   batch_opt, batch_seed);
    // dropout masks are reseeded per update, so resumed runs replay exactly
    model.set_train_mode(true, Rng::derive(batch_seed, 17));

    tasks::SslBatchStats stats;
    Tensor loss = tasks::batch_task_loss(model, batch, opts, batch_seed,
                                         task == Task::SSL ? &stats : nullptr);
    const double loss_value = loss.scalar_value();
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("trainer: non-finite " + task_name(task) + " loss at update " +
                               std::to_string(u + 1) + "; aborting");
    }
    if (task == Task::SSL && stats.masked_frames > 0) {
      if (stats.top2_target_mass > 0.9) {
        ++collapse_streak;
      } else {
        collapse_streak = 0;
      }
      if (collapse_streak >= 100) {
        throw std::runtime_error(
            "trainer: speech-target collapse detected - over 90% of the clean-pass target mass sat "
            "on at most two phonemes for 100 consecutive speech batches; keep the frame "
            "classification task in the schedule to anchor the targets");
      }
    }

    const double lr = learning_rate_at(plan.peak_lr, warmup, u + 1);
    if (loss.requires_grad()) {
      const double weight = task_weight(task, cfg);
      Tensor weighted = weight == 1.0 ? loss : scale(loss, weight);
      backward(weighted);
      opt.set_lr(lr);
      opt.step();
    }
    // a constant loss (every sampled mask plan empty) contributes no step
    log.line(u + 1, task, loss_value, lr);

    if (sink && checkpoint_every > 0 && (u + 1) % checkpoint_every == 0) {
      sink(model::Checkpoint::capture(model, &opt, cfg.as_map(), u + 1), u + 1);
    }
  }
  model.set_train_mode(false);
  return model::Checkpoint::capture(model, &opt, cfg.as_map(), plan.max_updates);
}

AdamConfig adam_config() {
  AdamConfig ac;
  ac.beta1 = 0.9;
  ac.beta2 = 0.98;
  ac.eps = 1e-8;
  return ac;
}

}  // namespace

model::Checkpoint run_stage1_t2t(const cli::RunConfig& cfg, const DataBundle& data, TrainLog& log,
                                 const CheckpointSink& sink) {
  model::STPTModel model(cfg.model_config(), static_cast<std::uint64_t>(cfg.get_int("model.seed")));
  if (cfg.get_bool("train.ablate_skip_t2t_pt")) {
    log.note("stage1 skipped: returning the randomly initialized model");
    return model::Checkpoint::capture(model, nullptr, cfg.as_map(), 0);
  }
  AdamOptimizer opt(model.parameters(), adam_config());
  log.note("stage1: text-to-text pre-training");
  return run_stage(plan_for_stage(1, cfg), cfg, data, model, opt, 0, log, sink);
}

model::Checkpoint run_stage2_joint(const cli::RunConfig& cfg, const DataBundle& data,
                                   const model::Checkpoint& init, TrainLog& log,
                                   const CheckpointSink& sink) {
  if (cfg.get_bool("train.ablate_drop_joint_pt")) {
    log.note("stage2 skipped: joint pre-training ablated away");
    return init;
  }
  model::STPTModel model(cfg.model_config(), static_cast<std::uint64_t>(cfg.get_int("model.seed")));
  init.restore(model);
  AdamOptimizer opt(model.parameters(), adam_config());
  log.note("stage2: joint pre-training over all scheduled subtasks");
  return run_stage(plan_for_stage(2, cfg), cfg, data, model, opt, 0, log, sink);
}

model::Checkpoint run_stage3_finetune(const cli::RunConfig& cfg, const DataBundle& data,
                                      const model::Checkpoint& init, TrainLog& log,
                                      const CheckpointSink& sink) {
  model::STPTModel model(cfg.model_config(), static_cast<std::uint64_t>(cfg.get_int("model.seed")));
  init.restore(model);
  AdamOptimizer opt(model.parameters(), adam_config());
  log.note("stage3: fine-tuning on the sequence-to-sequence tasks");
  return run_stage(plan_for_stage(3, cfg), cfg, data, model, opt, 0, log, sink);
}

model::Checkpoint resume_stage(int stage, const cli::RunConfig& cfg, const DataBundle& data,
                               const model::Checkpoint& from, TrainLog& log,
                               const CheckpointSink& sink) {
  model::STPTModel model(cfg.model_config(), static_cast<std::uint64_t>(cfg.get_int("model.seed")));
  AdamOptimizer opt(model.parameters(), adam_config());
  from.restore(model, &opt);
  log.note("resuming stage " + std::to_string(stage) + " at update " +
           std::to_string(from.update_counter));
  return run_stage(plan_for_stage(stage, cfg), cfg, data, model, opt, from.update_counter, log, sink);
}

}  // namespace stpt::train

// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "stpt/analysis/gradsim.hpp"
#include "stpt/cli/config.hpp"
#include "stpt/data/corpus.hpp"
#include "stpt/eval/decode.hpp"
#include "stpt/eval/metrics.hpp"
#include "stpt/model/checkpoint.hpp"
#include "stpt/num/rng.hpp"
#include "stpt/tasks/losses.hpp"
#include "stpt/train/schedule.hpp"
#include "stpt/train/trainer.hpp"

using namespace stpt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// shared fixtures

std::string scratch_dir() {
  static std::string dir = [] {
    auto d = fs::temp_directory_path() / "stpt_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
  }();
  return dir;
}

cli::RunConfig toy_run_config(const std::string& data_dir) {
  auto cfg = cli::RunConfig::defaults();
  cfg.set("data.dir", data_dir);
  cfg.set("data.n_unlabeled", "1000");
  cfg.set("data.n_supervised", "100");
  cfg.set("data.n_text", "1000");
  cfg.set("data.n_dev", "40");
  cfg.set("data.n_test", "40");
  cfg.validate();
  return cfg;
}

const std::string& toy_corpus_dir() {
  static const std::string dir = [] {
    const std::string d = scratch_dir() + "/corpus";
    auto cfg = toy_run_config(d);
    data::gen_corpus(cfg.corpus_config(), 11, d, cfg.header_lines());
    return d;
  }();
  return dir;
}

Tensor random_frames(std::int64_t t, int f, Rng& rng) {
  Arr v(t * f);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gauss();
  return Tensor::from_array({t, f}, std::move(v), false);
}

tasks::MaskPlan manual_plan(std::int64_t length, std::vector<std::int64_t> masked) {
  tasks::MaskPlan p;
  p.length = length;
  p.span_length = 1;
  p.starts = masked;
  p.masked = std::move(masked);
  return p;
}

// ---------------------------------------------------------------------------
// criterion 1: autodiff gradients of all four task losses and their weighted
// combination against central finite differences on a micro model

Outcome criterion_gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = model::ModelConfig::micro();
  model::STPTModel m(cfg, 42);
  Rng rng(7);

  auto frames = random_frames(10, cfg.frame_dim, rng);  // context length 5
  std::vector<int> src_phonemes{3, 4, 5, 6};
  std::vector<int> tgt_tokens{4, 5, 6, 3};
  std::vector<int> alignment{3, 3, 4, 5, 5};
  auto ssl_plan = manual_plan(5, {1, 2});
  auto sup_plan = manual_plan(5, {3});
  Tensor ssl_targets = tasks::ssl_targets(m, frames);
  tasks::TaskWeights weights;

  const std::function<Tensor()> losses[] = {
      [&] { return tasks::t2t_loss(m, src_phonemes, tgt_tokens); },
      [&] { return tasks::ssl_masked_kl_loss_given_targets(m, frames, ssl_plan, ssl_targets); },
      [&] { return tasks::s2p_loss(m, frames, alignment, sup_plan); },
      [&] { return tasks::s2t_loss(m, frames, tgt_tokens, sup_plan); },
      [&] {
        return tasks::combine_losses(
            tasks::t2t_loss(m, src_phonemes, tgt_tokens),
            tasks::ssl_masked_kl_loss_given_targets(m, frames, ssl_plan, ssl_targets),
            tasks::s2p_loss(m, frames, alignment, sup_plan),
            tasks::s2t_loss(m, frames, tgt_tokens, sup_plan), weights);
      },
  };
  const char* names[] = {"t2t", "ssl", "s2p", "s2t", "combined"};

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_at;
  for (int li = 0; li < 5; ++li) {
    m.zero_grads();
    Tensor loss = losses[li]();
    backward(loss);
    std::vector<Arr> autodiff;
    for (auto& [name, p] : m.parameters()) {
      autodiff.push_back(p.has_grad() ? p.grad_array() : Arr::Zero(p.numel()));
    }
    std::size_t pi = 0;
    for (auto& [name, p] : m.parameters()) {
      Arr& vals = p.mutable_array();
      for (Eigen::Index i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        double hi, lo;
        {
          NoGradGuard ng;
          vals[i] = orig + h;
          hi = losses[li]().scalar_value();
          vals[i] = orig - h;
          lo = losses[li]().scalar_value();
          vals[i] = orig;
        }
        const double fd = (hi - lo) / (2 * h);
        const double ad = autodiff[pi][i];
        const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3});
        if (rel > worst) {
          worst = rel;
          worst_at = std::string(names[li]) + ":" + name;
        }
      }
      ++pi;
    }
    m.zero_grads();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream os;
  os << "max relative error " << worst << " (worst at " << worst_at << "), " << secs << "s";
  return {worst < 1e-4 && secs < 120.0, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 2: masked-KL identity and non-negativity

Outcome criterion_ssl_identity() {
  auto cfg = model::ModelConfig::micro();
  Rng rng(3);
  double min_loss = 1e300;
  double empty_worst = 0.0;
  for (int s = 0; s < 5; ++s) {
    model::STPTModel m(cfg, 50 + static_cast<std::uint64_t>(s));
    auto frames = random_frames(12, cfg.frame_dim, rng);
    empty_worst = std::max(
        empty_worst, std::abs(tasks::ssl_masked_kl_loss(m, frames, manual_plan(6, {})).scalar_value()));
    for (int trial = 0; trial < 4; ++trial) {
      auto plan = tasks::sample_spans(6, 0.3, 3, static_cast<std::uint64_t>(trial) + 1);
      if (plan.empty()) continue;
      min_loss = std::min(min_loss, tasks::ssl_masked_kl_loss(m, frames, plan).scalar_value());
    }
  }
  std::ostringstream os;
  os << "empty-plan |loss| " << empty_worst << ", smallest masked loss " << min_loss;
  return {empty_worst <= 1e-9 && min_loss >= -1e-12, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 3: schedule exactness

Outcome criterion_schedule_exactness() {
  auto schedule = train::TaskSchedule::from_ratios(
      {{Task::T2T, 1.0}, {Task::SSL, 7.0}, {Task::S2P, 0.5}, {Task::S2T, 0.5}});
  if (schedule.cycle_length() != 18) return {false, "cycle length is not 18"};
  for (std::int64_t cycle = 0; cycle < 100; ++cycle) {
    std::map<Task, int> counts;
    for (Task t : schedule.cycle_order(99, cycle)) ++counts[t];
    if (counts[Task::T2T] != 2 || counts[Task::SSL] != 14 || counts[Task::S2P] != 1 ||
        counts[Task::S2T] != 1) {
      return {false, "cycle " + std::to_string(cycle) + " broke the (2,14,1,1) expansion"};
    }
  }
  return {true, "100 cycles each realized (2,14,1,1) exactly"};
}

// ---------------------------------------------------------------------------
// criterion 4: wiring isolation of the shared encoder

Outcome criterion_wiring_isolation() {
  Rng rng(17);
  for (int s = 0; s < 3; ++s) {
    for (auto variant : {model::Variant::PSE, model::Variant::FSE}) {
      auto cfg = model::ModelConfig::micro();
      cfg.variant = variant;
      model::STPTModel m(cfg, 60 + static_cast<std::uint64_t>(s));
      auto frames = random_frames(10, cfg.frame_dim, rng);
      auto ssl_plan = manual_plan(5, {1, 3});
      std::vector<int> alignment{3, 3, 4, 5, 5};

      for (int which = 0; which < 2; ++which) {
        Tensor loss = which == 0 ? tasks::ssl_masked_kl_loss(m, frames, ssl_plan)
                                 : tasks::s2p_loss(m, frames, alignment, manual_plan(5, {2}));
        backward(loss);
        double shared_norm = 0.0;
        bool shared_touched = false;
        for (const auto& [name, p] : m.parameters()) {
          if (name.rfind("enc.shared.", 0) != 0) continue;
          if (p.has_grad()) {
            shared_touched = true;
            shared_norm += p.grad_array().square().sum();
          }
        }
        m.zero_grads();
        if (variant == model::Variant::PSE && shared_touched) {
          return {false, "a shared-encoder parameter received gradient under the split wiring"};
        }
        if (variant == model::Variant::FSE && (!shared_touched || shared_norm == 0.0)) {
          return {false, "shared-encoder gradients vanished under the fully shared wiring"};
        }
      }
    }
  }
  return {true, "split wiring: exact zeros; shared wiring: non-zero on 3 random micro models"};
}

// ---------------------------------------------------------------------------
// criterion 5: conv downsampling closed form

Outcome criterion_downsampling() {
  auto paper = model::ModelConfig::paper_scale();
  if (paper.context_length(16000) != 49) {
    return {false, "16000 samples mapped to " + std::to_string(paper.context_length(16000))};
  }
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t t = 2000 + rng.uniform_int(30000);
    std::int64_t expect = t;
    for (std::size_t i = 0; i < paper.conv_strides.size(); ++i) {
      expect = (expect - paper.conv_kernels[i]) / paper.conv_strides[i] + 1;
    }
    if (paper.context_length(t) != expect) {
      return {false, "length " + std::to_string(t) + " disagreed with the closed form"};
    }
  }
  return {true, "16000 -> 49 and 5 random lengths match the closed form"};
}

// ---------------------------------------------------------------------------
// criterion 6: joint pre-training beats fine-tuning from the text-only stage

cli::RunConfig ablation_config(std::uint64_t seed) {
  auto cfg = toy_run_config(toy_corpus_dir());
  cfg.set("train.stage1_updates", "400");
  cfg.set("train.stage2_updates", "700");
  cfg.set("train.stage3_updates", "250");
  cfg.set("train.warmup", "50");
  cfg.set("train.checkpoint_every", "0");
  cfg.set("train.seed", std::to_string(seed));
  cfg.set("model.seed", std::to_string(seed));
  return cfg;
}

double dev_token_error(const model::Checkpoint& ck, const cli::RunConfig& cfg,
                       const train::DataBundle& data) {
  model::STPTModel m(cfg.model_config(), 0);
  ck.restore(m);
  auto report = eval::evaluate_split(m, data.dev, "dev", data, 48);
  return report.token_error_rate;
}

Outcome criterion_ablation_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  auto data = train::DataBundle::load(toy_corpus_dir());
  double joint_mean = 0.0, skip_mean = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto cfg = ablation_config(seed);
    train::TrainLog log(nullptr);
    auto stage1 = train::run_stage1_t2t(cfg, data, log);
    auto stage2 = train::run_stage2_joint(cfg, data, stage1, log);
    auto with_joint = train::run_stage3_finetune(cfg, data, stage2, log);
    auto without_joint = train::run_stage3_finetune(cfg, data, stage1, log);
    const double ter_joint = dev_token_error(with_joint, cfg, data);
    const double ter_skip = dev_token_error(without_joint, cfg, data);
    joint_mean += ter_joint / 3.0;
    skip_mean += ter_skip / 3.0;
    detail << " seed" << seed << ": " << ter_joint << " vs " << ter_skip << ";";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << "mean dev token error with joint pre-training " << joint_mean << " vs without " << skip_mean
     << " (" << detail.str() << " " << secs << "s)";
  return {joint_mean < skip_mean && secs < 1800.0, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 7: both speech objectives train without collapse and drop >= 50%

double probe_ssl_objective(model::STPTModel& m, const cli::RunConfig& cfg,
                           const train::DataBundle& data) {
  tasks::BatchLossOptions opts;
  opts.ssl_mask_start = cfg.get_double("train.ssl_mask_start");
  opts.span_length = static_cast<int>(cfg.get_int("train.span_length"));
  opts.ssl_kind = cfg.get("train.loss") == "contrastive" ? tasks::SslLossKind::Contrastive
                                                         : tasks::SslLossKind::MaskedKL;
  opts.contrastive.n_distractors = static_cast<int>(cfg.get_int("train.distractors"));
  opts.contrastive.temperature = cfg.get_double("train.temperature");
  data::BatchOptions bopt;
  const auto mc = cfg.model_config();
  double total = 0.0;
  int n = 0;
  NoGradGuard ng;
  for (std::uint64_t b = 0; b < 8; ++b) {
    auto batch = data::build_batch(Task::SSL, data.unlabeled, 4, &*data.frames, data.inventory,
                                   data.vocab, mc, bopt, 424200 + b);
    total += tasks::batch_task_loss(m, batch, opts, 424200 + b).scalar_value();
    ++n;
  }
  return total / n;
}

Outcome criterion_loss_harness() {
  auto data = train::DataBundle::load(toy_corpus_dir());
  std::ostringstream detail;
  bool ok = true;
  for (const std::string loss : {"kl", "contrastive"}) {
    auto cfg = toy_run_config(toy_corpus_dir());
    cfg.set("train.loss", loss);
    cfg.set("train.stage1_updates", "200");
    cfg.set("train.stage2_updates", "300");
    cfg.set("train.warmup", "50");
    cfg.set("train.checkpoint_every", "0");
    train::TrainLog log(nullptr);
    auto stage1 = train::run_stage1_t2t(cfg, data, log);

    model::STPTModel at_start(cfg.model_config(), 0);
    stage1.restore(at_start);
    const double before = probe_ssl_objective(at_start, cfg, data);

    model::Checkpoint stage2;
    try {
      stage2 = train::run_stage2_joint(cfg, data, stage1, log);
    } catch (const std::exception& e) {
      return {false, std::string("stage 2 aborted for ") + loss + ": " + e.what()};
    }
    model::STPTModel at_end(cfg.model_config(), 0);
    stage2.restore(at_end);
    const double after = probe_ssl_objective(at_end, cfg, data);
    const double drop = (before - after) / before;
    detail << " " << loss << ": " << before << " -> " << after << " (drop "
           << static_cast<int>(drop * 100) << "%);";
    if (!(after <= 0.5 * before)) ok = false;
  }
  return {ok, "speech objective over 300 joint updates:" + detail.str()};
}

// ---------------------------------------------------------------------------
// criterion 8: gradient-similarity report structure

Outcome criterion_gradsim_report() {
  auto data = train::DataBundle::load(toy_corpus_dir());

  // a briefly trained fully shared model
  auto cfg = toy_run_config(toy_corpus_dir());
  cfg.set("train.stage1_updates", "120");
  cfg.set("train.stage2_updates", "150");
  cfg.set("train.warmup", "30");
  cfg.set("train.checkpoint_every", "0");
  train::TrainLog log(nullptr);
  auto stage2 = train::run_stage2_joint(cfg, data, train::run_stage1_t2t(cfg, data, log), log);
  model::STPTModel m(cfg.model_config(), 0);
  stage2.restore(m);

  cfg.set("analysis.batch_size", "4");
  auto run_probe = [&](model::STPTModel& model, const cli::RunConfig& c) {
    std::map<Task, analysis::TaskGradients> grads;
    for (Task t : {Task::T2T, Task::SSL, Task::S2P, Task::S2T}) {
      grads[t] = analysis::accumulate_gradients(model, t, 20, data, c, 777);
    }
    return analysis::similarity_matrix(grads, "acceptance", 20, 777);
  };
  auto report = run_probe(m, cfg);
  auto report2 = run_probe(m, cfg);

  for (std::size_t g = 0; g < report.groups.size(); ++g) {
    const auto& sim = report.groups[g].sim;
    for (std::size_t i = 0; i < sim.size(); ++i) {
      for (std::size_t j = 0; j < sim.size(); ++j) {
        const auto& v = sim[i][j];
        const auto& v2 = report2.groups[g].sim[i][j];
        if (v.has_value() != v2.has_value() || (v && *v != *v2)) {
          return {false, "probe is not deterministic under a fixed seed"};
        }
        if (v) {
          if (*v < -1.0 - 1e-12 || *v > 1.0 + 1e-12) return {false, "similarity out of [-1,1]"};
          if (!sim[j][i] || *sim[j][i] != *v) return {false, "matrix asymmetry"};
          if (i == j && std::abs(*v - 1.0) > 1e-10) return {false, "diagonal differs from 1"};
        }
      }
    }
  }
  // the fully shared wiring must produce live shared-encoder rows for all tasks
  for (const auto& g : report.groups) {
    if (g.name.rfind("shared.", 0) == 0) {
      for (std::size_t i = 0; i < report.tasks.size(); ++i) {
        if (!g.sim[i][i].has_value()) return {false, "missing shared-row under full sharing"};
      }
    }
  }

  // split wiring marks the speech-only rows absent on the shared encoder
  auto pse_cfg = toy_run_config(toy_corpus_dir());
  pse_cfg.set("model.variant", "pse");
  pse_cfg.set("train.stage1_updates", "40");
  pse_cfg.set("train.stage2_updates", "36");
  pse_cfg.set("train.warmup", "10");
  pse_cfg.set("train.checkpoint_every", "0");
  pse_cfg.set("analysis.batch_size", "4");
  auto pse_stage2 =
      train::run_stage2_joint(pse_cfg, data, train::run_stage1_t2t(pse_cfg, data, log), log);
  model::STPTModel pse_model(pse_cfg.model_config(), 0);
  pse_stage2.restore(pse_model);
  auto pse_report = run_probe(pse_model, pse_cfg);
  auto task_index = [&](Task t) {
    for (std::size_t i = 0; i < pse_report.tasks.size(); ++i) {
      if (pse_report.tasks[i] == t) return i;
    }
    return std::size_t{0};
  };
  for (const auto& g : pse_report.groups) {
    if (g.name.rfind("shared.", 0) != 0) continue;
    for (Task t : {Task::SSL, Task::S2P}) {
      const std::size_t i = task_index(t);
      for (std::size_t j = 0; j < pse_report.tasks.size(); ++j) {
        if (g.sim[i][j].has_value()) {
          return {false, "split wiring still produced a shared-encoder entry for " + task_name(t)};
        }
      }
    }
  }
  return {true, "matrices symmetric, unit-diagonal, bounded, deterministic; split wiring rows absent"};
}

// ---------------------------------------------------------------------------
// criterion 9: masking statistics

Outcome criterion_masking_statistics() {
  // the rates under test are the shipped defaults
  auto defaults = cli::RunConfig::defaults();
  const double ssl_rate = defaults.get_double("train.ssl_mask_start");
  const double sup_rate = defaults.get_double("train.supervised_mask_start");
  const int span = static_cast<int>(defaults.get_int("train.span_length"));

  // span start rates over 1e5 positions each
  auto empirical_rate = [span](double p) {
    const std::int64_t L = 1000;
    std::int64_t starts = 0;
    for (int trial = 0; trial < 100; ++trial) {
      starts += static_cast<std::int64_t>(
          tasks::sample_spans(L, p, span, 5000 + static_cast<std::uint64_t>(trial)).starts.size());
    }
    return static_cast<double>(starts) / (100.0 * L);
  };
  std::ostringstream os;
  bool ok = true;
  if (ssl_rate != 0.07 || sup_rate != 0.03 || span != 10) {
    return {false, "shipped masking defaults drifted from 7%/3% with span 10"};
  }
  for (double p : {ssl_rate, sup_rate}) {
    const double rate = empirical_rate(p);
    const double sigma = std::sqrt(p * (1 - p) / 1e5);
    os << " start rate " << rate << " for " << p << " (3 sigma " << 3 * sigma << ");";
    if (std::abs(rate - p) > 3 * sigma) ok = false;
  }

  // text masking coverage
  std::int64_t masked = 0, total = 0;
  bool per_sequence_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) y[static_cast<std::size_t>(i)] = 10 + i % 7;
    auto noised = tasks::noise_text(y, defaults.get_double("train.t2t_mask_rate"), 2, 900 + static_cast<std::uint64_t>(trial));
    std::int64_t m = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (noised[i] == 2) ++m;
    }
    if (m < 15) per_sequence_ok = false;  // 30% of 50
    masked += m;
    total += 50;
  }
  const double coverage = static_cast<double>(masked) / static_cast<double>(total);
  os << " text coverage " << coverage;
  if (!per_sequence_ok || coverage < 0.3) ok = false;
  return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 10: metric oracles

std::int64_t dp_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::int64_t>> d(a.size() + 1, std::vector<std::int64_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

Outcome criterion_metric_oracles() {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> a, b;
    const int la = static_cast<int>(rng.uniform_int(15));
    const int lb = 1 + static_cast<int>(rng.uniform_int(15));
    for (int i = 0; i < la; ++i) a.push_back(static_cast<int>(rng.uniform_int(5)));
    for (int i = 0; i < lb; ++i) b.push_back(static_cast<int>(rng.uniform_int(5)));
    if (eval::edit_distance(a, b) != dp_oracle(a, b)) {
      return {false, "edit distance disagreed with the DP oracle"};
    }
  }

  // hand-enumerated corpus: p1=13/14, p2=9/11, p3=6/8, p4=4/5, bp=exp(1-15/14)
  std::vector<std::vector<std::string>> hyps{
      {"the", "cat", "sat", "on", "the", "mat"},
      {"a", "quick", "brown", "fox", "jumps"},
      {"hello", "world", "again"},
  };
  std::vector<std::vector<std::string>> refs{
      {"the", "cat", "sat", "on", "the", "mat"},
      {"the", "quick", "brown", "fox", "jumps"},
      {"hello", "there", "world", "again"},
  };
  const double got = eval::bleu(hyps, refs);
  if (std::abs(got - 76.503809862306) > 1e-6) {
    return {false, "corpus score " + std::to_string(got) + " differs from the enumerated value"};
  }

  // averaging identical checkpoints is the identity
  model::STPTModel m(model::ModelConfig::micro(), 77);
  auto ck = model::Checkpoint::capture(m, nullptr, {{"k", "v"}}, 0);
  auto avg = model::average_checkpoints({ck, ck, ck});
  for (const auto& [name, rec] : ck.records) {
    const auto* got_rec = avg.find(name);
    if (!got_rec || !(got_rec->second == rec.second).all()) {
      return {false, "averaging identical checkpoints changed '" + name + "'"};
    }
  }
  return {true, "edit distance == DP oracle on 100 pairs; corpus score matches to 1e-6; averaging is exact"};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria = {
      {1, "gradient-fidelity", criterion_gradient_fidelity},
      {2, "ssl-identity", criterion_ssl_identity},
      {3, "schedule-exactness", criterion_schedule_exactness},
      {4, "wiring-isolation", criterion_wiring_isolation},
      {5, "downsampling", criterion_downsampling},
      {6, "ablation-direction", criterion_ablation_direction},
      {7, "loss-harness", criterion_loss_harness},
      {8, "gradient-similarity-report", criterion_gradsim_report},
      {9, "masking-statistics", criterion_masking_statistics},
      {10, "metric-oracles", criterion_metric_oracles},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const double t0 = now_seconds();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double dt = now_seconds() - t0;
    std::printf("%s %2d %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), dt);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  fs::remove_all(scratch_dir());
  return failures;
}

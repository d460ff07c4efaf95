#include "stpt/cli/driver.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "stpt/analysis/gradsim.hpp"
#include "stpt/cli/config.hpp"
#include "stpt/eval/decode.hpp"
#include "stpt/model/checkpoint.hpp"
#include "stpt/train/trainer.hpp"

namespace stpt::cli {

namespace {

namespace fs = std::filesystem;

bool quiet() {
  const char* v = std::getenv("STPT_LOG");
  return v && std::string(v) == "quiet";
}

void note(const std::string& msg) {
  if (!quiet()) std::cerr << msg << "\n";
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;  // empty: "out" for runs, data.dir for gen-data
  std::int64_t seed = -1;  // -1: keep config value
  std::vector<std::string> ablate;
  std::string loss;
  std::string variant;
  std::vector<std::string> overrides;  // key=value
  std::string init_path;
  std::string model_path;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_init, bool with_model) {
  cmd->add_option("--config", o.config_path, "configuration file (key = value lines)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "override the command's seed");
  cmd->add_option("--ablate", o.ablate, "ablations: skip-t2t-pt, drop-s2t, drop-joint-pt")
      ->check(CLI::IsMember({"skip-t2t-pt", "drop-s2t", "drop-joint-pt"}));
  cmd->add_option("--loss", o.loss, "speech self-supervision objective")
      ->check(CLI::IsMember({"kl", "contrastive"}));
  cmd->add_option("--variant", o.variant, "encoder wiring")->check(CLI::IsMember({"fse", "pse"}));
  cmd->add_option("--set", o.overrides, "extra config overrides as key=value");
  if (with_init) cmd->add_option("--init", o.init_path, "initialization checkpoint");
  if (with_model) cmd->add_option("--model", o.model_path, "model checkpoint to load");
}

RunConfig load_config(const CommonOpts& o, const std::string& seed_key) {
  RunConfig cfg = o.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(o.config_path);
  if (!o.variant.empty()) cfg.set("model.variant", o.variant);
  if (!o.loss.empty()) cfg.set("train.loss", o.loss);
  for (const auto& a : o.ablate) {
    if (a == "skip-t2t-pt") cfg.set("train.ablate_skip_t2t_pt", "true");
    if (a == "drop-s2t") cfg.set("train.ablate_drop_s2t", "true");
    if (a == "drop-joint-pt") cfg.set("train.ablate_drop_joint_pt", "true");
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed >= 0) cfg.set(seed_key, std::to_string(o.seed));
  cfg.validate();
  return cfg;
}

RunConfig config_from_snapshot(const std::map<std::string, std::string>& snapshot) {
  RunConfig cfg = RunConfig::defaults();
  for (const auto& [k, v] : snapshot) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

// The normalized configuration is echoed at the top of each run log.
std::ofstream open_log(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open log '" + path + "'");
  for (const auto& line : cfg.header_lines()) os << "# " << line << "\n";
  return os;
}

train::CheckpointSink file_sink(const std::string& out_dir, const std::string& stage,
                                std::vector<std::string>* saved) {
  return [out_dir, stage, saved](const model::Checkpoint& ck, std::int64_t update) {
    const std::string path = out_dir + "/" + stage + "_ck" + std::to_string(update) + ".bin";
    ck.save(path);
    if (saved) saved->push_back(path);
  };
}

std::string out_of(const CommonOpts& o) { return o.out_dir.empty() ? "out" : o.out_dir; }

int cmd_gen_data(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "data.seed");
  if (!o.out_dir.empty()) cfg.set("data.dir", o.out_dir);
  const std::string dir = cfg.get("data.dir");
  data::gen_corpus(cfg.corpus_config(), static_cast<std::uint64_t>(cfg.get_int("data.seed")), dir,
                   cfg.header_lines());
  std::ofstream cfg_out(dir + "/gen_config.txt", std::ios::trunc);
  cfg_out << cfg.serialize();
  note("corpus written to " + dir);
  return 0;
}

int cmd_pretrain_t2t(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "train.seed");
  const std::string out = out_of(o);
  ensure_dir(out);
  auto data = train::DataBundle::load(cfg.get("data.dir"));
  auto log_file = open_log(out + "/stage1.log", cfg);
  train::TrainLog log(&log_file);
  auto ck = train::run_stage1_t2t(cfg, data, log, file_sink(out, "stage1", nullptr));
  ck.save(out + "/stage1.bin");
  note("stage1 checkpoint: " + out + "/stage1.bin");
  return 0;
}

int cmd_pretrain_joint(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "train.seed");
  const std::string out = out_of(o);
  ensure_dir(out);
  auto data = train::DataBundle::load(cfg.get("data.dir"));
  const std::string init_path = o.init_path.empty() ? out + "/stage1.bin" : o.init_path;
  auto init = model::Checkpoint::load(init_path);
  auto log_file = open_log(out + "/stage2.log", cfg);
  train::TrainLog log(&log_file);
  auto ck = train::run_stage2_joint(cfg, data, init, log, file_sink(out, "stage2", nullptr));
  ck.save(out + "/stage2.bin");
  note("stage2 checkpoint: " + out + "/stage2.bin");
  return 0;
}

int cmd_finetune(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "train.seed");
  const std::string out = out_of(o);
  ensure_dir(out);
  auto data = train::DataBundle::load(cfg.get("data.dir"));
  const std::string init_path = o.init_path.empty() ? out + "/stage2.bin" : o.init_path;
  auto init = model::Checkpoint::load(init_path);
  auto log_file = open_log(out + "/stage3.log", cfg);
  train::TrainLog log(&log_file);
  std::vector<std::string> saved;
  auto ck = train::run_stage3_finetune(cfg, data, init, log, file_sink(out, "stage3", &saved));
  ck.save(out + "/stage3.bin");
  saved.push_back(out + "/stage3.bin");

  // parameter average over the last saved checkpoints
  const std::int64_t k = std::min<std::int64_t>(cfg.get_int("train.average_last"),
                                                static_cast<std::int64_t>(saved.size()));
  std::vector<model::Checkpoint> tail;
  for (std::size_t i = saved.size() - static_cast<std::size_t>(k); i < saved.size(); ++i) {
    tail.push_back(model::Checkpoint::load(saved[i]));
  }
  auto averaged = model::average_checkpoints(tail);
  averaged.save(out + "/stage3_avg.bin");
  note("stage3 checkpoints: " + out + "/stage3.bin and stage3_avg.bin (" + std::to_string(k) +
       "-way average)");
  return 0;
}

int cmd_eval(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "train.seed");
  const std::string out = out_of(o);
  ensure_dir(out);
  auto data = train::DataBundle::load(cfg.get("data.dir"));
  std::string model_path = o.model_path;
  if (model_path.empty()) {
    model_path = fs::exists(out + "/stage3_avg.bin") ? out + "/stage3_avg.bin"
                                                           : out + "/stage3.bin";
  }
  auto ck = model::Checkpoint::load(model_path);
  RunConfig model_cfg = config_from_snapshot(ck.config);
  model::STPTModel m(model_cfg.model_config(), 0);
  ck.restore(m);

  const std::string split = cfg.get("eval.split");
  const auto& manifest = split == "test" ? data.test : data.dev;
  auto report = eval::evaluate_split(m, manifest, split, data,
                                     static_cast<int>(cfg.get_int("eval.max_len")));
  const std::string json_path = out + "/eval_" + split + ".json";
  std::ofstream js(json_path, std::ios::trunc);
  js << report.to_json(cfg.header_lines()) << "\n";

  std::ofstream run_log(out + "/eval.log", std::ios::app);
  run_log << split << "\t" << report.n_utterances << "\t" << report.token_error_rate << "\t"
          << report.word_error_rate << "\t" << report.bleu << "\n";
  note("eval '" + split + "': token error " + std::to_string(report.token_error_rate) +
       ", word error " + std::to_string(report.word_error_rate) + ", corpus score " +
       std::to_string(report.bleu));
  std::cout << json_path << "\n";
  return 0;
}

int cmd_grad_sim(const CommonOpts& o) {
  RunConfig cfg = load_config(o, "analysis.seed");
  const std::string out = out_of(o);
  ensure_dir(out);
  auto data = train::DataBundle::load(cfg.get("data.dir"));
  std::string model_path = o.model_path.empty() ? out + "/stage2.bin" : o.model_path;
  auto ck = model::Checkpoint::load(model_path);
  RunConfig model_cfg = config_from_snapshot(ck.config);
  model::STPTModel m(model_cfg.model_config(), 0);
  ck.restore(m);

  const int n_batches = static_cast<int>(cfg.get_int("analysis.batches"));
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("analysis.seed"));
  std::map<Task, analysis::TaskGradients> grads;
  for (Task t : {Task::T2T, Task::SSL, Task::S2P, Task::S2T}) {
    grads[t] = analysis::accumulate_gradients(m, t, n_batches, data, model_cfg, seed);
  }
  auto report = analysis::similarity_matrix(grads, fs::path(model_path).stem().string(), n_batches,
                                            seed);
  const std::string dir = out + "/gradsim";
  analysis::export_report(report, dir, cfg.header_lines());
  if (report.degenerate) note("warning: every probed gradient was zero; report is degenerate");
  note("gradient similarity report: " + dir);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"speech-text joint pre-training, toy-scale pipeline"};
  app.require_subcommand(1);

  CommonOpts gen_o, t2t_o, joint_o, ft_o, eval_o, sim_o;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, gen_o, false, false);
  auto* t2t = app.add_subcommand("pretrain-t2t", "stage 1: text-to-text pre-training");
  add_common(t2t, t2t_o, false, false);
  auto* joint = app.add_subcommand("pretrain-joint", "stage 2: joint pre-training");
  add_common(joint, joint_o, true, false);
  auto* ft = app.add_subcommand("finetune", "stage 3: fine-tune the sequence tasks");
  add_common(ft, ft_o, true, false);
  auto* ev = app.add_subcommand("eval", "decode a split and report error rates");
  add_common(ev, eval_o, false, true);
  auto* sim = app.add_subcommand("grad-sim", "per-layer gradient similarity across subtasks");
  add_common(sim, sim_o, false, true);

  std::vector<const char*> argv;
  argv.push_back("stpt");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_o);
    if (t2t->parsed()) return cmd_pretrain_t2t(t2t_o);
    if (joint->parsed()) return cmd_pretrain_joint(joint_o);
    if (ft->parsed()) return cmd_finetune(ft_o);
    if (ev->parsed()) return cmd_eval(eval_o);
    if (sim->parsed()) return cmd_grad_sim(sim_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace stpt::cli

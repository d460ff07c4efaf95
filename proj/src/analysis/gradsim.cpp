#include "stpt/analysis/gradsim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>

#include <json.hpp>

#include "stpt/num/ops.hpp"
#include "stpt/num/rng.hpp"
#include "stpt/tasks/losses.hpp"

namespace stpt::analysis {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

const data::Manifest& pool_for_task(Task task, const train::DataBundle& data) {
  switch (task) {
    case Task::T2T: return data.text;
    case Task::SSL: return data.unlabeled;
    case Task::S2P:
    case Task::S2T: return data.supervised;
  }
  throw std::invalid_argument("analysis: unknown task tag");
}

}  // namespace

std::string group_of_parameter(const std::string& name) {
  for (const char* stack : {"enc.speech.", "enc.shared."}) {
    if (starts_with(name, stack)) {
      const std::string rest = name.substr(std::string(stack).size());
      const auto dot = rest.find('.');
      if (dot == std::string::npos) return "";
      const std::string layer = rest.substr(0, dot);
      if (layer == "final_ln") return "";
      const std::string member = rest.substr(dot + 1);
      // attention and feed-forward weights only; LayerNorm parameters are
      // probed with neither group
      if (starts_with(member, "attn.") || starts_with(member, "ffn.")) {
        return std::string(stack).substr(4) + layer;  // "speech.0" / "shared.1"
      }
      return "";
    }
  }
  if (name == "emb.phoneme") return "embedding";
  return "";
}

TaskGradients accumulate_gradients(model::STPTModel& m, Task task, int n_batches,
                                   const train::DataBundle& data, const cli::RunConfig& cfg,
                                   std::uint64_t seed) {
  if (n_batches < 1) throw std::invalid_argument("accumulate_gradients: need at least one batch");

  // group layout (deterministic: parameter registry order)
  TaskGradients grads;
  std::vector<std::pair<std::string, std::int64_t>> offsets;  // param -> offset in its group
  std::map<std::string, std::int64_t> group_sizes;
  for (const auto& [name, p] : m.parameters()) {
    const std::string group = group_of_parameter(name);
    if (group.empty()) continue;
    offsets.emplace_back(name, group_sizes[group]);
    group_sizes[group] += p.numel();
  }
  for (const auto& [group, size] : group_sizes) {
    grads[group].vec = Arr::Zero(size);
    grads[group].absent = true;
  }

  tasks::BatchLossOptions opts;
  opts.ssl_mask_start = cfg.get_double("train.ssl_mask_start");
  opts.supervised_mask_start = cfg.get_double("train.supervised_mask_start");
  opts.span_length = static_cast<int>(cfg.get_int("train.span_length"));
  opts.mask_supervised = true;
  opts.ssl_kind = cfg.get("train.loss") == "contrastive" ? tasks::SslLossKind::Contrastive
                                                         : tasks::SslLossKind::MaskedKL;
  opts.contrastive.n_distractors = static_cast<int>(cfg.get_int("train.distractors"));
  opts.contrastive.temperature = cfg.get_double("train.temperature");

  data::BatchOptions batch_opt;
  batch_opt.mode = data::parse_corpus_mode(cfg.get("data.mode"));
  batch_opt.t2t_mask_rate =
      batch_opt.mode == data::CorpusMode::ASR ? cfg.get_double("train.t2t_mask_rate") : 0.0;
  const auto mc = cfg.model_config();
  const auto& pool = pool_for_task(task, data);
  const data::FrameStore* frames = data.frames ? &*data.frames : nullptr;
  const std::int64_t batch_size = cfg.get_int("analysis.batch_size");

  m.zero_grads();
  for (int b = 0; b < n_batches; ++b) {
    const std::uint64_t batch_seed =
        Rng::derive(seed, static_cast<std::uint64_t>(task) * 7919ULL + static_cast<std::uint64_t>(b));
    auto batch = data::build_batch(task, pool, batch_size, frames, data.inventory, data.vocab, mc,
                                   batch_opt, batch_seed);
    Tensor loss = tasks::batch_task_loss(m, batch, opts, batch_seed);
    backward(loss);
    for (const auto& [name, offset] : offsets) {
      Tensor p = m.param(name);
      if (!p.has_grad()) continue;
      const std::string group = group_of_parameter(name);
      auto& g = grads[group];
      g.vec.segment(offset, p.numel()) += p.grad_array();
    }
    m.zero_grads();
  }
  for (auto& [group, g] : grads) {
    g.absent = (g.vec == 0.0).all();
  }
  return grads;
}

GradientSimilarityReport similarity_matrix(const std::map<Task, TaskGradients>& grads,
                                           const std::string& model_id, int n_batches,
                                           std::uint64_t seed) {
  if (grads.size() < 2) throw std::invalid_argument("similarity_matrix: need at least two tasks");
  GradientSimilarityReport report;
  report.model_id = model_id;
  report.n_batches = n_batches;
  report.seed = seed;
  for (Task t : {Task::T2T, Task::SSL, Task::S2P, Task::S2T}) {
    if (grads.count(t)) report.tasks.push_back(t);
  }

  std::vector<std::string> groups;
  for (const auto& [group, g] : grads.begin()->second) groups.push_back(group);

  bool any_present = false;
  for (const auto& group : groups) {
    GradientSimilarityReport::Group out;
    out.name = group;
    const std::size_t n = report.tasks.size();
    out.sim.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& gi = grads.at(report.tasks[i]).at(group);
      for (std::size_t j = i; j < n; ++j) {
        const auto& gj = grads.at(report.tasks[j]).at(group);
        if (gi.absent || gj.absent) continue;  // recorded as absent, not 0
        any_present = true;
        const double sim = cosine_similarity(
            std::span<const double>(gi.vec.data(), static_cast<std::size_t>(gi.vec.size())),
            std::span<const double>(gj.vec.data(), static_cast<std::size_t>(gj.vec.size())));
        out.sim[i][j] = sim;
        out.sim[j][i] = sim;
      }
    }
    report.groups.push_back(std::move(out));
  }
  report.degenerate = !any_present;
  return report;
}

namespace {

std::string csv_for_group(const GradientSimilarityReport& r,
                          const GradientSimilarityReport::Group& g) {
  std::ostringstream os;
  os << "task";
  for (Task t : r.tasks) os << "," << task_name(t);
  os << "\n";
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < r.tasks.size(); ++i) {
    os << task_name(r.tasks[i]);
    for (std::size_t j = 0; j < r.tasks.size(); ++j) {
      os << ",";
      if (g.sim[i][j]) os << *g.sim[i][j];
    }
    os << "\n";
  }
  return os.str();
}

std::string heat_color(double v) {
  // diverging blue-white-red over [-1, 1]
  const double x = std::max(-1.0, std::min(1.0, v));
  int r, g, b;
  if (x >= 0) {
    r = 255;
    g = b = static_cast<int>(std::lround(255 * (1.0 - x)));
  } else {
    b = 255;
    r = g = static_cast<int>(std::lround(255 * (1.0 + x)));
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string svg_for_group(const GradientSimilarityReport& r,
                          const GradientSimilarityReport::Group& g) {
  const int cell = 72, margin = 56;
  const int n = static_cast<int>(r.tasks.size());
  const int w = margin + n * cell + 8, h = margin + n * cell + 8;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<text x=\"4\" y=\"16\" font-size=\"13\" font-family=\"sans-serif\">" << g.name
     << "</text>\n";
  for (int i = 0; i < n; ++i) {
    os << "<text x=\"" << margin + i * cell + cell / 2 << "\" y=\"" << margin - 8
       << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">"
       << task_name(r.tasks[static_cast<std::size_t>(i)]) << "</text>\n";
    os << "<text x=\"" << margin - 8 << "\" y=\"" << margin + i * cell + cell / 2 + 4
       << "\" font-size=\"12\" text-anchor=\"end\" font-family=\"sans-serif\">"
       << task_name(r.tasks[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  os << std::fixed << std::setprecision(3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto& v = g.sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const int x = margin + j * cell, y = margin + i * cell;
      if (v) {
        os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
           << "\" fill=\"" << heat_color(*v) << "\" stroke=\"#888\"/>\n";
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">" << *v
           << "</text>\n";
      } else {
        os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
           << "\" fill=\"#dddddd\" stroke=\"#888\"/>\n";
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">n/a</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

void export_report(const GradientSimilarityReport& report, const std::string& dir,
                   const std::vector<std::string>& config_header) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("export_report: cannot create '" + dir + "': " + ec.message());

  nlohmann::json summary;
  summary["model_id"] = report.model_id;
  summary["n_batches"] = report.n_batches;
  summary["seed"] = report.seed;
  summary["degenerate"] = report.degenerate;
  nlohmann::json jtasks = nlohmann::json::array();
  for (Task t : report.tasks) jtasks.push_back(task_name(t));
  summary["tasks"] = jtasks;
  nlohmann::json jcfg = nlohmann::json::object();
  for (const auto& line : config_header) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) jcfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  summary["config"] = jcfg;
  nlohmann::json jgroups = nlohmann::json::object();

  for (const auto& g : report.groups) {
    const std::string csv = csv_for_group(report, g);
    const std::string csv_path = dir + "/sim_" + g.name + ".csv";
    std::ofstream cs(csv_path, std::ios::trunc);
    if (!cs) throw std::runtime_error("export_report: cannot write '" + csv_path + "'");
    cs << csv;

    const std::string svg_path = dir + "/sim_" + g.name + ".svg";
    std::ofstream ss(svg_path, std::ios::trunc);
    if (!ss) throw std::runtime_error("export_report: cannot write '" + svg_path + "'");
    ss << svg_for_group(report, g);

    nlohmann::json jm = nlohmann::json::array();
    for (const auto& row : g.sim) {
      nlohmann::json jr = nlohmann::json::array();
      for (const auto& v : row) {
        if (v) {
          jr.push_back(*v);
        } else {
          jr.push_back(nullptr);
        }
      }
      jm.push_back(jr);
    }
    jgroups[g.name] = jm;
  }
  summary["groups"] = jgroups;

  const std::string json_path = dir + "/gradient_similarity.json";
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw std::runtime_error("export_report: cannot write '" + json_path + "'");
  js << summary.dump(2) << "\n";
}

std::pair<std::vector<std::string>, std::vector<std::vector<std::optional<double>>>>
parse_similarity_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("similarity csv: empty");
  std::vector<std::string> labels;
  {
    std::istringstream hs(line);
    std::string cell;
    bool first = true;
    while (std::getline(hs, cell, ',')) {
      if (!first) labels.push_back(cell);
      first = false;
    }
  }
  std::vector<std::vector<std::optional<double>>> matrix;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::optional<double>> row;
    std::istringstream ls(line);
    std::string cell;
    bool first = true;
    while (std::getline(ls, cell, ',')) {
      if (first) {
        first = false;
        continue;
      }
      if (cell.empty()) {
        row.push_back(std::nullopt);
      } else {
        row.push_back(std::stod(cell));
      }
    }
    while (row.size() < labels.size()) row.push_back(std::nullopt);  // trailing empty cell
    matrix.push_back(std::move(row));
  }
  return {labels, matrix};
}

}  // namespace stpt::analysis

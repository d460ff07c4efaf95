#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stpt/cli/config.hpp"
#include "stpt/model/net.hpp"
#include "stpt/train/trainer.hpp"

namespace stpt::analysis {

// Accumulated task gradient for one parameter group (one transformer layer's
// attention+FFN parameters, or the phoneme embedding table). A group a task's
// wiring never reaches stays exactly zero and is reported as absent rather
// than as similarity 0.
struct GroupGradient {
  Arr vec;
  bool absent = true;
};

using TaskGradients = std::map<std::string, GroupGradient>;

// Layer-group key for a parameter name, or empty when the parameter is not
// probed (LayerNorm gains, biases of the stacks' norms, conv stack, decoder).
std::string group_of_parameter(const std::string& param_name);

// Sums task-loss gradients over n_batches of training batches, concatenated
// per group. Model parameters are read, never written.
TaskGradients accumulate_gradients(model::STPTModel& m, Task task, int n_batches,
                                   const train::DataBundle& data, const cli::RunConfig& cfg,
                                   std::uint64_t seed);

struct GradientSimilarityReport {
  std::string model_id;
  int n_batches = 0;
  std::uint64_t seed = 0;
  std::vector<Task> tasks;  // row/column order
  struct Group {
    std::string name;
    std::vector<std::vector<std::optional<double>>> sim;
  };
  std::vector<Group> groups;
  bool degenerate = false;  // every vector absent
};

GradientSimilarityReport similarity_matrix(const std::map<Task, TaskGradients>& grads,
                                           const std::string& model_id, int n_batches,
                                           std::uint64_t seed);

// One CSV per group (6-decimal fixed point, absent entries empty), a JSON
// summary, and one annotated SVG heatmap per group.
void export_report(const GradientSimilarityReport& report, const std::string& dir,
                   const std::vector<std::string>& config_header);

// Parses a matrix CSV written by export_report (used by the tests).
std::pair<std::vector<std::string>, std::vector<std::vector<std::optional<double>>>>
parse_similarity_csv(const std::string& text);

}  // namespace stpt::analysis

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mora/config.hpp"
#include "mora/dataset.hpp"
#include "mora/model.hpp"
#include "mora/training.hpp"

namespace mora {

struct TaskMetrics {
  std::string task;
  std::size_t count = 0;
  double exact_match = 0.0;
  double levenshtein_mean = 0.0;
  double bleu = 0.0;
  // Numeric answers only; predictions that do not parse as numbers are
  // counted in mae_unparsed and left out of the mean.
  std::optional<double> mae;
  std::size_t mae_unparsed = 0;
  double answer_ce = 0.0;
  // Share of predictions that parse as SMILES (graph_copy only).
  std::optional<double> parseable_rate;
};

struct EvalReport {
  std::string label;
  std::string config;  // RunConfig::to_text snapshot
  std::size_t example_count = 0;
  std::vector<TaskMetrics> tasks;
  std::optional<double> final_train_loss;
  std::optional<double> passthrough_max_delta;
  std::string status = "ok";
};

EvalReport evaluate(const Model& model, const std::vector<TrainingExample>& examples, std::string label);

std::string reports_csv(const std::vector<EvalReport>& reports);
std::string reports_table(const std::vector<EvalReport>& reports);

// Mean of the last tenth (at least one) of the logged step losses.
double final_loss(const std::vector<LossRecord>& log);

// Largest |Δlogit| between the model's path for text-only prompts and a
// freshly initialized frozen backbone from the same config.
double passthrough_delta(const Model& model, const std::vector<TrainingExample>& text_only);

enum class AblationKind { targets, depth, static_vs_dynamic, passthrough };
AblationKind parse_ablation(std::string_view s);

struct AblationOptions {
  // Called before each run with its label.
  std::function<void(const std::string&)> on_run;
  TrainOptions train;
};

// Trains every configuration of the sweep from the config's seed, splits
// eval.holdout of the data for evaluation, and reports per run. Failures are
// recorded in the report status and the sweep continues.
std::vector<EvalReport> run_ablation(AblationKind kind, const RunConfig& config,
                                     const std::vector<TrainingExample>& dataset, const AblationOptions& options = {});

}  // namespace mora

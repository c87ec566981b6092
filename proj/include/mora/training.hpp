#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mora/config.hpp"
#include "mora/dataset.hpp"
#include "mora/model.hpp"

namespace mora {

struct AdamWParams {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct Moments {
  std::vector<double> m, v;
};

struct OptimizerState {
  AdamWParams hp;
  std::size_t step = 0;
  std::map<std::string, Moments> moments;  // keyed by parameter name
};

// One AdamW update with bias correction at step t (1-based) and decoupled
// weight decay. Throws NumericError on a non-finite gradient before writing.
void adamw_update(std::span<double> param, std::span<const double> grad, Moments& state, const AdamWParams& hp,
                  std::size_t t);

// Linear warm-up over ceil(warmup·total) steps, then cosine decay to zero.
double scheduled_lr(double base, std::size_t step, std::size_t total, double warmup);

OptimizerState make_optimizer(const Model& model);

// Mean loss over the batch; backward; AdamW on the model's trainable
// parameters at learning rate `lr`. Nothing is written when any gradient is
// non-finite.
double training_step(Model& model, std::span<const PreparedExample* const> batch, OptimizerState& opt, double lr);

struct LossRecord {
  std::size_t step;
  double lr;
  double loss;
};

std::string loss_csv(const std::vector<LossRecord>& log);

struct TrainOptions {
  // When set, periodic checkpoints go here as step_<N>.ckpt.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Called after every step; return false to stop early.
  std::function<bool(const LossRecord&)> on_step;
};

struct TrainResult {
  Model model;
  OptimizerState optimizer;
  std::vector<LossRecord> log;
};

// Number of optimizer steps the configuration asks for on n examples.
std::size_t planned_steps(const TrainingConfig& t, std::size_t n);

TrainResult train(const RunConfig& config, const std::vector<TrainingExample>& dataset, const TrainOptions& options = {});
// Same loop with a single input-independent adapter in place of the generator.
TrainResult static_lora_train(const RunConfig& config, const std::vector<TrainingExample>& dataset,
                              const TrainOptions& options = {});
// Continues from a given model/optimizer (mode taken from the model).
TrainResult train_model(Model model, OptimizerState opt, const std::vector<TrainingExample>& dataset,
                        const TrainOptions& options);

}  // namespace mora

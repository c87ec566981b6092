#include "mora/training.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "mora/checkpoint.hpp"
#include "mora/errors.hpp"

namespace mora {

void adamw_update(std::span<double> param, std::span<const double> grad, Moments& state, const AdamWParams& hp,
                  std::size_t t) {
  if (param.size() != grad.size()) throw DimensionError("adamw: parameter and gradient sizes differ");
  if (t == 0) throw ContractError("adamw: step counter starts at 1");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size()) throw DimensionError("adamw: moment buffers do not match parameter");
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= hp.lr * (m_hat / (std::sqrt(v_hat) + hp.eps) + hp.weight_decay * param[i]);
  }
}

double scheduled_lr(double base, std::size_t step, std::size_t total, double warmup) {
  if (total == 0) return base;
  const auto w = static_cast<std::size_t>(std::ceil(warmup * static_cast<double>(total)));
  if (step < w) return base * static_cast<double>(step + 1) / static_cast<double>(w);
  const std::size_t span = total - w;
  if (span == 0) return base;
  const double progress = static_cast<double>(step - w) / static_cast<double>(span);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState make_optimizer(const Model& model) {
  const TrainingConfig t = model.config.training();
  OptimizerState s;
  s.hp = AdamWParams{t.lr, t.beta1, t.beta2, t.eps, t.weight_decay};
  for (const auto& [name, tensor] : model.trainable()) s.moments[name] = Moments{};
  return s;
}

double training_step(Model& model, std::span<const PreparedExample* const> batch, OptimizerState& opt, double lr) {
  if (batch.empty()) throw ContractError("training_step on an empty batch");
  NamedTensors params = model.trainable();
  for (auto& [name, t] : params) t.zero_grad();

  Tensor total;
  for (const PreparedExample* ex : batch) {
    Tensor l = example_loss(model, *ex);
    total = total.defined() ? add(total, l) : l;
  }
  Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("non-finite training loss");
  if (loss.requires_grad()) backward(loss);

  for (const auto& [group, tensors] : model.groups()) {
    for (const auto& [name, t] : tensors) {
      if (!t.requires_grad() && t.has_grad()) throw ContractError("frozen parameter " + name + " received a gradient");
    }
  }
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name + "; step aborted");
  }

  ++opt.step;
  AdamWParams hp = opt.hp;
  hp.lr = lr;
  for (auto& [name, t] : params) {
    auto& mom = opt.moments[name];
    if (t.has_grad()) {
      adamw_update(t.mutable_data(), t.grad(), mom, hp, opt.step);
    } else {
      const std::vector<double> zeros(t.size(), 0.0);
      adamw_update(t.mutable_data(), zeros, mom, hp, opt.step);
    }
  }
  return value;
}

std::string loss_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,lr,loss\n";
  char buf[96];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.lr, r.loss);
    out += buf;
  }
  return out;
}

std::size_t planned_steps(const TrainingConfig& t, std::size_t n) {
  const std::size_t per_epoch = (n + t.batch - 1) / t.batch;
  std::size_t total = t.epochs * per_epoch;
  if (t.max_steps > 0 && total > t.max_steps) total = t.max_steps;
  return total;
}

TrainResult train_model(Model model, OptimizerState opt, const std::vector<TrainingExample>& dataset,
                        const TrainOptions& options) {
  const TrainingConfig tc = model.config.training();
  const std::vector<PreparedExample> prepared = prepare(model, dataset);
  const std::size_t total = planned_steps(tc, prepared.size());
  if (total > 0 && prepared.empty()) throw ContractError("training dataset is empty");

  std::seed_seq seq{static_cast<std::uint32_t>(model.config.seed()),
                    static_cast<std::uint32_t>(model.config.seed() >> 32), 5u};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(prepared.size());
  std::size_t cursor = order.size();

  TrainResult result{std::move(model), std::move(opt), {}};
  std::vector<const PreparedExample*> batch;
  for (std::size_t step = 0; step < total; ++step) {
    batch.clear();
    // Batches never straddle epochs; the last one of an epoch may be short.
    if (cursor >= order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      cursor = 0;
    }
    while (batch.size() < tc.batch && cursor < order.size()) batch.push_back(&prepared[order[cursor++]]);

    const double lr = scheduled_lr(tc.lr, step, total, tc.warmup);
    const double loss = training_step(result.model, batch, result.optimizer, lr);
    result.log.push_back(LossRecord{step + 1, lr, loss});
    if (options.checkpoint_dir && tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0) {
      save_checkpoint(*options.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".ckpt"), result.model,
                      result.optimizer);
    }
    if (options.on_step && !options.on_step(result.log.back())) break;
  }
  return result;
}

TrainResult train(const RunConfig& config, const std::vector<TrainingExample>& dataset, const TrainOptions& options) {
  Model model = init_model(config, TrainMode::dynamic);
  OptimizerState opt = make_optimizer(model);
  return train_model(std::move(model), std::move(opt), dataset, options);
}

TrainResult static_lora_train(const RunConfig& config, const std::vector<TrainingExample>& dataset,
                              const TrainOptions& options) {
  Model model = init_model(config, TrainMode::static_lora);
  OptimizerState opt = make_optimizer(model);
  return train_model(std::move(model), std::move(opt), dataset, options);
}

}  // namespace mora

#pragma once

// Flat `key = value` run configuration with a fixed schema.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mora/backbone.hpp"
#include "mora/encoder.hpp"
#include "mora/generator.hpp"

namespace mora {

enum class TrainMode : std::uint8_t { dynamic, static_lora };

struct TrainingConfig {
  double lr = 3e-4;
  std::size_t batch = 8;
  double warmup = 0.03;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 1;
  // When nonzero, caps the number of steps.
  std::size_t max_steps = 0;
  std::size_t checkpoint_every = 0;
  TrainMode mode = TrainMode::dynamic;
};

struct EvalConfig {
  std::size_t max_new = 8;
  double holdout = 0.1;
};

class RunConfig {
 public:
  // Desk preset.
  RunConfig();

  static RunConfig preset(std::string_view name);
  // Reads `key = value` lines; `#` starts a comment. A `preset` key, wherever
  // it appears, selects the base values that the other lines override.
  static RunConfig from_text(std::string_view text);
  static RunConfig from_file(const std::filesystem::path& path);

  // Throws ConfigError for unknown keys or values of the wrong type.
  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;
  long long get_int(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }
  // Applies MORA_SEED when set.
  void apply_environment();

  const std::map<std::string, std::string>& values() const { return values_; }
  // Canonical text form, one sorted `key = value` line per key.
  std::string to_text() const;

  BackboneConfig backbone() const;
  EncoderConfig encoder() const;
  GeneratorConfig generator() const;
  TrainingConfig training() const;
  EvalConfig eval() const;

  // Cross-module checks (query count vs assignment, rank vs width, ...).
  void validate() const;

  static std::vector<std::string> keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mora

#pragma once

// Full pipeline: frozen backbone + frozen encoder + generator (or a static
// adapter in baseline mode).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mora/backbone.hpp"
#include "mora/config.hpp"
#include "mora/dataset.hpp"
#include "mora/encoder.hpp"
#include "mora/generator.hpp"
#include "mora/molecule.hpp"

namespace mora {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct Model {
  RunConfig config;
  TrainMode mode = TrainMode::dynamic;
  Vocabulary vocab;
  BackboneParams backbone;
  EncoderParams encoder;
  GeneratorParams generator;
  std::optional<StaticAdapterParams> static_adapter;

  // Parameters the optimizer updates in this model's mode.
  NamedTensors trainable() const;
  // Every parameter, grouped: backbone, encoder, mawgen, static.
  std::vector<std::pair<std::string, NamedTensors>> groups() const;
};

// Deterministic from config.seed(); each group draws from its own stream so
// the backbone is identical across modes and generator settings.
Model init_model(const RunConfig& config, TrainMode mode);

// A dataset row with its graph parsed and its tokens laid out.
struct PreparedExample {
  std::size_t id = 0;
  std::optional<MolecularGraph> graph;
  std::uint64_t digest = 0;
  ExampleTokens tokens;
  TokenSequence prompt;
  std::string answer;
};

// Throws Error naming the example id when a graph fails to parse or the
// sequence does not fit the context.
std::vector<PreparedExample> prepare(const Model& model, const std::vector<TrainingExample>& examples);

// Dynamic mode: generated adapters for graph inputs, frozen path otherwise.
// Static mode: the shared adapter for every input.
std::optional<AdapterSet> adapters_for(const Model& model, const PreparedExample& ex);

// Mean token cross-entropy over the answer characters and EOS.
Tensor example_loss(const Model& model, const PreparedExample& ex);
// Mean cross-entropy over answer characters only (EOS excluded), no graph recorded.
double answer_cross_entropy(const Model& model, const PreparedExample& ex);
// Greedy answer text, EOS stripped.
std::string predict(const Model& model, const PreparedExample& ex, std::size_t max_new);

}  // namespace mora

#include "mora/model.hpp"

#include "mora/errors.hpp"
#include "mora/injection.hpp"

namespace mora {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t group) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), group};
  return std::mt19937_64(seq);
}

TargetDims dims_of(const BackboneConfig& b, const EncoderConfig& e) {
  return TargetDims{b.layers, b.d_model, b.d_ff, e.d_model};
}

}  // namespace

Model init_model(const RunConfig& config, TrainMode mode) {
  config.validate();
  Model m;
  m.config = config;
  m.mode = mode;
  const BackboneConfig bc = config.backbone();
  const EncoderConfig ec = config.encoder();
  const GeneratorConfig gc = config.generator();
  auto rb = stream(config.seed(), 1);
  auto re = stream(config.seed(), 2);
  auto rg = stream(config.seed(), 3);
  m.backbone = BackboneParams::init(bc, m.vocab.size(), rb);
  m.encoder = EncoderParams::init(ec, re);
  m.generator = GeneratorParams::init(gc, dims_of(bc, ec), rg);
  if (mode == TrainMode::static_lora) {
    auto rs = stream(config.seed(), 4);
    m.static_adapter = StaticAdapterParams::init(gc, dims_of(bc, ec), rs);
    for (auto& [name, t] : m.generator.named()) t.set_requires_grad(false);
    m.encoder.set_trainable(false);
  }
  return m;
}

NamedTensors Model::trainable() const {
  NamedTensors out;
  for (const auto& [group, tensors] : groups())
    for (const auto& [name, t] : tensors)
      if (t.requires_grad()) out.emplace_back(name, t);
  return out;
}

std::vector<std::pair<std::string, NamedTensors>> Model::groups() const {
  std::vector<std::pair<std::string, NamedTensors>> out;
  out.emplace_back("backbone", backbone.named());
  out.emplace_back("encoder", encoder.named());
  out.emplace_back("mawgen", generator.named());
  if (static_adapter) out.emplace_back("static", static_adapter->named());
  return out;
}

std::vector<PreparedExample> prepare(const Model& model, const std::vector<TrainingExample>& examples) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    PreparedExample p;
    p.id = i;
    p.answer = ex.answer;
    try {
      if (ex.smiles) {
        p.graph = parse_smiles(*ex.smiles);
        p.digest = graph_digest(*p.graph);
      }
      p.tokens = build_example_tokens(model.vocab, ex.instruction, ex.answer);
      p.prompt = build_prompt(model.vocab, ex.instruction);
    } catch (const Error& e) {
      throw Error("example " + std::to_string(i) + ": " + e.what());
    }
    if (p.tokens.input.size() > model.backbone.cfg.context) {
      throw ContextLengthError("example " + std::to_string(i) + ": " + std::to_string(p.tokens.input.size()) +
                               " tokens exceed context " + std::to_string(model.backbone.cfg.context));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<AdapterSet> adapters_for(const Model& model, const PreparedExample& ex) {
  if (model.mode == TrainMode::static_lora) return model.static_adapter->build();
  if (!ex.graph) return std::nullopt;
  return generate_adapter_set(encode_graph(*ex.graph, model.encoder), model.generator, ex.digest);
}

Tensor example_loss(const Model& model, const PreparedExample& ex) {
  const auto adapters = adapters_for(model, ex);
  const Tensor logits = forward_lm(model.backbone, ex.tokens.input, adapters ? &*adapters : nullptr);
  return cross_entropy(logits, ex.tokens.targets, Vocabulary::kPad);
}

double answer_cross_entropy(const Model& model, const PreparedExample& ex) {
  NoGradGuard no_grad;
  TokenSequence targets = ex.tokens.targets;
  targets.back() = Vocabulary::kPad;
  const auto adapters = adapters_for(model, ex);
  const Tensor logits = forward_lm(model.backbone, ex.tokens.input, adapters ? &*adapters : nullptr);
  return cross_entropy(logits, targets, Vocabulary::kPad).item();
}

std::string predict(const Model& model, const PreparedExample& ex, std::size_t max_new) {
  NoGradGuard no_grad;
  const auto adapters = adapters_for(model, ex);
  const TokenSequence out = greedy_decode(model.backbone, ex.prompt, adapters ? &*adapters : nullptr, max_new);
  TokenSequence gen(out.begin() + static_cast<std::ptrdiff_t>(ex.prompt.size()), out.end());
  if (!gen.empty() && gen.back() == Vocabulary::kEos) gen.pop_back();
  return model.vocab.detokenize(gen);
}

}  // namespace mora

#include "mora/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "mora/errors.hpp"

namespace mora {

namespace {

enum class Kind { integer, real, boolean, text };

struct KeySpec {
  Kind kind;
  std::string fallback;
  std::function<void(const std::string&)> check;  // may be empty
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void one_of(const std::string& v, std::initializer_list<const char*> allowed, const char* key) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw ConfigError(std::string(key) + " must be one of {" + list + "}, got \"" + v + "\"");
}

std::vector<std::size_t> parse_layer_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (v == "all") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw ConfigError("mawgen.layers must be \"all\" or a comma-separated list of layer indices, got \"" + v + "\"");
    }
    out.push_back(n);
  }
  if (out.empty()) throw ConfigError("mawgen.layers is empty");
  return out;
}

const std::map<std::string, KeySpec, std::less<>>& schema() {
  static const std::map<std::string, KeySpec, std::less<>> s = {
      {"seed", {Kind::integer, "1234", {}}},
      {"preset", {Kind::text, "desk", [](const std::string& v) { one_of(v, {"desk", "paper"}, "preset"); }}},
      {"backbone.layers", {Kind::integer, "4", {}}},
      {"backbone.d_model", {Kind::integer, "64", {}}},
      {"backbone.heads", {Kind::integer, "4", {}}},
      {"backbone.d_ff", {Kind::integer, "256", {}}},
      {"backbone.context", {Kind::integer, "256", {}}},
      {"encoder.layers", {Kind::integer, "3", {}}},
      {"encoder.d_model", {Kind::integer, "32", {}}},
      {"encoder.trainable", {Kind::boolean, "false", {}}},
      {"mawgen.blocks", {Kind::integer, "2", {}}},
      {"mawgen.queries", {Kind::integer, "5", {}}},
      {"mawgen.rank", {Kind::integer, "4", {}}},
      {"mawgen.alpha", {Kind::real, "4", {}}},
      {"mawgen.targets", {Kind::text, "qkvof", [](const std::string& v) { parse_targets(v); }}},
      {"mawgen.assignment",
       {Kind::text, "shared_across_layers", [](const std::string& v) { parse_assignment(v); }}},
      {"mawgen.d_model", {Kind::integer, "32", {}}},
      {"mawgen.heads", {Kind::integer, "4", {}}},
      {"mawgen.null_slot", {Kind::boolean, "true", {}}},
      {"mawgen.layers", {Kind::text, "all", [](const std::string& v) { parse_layer_list(v); }}},
      {"injection.ffn_maps", {Kind::text, "both", [](const std::string& v) { parse_ffn_maps(v); }}},
      {"training.lr", {Kind::real, "3e-4", {}}},
      {"training.batch", {Kind::integer, "8", {}}},
      {"training.warmup", {Kind::real, "0.03", {}}},
      {"training.weight_decay", {Kind::real, "0", {}}},
      {"training.beta1", {Kind::real, "0.9", {}}},
      {"training.beta2", {Kind::real, "0.999", {}}},
      {"training.eps", {Kind::real, "1e-8", {}}},
      {"training.epochs", {Kind::integer, "1", {}}},
      {"training.max_steps", {Kind::integer, "0", {}}},
      {"training.checkpoint_every", {Kind::integer, "0", {}}},
      {"training.mode",
       {Kind::text, "dynamic", [](const std::string& v) { one_of(v, {"dynamic", "static"}, "training.mode"); }}},
      {"eval.max_new", {Kind::integer, "8", {}}},
      {"eval.holdout", {Kind::real, "0.1", {}}},
  };
  return s;
}

void check_value(const std::string& key, const KeySpec& spec, const std::string& v) {
  switch (spec.kind) {
    case Kind::integer: {
      long long n = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || n < 0) {
        throw ConfigError(key + " expects a non-negative integer, got \"" + v + "\"");
      }
      break;
    }
    case Kind::real: {
      char* end = nullptr;
      const double d = std::strtod(v.c_str(), &end);
      if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
        throw ConfigError(key + " expects a real number, got \"" + v + "\"");
      }
      break;
    }
    case Kind::boolean:
      if (v != "true" && v != "false") throw ConfigError(key + " expects true or false, got \"" + v + "\"");
      break;
    case Kind::text:
      break;
  }
  if (spec.check) spec.check(v);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [key, spec] : schema()) values_[key] = spec.fallback;
}

RunConfig RunConfig::preset(std::string_view name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name != "paper") throw ConfigError("unknown preset \"" + std::string(name) + "\" (expected desk or paper)");
  c.values_["preset"] = "paper";
  c.values_["mawgen.blocks"] = "8";
  c.values_["mawgen.queries"] = "4";
  c.values_["mawgen.rank"] = "64";
  c.values_["mawgen.alpha"] = "64";
  c.values_["mawgen.targets"] = "qkvo";
  c.values_["training.lr"] = "2e-5";
  c.values_["training.batch"] = "128";
  c.values_["training.warmup"] = "0.03";
  c.values_["training.weight_decay"] = "0";
  return c;
}

RunConfig RunConfig::from_text(std::string_view text) {
  struct Line {
    std::size_t number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected `key = value`");
    }
    lines.push_back({number, std::string(trim(raw.substr(0, eq))), std::string(trim(raw.substr(eq + 1)))});
  }

  RunConfig c;
  for (const auto& l : lines) {
    if (l.key == "preset") c = preset(l.value);
  }
  for (const auto& l : lines) {
    try {
      c.set(l.key, l.value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(l.number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key \"" + std::string(key) + "\"");
  const std::string v(value);
  check_value(it->first, it->second, v);
  values_[it->first] = v;
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("unknown config key \"" + std::string(key) + "\"");
  return it->second;
}

long long RunConfig::get_int(std::string_view key) const { return std::stoll(get(key)); }
double RunConfig::get_double(std::string_view key) const { return std::strtod(get(key).c_str(), nullptr); }
bool RunConfig::get_bool(std::string_view key) const { return get(key) == "true"; }

void RunConfig::apply_environment() {
  if (const char* s = std::getenv("MORA_SEED"); s != nullptr && *s != '\0') {
    try {
      set("seed", s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("MORA_SEED: ") + e.what());
    }
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, spec] : schema()) out.push_back(k);
  return out;
}

BackboneConfig RunConfig::backbone() const {
  BackboneConfig b;
  b.layers = static_cast<std::size_t>(get_int("backbone.layers"));
  b.d_model = static_cast<std::size_t>(get_int("backbone.d_model"));
  b.heads = static_cast<std::size_t>(get_int("backbone.heads"));
  b.d_ff = static_cast<std::size_t>(get_int("backbone.d_ff"));
  b.context = static_cast<std::size_t>(get_int("backbone.context"));
  return b;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.layers = static_cast<std::size_t>(get_int("encoder.layers"));
  e.d_model = static_cast<std::size_t>(get_int("encoder.d_model"));
  e.trainable = get_bool("encoder.trainable");
  return e;
}

GeneratorConfig RunConfig::generator() const {
  GeneratorConfig g;
  g.blocks = static_cast<std::size_t>(get_int("mawgen.blocks"));
  g.queries = static_cast<std::size_t>(get_int("mawgen.queries"));
  g.rank = static_cast<std::size_t>(get_int("mawgen.rank"));
  g.alpha = get_double("mawgen.alpha");
  g.targets = parse_targets(get("mawgen.targets"));
  g.assignment = parse_assignment(get("mawgen.assignment"));
  g.d_model = static_cast<std::size_t>(get_int("mawgen.d_model"));
  g.heads = static_cast<std::size_t>(get_int("mawgen.heads"));
  g.null_slot = get_bool("mawgen.null_slot");
  g.ffn_maps = parse_ffn_maps(get("injection.ffn_maps"));
  g.layers = parse_layer_list(get("mawgen.layers"));
  return g;
}

TrainingConfig RunConfig::training() const {
  TrainingConfig t;
  t.lr = get_double("training.lr");
  t.batch = static_cast<std::size_t>(get_int("training.batch"));
  t.warmup = get_double("training.warmup");
  t.weight_decay = get_double("training.weight_decay");
  t.beta1 = get_double("training.beta1");
  t.beta2 = get_double("training.beta2");
  t.eps = get_double("training.eps");
  t.epochs = static_cast<std::size_t>(get_int("training.epochs"));
  t.max_steps = static_cast<std::size_t>(get_int("training.max_steps"));
  t.checkpoint_every = static_cast<std::size_t>(get_int("training.checkpoint_every"));
  t.mode = get("training.mode") == "static" ? TrainMode::static_lora : TrainMode::dynamic;
  return t;
}

EvalConfig RunConfig::eval() const {
  EvalConfig e;
  e.max_new = static_cast<std::size_t>(get_int("eval.max_new"));
  e.holdout = get_double("eval.holdout");
  return e;
}

void RunConfig::validate() const {
  const BackboneConfig b = backbone();
  mora::validate(b);
  const EncoderConfig e = encoder();
  if (e.d_model == 0) throw ConfigError("encoder.d_model must be positive");
  const TargetDims dims{b.layers, b.d_model, b.d_ff, e.d_model};
  mora::validate(generator(), dims);
  const TrainingConfig t = training();
  if (t.batch == 0) throw ConfigError("training.batch must be at least 1");
  if (t.lr < 0) throw ConfigError("training.lr must be non-negative");
  if (t.warmup < 0 || t.warmup > 1) throw ConfigError("training.warmup must lie in [0, 1]");
  if (t.beta1 < 0 || t.beta1 >= 1 || t.beta2 < 0 || t.beta2 >= 1) {
    throw ConfigError("training.beta1 and training.beta2 must lie in [0, 1)");
  }
  if (t.eps <= 0) throw ConfigError("training.eps must be positive");
  const EvalConfig ev = eval();
  if (ev.holdout < 0 || ev.holdout >= 1) throw ConfigError("eval.holdout must lie in [0, 1)");
}

}  // namespace mora

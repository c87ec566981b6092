#include "mora/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mora/errors.hpp"

namespace mora {

namespace {

using nlohmann::json;

// rng() % n keeps generation identical across standard libraries.
std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[pick(rng, i)]);
}

TrainingExample parse_line(std::string_view line, std::size_t number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IngestionError(number, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw IngestionError(number, "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "smiles" && key != "instruction" && key != "answer" && key != "task_tag") {
      throw IngestionError(number, "unknown field \"" + key + "\"");
    }
  }
  auto text_field = [&](const char* name) {
    if (!j.contains(name) || !j[name].is_string()) throw IngestionError(number, std::string("field \"") + name + "\" must be a string");
    return j[name].get<std::string>();
  };
  TrainingExample ex;
  ex.instruction = text_field("instruction");
  ex.answer = text_field("answer");
  ex.task_tag = text_field("task_tag");
  if (ex.answer.empty()) throw IngestionError(number, "answer is empty");
  if (!j.contains("smiles")) throw IngestionError(number, "field \"smiles\" missing (use null for text-only)");
  if (!j["smiles"].is_null()) {
    if (!j["smiles"].is_string()) throw IngestionError(number, "field \"smiles\" must be a string or null");
    ex.smiles = j["smiles"].get<std::string>();
    try {
      parse_smiles(*ex.smiles);
    } catch (const ParseError& e) {
      throw IngestionError(number, "smiles \"" + *ex.smiles + "\": " + e.what());
    }
  }
  return ex;
}

const char* kElements[] = {"C", "C", "C", "C", "C", "C", "N", "O", "S", "F"};

}  // namespace

SynthTask parse_task(std::string_view s) {
  if (s == "atom_count") return SynthTask::atom_count;
  if (s == "bond_count") return SynthTask::bond_count;
  if (s == "element_presence") return SynthTask::element_presence;
  if (s == "graph_copy") return SynthTask::graph_copy;
  if (s == "text_only") return SynthTask::text_only;
  throw ConfigError("unknown task \"" + std::string(s) +
                    "\" (expected atom_count, bond_count, element_presence, graph_copy or text_only)");
}

std::string task_name(SynthTask t) {
  switch (t) {
    case SynthTask::atom_count: return "atom_count";
    case SynthTask::bond_count: return "bond_count";
    case SynthTask::element_presence: return "element_presence";
    case SynthTask::graph_copy: return "graph_copy";
    case SynthTask::text_only: return "text_only";
  }
  return "?";
}

std::vector<TrainingExample> parse_dataset(std::string_view jsonl) {
  std::vector<TrainingExample> out;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    out.push_back(parse_line(line, number));
  }
  return out;
}

std::vector<TrainingExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(0, "cannot open dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::string to_jsonl(const std::vector<TrainingExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    json j;
    j["smiles"] = ex.smiles ? json(*ex.smiles) : json(nullptr);
    j["instruction"] = ex.instruction;
    j["answer"] = ex.answer;
    j["task_tag"] = ex.task_tag;
    out += j.dump() + "\n";
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<TrainingExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset " + path.string());
  out << to_jsonl(examples);
}

MolecularGraph random_molecule(std::size_t atoms, std::mt19937_64& rng) {
  if (atoms == 0) throw ContractError("random_molecule needs at least one atom");
  MolecularGraph g;
  for (std::size_t i = 0; i < atoms; ++i) {
    g.atoms.push_back(Atom{kElements[pick(rng, std::size(kElements))], 0, false, false});
    if (i > 0) g.bonds.push_back(Bond{pick(rng, i), i, 1});
  }
  if (atoms >= 3 && unit(rng) < 0.3) {
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t a = 0; a < atoms; ++a)
      for (std::size_t b = a + 1; b < atoms; ++b) {
        const bool bonded = std::any_of(g.bonds.begin(), g.bonds.end(), [&](const Bond& e) {
          return (e.i == a && e.j == b) || (e.i == b && e.j == a);
        });
        if (!bonded) candidates.emplace_back(a, b);
      }
    if (!candidates.empty()) {
      const auto [a, b] = candidates[pick(rng, candidates.size())];
      g.bonds.push_back(Bond{a, b, 1});
    }
  }
  // Round-trip through the writer so ring flags and atom order are canonical.
  return parse_smiles(write_smiles(g));
}

std::vector<TrainingExample> synth_dataset(SynthTask task, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("synth_dataset needs n >= 1");
  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(n);
  const std::string tag = task_name(task);
  static const char* kWords[] = {"alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "theta", "zeta", "rho"};
  static const std::pair<const char*, const char*> kProbe[] = {{"N", "nitrogen"}, {"O", "oxygen"}, {"S", "sulfur"}};
  for (std::size_t i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.task_tag = tag;
    if (task == SynthTask::text_only) {
      const std::string w1 = kWords[pick(rng, std::size(kWords))];
      const std::string w2 = kWords[pick(rng, std::size(kWords))];
      ex.instruction = "Repeat: " + w1 + " " + w2;
      ex.answer = w1 + " " + w2;
      out.push_back(std::move(ex));
      continue;
    }
    const MolecularGraph g = random_molecule(1 + pick(rng, 9), rng);
    ex.smiles = write_smiles(g);
    switch (task) {
      case SynthTask::atom_count:
        ex.instruction = "How many heavy atoms?";
        ex.answer = std::to_string(g.atom_count());
        break;
      case SynthTask::bond_count:
        ex.instruction = "How many bonds?";
        ex.answer = std::to_string(g.bond_count());
        break;
      case SynthTask::element_presence: {
        const auto& [symbol, name] = kProbe[pick(rng, std::size(kProbe))];
        ex.instruction = std::string("Does it contain ") + name + "?";
        const bool has = std::any_of(g.atoms.begin(), g.atoms.end(), [&](const Atom& a) { return a.element == symbol; });
        ex.answer = has ? "yes" : "no";
        break;
      }
      case SynthTask::graph_copy:
        ex.instruction = "Write the SMILES.";
        ex.answer = *ex.smiles;
        break;
      case SynthTask::text_only:
        break;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>> split_holdout(
    const std::vector<TrainingExample>& all, double fraction, std::uint64_t seed) {
  if (fraction < 0 || fraction >= 1) throw ContractError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  shuffle(order, rng);
  const auto held = static_cast<std::size_t>(fraction * static_cast<double>(all.size()) + 0.5);
  std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>> out;
  for (std::size_t k = 0; k < order.size(); ++k) (k < held ? out.second : out.first).push_back(all[order[k]]);
  return out;
}

}  // namespace mora

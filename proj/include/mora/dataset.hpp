#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mora/molecule.hpp"

namespace mora {

struct TrainingExample {
  std::optional<std::string> smiles;
  std::string instruction;
  std::string answer;
  std::string task_tag;

  bool operator==(const TrainingExample&) const = default;
};

enum class SynthTask : std::uint8_t { atom_count, bond_count, element_presence, graph_copy, text_only };

SynthTask parse_task(std::string_view s);
std::string task_name(SynthTask t);

// Throws IngestionError carrying the 1-based line number. Blank lines are skipped.
std::vector<TrainingExample> load_dataset(const std::filesystem::path& path);
std::vector<TrainingExample> parse_dataset(std::string_view jsonl);
std::string to_jsonl(const std::vector<TrainingExample>& examples);
void save_dataset(const std::filesystem::path& path, const std::vector<TrainingExample>& examples);

// Connected single-bonded molecule over C, N, O, S, F with `atoms` atoms;
// graphs of three or more atoms close a ring with probability 0.3.
MolecularGraph random_molecule(std::size_t atoms, std::mt19937_64& rng);

std::vector<TrainingExample> synth_dataset(SynthTask task, std::size_t n, std::uint64_t seed);

// Deterministic shuffle then split; the second list holds round(fraction·n).
std::pair<std::vector<TrainingExample>, std::vector<TrainingExample>> split_holdout(
    const std::vector<TrainingExample>& all, double fraction, std::uint64_t seed);

}  // namespace mora

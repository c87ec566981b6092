#pragma once

// SMILES-subset parsing into undirected 2-D molecular graphs, plus the
// per-atom feature matrix consumed by the graph encoder.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mora/tensor.hpp"

namespace mora {

struct Atom {
  std::string element;  // canonical capitalization, e.g. "C", "Cl"
  int charge = 0;
  bool ring = false;  // ring member (or written aromatic)
  bool aromatic = false;

  bool operator==(const Atom&) const = default;
};

struct Bond {
  std::size_t i = 0;
  std::size_t j = 0;
  int order = 1;  // 1, 2 or 3; aromatic bonds are stored as 1

  bool operator==(const Bond&) const = default;
};

struct MolecularGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  std::size_t atom_count() const { return atoms.size(); }
  std::size_t bond_count() const { return bonds.size(); }
  std::vector<std::size_t> degrees() const;
  std::vector<std::vector<std::size_t>> adjacency() const;

  bool operator==(const MolecularGraph&) const = default;
};

// Supported grammar: organic-subset atoms (B C N O P S F Cl Br I), aromatic
// lowercase (b c n o p s), bracket atoms [isotope? symbol H-count? charge?],
// branches, ring closures (digit or %nn, optionally with a bond symbol),
// bonds - = # :, and '.' between components. Stereo marks are rejected.
// Throws ParseError with the byte offset of the offending input.
MolecularGraph parse_smiles(std::string_view smiles);

// Throws ContractError when `g` has self-loops, duplicate bonds or
// dangling endpoints.
void validate_graph(const MolecularGraph& g);

// perm[old] = new. Bond order in the list is kept; endpoints are relabeled.
MolecularGraph permute_graph(const MolecularGraph& g, const std::vector<std::size_t>& perm);

// Deterministic SMILES writer (depth-first from the lowest unvisited atom,
// not canonical). The output parses back to an isomorphic graph whose atoms
// are listed in depth-first order.
std::string write_smiles(const MolecularGraph& g);

// Feature layout, one row per atom:
//   [0, 10)   element one-hot over C N O S P F Cl Br I H
//   [10, 17)  degree one-hot 0..6 (6 also covers higher degrees)
//   17        formal charge
//   18        ring flag (0/1)
inline constexpr std::size_t kAtomFeatureDim = 19;
inline constexpr std::size_t kElementCount = 10;
extern const char* const kFeatureElements[kElementCount];

// Throws UnsupportedAtomError for elements outside the list above and
// EmptyGraphError for graphs without atoms.
Tensor atom_features(const MolecularGraph& g);

// Morgan-style circular atom identifiers: for every radius 0..max_radius,
// one identifier per atom. Identifiers depend only on the labeled-graph
// neighborhood, never on atom indices.
std::vector<std::vector<std::uint64_t>> circular_identifiers(const MolecularGraph& g, int max_radius);

// Permutation-invariant digest of a graph (sorted circular identifiers).
std::uint64_t graph_digest(const MolecularGraph& g);

// Human-readable adjacency listing used by the `parse` CLI command.
std::string adjacency_listing(const MolecularGraph& g);

}  // namespace mora

#pragma once

#include <bitset>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mora/molecule.hpp"

namespace mora {

// 1 when the whitespace-stripped strings are equal. No SMILES canonicalization.
int exact_match(std::string_view pred, std::string_view gold);

std::size_t levenshtein(std::string_view a, std::string_view b);

// Sentence BLEU: clipped n-gram precisions up to max_n, add-one smoothing on
// orders above 1, brevity penalty exp(1 - |ref|/|pred|) when pred is shorter.
// Empty prediction scores 0.
double bleu(const std::vector<std::string>& pred, const std::vector<std::string>& ref, std::size_t max_n = 4);
std::vector<std::string> whitespace_tokens(std::string_view s);

// Throws ContractError on empty or unequal inputs.
double mae(std::span<const double> preds, std::span<const double> golds);

inline constexpr std::size_t kFingerprintBits = 256;

struct Fingerprint {
  std::bitset<kFingerprintBits> bits;

  bool operator==(const Fingerprint&) const = default;
};

// Folds every circular atom identifier up to `radius` into the bit set.
Fingerprint fingerprint(const MolecularGraph& g, int radius = 2);

// |A ∩ B| / |A ∪ B|, defined as 1 when both are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace mora

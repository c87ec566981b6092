#include "mora/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "mora/errors.hpp"

namespace mora {

namespace {

std::string_view strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

int exact_match(std::string_view pred, std::string_view gold) { return strip(pred) == strip(gold) ? 1 : 0; }

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double bleu(const std::vector<std::string>& pred, const std::vector<std::string>& ref, std::size_t max_n) {
  if (pred.empty() || max_n == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto p = ngram_counts(pred, n);
    const auto r = ngram_counts(ref, n);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, count] : p) {
      total += count;
      if (auto it = r.find(gram); it != r.end()) matched += std::min(count, it->second);
    }
    double num = static_cast<double>(matched), den = static_cast<double>(total);
    if (n > 1) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  const double c = static_cast<double>(pred.size()), r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double mae(std::span<const double> preds, std::span<const double> golds) {
  if (preds.size() != golds.size()) {
    throw ContractError("mae: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(golds.size()) +
                        " references");
  }
  if (preds.empty()) throw ContractError("mae of an empty list");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - golds[i]);
  return s / static_cast<double>(preds.size());
}

Fingerprint fingerprint(const MolecularGraph& g, int radius) {
  Fingerprint fp;
  for (const auto& per_radius : circular_identifiers(g, radius))
    for (std::uint64_t id : per_radius) fp.bits.set(id % kFingerprintBits);
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  const std::size_t uni = (a.bits | b.bits).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((a.bits & b.bits).count()) / static_cast<double>(uni);
}

}  // namespace mora

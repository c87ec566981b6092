#pragma once

// Low-rank updates and the per-instance adapter set that overlays the
// frozen backbone.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mora/tensor.hpp"

namespace mora {

// Injection target as configured ("qkvof").
enum class Component : std::uint8_t { q, k, v, o, f };

// The concrete linear maps inside a backbone layer.
enum class LinearSite : std::uint8_t { q, k, v, o, ffn_up, ffn_down };

// Which FFN matrices the "f" target covers.
enum class FfnMaps : std::uint8_t { both, up, down };

char component_char(Component c);
std::string site_name(LinearSite s);
// Parses a target string such as "qkvof"; order is normalized to q,k,v,o,f.
std::vector<Component> parse_targets(std::string_view spec);
std::string targets_string(const std::vector<Component>& targets);
std::vector<LinearSite> sites_for(Component c, FfnMaps ffn);
FfnMaps parse_ffn_maps(std::string_view s);

struct LowRankUpdate {
  Tensor delta_a;  // d_in × r
  Tensor delta_b;  // r × d_out
  double scale = 1.0;

  std::size_t rank() const { return delta_a.cols(); }
  std::size_t d_in() const { return delta_a.rows(); }
  std::size_t d_out() const { return delta_b.cols(); }
  // Dense scale · ΔA · ΔB.
  Tensor materialize() const;
};

struct AdapterKey {
  std::size_t layer = 0;
  Component component = Component::q;

  auto operator<=>(const AdapterKey&) const = default;
};

struct ComponentUpdate {
  std::vector<std::pair<LinearSite, LowRankUpdate>> maps;
};

class AdapterSet {
 public:
  AdapterSet() = default;
  AdapterSet(std::map<AdapterKey, ComponentUpdate> entries, std::uint64_t provenance)
      : entries_(std::move(entries)), provenance_(provenance) {}

  const std::map<AdapterKey, ComponentUpdate>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::uint64_t provenance() const { return provenance_; }

  // nullptr when the site is not adapted.
  const LowRankUpdate* find(std::size_t layer, LinearSite site) const;

 private:
  std::map<AdapterKey, ComponentUpdate> entries_;
  std::uint64_t provenance_ = 0;
};

// Largest entrywise |a - b| over matching materialized updates. Throws
// ContractError when the key sets differ.
double max_abs_difference(const AdapterSet& a, const AdapterSet& b);

}  // namespace mora

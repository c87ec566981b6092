#include "mora/adapter.hpp"

#include <algorithm>
#include <cmath>

#include "mora/errors.hpp"
#include "mora/ops.hpp"

namespace mora {

char component_char(Component c) {
  switch (c) {
    case Component::q: return 'q';
    case Component::k: return 'k';
    case Component::v: return 'v';
    case Component::o: return 'o';
    case Component::f: return 'f';
  }
  return '?';
}

std::string site_name(LinearSite s) {
  switch (s) {
    case LinearSite::q: return "q";
    case LinearSite::k: return "k";
    case LinearSite::v: return "v";
    case LinearSite::o: return "o";
    case LinearSite::ffn_up: return "ffn_up";
    case LinearSite::ffn_down: return "ffn_down";
  }
  return "?";
}

std::vector<Component> parse_targets(std::string_view spec) {
  std::vector<Component> out;
  for (char ch : spec) {
    Component c;
    switch (ch) {
      case 'q': c = Component::q; break;
      case 'k': c = Component::k; break;
      case 'v': c = Component::v; break;
      case 'o': c = Component::o; break;
      case 'f': c = Component::f; break;
      default: throw ConfigError("unknown injection target '" + std::string(1, ch) + "' in \"" + std::string(spec) + "\"");
    }
    if (std::find(out.begin(), out.end(), c) != out.end()) {
      throw ConfigError("injection target '" + std::string(1, ch) + "' listed twice");
    }
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("injection target set is empty");
  std::sort(out.begin(), out.end());
  return out;
}

std::string targets_string(const std::vector<Component>& targets) {
  std::string s;
  for (Component c : targets) s.push_back(component_char(c));
  return s;
}

std::vector<LinearSite> sites_for(Component c, FfnMaps ffn) {
  switch (c) {
    case Component::q: return {LinearSite::q};
    case Component::k: return {LinearSite::k};
    case Component::v: return {LinearSite::v};
    case Component::o: return {LinearSite::o};
    case Component::f:
      if (ffn == FfnMaps::up) return {LinearSite::ffn_up};
      if (ffn == FfnMaps::down) return {LinearSite::ffn_down};
      return {LinearSite::ffn_up, LinearSite::ffn_down};
  }
  return {};
}

FfnMaps parse_ffn_maps(std::string_view s) {
  if (s == "both") return FfnMaps::both;
  if (s == "up") return FfnMaps::up;
  if (s == "down") return FfnMaps::down;
  throw ConfigError("ffn maps must be both, up or down, got \"" + std::string(s) + "\"");
}

Tensor LowRankUpdate::materialize() const { return mora::scale(matmul(delta_a, delta_b), scale); }

const LowRankUpdate* AdapterSet::find(std::size_t layer, LinearSite site) const {
  Component c;
  switch (site) {
    case LinearSite::q: c = Component::q; break;
    case LinearSite::k: c = Component::k; break;
    case LinearSite::v: c = Component::v; break;
    case LinearSite::o: c = Component::o; break;
    default: c = Component::f; break;
  }
  auto it = entries_.find(AdapterKey{layer, c});
  if (it == entries_.end()) return nullptr;
  for (const auto& [s, upd] : it->second.maps)
    if (s == site) return &upd;
  return nullptr;
}

double max_abs_difference(const AdapterSet& a, const AdapterSet& b) {
  if (a.size() != b.size()) throw ContractError("adapter sets have different key sets");
  double worst = 0.0;
  auto ib = b.entries().begin();
  for (const auto& [key, ca] : a.entries()) {
    if (ib->first != key || ib->second.maps.size() != ca.maps.size()) {
      throw ContractError("adapter sets have different key sets");
    }
    for (std::size_t m = 0; m < ca.maps.size(); ++m) {
      const Tensor x = ca.maps[m].second.materialize();
      const Tensor y = ib->second.maps[m].second.materialize();
      auto xv = x.data();
      auto yv = y.data();
      for (std::size_t i = 0; i < xv.size(); ++i) worst = std::max(worst, std::abs(xv[i] - yv[i]));
    }
    ++ib;
  }
  return worst;
}

}  // namespace mora

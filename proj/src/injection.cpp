#include "mora/injection.hpp"

#include "mora/backbone.hpp"
#include "mora/errors.hpp"

namespace mora {

Tensor effective_apply(const Tensor& x, const EffectiveLinear& lin) {
  if (lin.base == nullptr) throw ContractError("effective linear map has no base weight");
  const Tensor& w = *lin.base;
  Tensor y = matmul(x, w);
  if (lin.update == nullptr) return y;
  const LowRankUpdate& u = *lin.update;
  if (u.d_in() != w.rows() || u.d_out() != w.cols() || u.delta_b.rows() != u.rank()) {
    throw ContractError("update factors " + shape_str(u.delta_a.shape()) + " · " + shape_str(u.delta_b.shape()) +
                        " do not fit base weight " + shape_str(w.shape()));
  }
  return add(y, scale(matmul(matmul(x, u.delta_a), u.delta_b), u.scale));
}

void check_topology(const BackboneParams& backbone, const AdapterSet& adapters) {
  for (const auto& [key, comp] : adapters.entries()) {
    if (key.layer >= backbone.layers.size()) {
      throw TopologyError("adapter for layer " + std::to_string(key.layer) + " but backbone has " +
                          std::to_string(backbone.layers.size()) + " layers");
    }
    for (const auto& [site, upd] : comp.maps) {
      const Tensor& w = backbone.weight(key.layer, site);
      if (upd.d_in() != w.rows() || upd.d_out() != w.cols() || upd.delta_b.rows() != upd.rank()) {
        throw TopologyError("adapter " + site_name(site) + "@" + std::to_string(key.layer) + " factors " +
                            shape_str(upd.delta_a.shape()) + " · " + shape_str(upd.delta_b.shape()) +
                            " do not fit weight " + shape_str(w.shape()));
      }
    }
  }
}

AdaptedBackbone overlay(const BackboneParams& backbone, AdapterSet adapters) {
  check_topology(backbone, adapters);
  return AdaptedBackbone(backbone, std::move(adapters));
}

Tensor AdaptedBackbone::forward(std::span<const TokenId> tokens) const {
  return forward_lm(*backbone_, tokens, &adapters_);
}

}  // namespace mora

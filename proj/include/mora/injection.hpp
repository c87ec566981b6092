#pragma once

// Applies W + scale·ΔA·ΔB in factored form. Base weights are only read.

#include <cstddef>
#include <span>

#include "mora/adapter.hpp"
#include "mora/ops.hpp"
#include "mora/tensor.hpp"

namespace mora {

struct BackboneParams;

struct EffectiveLinear {
  const Tensor* base = nullptr;          // d_in × d_out
  const LowRankUpdate* update = nullptr;  // optional
};

// x·W + scale·((x·ΔA)·ΔB), or x·W without an update.
Tensor effective_apply(const Tensor& x, const EffectiveLinear& lin);

// Forward view of the frozen backbone with one AdapterSet overlaid. Holds a
// reference to the backbone, which must outlive the view.
class AdaptedBackbone {
 public:
  const BackboneParams& backbone() const { return *backbone_; }
  const AdapterSet& adapters() const { return adapters_; }
  Tensor forward(std::span<const TokenId> tokens) const;

 private:
  friend AdaptedBackbone overlay(const BackboneParams& backbone, AdapterSet adapters);
  AdaptedBackbone(const BackboneParams& backbone, AdapterSet adapters)
      : backbone_(&backbone), adapters_(std::move(adapters)) {}

  const BackboneParams* backbone_;
  AdapterSet adapters_;
};

// Throws TopologyError when an entry names a layer the backbone lacks or its
// factor shapes do not fit the targeted weight.
AdaptedBackbone overlay(const BackboneParams& backbone, AdapterSet adapters);
void check_topology(const BackboneParams& backbone, const AdapterSet& adapters);

}  // namespace mora

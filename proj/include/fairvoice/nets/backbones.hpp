#pragma once

#include <cstdint>

#include "fairvoice/nets/layers.hpp"

namespace fairvoice::nets {

enum class BackboneKind : std::uint32_t;

// Uninitialised layer stacks. Residual50 and Dense161 use torchvision's
// parameter names so converted ImageNet weights load by name.
Sequential build_tiny_test();
Sequential build_residual50();
Sequential build_dense161();
Sequential build_backbone(BackboneKind kind);

// He-normal (fan-out) convolutions, unit/zero batch-norm affine terms and
// zero conv biases, all drawn from `seed`.
void init_backbone(Sequential& backbone, std::uint64_t seed);

}  // namespace fairvoice::nets

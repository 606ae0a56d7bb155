#pragma once

#include <span>

#include "tb/diffnet.hpp"

namespace tb::diffnet::detail {

/// Batch-mean cross-entropy evaluated in extended precision with plain loops.
long double reference_loss(const Network& net, const Tensor& batch, std::span<const int> labels);

}  // namespace tb::diffnet::detail

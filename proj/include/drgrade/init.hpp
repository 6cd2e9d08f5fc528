#pragma once

#include <cstdint>

#include "drgrade/tensor.hpp"

namespace drgrade {

/// Glorot (Xavier) normal: N(0, sqrt(2 / (fan_in + fan_out))). Dense
/// weights are [in, out]; conv weights [F, C, kh, kw] use fan_in = C*kh*kw
/// and fan_out = F*kh*kw.
template <typename T>
Tensor<T> glorot_normal_init(const Shape& shape, std::uint64_t seed);

double glorot_std(const Shape& shape);

}  // namespace drgrade

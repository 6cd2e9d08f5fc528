#include "drgrade/init.hpp"

#include <cmath>

#include "drgrade/rng.hpp"

namespace drgrade {

double glorot_std(const Shape& shape) {
  DRGRADE_REQUIRE(shape.size() == 2 || shape.size() == 4, ErrorKind::InvalidArgument,
                  "glorot: expected a dense [D,M] or conv [F,C,kh,kw] shape, got " + shape_str(shape));
  double fan_in, fan_out;
  if (shape.size() == 2) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
  } else {
    const double receptive = static_cast<double>(shape[2] * shape[3]);
    fan_in = static_cast<double>(shape[1]) * receptive;
    fan_out = static_cast<double>(shape[0]) * receptive;
  }
  return std::sqrt(2.0 / (fan_in + fan_out));
}

template <typename T>
Tensor<T> glorot_normal_init(const Shape& shape, std::uint64_t seed) {
  const double stddev = glorot_std(shape);
  Tensor<T> t(shape);
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template Tensor<float> glorot_normal_init<float>(const Shape&, std::uint64_t);
template Tensor<double> glorot_normal_init<double>(const Shape&, std::uint64_t);

}  // namespace drgrade

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "drgrade/layers.hpp"
#include "drgrade/model.hpp"

namespace drgrade {

struct GradCheckOptions {
  double eps = 1e-4;
  /// 0 checks every slot; otherwise a fixed random subset of this many
  /// slots per tensor.
  std::size_t max_slots_per_tensor = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t slots = 0;
  std::string worst;  // "<tensor>[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Gradients smaller than this are compared in absolute terms: below it a
/// double-precision difference quotient is dominated by rounding noise.
inline constexpr double kRelErrorFloor = 1e-6;

/// |a - n| / max(|a|, |n|, kRelErrorFloor)
double relative_error(double analytic, double numeric);

/// Compares analytic gradients against fourth-order central differences of
/// a scalar function f of the variables. analytic[i] must have the shape of *vars[i].
GradCheckReport check_gradients(const std::vector<Tensor<double>*>& vars,
                                const std::vector<const Tensor<double>*>& analytic,
                                const std::vector<std::string>& names, const std::function<double()>& f,
                                const GradCheckOptions& opts = {});

/// Checks a layer against f(x) = sum(g * layer(x)) for a fixed random
/// upstream g, over the input and every trainable parameter. Runs forward
/// in `mode`; stochastic layers must be made repeatable by the caller.
GradCheckReport gradient_check(Layer<double>& layer, const Tensor<double>& input, Mode mode,
                               const GradCheckOptions& opts = {});

/// Checks a whole model under a scalar loss of the logits.
/// loss returns (value, dloss/dlogits).
GradCheckReport gradient_check_model(
    Model<double>& model, const Tensor<double>& input, Mode mode,
    const std::function<std::pair<double, Tensor<double>>(const Tensor<double>&)>& loss,
    const GradCheckOptions& opts = {});

}  // namespace drgrade

#include "drgrade/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drgrade/rng.hpp"

namespace drgrade {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Core loop. delta(h) must return F(x + h e_i) - F(x - h e_i) for the
// currently perturbed slot; it is called with the slot restored between
// evaluations. Uses the fourth-order central stencil
// (8 D(h) - D(2h)) / (12 h), D(h) = F(x+h) - F(x-h).
GradCheckReport check_slots(const std::vector<Tensor<double>*>& vars,
                            const std::vector<const Tensor<double>*>& analytic,
                            const std::vector<std::string>& names,
                            const std::function<double(Tensor<double>&, std::size_t, double)>& delta,
                            const GradCheckOptions& opts) {
  DRGRADE_REQUIRE(vars.size() == analytic.size() && vars.size() == names.size(), ErrorKind::InvalidArgument,
                  "gradient check: variable/gradient lists differ in length");
  GradCheckReport report;
  Rng rng(opts.seed);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    Tensor<double>& x = *vars[v];
    const Tensor<double>& a = *analytic[v];
    DRGRADE_REQUIRE(a.shape() == x.shape(), ErrorKind::ShapeMismatch,
                    "gradient check: analytic gradient for " + names[v] + " has shape " + shape_str(a.shape()));
    std::vector<std::size_t> slots(x.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    if (opts.max_slots_per_tensor && slots.size() > opts.max_slots_per_tensor) {
      for (std::size_t i = 0; i < opts.max_slots_per_tensor; ++i)
        std::swap(slots[i], slots[i + rng.below(slots.size() - i)]);
      slots.resize(opts.max_slots_per_tensor);
    }
    for (std::size_t idx : slots) {
      const double d1 = delta(x, idx, opts.eps);
      const double d2 = delta(x, idx, 2 * opts.eps);
      const double numeric = (8 * d1 - d2) / (12 * opts.eps);
      DRGRADE_REQUIRE(std::isfinite(numeric) && std::isfinite(a[idx]), ErrorKind::NonFinite,
                      "gradient check: non-finite gradient at " + names[v] + "[" + std::to_string(idx) + "]");
      const double err = relative_error(a[idx], numeric);
      if (++report.slots == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = names[v] + "[" + std::to_string(idx) + "]";
        report.worst_analytic = a[idx];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace

GradCheckReport check_gradients(const std::vector<Tensor<double>*>& vars,
                                const std::vector<const Tensor<double>*>& analytic,
                                const std::vector<std::string>& names, const std::function<double()>& f,
                                const GradCheckOptions& opts) {
  auto delta = [&f](Tensor<double>& x, std::size_t idx, double h) {
    const double orig = x[idx];
    x[idx] = orig + h;
    const double fp = f();
    x[idx] = orig - h;
    const double fm = f();
    x[idx] = orig;
    return fp - fm;
  };
  return check_slots(vars, analytic, names, delta, opts);
}

namespace {

Tensor<double> random_like(const Shape& s, std::uint64_t seed) {
  Tensor<double> t(s);
  Rng rng(seed);
  for (auto& v : t.data()) v = 2 * rng.uniform() - 1;
  return t;
}

}  // namespace

GradCheckReport gradient_check(Layer<double>& layer, const Tensor<double>& input, Mode mode,
                               const GradCheckOptions& opts) {
  Tensor<double> x = input;
  const Tensor<double> y0 = layer.forward(x, mode);
  const Tensor<double> upstream = random_like(y0.shape(), mix_seed({opts.seed, 0x9a}));
  layer.set_input_grad_needed(true);
  const Tensor<double> dx = layer.backward(upstream);

  std::vector<Tensor<double>*> vars{&x};
  std::vector<const Tensor<double>*> grads{&dx};
  std::vector<std::string> names{"input"};
  std::vector<Tensor<double>> grad_copies;
  std::vector<Param<double>*> ps;
  for (auto* p : layer.params())
    if (p->trainable && !p->buffer) ps.push_back(p);
  grad_copies.reserve(ps.size());
  for (auto* p : ps) {
    grad_copies.push_back(p->grad);
    vars.push_back(&p->value);
    grads.push_back(&grad_copies.back());
    names.push_back(p->name);
  }
  // Differencing the outputs before weighting by the upstream keeps the
  // cancellation error at the scale of individual outputs.
  auto delta = [&](Tensor<double>& t, std::size_t idx, double h) {
    const double orig = t[idx];
    t[idx] = orig + h;
    const Tensor<double> yp = layer.forward(x, mode);
    t[idx] = orig - h;
    const Tensor<double> ym = layer.forward(x, mode);
    t[idx] = orig;
    double s = 0;
    for (std::size_t i = 0; i < yp.size(); ++i) s += upstream[i] * (yp[i] - ym[i]);
    return s;
  };
  return check_slots(vars, grads, names, delta, opts);
}

GradCheckReport gradient_check_model(
    Model<double>& model, const Tensor<double>& input, Mode mode,
    const std::function<std::pair<double, Tensor<double>>(const Tensor<double>&)>& loss,
    const GradCheckOptions& opts) {
  Tensor<double> x = input;
  auto [value, dlogits] = loss(model.forward(x, mode));
  (void)value;
  const Tensor<double> dx = model.backward(dlogits, true);

  std::vector<Tensor<double>*> vars{&x};
  std::vector<const Tensor<double>*> grads{&dx};
  std::vector<std::string> names{"input"};
  auto ps = model.trainable_params();
  std::vector<Tensor<double>> grad_copies;
  grad_copies.reserve(ps.size());
  for (auto* p : ps) {
    grad_copies.push_back(p->grad);
    vars.push_back(&p->value);
    grads.push_back(&grad_copies.back());
    names.push_back(p->name);
  }
  auto f = [&] { return loss(model.forward(x, mode)).first; };
  return check_gradients(vars, grads, names, f, opts);
}

}  // namespace drgrade

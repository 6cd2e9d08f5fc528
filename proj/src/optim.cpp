#include "drgrade/optim.hpp"

#include <cmath>

namespace drgrade {

void ClassWeights::validate() const {
  for (double v : w)
    DRGRADE_REQUIRE(v > 0 && std::isfinite(v), ErrorKind::InvalidArgument, "class weights must be positive");
}

template <typename T>
LossResult<T> weighted_ce(const Tensor<T>& logits, std::span<const int> labels, const ClassWeights& w) {
  DRGRADE_REQUIRE(logits.rank() == 2 && logits.dim(0) == labels.size(), ErrorKind::ShapeMismatch,
                  "weighted_ce: logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) +
                      " labels");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  DRGRADE_REQUIRE(k <= w.w.size(), ErrorKind::ShapeMismatch, "weighted_ce: more classes than weights");
  LossResult<T> r;
  r.dlogits = Tensor<T>(logits.shape());
  for (int y : labels)
    DRGRADE_REQUIRE(y >= 0 && static_cast<std::size_t>(y) < k, ErrorKind::InvalidArgument,
                    "weighted_ce: label " + std::to_string(y) + " out of range");
  for (int y : labels) r.weight_sum += w.w[y];
  if (n == 0) return r;

  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * k;
    double mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max<double>(mx, z[j]);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[i];
    const double wi = w.w[y];
    // -ln p_y = lse - z_y, never evaluates ln 0
    r.loss += wi * (lse - z[y]);
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = std::exp(z[j] - lse);
      const double onehot = static_cast<int>(j) == y ? 1.0 : 0.0;
      r.dlogits[i * k + j] = static_cast<T>(wi * (pj - onehot) / r.weight_sum);
    }
  }
  r.loss /= r.weight_sum;
  DRGRADE_REQUIRE(std::isfinite(r.loss), ErrorKind::NonFinite, "weighted_ce: non-finite loss");
  return r;
}

template <typename T>
L2Result<T> l2_penalty(const std::vector<Param<T>*>& params, double lambda) {
  DRGRADE_REQUIRE(lambda >= 0, ErrorKind::InvalidArgument, "l2 lambda must be >= 0");
  L2Result<T> r;
  for (const auto* p : params) {
    if (!p->regularized || !p->trainable || p->buffer) continue;
    Tensor<T> add(p->value.shape());
    double s = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double v = p->value[i];
      s += v * v;
      add[i] = static_cast<T>(2 * lambda * v);
    }
    r.penalty += lambda * s;
    r.addends.push_back(std::move(add));
  }
  return r;
}

template <typename T>
double accumulate_l2(const std::vector<Param<T>*>& params, double lambda) {
  DRGRADE_REQUIRE(lambda >= 0, ErrorKind::InvalidArgument, "l2 lambda must be >= 0");
  double penalty = 0;
  if (lambda == 0) return 0;
  for (auto* p : params) {
    if (!p->regularized || !p->trainable || p->buffer) continue;
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor<T>(p->value.shape());
    double s = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double v = p->value[i];
      s += v * v;
      p->grad[i] += static_cast<T>(2 * lambda * v);
    }
    penalty += lambda * s;
  }
  return penalty;
}

namespace {

template <typename T>
bool updatable(const Param<T>* p) {
  return p->trainable && !p->buffer && p->grad.size() == p->value.size() && !p->value.empty();
}

template <typename T>
void require_finite_grads(const std::vector<Param<T>*>& params) {
  for (const auto* p : params)
    if (updatable(p))
      DRGRADE_REQUIRE(p->grad.all_finite(), ErrorKind::NonFinite, "optimizer: non-finite gradient in " + p->name);
}

template <typename T>
void import_named(std::vector<Tensor<T>>& slots, const std::vector<Param<T>*>& params, const std::string& prefix,
                  const std::vector<NamedTensor<T>>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string want = prefix + params[i]->name;
    bool found = false;
    for (const auto& nt : state)
      if (nt.name == want) {
        DRGRADE_REQUIRE(nt.value.shape() == params[i]->value.shape(), ErrorKind::ShapeMismatch,
                        "optimizer state " + want + " has shape " + shape_str(nt.value.shape()));
        slots[i] = nt.value;
        found = true;
        break;
      }
    DRGRADE_REQUIRE(found, ErrorKind::State, "optimizer state missing " + want);
  }
}

}  // namespace

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, const AdamHyper& hyper) : params_(std::move(params)), hyper_(hyper) {
  DRGRADE_REQUIRE(hyper.lr >= 0 && hyper.beta1 >= 0 && hyper.beta1 < 1 && hyper.beta2 >= 0 && hyper.beta2 < 1 &&
                      hyper.epsilon > 0,
                  ErrorKind::InvalidArgument, "adam: invalid hyperparameters");
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  require_finite_grads(params_);
  ++t_;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param<T>* p = params_[k];
    if (!updatable(p)) continue;
    T* theta = p->value.ptr();
    const T* g = p->grad.ptr();
    T* m = m_[k].ptr();
    T* v = v_[k].ptr();
    const long long n = static_cast<long long>(p->value.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(theta[i] - hyper_.lr * (mi / c1) / (std::sqrt(vi / c2) + hyper_.epsilon));
    }
  }
}

template <typename T>
std::vector<NamedTensor<T>> Adam<T>::export_state() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({"adam.m." + params_[i]->name, m_[i]});
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({"adam.v." + params_[i]->name, v_[i]});
  return out;
}

template <typename T>
void Adam<T>::import_state(const std::vector<NamedTensor<T>>& state, std::uint64_t steps) {
  import_named(m_, params_, "adam.m.", state);
  import_named(v_, params_, "adam.v.", state);
  t_ = steps;
}

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<Param<T>*> params, const SgdHyper& hyper)
    : params_(std::move(params)), hyper_(hyper) {
  DRGRADE_REQUIRE(hyper.lr >= 0 && hyper.momentum >= 0 && hyper.momentum < 1, ErrorKind::InvalidArgument,
                  "sgd: invalid hyperparameters");
  for (auto* p : params_) velocity_.emplace_back(p->value.shape());
}

template <typename T>
void SgdMomentum<T>::step() {
  require_finite_grads(params_);
  ++t_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param<T>* p = params_[k];
    if (!updatable(p)) continue;
    T* theta = p->value.ptr();
    const T* g = p->grad.ptr();
    T* vel = velocity_[k].ptr();
    const long long n = static_cast<long long>(p->value.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
      const double vi = hyper_.momentum * vel[i] + g[i];
      vel[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(theta[i] - hyper_.lr * vi);
    }
  }
}

template <typename T>
std::vector<NamedTensor<T>> SgdMomentum<T>::export_state() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({"sgd.v." + params_[i]->name, velocity_[i]});
  return out;
}

template <typename T>
void SgdMomentum<T>::import_state(const std::vector<NamedTensor<T>>& state, std::uint64_t steps) {
  import_named(velocity_, params_, "sgd.v.", state);
  t_ = steps;
}

PlateauScheduler::PlateauScheduler(double initial_lr, const PlateauConfig& cfg)
    : cfg_(cfg),
      initial_lr_(initial_lr),
      lr_(initial_lr),
      best_(cfg.mode == MetricMode::Min ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity()) {
  DRGRADE_REQUIRE(initial_lr > 0 && cfg.factor > 0 && cfg.factor < 1 && cfg.min_delta >= 0,
                  ErrorKind::InvalidArgument, "plateau: lr must be > 0 and factor in (0,1)");
}

double PlateauScheduler::update(double metric) {
  DRGRADE_REQUIRE(std::isfinite(metric), ErrorKind::NonFinite, "plateau: non-finite metric");
  const bool improved = cfg_.mode == MetricMode::Min ? metric < best_ - cfg_.min_delta : metric > best_ + cfg_.min_delta;
  if (improved) {
    best_ = metric;
    since_ = 0;
  } else if (++since_ > cfg_.patience) {
    ++reductions_;
    lr_ = initial_lr_ * std::pow(cfg_.factor, static_cast<double>(reductions_));
    since_ = 0;
  }
  return lr_;
}

void PlateauScheduler::restore(double best, std::size_t since, std::size_t reductions) {
  best_ = best;
  since_ = since;
  reductions_ = reductions;
  lr_ = initial_lr_ * std::pow(cfg_.factor, static_cast<double>(reductions_));
}

#define DRGRADE_INSTANTIATE(T)                                                                              \
  template LossResult<T> weighted_ce<T>(const Tensor<T>&, std::span<const int>, const ClassWeights&);        \
  template L2Result<T> l2_penalty<T>(const std::vector<Param<T>*>&, double);                                \
  template double accumulate_l2<T>(const std::vector<Param<T>*>&, double);                                  \
  template class Adam<T>;                                                                                   \
  template class SgdMomentum<T>;

DRGRADE_INSTANTIATE(float)
DRGRADE_INSTANTIATE(double)

}  // namespace drgrade

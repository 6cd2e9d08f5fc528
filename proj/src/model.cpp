#include "drgrade/model.hpp"

#include <functional>

#include "drgrade/init.hpp"

namespace drgrade {

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Model<T>::predict_proba(const Tensor<T>& x) {
  return softmax(forward(x, Mode::Eval));
}

template <typename T>
Tensor<T> Model<T>::backward(const Tensor<T>& dlogits, bool need_input_grad) {
  std::size_t lowest = 0;
  if (!need_input_grad) {
    lowest = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i]->has_trainable_params()) {
        lowest = i;
        break;
      }
    if (lowest == layers_.size()) return {};
  }
  Tensor<T> g = dlogits;
  for (std::size_t i = layers_.size(); i-- > lowest;) {
    layers_[i]->set_input_grad_needed(need_input_grad || i > lowest);
    g = layers_[i]->backward(g);
  }
  return need_input_grad ? g : Tensor<T>{};
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

template <typename T>
std::vector<const Param<T>*> Model<T>::params() const {
  std::vector<Param<T>*> tmp;
  for (auto& l : layers_) l->collect_params(tmp);
  return {tmp.begin(), tmp.end()};
}

template <typename T>
std::vector<Param<T>*> Model<T>::trainable_params() {
  std::vector<Param<T>*> out;
  for (auto* p : params())
    if (p->trainable && !p->buffer) out.push_back(p);
  return out;
}

template <typename T>
Param<T>* Model<T>::find_param(const std::string& name) {
  for (auto* p : params())
    if (p->name == name) return p;
  return nullptr;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : params()) p->grad = Tensor<T>{};
}

template <typename T>
void Model<T>::reseed(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->reseed(mix_seed({seed, i}));
}

template <typename T>
ParamCounts Model<T>::count_params() const {
  ParamCounts c;
  for (const auto* p : params()) {
    c.total += p->value.size();
    if (p->trainable && !p->buffer) c.trainable += p->value.size();
  }
  c.non_trainable = c.total - c.trainable;
  return c;
}

template <typename T>
std::vector<TraceEntry> Model<T>::shape_trace() const {
  std::vector<TraceEntry> out;
  Shape s = {1};
  s.insert(s.end(), input_chw_.begin(), input_chw_.end());
  std::function<Shape(Layer<T>&, const Shape&, int)> visit = [&](Layer<T>& l, const Shape& in, int depth) -> Shape {
    const Shape o = l.output_shape(in);
    std::size_t n = 0;
    for (auto* p : l.params()) n += p->value.size();
    out.push_back({l.name(), l.kind(), o, n, depth});
    Shape inner = in;
    for (auto* c : l.children()) inner = visit(*c, inner, depth + 1);
    return o;
  };
  for (const auto& l : layers_) s = visit(*l, s, 0);
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace drgrade

#include "kgeformer/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "kgeformer/rng.hpp"

namespace kgeformer {

template <typename T>
Tensor<T>& ParameterSet<T>::push(const std::string& name, Tensor<T> tensor) {
  if (find(name) != nullptr) fail(ErrorKind::contract, "duplicate parameter '" + name + "'");
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

template <typename T>
Tensor<T> ParameterSet<T>::add_uniform(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Rng rng(derive_seed(seed_, name));
  Buffer<T> data(shape_size(shape));
  for (T& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return push(name, Tensor<T>::parameter(std::move(shape), std::move(data)));
}

template <typename T>
Tensor<T> ParameterSet<T>::add_constant(const std::string& name, Shape shape, T value) {
  Buffer<T> data(shape_size(shape), value);
  return push(name, Tensor<T>::parameter(std::move(shape), std::move(data)));
}

template <typename T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

template <typename T>
Tensor<T>* ParameterSet<T>::find(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
Buffer<T> ParameterSet<T>::snapshot() const {
  Buffer<T> out;
  out.reserve(scalar_count());
  for (const auto& e : entries_) out.insert(out.end(), e.second.data().begin(), e.second.data().end());
  return out;
}

template <typename T>
void ParameterSet<T>::restore(const Buffer<T>& values) {
  if (values.size() != scalar_count()) fail(ErrorKind::shape, "parameter snapshot has the wrong length");
  std::size_t offset = 0;
  for (auto& e : entries_) {
    auto dst = e.second.mutable_data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace kgeformer

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kgeformer/tensor.hpp"

namespace kgeformer {

// Named, ordered collection of learnable tensors owned by one model.
template <typename T>
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0) : seed_(seed) {}

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from a stream keyed by
  // (seed, name), so a parameter's initial value does not depend on which
  // other parameters exist.
  Tensor<T> add_uniform(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor<T> add_constant(const std::string& name, Shape shape, T value);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  const Tensor<T>* find(const std::string& name) const;
  Tensor<T>* find(const std::string& name);

  std::size_t scalar_count() const;
  void zero_grad();

  // Flat value snapshot in entry order, and its inverse.
  Buffer<T> snapshot() const;
  void restore(const Buffer<T>& values);

 private:
  Tensor<T>& push(const std::string& name, Tensor<T> tensor);

  std::uint64_t seed_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

}  // namespace kgeformer

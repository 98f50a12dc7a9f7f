#include "kgeformer/embeddings.hpp"

#include <cmath>

namespace kgeformer {

KgeReduce parse_kge_reduce(std::string_view text) {
  if (text == "sum") return KgeReduce::sum;
  if (text == "mean") return KgeReduce::mean;
  fail(ErrorKind::config, "unknown kge_reduce '" + std::string(text) + "' (sum, mean)");
}

std::string_view to_string(KgeReduce reduce) { return reduce == KgeReduce::sum ? "sum" : "mean"; }

template <typename T>
Tensor<T> adjacency_tensor(const AdjacencyMatrix& adjacency) {
  Buffer<T> values(adjacency.values.begin(), adjacency.values.end());
  return Tensor<T>::from({adjacency.size, adjacency.size}, std::move(values));
}

template <typename T>
Tensor<T> build_kge(const Tensor<T>& adjacency, const Tensor<T>& w_l, const Tensor<T>& w_p, KgeReduce reduce) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
    fail(ErrorKind::shape, "adjacency must be square, got " + shape_str(adjacency.shape()));
  }
  if (w_l.rank() != 2 || w_l.dim(0) != adjacency.dim(0)) {
    fail(ErrorKind::shape, "W_l " + shape_str(w_l.shape()) + " does not match adjacency " +
                               shape_str(adjacency.shape()));
  }
  if (w_p.rank() != 2 || w_p.dim(1) != w_l.dim(1)) {
    fail(ErrorKind::shape, "W_p " + shape_str(w_p.shape()) + " does not match W_l " + shape_str(w_l.shape()));
  }
  Tensor<T> h = matmul(adjacency, w_l);
  Tensor<T> pooled = sum_rows(h);
  if (reduce == KgeReduce::mean) pooled = scale(pooled, T(1) / static_cast<T>(adjacency.dim(0)));
  return mul(w_p, pooled);
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    fail(ErrorKind::config, "positional encoding needs an even model dimension, got " + std::to_string(d_model));
  }
  Buffer<T> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      pe[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>::from({length, d_model}, std::move(pe));
}

template <typename T>
Tensor<T> value_embedding(const Tensor<T>& x, const Tensor<T>& kernel, ConvPadding padding) {
  return conv1d(x, kernel, padding);
}

template <typename T>
Tensor<T> temporal_embedding(std::span<const Tensor<T>> tables, std::span<const std::int32_t> marks,
                             std::size_t batch, std::size_t length) {
  const std::size_t f = tables.size();
  if (f == 0) fail(ErrorKind::config, "temporal embedding needs at least one table");
  if (marks.size() != batch * length * f) {
    fail(ErrorKind::shape, "expected " + std::to_string(batch * length * f) + " marks, got " +
                               std::to_string(marks.size()));
  }
  std::vector<std::int32_t> column(batch * length);
  Tensor<T> total;
  for (std::size_t k = 0; k < f; ++k) {
    for (std::size_t i = 0; i < column.size(); ++i) column[i] = marks[i * f + k];
    Tensor<T> part = embedding_lookup(tables[k], std::span<const std::int32_t>(column), Shape{batch, length});
    total = total.defined() ? add(total, part) : part;
  }
  return total;
}

template <typename T>
Tensor<T> compose_input(const Tensor<T>& value, const Tensor<T>& positional, const Tensor<T>& temporal,
                        const Tensor<T>* kge) {
  Tensor<T> z = add(add(value, positional), temporal);
  if (kge != nullptr) z = add(z, *kge);
  return z;
}

#define KGEFORMER_INSTANTIATE(T)                                                                          \
  template Tensor<T> adjacency_tensor<T>(const AdjacencyMatrix&);                                         \
  template Tensor<T> build_kge(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, KgeReduce);          \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                                    \
  template Tensor<T> value_embedding(const Tensor<T>&, const Tensor<T>&, ConvPadding);                    \
  template Tensor<T> temporal_embedding(std::span<const Tensor<T>>, std::span<const std::int32_t>,        \
                                        std::size_t, std::size_t);                                        \
  template Tensor<T> compose_input(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);

KGEFORMER_INSTANTIATE(float)
KGEFORMER_INSTANTIATE(double)

#undef KGEFORMER_INSTANTIATE

}  // namespace kgeformer

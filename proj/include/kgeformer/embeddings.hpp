#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/tensor.hpp"

namespace kgeformer {

enum class KgeReduce { sum, mean };
KgeReduce parse_kge_reduce(std::string_view text);
std::string_view to_string(KgeReduce reduce);

template <typename T>
Tensor<T> adjacency_tensor(const AdjacencyMatrix& adjacency);

// Knowledge-graph embedding: H = A * W_l (V x D), then
// W_KGE[l, d] = W_p[l, d] * reduce_v H[v, d]. Output is L x D, shaped like the
// positional encoding regardless of V.
template <typename T>
Tensor<T> build_kge(const Tensor<T>& adjacency, const Tensor<T>& w_l, const Tensor<T>& w_p,
                    KgeReduce reduce = KgeReduce::sum);

// Fixed sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/D)),
// PE[pos, 2i+1] = cos(same).
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_model);

// x [B, L, M] convolved along time into [B, L, D].
template <typename T>
Tensor<T> value_embedding(const Tensor<T>& x, const Tensor<T>& kernel, ConvPadding padding = ConvPadding::circular);

// Sum over marks f of tables[f][marks[b, t, f]]; marks laid out [B, L, F].
template <typename T>
Tensor<T> temporal_embedding(std::span<const Tensor<T>> tables, std::span<const std::int32_t> marks,
                             std::size_t batch, std::size_t length);

// Z = value + positional + temporal (+ kge). Streams shaped [B, L, D] or [L, D].
template <typename T>
Tensor<T> compose_input(const Tensor<T>& value, const Tensor<T>& positional, const Tensor<T>& temporal,
                        const Tensor<T>* kge);

}  // namespace kgeformer

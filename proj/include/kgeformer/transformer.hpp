#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgeformer/data.hpp"
#include "kgeformer/embeddings.hpp"
#include "kgeformer/knowledge_graph.hpp"
#include "kgeformer/parameters.hpp"
#include "kgeformer/tensor.hpp"

namespace kgeformer {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_k = 0;  // 0: d_model / n_heads
  std::size_t d_v = 0;  // 0: d_model / n_heads
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  std::size_t d_ff = 128;
  double dropout = 0.05;
  std::size_t seq_len = 336;   // L
  std::size_t label_len = 48;
  std::size_t pred_len = 96;   // H
  std::size_t channels = 7;    // M
  std::size_t graph_nodes = 0;  // V; 0 means V = M
  bool use_kge = false;
  KgeReduce kge_reduce = KgeReduce::sum;
  std::size_t kernel_width = 3;
  Frequency freq = Frequency::hourly;

  std::size_t key_dim() const { return d_k ? d_k : d_model / n_heads; }
  std::size_t value_dim() const { return d_v ? d_v : d_model / n_heads; }
  std::size_t decoder_len() const { return label_len + pred_len; }
  std::size_t nodes() const { return graph_nodes ? graph_nodes : channels; }
  WindowShape window_shape() const { return {seq_len, label_len, pred_len}; }
  void validate() const;
};

// One minibatch in model layout.
template <typename T>
struct Batch {
  std::size_t size = 0;
  Tensor<T> x_enc;  // [B, L, M]
  Tensor<T> x_dec;  // [B, label_len + H, M]
  Tensor<T> y;      // [B, H, M]
  std::vector<std::int32_t> marks_enc;  // [B, L, F]
  std::vector<std::int32_t> marks_dec;  // [B, label_len + H, F]
};

template <typename T>
Batch<T> make_batch(const WindowDataset& windows, std::span<const std::size_t> indices);
template <typename T>
Batch<T> make_batch(std::span<const WindowSample> samples, std::size_t channels, std::size_t mark_width);

template <typename T>
struct AttentionWeights {
  Tensor<T> w_q;  // [D, h * d_k]
  Tensor<T> w_k;  // [D, h * d_k]
  Tensor<T> w_v;  // [D, h * d_v]
  Tensor<T> w_o;  // [h * d_v, D]
  std::size_t heads = 1;
};

template <typename T>
struct HeadProjections {
  Tensor<T> q;  // [B, h, T_q, d_k]
  Tensor<T> k;  // [B, h, T_kv, d_k]
  Tensor<T> v;  // [B, h, T_kv, d_v]
};

// Additive mask [n, n]: 0 on and below the diagonal, -inf above.
template <typename T>
Tensor<T> causal_mask(std::size_t n);

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& z_q, const Tensor<T>& z_kv, const AttentionWeights<T>& w);

// softmax(Q K^T / sqrt(d_k) + mask) V over [B, h, T, d] blocks.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>* mask);

// Concat(head_1..head_h) W_O; z_q [B, T_q, D], z_kv [B, T_kv, D].
template <typename T>
Tensor<T> multi_head(const Tensor<T>& z_q, const Tensor<T>& z_kv, const AttentionWeights<T>& w,
                     const Tensor<T>* mask);

template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // Required before forward when use_kge is set; A must be V x V.
  void set_adjacency(const AdjacencyMatrix& adjacency);
  const std::optional<AdjacencyMatrix>& adjacency() const { return adjacency_; }

  // Forecast [B, H, M]. Dropout only when `training`.
  Tensor<T> forward(const Batch<T>& batch, bool training = false, std::uint64_t dropout_seed = 0) const;

  Tensor<T> embed_encoder(const Batch<T>& batch) const;
  Tensor<T> embed_decoder(const Batch<T>& batch) const;
  Tensor<T> kge(bool decoder_side) const;
  Tensor<T> encode(const Tensor<T>& z_enc, bool training = false, std::uint64_t dropout_seed = 0) const;
  Tensor<T> decode(const Tensor<T>& z_dec, const Tensor<T>& memory, bool training = false,
                   std::uint64_t dropout_seed = 0) const;

 private:
  struct EmbeddingParams {
    Tensor<T> value_kernel;
    std::vector<Tensor<T>> temporal;
  };
  struct LayerNormParams {
    Tensor<T> gain, bias;
  };
  struct FeedForward {
    Tensor<T> w1, b1, w2, b2;
  };
  struct EncoderLayer {
    AttentionWeights<T> self_attn;
    LayerNormParams norm1, norm2;
    FeedForward ff;
  };
  struct DecoderLayer {
    AttentionWeights<T> self_attn, cross_attn;
    LayerNormParams norm1, norm2, norm3;
    FeedForward ff;
  };

  AttentionWeights<T> make_attention(const std::string& prefix);
  LayerNormParams make_norm(const std::string& prefix);
  FeedForward make_ff(const std::string& prefix);
  EmbeddingParams make_embedding(const std::string& prefix);
  Tensor<T> feed_forward(const FeedForward& ff, const Tensor<T>& x) const;
  Tensor<T> norm(const LayerNormParams& p, const Tensor<T>& x) const;
  Tensor<T> embed(const EmbeddingParams& p, const Tensor<T>& x, std::span<const std::int32_t> marks,
                  std::size_t batch, std::size_t length, ConvPadding padding, const Tensor<T>& pe,
                  bool decoder_side) const;

  ModelConfig config_;
  ParameterSet<T> params_;
  EmbeddingParams enc_embedding_, dec_embedding_;
  Tensor<T> kge_w_l_, kge_w_p_enc_, kge_w_p_dec_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Tensor<T> head_w_, head_b_;
  Tensor<T> pe_enc_, pe_dec_, mask_dec_;
  std::optional<AdjacencyMatrix> adjacency_;
  Tensor<T> adjacency_tensor_;
};

// Extra scalars contributed by the knowledge-graph embedding:
// V*D for W_l plus (L + label_len + H)*D for the two W_p instances.
std::size_t kge_parameter_count(const ModelConfig& config);

}  // namespace kgeformer

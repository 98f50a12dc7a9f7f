#include "kgeformer/transformer.hpp"

#include <cmath>
#include <limits>

#include "kgeformer/rng.hpp"

namespace kgeformer {

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::config, m); };
  if (d_model == 0 || n_heads == 0) bad("d_model and n_heads must be positive");
  if (d_model % 2 != 0) bad("d_model must be even for the sinusoidal encoding, got " + std::to_string(d_model));
  if ((d_k == 0 || d_v == 0) && d_model % n_heads != 0) {
    bad("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
  if (key_dim() == 0 || value_dim() == 0) bad("per-head dimensions must be positive");
  if (d_ff == 0) bad("d_ff must be positive");
  if (dropout < 0.0 || dropout >= 1.0) bad("dropout must be in [0, 1)");
  if (seq_len == 0 || pred_len == 0) bad("seq_len and pred_len must be positive");
  if (label_len > seq_len) bad("label_len cannot exceed seq_len");
  if (channels == 0) bad("channel count must be positive");
  if (kernel_width == 0 || kernel_width % 2 == 0) bad("kernel_width must be odd");
}

std::size_t kge_parameter_count(const ModelConfig& c) {
  return c.nodes() * c.d_model + (c.seq_len + c.decoder_len()) * c.d_model;
}

template <typename T>
Batch<T> make_batch(std::span<const WindowSample> samples, std::size_t channels, std::size_t mark_width) {
  if (samples.empty()) fail(ErrorKind::contract, "empty batch");
  const std::size_t b = samples.size();
  const std::size_t l = samples[0].x_enc.size() / channels;
  const std::size_t ld = samples[0].x_dec.size() / channels;
  const std::size_t h = samples[0].y.size() / channels;
  Buffer<T> x_enc, x_dec, y;
  x_enc.reserve(b * l * channels);
  x_dec.reserve(b * ld * channels);
  y.reserve(b * h * channels);
  Batch<T> out;
  out.size = b;
  for (const WindowSample& s : samples) {
    x_enc.insert(x_enc.end(), s.x_enc.begin(), s.x_enc.end());
    x_dec.insert(x_dec.end(), s.x_dec.begin(), s.x_dec.end());
    y.insert(y.end(), s.y.begin(), s.y.end());
    out.marks_enc.insert(out.marks_enc.end(), s.marks_enc.begin(), s.marks_enc.end());
    out.marks_dec.insert(out.marks_dec.end(), s.marks_dec.begin(), s.marks_dec.end());
  }
  if (out.marks_enc.size() != b * l * mark_width) fail(ErrorKind::shape, "inconsistent window shapes in batch");
  out.x_enc = Tensor<T>::from({b, l, channels}, std::move(x_enc));
  out.x_dec = Tensor<T>::from({b, ld, channels}, std::move(x_dec));
  out.y = Tensor<T>::from({b, h, channels}, std::move(y));
  return out;
}

template <typename T>
Batch<T> make_batch(const WindowDataset& windows, std::span<const std::size_t> indices) {
  std::vector<WindowSample> samples;
  samples.reserve(indices.size());
  for (std::size_t i : indices) samples.push_back(windows.sample(i));
  return make_batch<T>(std::span<const WindowSample>(samples), windows.series().channels,
                       windows.series().mark_width);
}

template <typename T>
Tensor<T> causal_mask(std::size_t n) {
  Buffer<T> m(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -std::numeric_limits<T>::infinity();
  return Tensor<T>::from({n, n}, std::move(m));
}

namespace {

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t b = x.dim(0), t = x.dim(1), width = x.dim(2);
  if (width % heads != 0) fail(ErrorKind::shape, "projection width not divisible by head count");
  return swap_axes12(reshape(x, {b, t, heads, width / heads}));
}

}  // namespace

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& z_q, const Tensor<T>& z_kv, const AttentionWeights<T>& w) {
  if (z_q.rank() != 3 || z_kv.rank() != 3) {
    fail(ErrorKind::shape, "attention inputs must be [B, T, D], got " + shape_str(z_q.shape()) + " and " +
                               shape_str(z_kv.shape()));
  }
  if (w.w_q.dim(1) != w.w_k.dim(1)) {
    fail(ErrorKind::shape, "W_Q " + shape_str(w.w_q.shape()) + " and W_K " + shape_str(w.w_k.shape()) +
                               " disagree on h*d_k");
  }
  HeadProjections<T> p;
  p.q = split_heads(matmul(z_q, w.w_q), w.heads);
  p.k = split_heads(matmul(z_kv, w.w_k), w.heads);
  p.v = split_heads(matmul(z_kv, w.w_v), w.heads);
  return p;
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>* mask) {
  const std::size_t d_k = q.dim(-1);
  // Scaling Q rather than the T_q x T_kv logits gives the same scores for less work.
  const Tensor<T> logits = matmul(scale(q, T(1) / std::sqrt(static_cast<T>(d_k))), transpose(k));
  return matmul(softmax_rows(logits, mask), v);
}

template <typename T>
Tensor<T> multi_head(const Tensor<T>& z_q, const Tensor<T>& z_kv, const AttentionWeights<T>& w,
                     const Tensor<T>* mask) {
  const HeadProjections<T> p = project_qkv(z_q, z_kv, w);
  const Tensor<T> heads = scaled_dot_attention(p.q, p.k, p.v, mask);  // [B, h, T_q, d_v]
  const std::size_t b = heads.dim(0), h = heads.dim(1), t = heads.dim(2), dv = heads.dim(3);
  const Tensor<T> concat = reshape(swap_axes12(heads), {b, t, h * dv});
  if (w.w_o.dim(0) != h * dv) {
    fail(ErrorKind::shape, "W_O " + shape_str(w.w_o.shape()) + " expects h*d_v rows, got " + std::to_string(h * dv));
  }
  return matmul(concat, w.w_o);
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(config), params_(seed) {
  config_.validate();
  const std::size_t d = config_.d_model;

  enc_embedding_ = make_embedding("enc_embedding");
  dec_embedding_ = make_embedding("dec_embedding");
  if (config_.use_kge) {
    kge_w_l_ = params_.add_uniform("kge.w_l", {config_.nodes(), d}, config_.nodes());
    kge_w_p_enc_ = params_.add_uniform("kge.w_p_enc", {config_.seq_len, d}, config_.seq_len);
    kge_w_p_dec_ = params_.add_uniform("kge.w_p_dec", {config_.decoder_len(), d}, config_.decoder_len());
  }
  for (std::size_t i = 0; i < config_.enc_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncoderLayer layer;
    layer.self_attn = make_attention(p + ".self_attn");
    layer.norm1 = make_norm(p + ".norm1");
    layer.ff = make_ff(p + ".ff");
    layer.norm2 = make_norm(p + ".norm2");
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.dec_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecoderLayer layer;
    layer.self_attn = make_attention(p + ".self_attn");
    layer.norm1 = make_norm(p + ".norm1");
    layer.cross_attn = make_attention(p + ".cross_attn");
    layer.norm2 = make_norm(p + ".norm2");
    layer.ff = make_ff(p + ".ff");
    layer.norm3 = make_norm(p + ".norm3");
    decoder_.push_back(std::move(layer));
  }
  head_w_ = params_.add_uniform("head.w", {d, config_.channels}, d);
  head_b_ = params_.add_uniform("head.b", {config_.channels}, d);

  pe_enc_ = positional_encoding<T>(config_.seq_len, d);
  pe_dec_ = positional_encoding<T>(config_.decoder_len(), d);
  mask_dec_ = causal_mask<T>(config_.decoder_len());
}

template <typename T>
AttentionWeights<T> Model<T>::make_attention(const std::string& prefix) {
  const std::size_t d = config_.d_model, h = config_.n_heads;
  AttentionWeights<T> w;
  w.heads = h;
  w.w_q = params_.add_uniform(prefix + ".w_q", {d, h * config_.key_dim()}, d);
  w.w_k = params_.add_uniform(prefix + ".w_k", {d, h * config_.key_dim()}, d);
  w.w_v = params_.add_uniform(prefix + ".w_v", {d, h * config_.value_dim()}, d);
  w.w_o = params_.add_uniform(prefix + ".w_o", {h * config_.value_dim(), d}, h * config_.value_dim());
  return w;
}

template <typename T>
typename Model<T>::LayerNormParams Model<T>::make_norm(const std::string& prefix) {
  return {params_.add_constant(prefix + ".gain", {config_.d_model}, T(1)),
          params_.add_constant(prefix + ".bias", {config_.d_model}, T(0))};
}

template <typename T>
typename Model<T>::FeedForward Model<T>::make_ff(const std::string& prefix) {
  const std::size_t d = config_.d_model, f = config_.d_ff;
  FeedForward ff;
  ff.w1 = params_.add_uniform(prefix + ".w1", {d, f}, d);
  ff.b1 = params_.add_uniform(prefix + ".b1", {f}, d);
  ff.w2 = params_.add_uniform(prefix + ".w2", {f, d}, f);
  ff.b2 = params_.add_uniform(prefix + ".b2", {d}, f);
  return ff;
}

template <typename T>
typename Model<T>::EmbeddingParams Model<T>::make_embedding(const std::string& prefix) {
  const std::size_t d = config_.d_model, m = config_.channels, w = config_.kernel_width;
  EmbeddingParams e;
  e.value_kernel = params_.add_uniform(prefix + ".value_kernel", {w, m, d}, w * m);
  static constexpr const char* kMarkNames[] = {"month", "day", "weekday", "hour", "minute"};
  const auto sizes = mark_cardinalities(config_.freq);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    e.temporal.push_back(params_.add_uniform(prefix + ".temporal." + kMarkNames[i], {sizes[i], d}, sizes[i]));
  }
  return e;
}

template <typename T>
void Model<T>::set_adjacency(const AdjacencyMatrix& adjacency) {
  if (adjacency.size != config_.nodes()) {
    fail(ErrorKind::shape, "adjacency is " + std::to_string(adjacency.size) + "x" + std::to_string(adjacency.size) +
                               " but the model expects V=" + std::to_string(config_.nodes()));
  }
  adjacency_ = adjacency;
  adjacency_tensor_ = adjacency_tensor<T>(adjacency);
}

template <typename T>
Tensor<T> Model<T>::kge(bool decoder_side) const {
  if (!config_.use_kge) fail(ErrorKind::contract, "model was built without knowledge-graph embeddings");
  if (!adjacency_) fail(ErrorKind::config, "use_kge is set but no adjacency matrix was provided");
  return build_kge(adjacency_tensor_, kge_w_l_, decoder_side ? kge_w_p_dec_ : kge_w_p_enc_, config_.kge_reduce);
}

template <typename T>
Tensor<T> Model<T>::embed(const EmbeddingParams& p, const Tensor<T>& x, std::span<const std::int32_t> marks,
                          std::size_t batch, std::size_t length, ConvPadding padding, const Tensor<T>& pe,
                          bool decoder_side) const {
  const Tensor<T> value = value_embedding(x, p.value_kernel, padding);
  const Tensor<T> temporal =
      temporal_embedding(std::span<const Tensor<T>>(p.temporal), marks, batch, length);
  if (config_.use_kge) {
    const Tensor<T> k = kge(decoder_side);
    return compose_input(value, pe, temporal, &k);
  }
  return compose_input(value, pe, temporal, static_cast<const Tensor<T>*>(nullptr));
}

template <typename T>
Tensor<T> Model<T>::embed_encoder(const Batch<T>& batch) const {
  if (batch.x_enc.shape() != Shape{batch.size, config_.seq_len, config_.channels}) {
    fail(ErrorKind::shape, "encoder input " + shape_str(batch.x_enc.shape()) + " does not match config [B, " +
                               std::to_string(config_.seq_len) + ", " + std::to_string(config_.channels) + "]");
  }
  return embed(enc_embedding_, batch.x_enc, batch.marks_enc, batch.size, config_.seq_len, ConvPadding::circular,
               pe_enc_, false);
}

template <typename T>
Tensor<T> Model<T>::embed_decoder(const Batch<T>& batch) const {
  if (batch.x_dec.shape() != Shape{batch.size, config_.decoder_len(), config_.channels}) {
    fail(ErrorKind::shape, "decoder scaffold " + shape_str(batch.x_dec.shape()) + " does not match config [B, " +
                               std::to_string(config_.decoder_len()) + ", " + std::to_string(config_.channels) + "]");
  }
  // Causal padding keeps position t independent of scaffold rows after t.
  return embed(dec_embedding_, batch.x_dec, batch.marks_dec, batch.size, config_.decoder_len(), ConvPadding::causal,
               pe_dec_, true);
}

template <typename T>
Tensor<T> Model<T>::norm(const LayerNormParams& p, const Tensor<T>& x) const {
  return layer_norm(x, p.gain, p.bias, T(1e-5));
}

template <typename T>
Tensor<T> Model<T>::feed_forward(const FeedForward& ff, const Tensor<T>& x) const {
  return add(matmul(relu(add(matmul(x, ff.w1), ff.b1)), ff.w2), ff.b2);
}

template <typename T>
Tensor<T> Model<T>::encode(const Tensor<T>& z_enc, bool training, std::uint64_t dropout_seed) const {
  const double rate = config_.dropout;
  Tensor<T> x = z_enc;
  std::uint64_t site = 0;
  for (const EncoderLayer& layer : encoder_) {
    x = norm(layer.norm1,
             add(x, dropout(multi_head(x, x, layer.self_attn, static_cast<const Tensor<T>*>(nullptr)), rate, training, derive_seed(dropout_seed, site++))));
    x = norm(layer.norm2, add(x, dropout(feed_forward(layer.ff, x), rate, training, derive_seed(dropout_seed, site++))));
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::decode(const Tensor<T>& z_dec, const Tensor<T>& memory, bool training,
                           std::uint64_t dropout_seed) const {
  const double rate = config_.dropout;
  Tensor<T> x = z_dec;
  std::uint64_t site = 0;
  for (const DecoderLayer& layer : decoder_) {
    x = norm(layer.norm1, add(x, dropout(multi_head(x, x, layer.self_attn, &mask_dec_), rate, training,
                                         derive_seed(dropout_seed, site++))));
    x = norm(layer.norm2, add(x, dropout(multi_head(x, memory, layer.cross_attn, static_cast<const Tensor<T>*>(nullptr)), rate, training,
                                         derive_seed(dropout_seed, site++))));
    x = norm(layer.norm3, add(x, dropout(feed_forward(layer.ff, x), rate, training, derive_seed(dropout_seed, site++))));
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::forward(const Batch<T>& batch, bool training, std::uint64_t dropout_seed) const {
  const double rate = config_.dropout;
  const Tensor<T> z_enc = dropout(embed_encoder(batch), rate, training, derive_seed(dropout_seed, "enc_embedding"));
  const Tensor<T> z_dec = dropout(embed_decoder(batch), rate, training, derive_seed(dropout_seed, "dec_embedding"));
  const Tensor<T> memory = encode(z_enc, training, derive_seed(dropout_seed, "encoder"));
  const Tensor<T> decoded = decode(z_dec, memory, training, derive_seed(dropout_seed, "decoder"));
  const Tensor<T> projected = add(matmul(decoded, head_w_), head_b_);
  return slice_rows(projected, config_.label_len, config_.pred_len);
}

#define KGEFORMER_INSTANTIATE(T)                                                                              \
  template struct Batch<T>;                                                                                   \
  template Batch<T> make_batch<T>(const WindowDataset&, std::span<const std::size_t>);                        \
  template Batch<T> make_batch<T>(std::span<const WindowSample>, std::size_t, std::size_t);                   \
  template Tensor<T> causal_mask<T>(std::size_t);                                                             \
  template HeadProjections<T> project_qkv(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&);    \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                          const Tensor<T>*);                                                  \
  template Tensor<T> multi_head(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,               \
                                const Tensor<T>*);                                                            \
  template class Model<T>;

KGEFORMER_INSTANTIATE(float)
KGEFORMER_INSTANTIATE(double)

#undef KGEFORMER_INSTANTIATE

}  // namespace kgeformer

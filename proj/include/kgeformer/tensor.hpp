#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "kgeformer/error.hpp"

namespace kgeformer {

using Shape = std::vector<std::size_t>;

// Tensor storage is 64-byte aligned so vectorized kernels see the same
// alignment on every run; otherwise peeled reductions round differently
// depending on where the allocator happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  // Propagates this node's grad into the nodes it was computed from.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tape;

// Dense row-major array with an optional gradient buffer. Copies share the
// underlying node; use clone() for an independent value copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, Buffer<T> data);
  // Leaf that accumulates gradients during backward.
  static Tensor parameter(Shape shape, Buffer<T> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(int axis) const;
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.clear(); }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  Tensor clone() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  template <typename U>
  friend Tensor<U> make_result(Shape shape, Buffer<U> value,
                               std::initializer_list<const Tensor<U>*> inputs,
                               std::function<void(Node<U>&)> backward);

  std::shared_ptr<Node<T>> node_;
};

// Define-by-run record of differentiable operations. A tape is active on the
// current thread while a Tape::Recording guard is alive; ops executed without
// an active tape produce constants.
template <typename T>
class Tape {
 public:
  class Recording {
   public:
    explicit Recording(Tape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* current();

  void record(std::shared_ptr<Node<T>> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded ops in reverse.
  void backward(const Tensor<T>& loss);

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

// Creates an op result; records it on the active tape when any input needs a
// gradient.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward);

enum class ConvPadding { circular, causal };
enum class LossReduction { mean, sum };

// Ops. Broadcasting is limited to "b's shape is a suffix of a's shape" for the
// element-wise family, and to broadcastable leading (batch) dims for matmul.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
// [B, T, H, D] <-> [B, H, T, D]
template <typename T> Tensor<T> swap_axes12(const Tensor<T>& a);
// Rows [start, start + count) along axis -2.
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count);
// Sum over axis -2.
template <typename T> Tensor<T> sum_rows(const Tensor<T>& a);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
// Row softmax over the last axis. `additive_mask`, when given, has a shape
// that is a suffix of x's and is added to the logits first (use -inf to block).
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>* additive_mask = nullptr);
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);
// x [.., L, M], kernel [W, M, D] -> [.., L, D]; W must be odd.
template <typename T> Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, ConvPadding padding);
template <typename T> Tensor<T> conv1d_circular(const Tensor<T>& x, const Tensor<T>& kernel) {
  return conv1d(x, kernel, ConvPadding::circular);
}
// Gathers table rows: table [N, D], indices laid out as out_shape[:-1].
template <typename T> Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> indices, Shape index_shape);
// Inverted dropout; identity when !training or rate == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::uint64_t seed);
template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& truth, LossReduction reduction = LossReduction::mean);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace kgeformer

#include "kgeformer/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "kgeformer/rng.hpp"

namespace kgeformer {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorKind::shape, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, Buffer<T> data) {
  if (shape_size(shape) != data.size()) {
    fail(ErrorKind::shape, "tensor data of length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, Buffer<T> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) fail(ErrorKind::shape, "axis out of range for shape " + shape_str(shape()));
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) fail(ErrorKind::contract, "item() on non-scalar tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) fail(ErrorKind::shape, "index rank does not match " + shape_str(s));
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t idx : index) {
    if (idx >= s[i]) fail(ErrorKind::shape, "index out of range for " + shape_str(s));
    flat = flat * s[i] + idx;
    ++i;
  }
  return node_->value[flat];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from(shape(), node_->value);
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Tape<T>::Recording::Recording(Tape& tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
Tape<T>::Recording::~Recording() {
  g_active_tape<T> = previous_;
}

template <typename T>
Tape<T>* Tape<T>::current() {
  return g_active_tape<T>;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorKind::contract, "backward requires a scalar loss, got shape " +
                                  (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  Node<T>* root = loss.node();
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& n = **it;
    if (!n.grad.empty() && n.backward) n.backward(n);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value, std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape<T>* tape = Tape<T>::current();
  const bool track = tape != nullptr && std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) {
                       return t->requires_grad();
                     });
  if (track) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) shape_error("matmul", sa, sb);

  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  const std::size_t out_rank = std::max(batch_a.size(), batch_b.size());
  Shape batch(out_rank, 1);
  for (std::size_t i = 0; i < out_rank; ++i) {
    const std::size_t da = i < out_rank - batch_a.size() ? 1 : batch_a[i - (out_rank - batch_a.size())];
    const std::size_t db = i < out_rank - batch_b.size() ? 1 : batch_b[i - (out_rank - batch_b.size())];
    if (da != db && da != 1 && db != 1) shape_error("matmul", sa, sb);
    batch[i] = std::max(da, db);
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::size_t nbatch = shape_size(batch);

  // Per output batch index, offsets into a and b (in matrices).
  std::vector<std::size_t> off_a(nbatch), off_b(nbatch);
  {
    std::vector<std::size_t> stride_a(out_rank, 0), stride_b(out_rank, 0);
    std::size_t acc_a = 1, acc_b = 1;
    for (std::size_t i = out_rank; i-- > 0;) {
      const std::size_t pa = batch_a.size() + i >= out_rank ? batch_a[i + batch_a.size() - out_rank] : 1;
      const std::size_t pb = batch_b.size() + i >= out_rank ? batch_b[i + batch_b.size() - out_rank] : 1;
      stride_a[i] = pa == 1 ? 0 : acc_a;
      stride_b[i] = pb == 1 ? 0 : acc_b;
      acc_a *= pa;
      acc_b *= pb;
    }
    std::vector<std::size_t> idx(out_rank, 0);
    for (std::size_t flat = 0; flat < nbatch; ++flat) {
      std::size_t oa = 0, ob = 0;
      for (std::size_t i = 0; i < out_rank; ++i) {
        oa += idx[i] * stride_a[i];
        ob += idx[i] * stride_b[i];
      }
      off_a[flat] = oa;
      off_b[flat] = ob;
      for (std::size_t i = out_rank; i-- > 0;) {
        if (++idx[i] < batch[i]) break;
        idx[i] = 0;
      }
    }
  }
  const bool folded = (batch_b.empty() || shape_size(batch_b) == 1) && shape_size(batch_a) == nbatch;

  Buffer<T> out(nbatch * m * n);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  if (folded) {
    MutMap<T>(out.data(), nbatch * m, n).noalias() = ConstMap<T>(pa, nbatch * m, k) * ConstMap<T>(pb, k, n);
  } else {
    for (std::size_t i = 0; i < nbatch; ++i) {
      MutMap<T>(out.data() + i * m * n, m, n).noalias() =
          ConstMap<T>(pa + off_a[i] * m * k, m, k) * ConstMap<T>(pb + off_b[i] * k * n, k, n);
    }
  }

  return make_result<T>(std::move(out_shape), std::move(out), {&a, &b},
                        [a, b, m, k, n, nbatch, folded, off_a, off_b](Node<T>& self) {
                          const T* g = self.grad.data();
                          Node<T>& na = *a.node();
                          Node<T>& nb = *b.node();
                          if (na.requires_grad) {
                            na.ensure_grad();
                            if (folded) {
                              MutMap<T>(na.grad.data(), nbatch * m, k).noalias() +=
                                  ConstMap<T>(g, nbatch * m, n) * ConstMap<T>(nb.value.data(), k, n).transpose();
                            } else {
                              for (std::size_t i = 0; i < nbatch; ++i) {
                                MutMap<T>(na.grad.data() + off_a[i] * m * k, m, k).noalias() +=
                                    ConstMap<T>(g + i * m * n, m, n) *
                                    ConstMap<T>(nb.value.data() + off_b[i] * k * n, k, n).transpose();
                              }
                            }
                          }
                          if (nb.requires_grad) {
                            nb.ensure_grad();
                            if (folded) {
                              MutMap<T>(nb.grad.data(), k, n).noalias() +=
                                  ConstMap<T>(na.value.data(), nbatch * m, k).transpose() * ConstMap<T>(g, nbatch * m, n);
                            } else {
                              for (std::size_t i = 0; i < nbatch; ++i) {
                                MutMap<T>(nb.grad.data() + off_b[i] * k * n, k, n).noalias() +=
                                    ConstMap<T>(na.value.data() + off_a[i] * m * k, m, k).transpose() *
                                    ConstMap<T>(g + i * m * n, m, n);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) fail(ErrorKind::shape, "transpose needs rank >= 2, got " + shape_str(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t nb = a.size() / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  Buffer<T> out(a.size());
  const T* src = a.data().data();
  for (std::size_t b = 0; b < nb; ++b) {
    MutMap<T>(out.data() + b * r * c, c, r) = ConstMap<T>(src + b * r * c, r, c).transpose();
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&a}, [a, r, c, nb](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t b = 0; b < nb; ++b) {
      MutMap<T>(na.grad.data() + b * r * c, r, c) += ConstMap<T>(self.grad.data() + b * r * c, c, r).transpose();
    }
  });
}

namespace {

// Shared body of add/sub/mul: `big` op `small` where small's shape is a suffix.
enum class Binary { add, sub, mul };

template <typename T>
Tensor<T> broadcast_binary(const Tensor<T>& big, const Tensor<T>& small, Binary kind, bool swapped,
                           const char* name) {
  if (!is_suffix(small.shape(), big.shape())) shape_error(name, big.shape(), small.shape());
  const std::size_t inner = small.size();
  const std::size_t outer = inner == 0 ? 0 : big.size() / inner;
  Buffer<T> out(big.size());
  const T* pb = big.data().data();
  const T* ps = small.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const T* rb = pb + o * inner;
    T* ro = out.data() + o * inner;
    switch (kind) {
      case Binary::add:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] + ps[i];
        break;
      case Binary::sub:
        if (swapped) {
          for (std::size_t i = 0; i < inner; ++i) ro[i] = ps[i] - rb[i];
        } else {
          for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] - ps[i];
        }
        break;
      case Binary::mul:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] * ps[i];
        break;
    }
  }
  return make_result<T>(big.shape(), std::move(out), {&big, &small},
                        [big, small, kind, swapped, inner, outer](Node<T>& self) {
                          Node<T>& nb = *big.node();
                          Node<T>& ns = *small.node();
                          const T* g = self.grad.data();
                          const T big_sign = (kind == Binary::sub && swapped) ? T(-1) : T(1);
                          const T small_sign = (kind == Binary::sub && !swapped) ? T(-1) : T(1);
                          if (nb.requires_grad) {
                            nb.ensure_grad();
                            for (std::size_t o = 0; o < outer; ++o) {
                              T* gb = nb.grad.data() + o * inner;
                              const T* go = g + o * inner;
                              if (kind == Binary::mul) {
                                for (std::size_t i = 0; i < inner; ++i) gb[i] += go[i] * ns.value[i];
                              } else {
                                for (std::size_t i = 0; i < inner; ++i) gb[i] += big_sign * go[i];
                              }
                            }
                          }
                          if (ns.requires_grad) {
                            ns.ensure_grad();
                            T* gs = ns.grad.data();
                            for (std::size_t o = 0; o < outer; ++o) {
                              const T* go = g + o * inner;
                              if (kind == Binary::mul) {
                                const T* vb = nb.value.data() + o * inner;
                                for (std::size_t i = 0; i < inner; ++i) gs[i] += go[i] * vb[i];
                              } else {
                                for (std::size_t i = 0; i < inner; ++i) gs[i] += small_sign * go[i];
                              }
                            }
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < b.rank()) return broadcast_binary(b, a, Binary::add, true, "add");
  return broadcast_binary(a, b, Binary::add, false, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < b.rank()) return broadcast_binary(b, a, Binary::sub, true, "sub");
  return broadcast_binary(a, b, Binary::sub, false, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < b.rank()) return broadcast_binary(b, a, Binary::mul, true, "mul");
  return broadcast_binary(a, b, Binary::mul, false, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Buffer<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, [a, factor](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Buffer<T> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > T(0) ? v[i] : T(0);
  return make_result<T>(a.shape(), std::move(out), {&a}, [a](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.value[i] > T(0)) na.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  Buffer<T> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(v[i] > T(0))) fail(ErrorKind::contract, "log of a non-positive value");
    out[i] = std::log(v[i]);
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [a](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] / na.value[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  Buffer<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), {&a}, [a](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> swap_axes12(const Tensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() != 4) fail(ErrorKind::shape, "swap_axes12 needs rank 4, got " + shape_str(s));
  const std::size_t n0 = s[0], n1 = s[1], n2 = s[2], n3 = s[3];
  Buffer<T> out(a.size());
  const T* src = a.data().data();
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k)
        std::copy_n(src + ((i * n1 + j) * n2 + k) * n3, n3, out.data() + ((i * n2 + k) * n1 + j) * n3);
  return make_result<T>(Shape{n0, n2, n1, n3}, std::move(out), {&a}, [a, n0, n1, n2, n3](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j)
        for (std::size_t k = 0; k < n2; ++k) {
          T* dst = na.grad.data() + ((i * n1 + j) * n2 + k) * n3;
          const T* g = self.grad.data() + ((i * n2 + k) * n1 + j) * n3;
          for (std::size_t l = 0; l < n3; ++l) dst[l] += g[l];
        }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
  const Shape& s = a.shape();
  if (s.size() < 2) fail(ErrorKind::shape, "slice_rows needs rank >= 2, got " + shape_str(s));
  const std::size_t rows = s[s.size() - 2], cols = s.back();
  if (start + count > rows) {
    fail(ErrorKind::shape, "slice_rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                               ") out of range for " + shape_str(s));
  }
  const std::size_t outer = a.size() / (rows * cols);
  Shape out_shape = s;
  out_shape[s.size() - 2] = count;
  Buffer<T> out(outer * count * cols);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + (o * rows + start) * cols, count * cols, out.data() + o * count * cols);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&a},
                        [a, start, count, rows, cols, outer](Node<T>& self) {
                          Node<T>& na = *a.node();
                          na.ensure_grad();
                          for (std::size_t o = 0; o < outer; ++o) {
                            T* dst = na.grad.data() + (o * rows + start) * cols;
                            const T* g = self.grad.data() + o * count * cols;
                            for (std::size_t i = 0; i < count * cols; ++i) dst[i] += g[i];
                          }
                        });
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) fail(ErrorKind::shape, "sum_rows needs rank >= 2, got " + shape_str(s));
  const std::size_t rows = s[s.size() - 2], cols = s.back();
  const std::size_t outer = a.size() / (rows * cols);
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(cols);
  Buffer<T> out(outer * cols, T(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[o * cols + c] += a.data()[(o * rows + r) * cols + c];
  return make_result<T>(std::move(out_shape), std::move(out), {&a}, [a, rows, cols, outer](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) na.grad[(o * rows + r) * cols + c] += self.grad[o * cols + c];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  return make_result<T>(Shape{}, Buffer<T>{total}, {&a}, [a](Node<T>& self) {
    Node<T>& na = *a.node();
    na.ensure_grad();
    for (T& g : na.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>* additive_mask) {
  const std::size_t n = last_dim(x.shape());
  if (n == 0) fail(ErrorKind::shape, "softmax_rows over an empty last axis");
  const std::size_t rows = x.size() / n;
  const T* mask = nullptr;
  std::size_t mask_size = 0;
  if (additive_mask != nullptr) {
    if (!is_suffix(additive_mask->shape(), x.shape()) || last_dim(additive_mask->shape()) != n) {
      shape_error("softmax_rows mask", x.shape(), additive_mask->shape());
    }
    mask = additive_mask->data().data();
    mask_size = additive_mask->size();
  }
  Buffer<T> out(x.size());
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * n;
    T* y = out.data() + r * n;
    const T* mrow = mask ? mask + (r * n) % mask_size : nullptr;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = mrow ? row[i] + mrow[i] : row[i];
      mx = std::max(mx, y[i]);
    }
    if (mx == -std::numeric_limits<T>::infinity()) {
      fail(ErrorKind::contract, "softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    auto yv = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(y, static_cast<Eigen::Index>(n));
    yv = (yv - mx).exp();
    yv *= T(1) / yv.sum();
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, [x, n, rows](Node<T>& self) {
    Node<T>& nx = *x.node();
    nx.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      using Vec = Eigen::Array<T, Eigen::Dynamic, 1>;
      const auto n_ = static_cast<Eigen::Index>(n);
      const Eigen::Map<const Vec> y(self.value.data() + r * n, n_);
      const Eigen::Map<const Vec> g(self.grad.data() + r * n, n_);
      const T dot = (g * y).sum();
      Eigen::Map<Vec>(nx.grad.data() + r * n, n_) += y * (g - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (!(eps > T(0))) fail(ErrorKind::config, "layer_norm eps must be positive");
  const std::size_t d = last_dim(x.shape());
  if (gain.size() != d || bias.size() != d) shape_error("layer_norm", x.shape(), gain.shape());
  const std::size_t rows = x.size() / d;
  Buffer<T> out(x.size());
  Buffer<T> xhat(x.size());
  Buffer<T> rstd(rows);
  const T* px = x.data().data();
  const T* pg = gain.data().data();
  const T* pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = T(0);
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (row[i] - mu) * rs;
      xhat[r * d + i] = h;
      out[r * d + i] = pg[i] * h + pb[i];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &bias},
                        [x, gain, bias, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          Node<T>& nx = *x.node();
                          Node<T>& ng = *gain.node();
                          Node<T>& nb = *bias.node();
                          const T* g = self.grad.data();
                          if (ng.requires_grad) {
                            ng.ensure_grad();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t i = 0; i < d; ++i) ng.grad[i] += g[r * d + i] * xhat[r * d + i];
                          }
                          if (nb.requires_grad) {
                            nb.ensure_grad();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t i = 0; i < d; ++i) nb.grad[i] += g[r * d + i];
                          }
                          if (nx.requires_grad) {
                            nx.ensure_grad();
                            const T inv_d = T(1) / static_cast<T>(d);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T mean_dh = T(0), mean_dh_h = T(0);
                              for (std::size_t i = 0; i < d; ++i) {
                                const T dh = g[r * d + i] * ng.value[i];
                                mean_dh += dh;
                                mean_dh_h += dh * xhat[r * d + i];
                              }
                              mean_dh *= inv_d;
                              mean_dh_h *= inv_d;
                              for (std::size_t i = 0; i < d; ++i) {
                                const T dh = g[r * d + i] * ng.value[i];
                                nx.grad[r * d + i] += rstd[r] * (dh - mean_dh - xhat[r * d + i] * mean_dh_h);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, ConvPadding padding) {
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sk.size() != 3) fail(ErrorKind::shape, "conv1d kernel must be [width, in, out], got " + shape_str(sk));
  const std::size_t width = sk[0], in = sk[1], outc = sk[2];
  if (width % 2 == 0) fail(ErrorKind::config, "conv1d kernel width must be odd, got " + std::to_string(width));
  if (sx.size() < 2 || sx.back() != in) shape_error("conv1d", sx, sk);
  const std::size_t len = sx[sx.size() - 2];
  const std::size_t outer = x.size() / (len * in);
  const std::size_t cols = width * in;

  // Source row for (t, k), or -1 for zero padding.
  auto source = [len, width, padding](std::size_t t, std::size_t k) -> std::ptrdiff_t {
    if (padding == ConvPadding::circular) {
      const auto l = static_cast<std::ptrdiff_t>(len);
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(width / 2);
      return ((s % l) + l) % l;
    }
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(width - 1);
    return s;
  };

  Buffer<T> patches(outer * len * cols, T(0));
  const T* px = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t k = 0; k < width; ++k) {
        const std::ptrdiff_t s = source(t, k);
        if (s < 0) continue;
        std::copy_n(px + (o * len + static_cast<std::size_t>(s)) * in, in,
                    patches.data() + (o * len + t) * cols + k * in);
      }

  Buffer<T> out(outer * len * outc);
  MutMap<T>(out.data(), outer * len, outc).noalias() =
      ConstMap<T>(patches.data(), outer * len, cols) * ConstMap<T>(kernel.data().data(), cols, outc);

  Shape out_shape = sx;
  out_shape.back() = outc;
  return make_result<T>(std::move(out_shape), std::move(out), {&x, &kernel},
                        [x, kernel, patches = std::move(patches), outer, len, in, outc, cols, width,
                         source](Node<T>& self) {
                          Node<T>& nx = *x.node();
                          Node<T>& nk = *kernel.node();
                          const ConstMap<T> g(self.grad.data(), outer * len, outc);
                          if (nk.requires_grad) {
                            nk.ensure_grad();
                            MutMap<T>(nk.grad.data(), cols, outc).noalias() +=
                                ConstMap<T>(patches.data(), outer * len, cols).transpose() * g;
                          }
                          if (nx.requires_grad) {
                            nx.ensure_grad();
                            RowMat<T> dpatches = g * ConstMap<T>(nk.value.data(), cols, outc).transpose();
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t t = 0; t < len; ++t)
                                for (std::size_t k = 0; k < width; ++k) {
                                  const std::ptrdiff_t s = source(t, k);
                                  if (s < 0) continue;
                                  T* dst = nx.grad.data() + (o * len + static_cast<std::size_t>(s)) * in;
                                  const T* src = dpatches.data() + (o * len + t) * cols + k * in;
                                  for (std::size_t i = 0; i < in; ++i) dst[i] += src[i];
                                }
                          }
                        });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> indices, Shape index_shape) {
  if (table.rank() != 2) fail(ErrorKind::shape, "embedding table must be rank 2, got " + shape_str(table.shape()));
  if (shape_size(index_shape) != indices.size()) {
    fail(ErrorKind::shape, "embedding index count does not match " + shape_str(index_shape));
  }
  const std::size_t rows = table.dim(0), d = table.dim(1);
  Buffer<T> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int32_t idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= rows) {
      fail(ErrorKind::contract, "embedding index " + std::to_string(idx) + " outside table of " +
                                    std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idx) * d, d, out.data() + i * d);
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(d);
  std::vector<std::int32_t> idx_copy(indices.begin(), indices.end());
  return make_result<T>(std::move(out_shape), std::move(out), {&table},
                        [table, d, idx_copy = std::move(idx_copy)](Node<T>& self) {
                          Node<T>& nt = *table.node();
                          nt.ensure_grad();
                          for (std::size_t i = 0; i < idx_copy.size(); ++i) {
                            T* dst = nt.grad.data() + static_cast<std::size_t>(idx_copy[i]) * d;
                            const T* g = self.grad.data() + i * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                          }
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::config, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  Rng rng(seed);
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  Buffer<T> mask(x.size());
  for (T& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result<T>(x.shape(), std::move(out), {&x}, [x, mask = std::move(mask)](Node<T>& self) {
    Node<T>& nx = *x.node();
    nx.ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) nx.grad[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& truth, LossReduction reduction) {
  if (pred.shape() != truth.shape()) shape_error("mse_loss", pred.shape(), truth.shape());
  const std::size_t n = pred.size();
  if (n == 0) fail(ErrorKind::shape, "mse_loss on empty tensors");
  Buffer<T> diff(n);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = pred.data()[i] - truth.data()[i];
    total += diff[i] * diff[i];
  }
  const T norm = reduction == LossReduction::mean ? T(1) / static_cast<T>(n) : T(1);
  return make_result<T>(Shape{}, Buffer<T>{total * norm}, {&pred, &truth},
                        [pred, truth, norm, diff = std::move(diff)](Node<T>& self) {
                          const T g = self.grad[0] * T(2) * norm;
                          Node<T>& np = *pred.node();
                          Node<T>& nt = *truth.node();
                          if (np.requires_grad) {
                            np.ensure_grad();
                            for (std::size_t i = 0; i < diff.size(); ++i) np.grad[i] += g * diff[i];
                          }
                          if (nt.requires_grad) {
                            nt.ensure_grad();
                            for (std::size_t i = 0; i < diff.size(); ++i) nt.grad[i] -= g * diff[i];
                          }
                        });
}

#define KGEFORMER_INSTANTIATE(T)                                                                       \
  template class Tensor<T>;                                                                            \
  template class Tape<T>;                                                                              \
  template Tensor<T> make_result<T>(Shape, Buffer<T>, std::initializer_list<const Tensor<T>*>,    \
                                    std::function<void(Node<T>&)>);                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> log(const Tensor<T>&);                                                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> swap_axes12(const Tensor<T>&);                                                    \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> sum_rows(const Tensor<T>&);                                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                           \
  template Tensor<T> softmax_rows(const Tensor<T>&, const Tensor<T>*);                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);              \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, ConvPadding);                          \
  template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const std::int32_t>, Shape);         \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, std::uint64_t);                           \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&, LossReduction);

KGEFORMER_INSTANTIATE(float)
KGEFORMER_INSTANTIATE(double)

#undef KGEFORMER_INSTANTIATE

}  // namespace kgeformer

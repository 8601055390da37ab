#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "adabn/errors.hpp"
#include "adabn/rng.hpp"
#include "adabn/tensor.hpp"

namespace adabn {

// Every operation in this header is a pure function: identical inputs
// (including dropout keys) give bitwise identical outputs. Accumulations run
// left to right per output element, so results are reproducible run to run.

template <typename T>
struct ConvParams {
  Tensor<T> kernels;      // [filters x in_channels x kh x kw]
  std::vector<T> bias;    // [filters]
  int stride = 1;
  int padding = 0;

  int filters() const { return kernels.dim(0); }
  int in_channels() const { return kernels.dim(1); }
  int kernel_h() const { return kernels.dim(2); }
  int kernel_w() const { return kernels.dim(3); }
};

template <typename T>
struct DenseParams {
  Tensor<T> weights;    // [in_dim x out_dim]
  std::vector<T> bias;  // [out_dim]
};

template <typename T>
struct ConvCache {
  Tensor<T> input;              // [N x C x H x W]
  std::vector<T> columns;       // [K x N*P], K = C*kh*kw in (c, kh, kw) order
  int out_h = 0, out_w = 0;
};

template <typename T>
struct PoolCache {
  Shape input_shape;
  std::vector<std::int64_t> argmax;  // flat input index per output element
  int k = 0;
};

template <typename T>
struct DenseCache {
  Tensor<T> input;  // [N x D]
};

template <typename T>
struct ReluCache {
  std::vector<unsigned char> active;  // 1 where input > 0
};

template <typename T>
struct DropoutCache {
  Tensor<T> mask;  // 0 or 1/(1-rate); all ones in eval mode
};

enum class Mode { kTrain, kEval };

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  const T* ap = a.data();
  const T* bp = b.data();
  T* cp = out.data();
  // kk ascending per output element keeps the accumulation left to right.
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const T aik = ap[static_cast<std::size_t>(i) * k + kk];
      const T* brow = bp + static_cast<std::size_t>(kk) * n;
      T* crow = cp + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d

inline int conv_extent(int in, int pad, int kernel, int stride, const char* axis) {
  const int span = in + 2 * pad - kernel;
  if (span < 0)
    throw ShapeError(std::string("conv2d: kernel does not fit along ") + axis + " (extent " +
                     std::to_string(in) + ", kernel " + std::to_string(kernel) + ", padding " +
                     std::to_string(pad) + ")");
  if (span % stride != 0)
    throw ShapeError(std::string("conv2d: non-integral output extent along ") + axis + " ((" +
                     std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                     std::to_string(kernel) + ") / " + std::to_string(stride) + ")");
  return span / stride + 1;
}

namespace detail {

// Fills cols[K x P] for one sample; K iterates (c, kh, kw), P iterates
// (oh, ow). Out-of-image taps are zero (zero padding).
template <typename T>
void im2col(const Tensor<T>& input, int n, int kh, int kw, int stride, int pad, int out_h,
            int out_w, T* cols) {
  const int C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t P = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++k) {
        T* dst = cols + k * P;
        std::int64_t p = 0;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride + dy - pad;
          for (int ox = 0; ox < out_w; ++ox, ++p) {
            const int x = ox * stride + dx - pad;
            dst[p] = (y >= 0 && y < H && x >= 0 && x < W) ? input.at(n, c, y, x) : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int out_h,
                int out_w, Tensor<T>& grad, int n) {
  const std::int64_t P = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx, ++k) {
        const T* src = cols + k * P;
        std::int64_t p = 0;
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride + dy - pad;
          for (int ox = 0; ox < out_w; ++ox, ++p) {
            const int x = ox * stride + dx - pad;
            if (y >= 0 && y < H && x >= 0 && x < W) grad.at(n, c, y, x) += src[p];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Valid cross-correlation with stride/padding. Per output element the sum
// runs over (c, kh, kw) ascending and the bias is added last, matching a
// naive sliding-window loop bit for bit.
template <typename T>
std::pair<Tensor<T>, ConvCache<T>> conv2d(const Tensor<T>& input, const ConvParams<T>& params) {
  require_rank(input, 4, "conv2d input");
  if (params.kernels.rank() != 4)
    throw ShapeError("conv2d: kernels must be rank 4, got " + shape_str(params.kernels.shape()));
  if (input.dim(1) != params.in_channels())
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match kernel channels " + std::to_string(params.in_channels()));
  if (params.stride <= 0) throw ParameterError("conv2d: stride must be positive");
  if (params.padding < 0) throw ParameterError("conv2d: padding must be non-negative");

  const int N = input.dim(0);
  const int F = params.filters();
  const int kh = params.kernel_h(), kw = params.kernel_w();
  const int out_h = conv_extent(input.dim(2), params.padding, kh, params.stride, "height");
  const int out_w = conv_extent(input.dim(3), params.padding, kw, params.stride, "width");
  const std::int64_t K = static_cast<std::int64_t>(input.dim(1)) * kh * kw;
  const std::int64_t P = static_cast<std::int64_t>(out_h) * out_w;

  ConvCache<T> cache;
  cache.input = input;
  cache.out_h = out_h;
  cache.out_w = out_w;
  cache.columns.assign(static_cast<std::size_t>(K) * N * P, T(0));

  Tensor<T> out({N, F, out_h, out_w});
  const T* kp = params.kernels.data();
  for (int n = 0; n < N; ++n) {
    T* cols = cache.columns.data() + static_cast<std::size_t>(n) * K * P;
    detail::im2col(input, n, kh, kw, params.stride, params.padding, out_h, out_w, cols);
    T* dst = out.data() + (static_cast<std::size_t>(n) * F) * P;
    for (int f = 0; f < F; ++f) {
      T* orow = dst + static_cast<std::size_t>(f) * P;
      const T* krow = kp + static_cast<std::size_t>(f) * K;
      for (std::int64_t k = 0; k < K; ++k) {
        const T kv = krow[k];
        const T* crow = cols + k * P;
        for (std::int64_t p = 0; p < P; ++p) orow[p] += kv * crow[p];
      }
      const T b = params.bias[static_cast<std::size_t>(f)];
      for (std::int64_t p = 0; p < P; ++p) orow[p] += b;
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_grad(const ConvCache<T>& cache, const Tensor<T>& grad_out,
                         const ConvParams<T>& params) {
  const int N = cache.input.dim(0);
  const int F = params.filters();
  const Shape expected{N, F, cache.out_h, cache.out_w};
  require_shape(grad_out, expected, "conv2d_grad grad_out");

  const int C = cache.input.dim(1), H = cache.input.dim(2), W = cache.input.dim(3);
  const int kh = params.kernel_h(), kw = params.kernel_w();
  const std::int64_t K = static_cast<std::int64_t>(C) * kh * kw;
  const std::int64_t P = static_cast<std::int64_t>(cache.out_h) * cache.out_w;

  ConvGrads<T> g{Tensor<T>(cache.input.shape()), Tensor<T>(params.kernels.shape()),
                 std::vector<T>(static_cast<std::size_t>(F), T(0))};

  std::vector<T> gcols(static_cast<std::size_t>(K) * P);
  const T* kp = params.kernels.data();
  T* gk = g.kernels.data();
  for (int n = 0; n < N; ++n) {
    const T* cols = cache.columns.data() + static_cast<std::size_t>(n) * K * P;
    const T* go = grad_out.data() + (static_cast<std::size_t>(n) * F) * P;
    // grad_bias[f] = sum over sample and space
    for (int f = 0; f < F; ++f) {
      T acc = 0;
      const T* grow = go + static_cast<std::size_t>(f) * P;
      for (std::int64_t p = 0; p < P; ++p) acc += grow[p];
      g.bias[static_cast<std::size_t>(f)] += acc;
    }
    // grad_kernels[f,k] += grad_out[f,:] . cols[k,:]
    for (int f = 0; f < F; ++f) {
      const T* grow = go + static_cast<std::size_t>(f) * P;
      T* gkrow = gk + static_cast<std::size_t>(f) * K;
      for (std::int64_t k = 0; k < K; ++k) {
        const T* crow = cols + k * P;
        T acc = 0;
        for (std::int64_t p = 0; p < P; ++p) acc += grow[p] * crow[p];
        gkrow[k] += acc;
      }
    }
    // grad_cols = kernels^T . grad_out, scattered back through col2im
    std::fill(gcols.begin(), gcols.end(), T(0));
    for (int f = 0; f < F; ++f) {
      const T* grow = go + static_cast<std::size_t>(f) * P;
      const T* krow = kp + static_cast<std::size_t>(f) * K;
      for (std::int64_t k = 0; k < K; ++k) {
        const T kv = krow[k];
        T* gcrow = gcols.data() + k * P;
        for (std::int64_t p = 0; p < P; ++p) gcrow[p] += kv * grow[p];
      }
    }
    detail::col2im_add(gcols.data(), C, H, W, kh, kw, params.stride, params.padding, cache.out_h,
                       cache.out_w, g.input, n);
  }
  return g;
}

// ---------------------------------------------------------------------------
// maxpool2d (non-overlapping k x k windows, trailing remainder dropped)

template <typename T>
std::pair<Tensor<T>, PoolCache<T>> maxpool2d(const Tensor<T>& input, int k) {
  require_rank(input, 4, "maxpool2d input");
  if (k <= 0) throw ParameterError("maxpool2d: window size must be positive");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < k || W < k)
    throw ShapeError("maxpool2d: input " + shape_str(input.shape()) + " smaller than window " +
                     std::to_string(k));
  const int out_h = H / k, out_w = W / k;

  Tensor<T> out({N, C, out_h, out_w});
  PoolCache<T> cache;
  cache.input_shape = input.shape();
  cache.k = k;
  cache.argmax.resize(static_cast<std::size_t>(out.size()));

  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox, ++o) {
          T best = input.at(n, c, oy * k, ox * k);
          std::int64_t best_idx =
              ((static_cast<std::int64_t>(n) * C + c) * H + oy * k) * W + ox * k;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const T v = input.at(n, c, oy * k + dy, ox * k + dx);
              // strict > keeps ties on the lowest flat index
              if (v > best) {
                best = v;
                best_idx = ((static_cast<std::int64_t>(n) * C + c) * H + oy * k + dy) * W +
                           ox * k + dx;
              }
            }
          }
          out[o] = best;
          cache.argmax[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> maxpool2d_grad(const PoolCache<T>& cache, const Tensor<T>& grad_out) {
  if (static_cast<std::size_t>(grad_out.size()) != cache.argmax.size())
    throw ShapeError("maxpool2d_grad: grad_out " + shape_str(grad_out.shape()) +
                     " does not match cache");
  Tensor<T> grad(cache.input_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o)
    grad[cache.argmax[o]] += grad_out[static_cast<std::int64_t>(o)];
  return grad;
}

// ---------------------------------------------------------------------------
// dense_affine

template <typename T>
std::pair<Tensor<T>, DenseCache<T>> dense_affine(const Tensor<T>& input,
                                                 const DenseParams<T>& params) {
  require_rank(input, 2, "dense_affine input");
  require_rank(params.weights, 2, "dense_affine weights");
  if (input.dim(1) != params.weights.dim(0))
    throw ShapeError("dense_affine: input width " + std::to_string(input.dim(1)) +
                     " does not match weight rows " + std::to_string(params.weights.dim(0)));
  const int N = input.dim(0), D = input.dim(1), O = params.weights.dim(1);
  if (static_cast<int>(params.bias.size()) != O)
    throw ShapeError("dense_affine: bias length " + std::to_string(params.bias.size()) +
                     " does not match output width " + std::to_string(O));

  Tensor<T> out({N, O});
  const T* xp = input.data();
  const T* wp = params.weights.data();
  T* yp = out.data();
  for (int n = 0; n < N; ++n) {
    T* yrow = yp + static_cast<std::size_t>(n) * O;
    const T* xrow = xp + static_cast<std::size_t>(n) * D;
    for (int d = 0; d < D; ++d) {
      const T x = xrow[d];
      const T* wrow = wp + static_cast<std::size_t>(d) * O;
      for (int oc = 0; oc < O; ++oc) yrow[oc] += x * wrow[oc];
    }
    for (int oc = 0; oc < O; ++oc) yrow[oc] += params.bias[static_cast<std::size_t>(oc)];
  }
  return {std::move(out), DenseCache<T>{input}};
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
DenseGrads<T> dense_grad(const DenseCache<T>& cache, const Tensor<T>& grad_out,
                         const DenseParams<T>& params) {
  const int N = cache.input.dim(0), D = cache.input.dim(1), O = params.weights.dim(1);
  require_shape(grad_out, Shape{N, O}, "dense_grad grad_out");

  DenseGrads<T> g{Tensor<T>({N, D}), Tensor<T>(params.weights.shape()),
                  std::vector<T>(static_cast<std::size_t>(O), T(0))};
  const T* xp = cache.input.data();
  const T* wp = params.weights.data();
  const T* gp = grad_out.data();
  for (int n = 0; n < N; ++n) {
    const T* grow = gp + static_cast<std::size_t>(n) * O;
    const T* xrow = xp + static_cast<std::size_t>(n) * D;
    T* girow = g.input.data() + static_cast<std::size_t>(n) * D;
    for (int oc = 0; oc < O; ++oc) g.bias[static_cast<std::size_t>(oc)] += grow[oc];
    for (int d = 0; d < D; ++d) {
      const T* wrow = wp + static_cast<std::size_t>(d) * O;
      T* gwrow = g.weights.data() + static_cast<std::size_t>(d) * O;
      T acc = 0;
      const T x = xrow[d];
      for (int oc = 0; oc < O; ++oc) {
        acc += grow[oc] * wrow[oc];
        gwrow[oc] += x * grow[oc];
      }
      girow[d] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
std::pair<Tensor<T>, ReluCache<T>> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  ReluCache<T> cache;
  cache.active.resize(static_cast<std::size_t>(input.size()));
  for (std::int64_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > T(0);  // subgradient at 0 is 0
    cache.active[static_cast<std::size_t>(i)] = on;
    out[i] = on ? input[i] : T(0);
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> relu_grad(const ReluCache<T>& cache, const Tensor<T>& grad_out) {
  if (static_cast<std::size_t>(grad_out.size()) != cache.active.size())
    throw ShapeError("relu_grad: grad_out does not match cache");
  Tensor<T> grad(grad_out.shape());
  for (std::int64_t i = 0; i < grad_out.size(); ++i)
    grad[i] = cache.active[static_cast<std::size_t>(i)] ? grad_out[i] : T(0);
  return grad;
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling; counter-based mask keyed per element)

template <typename T>
std::pair<Tensor<T>, DropoutCache<T>> dropout(const Tensor<T>& input, double rate,
                                              std::uint64_t key, Mode mode) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParameterError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  Tensor<T> mask = Tensor<T>::full(input.shape(), T(1));
  if (mode == Mode::kTrain && rate > 0.0) {
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::int64_t i = 0; i < input.size(); ++i)
      mask[i] = rng::uniform01(key, static_cast<std::uint64_t>(i)) < rate ? T(0) : scale;
  }
  Tensor<T> out(input.shape());
  for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] * mask[i];
  return {std::move(out), DropoutCache<T>{std::move(mask)}};
}

template <typename T>
Tensor<T> dropout_grad(const DropoutCache<T>& cache, const Tensor<T>& grad_out) {
  if (!cache.mask.same_shape(grad_out))
    throw ShapeError("dropout_grad: grad_out " + shape_str(grad_out.shape()) +
                     " does not match mask " + shape_str(cache.mask.shape()));
  Tensor<T> grad(grad_out.shape());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) grad[i] = grad_out[i] * cache.mask[i];
  return grad;
}

// ---------------------------------------------------------------------------
// softmax cross entropy

template <typename T>
struct SoftmaxLoss {
  double loss = 0.0;
  Tensor<T> probs;
  Tensor<T> grad_logits;
};

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const int N = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(N) + " rows");

  SoftmaxLoss<T> res;
  res.probs = Tensor<T>({N, C});
  res.grad_logits = Tensor<T>({N, C});
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= C)
      throw DataError("softmax_cross_entropy: label " + std::to_string(label) +
                      " outside [0," + std::to_string(C) + ")");
    T max = logits.at(n, 0);
    for (int c = 1; c < C; ++c) max = std::max(max, logits.at(n, c));
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(logits.at(n, c) - max));
    const double log_denom = std::log(denom);
    for (int c = 0; c < C; ++c) {
      const double p = std::exp(static_cast<double>(logits.at(n, c) - max) - log_denom);
      res.probs.at(n, c) = static_cast<T>(p);
      res.grad_logits.at(n, c) = static_cast<T>((p - (c == label ? 1.0 : 0.0)) / N);
    }
    total += log_denom - static_cast<double>(logits.at(n, label) - max);
  }
  res.loss = total / N;
  return res;
}

}  // namespace adabn

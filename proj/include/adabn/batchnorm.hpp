#pragma once

#include <cmath>
#include <vector>

#include "adabn/errors.hpp"
#include "adabn/tensor.hpp"

namespace adabn {

// Per-channel batch normalization over N,H,W with biased (divide-by-m)
// variance in training, a learnable affine map, and exponentially averaged
// running statistics for evaluation.
template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);
  std::vector<T> running_mean;
  std::vector<T> running_var;
  long batches_seen = 0;

  BatchNormParams() = default;
  explicit BatchNormParams(int channels)
      : gamma(static_cast<std::size_t>(channels), T(1)),
        beta(static_cast<std::size_t>(channels), T(0)),
        running_mean(static_cast<std::size_t>(channels), T(0)),
        running_var(static_cast<std::size_t>(channels), T(0)) {}

  int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename T>
struct BNCache {
  Tensor<T> x_hat;
  std::vector<T> mu;
  std::vector<T> var;
  std::vector<T> inv_std;
  std::int64_t reduce_count = 0;  // N*H*W
};

namespace detail {

template <typename T>
void bn_check_input(const Tensor<T>& input, const BatchNormParams<T>& params) {
  require_rank(input, 4, "batchnorm input");
  if (input.dim(1) != params.channels())
    throw ShapeError("batchnorm: input channels " + std::to_string(input.dim(1)) +
                     " do not match parameter channels " + std::to_string(params.channels()));
}

}  // namespace detail

// Training-mode forward. Mutates the running statistics:
// r <- (1 - momentum) * r + momentum * batch_stat.
template <typename T>
std::pair<Tensor<T>, BNCache<T>> bn_forward_train(const Tensor<T>& input,
                                                  BatchNormParams<T>& params) {
  detail::bn_check_input(input, params);
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
  if (m < 1) throw DataError("batchnorm: empty batch");

  BNCache<T> cache;
  cache.mu.assign(static_cast<std::size_t>(C), T(0));
  cache.var.assign(static_cast<std::size_t>(C), T(0));
  cache.inv_std.assign(static_cast<std::size_t>(C), T(0));
  cache.reduce_count = m;

  const std::int64_t spatial = static_cast<std::int64_t>(H) * W;
  const T* in = input.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* plane = in + (static_cast<std::size_t>(n) * C + c) * spatial;
      T acc = 0;
      for (std::int64_t i = 0; i < spatial; ++i) acc += plane[i];
      cache.mu[static_cast<std::size_t>(c)] += acc;
    }
  for (int c = 0; c < C; ++c) cache.mu[static_cast<std::size_t>(c)] /= static_cast<T>(m);

  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* plane = in + (static_cast<std::size_t>(n) * C + c) * spatial;
      const T mu = cache.mu[static_cast<std::size_t>(c)];
      T acc = 0;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T d = plane[i] - mu;
        acc += d * d;
      }
      cache.var[static_cast<std::size_t>(c)] += acc;
    }
  for (int c = 0; c < C; ++c) {
    cache.var[static_cast<std::size_t>(c)] /= static_cast<T>(m);
    cache.inv_std[static_cast<std::size_t>(c)] =
        T(1) / std::sqrt(cache.var[static_cast<std::size_t>(c)] + params.eps);
  }

  cache.x_hat = Tensor<T>(input.shape());
  Tensor<T> out(input.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      const T mu = cache.mu[static_cast<std::size_t>(c)];
      const T is = cache.inv_std[static_cast<std::size_t>(c)];
      const T gamma = params.gamma[static_cast<std::size_t>(c)];
      const T beta = params.beta[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T xh = (in[base + i] - mu) * is;
        cache.x_hat[static_cast<std::int64_t>(base) + i] = xh;
        out[static_cast<std::int64_t>(base) + i] = gamma * xh + beta;
      }
    }

  for (int c = 0; c < C; ++c) {
    const std::size_t sc = static_cast<std::size_t>(c);
    params.running_mean[sc] =
        (T(1) - params.momentum) * params.running_mean[sc] + params.momentum * cache.mu[sc];
    params.running_var[sc] =
        (T(1) - params.momentum) * params.running_var[sc] + params.momentum * cache.var[sc];
  }
  params.batches_seen += 1;

  return {std::move(out), std::move(cache)};
}

template <typename T>
struct BNGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

// Exact gradients of the training-mode map, including the dependence of the
// batch statistics on the input.
template <typename T>
BNGrads<T> bn_backward(const BNCache<T>& cache, const Tensor<T>& grad_out,
                       const BatchNormParams<T>& params) {
  if (!grad_out.same_shape(cache.x_hat))
    throw ShapeError("bn_backward: grad_out " + shape_str(grad_out.shape()) +
                     " does not match cache " + shape_str(cache.x_hat.shape()));
  const int N = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
  const std::int64_t spatial = static_cast<std::int64_t>(H) * W;
  const T m = static_cast<T>(cache.reduce_count);

  BNGrads<T> g{Tensor<T>(grad_out.shape()), std::vector<T>(static_cast<std::size_t>(C), T(0)),
               std::vector<T>(static_cast<std::size_t>(C), T(0))};

  // Per-channel reductions: sum(gout) and sum(gout * x_hat).
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      T sum_g = 0, sum_gx = 0;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const T go = grad_out[static_cast<std::int64_t>(base) + i];
        sum_g += go;
        sum_gx += go * cache.x_hat[static_cast<std::int64_t>(base) + i];
      }
      g.beta[static_cast<std::size_t>(c)] += sum_g;
      g.gamma[static_cast<std::size_t>(c)] += sum_gx;
    }

  // dx = (gamma * inv_std / m) * (m * gout - sum(gout) - x_hat * sum(gout * x_hat))
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t sc = static_cast<std::size_t>(c);
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      const T scale = params.gamma[sc] * cache.inv_std[sc] / m;
      const T sum_g = g.beta[sc];
      const T sum_gx = g.gamma[sc];
      for (std::int64_t i = 0; i < spatial; ++i) {
        const std::int64_t idx = static_cast<std::int64_t>(base) + i;
        g.input[idx] = scale * (m * grad_out[idx] - sum_g - cache.x_hat[idx] * sum_gx);
      }
    }
  return g;
}

// Evaluation-mode forward using the running statistics; params untouched.
template <typename T>
Tensor<T> bn_forward_eval(const Tensor<T>& input, const BatchNormParams<T>& params) {
  detail::bn_check_input(input, params);
  if (params.batches_seen < 1)
    throw StateError("batchnorm: evaluation before any training batch");
  const int N = input.dim(0), C = input.dim(1);
  const std::int64_t spatial = static_cast<std::int64_t>(input.dim(2)) * input.dim(3);

  Tensor<T> out(input.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t sc = static_cast<std::size_t>(c);
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      const T is = T(1) / std::sqrt(params.running_var[sc] + params.eps);
      const T mu = params.running_mean[sc];
      const T gamma = params.gamma[sc];
      const T beta = params.beta[sc];
      for (std::int64_t i = 0; i < spatial; ++i) {
        const std::int64_t idx = static_cast<std::int64_t>(base) + i;
        out[idx] = gamma * (input[idx] - mu) * is + beta;
      }
    }
  return out;
}

}  // namespace adabn

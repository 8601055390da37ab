#include "adabn/checks.hpp"

#include <cmath>
#include <span>

#include "adabn/batchnorm.hpp"
#include "adabn/gradcheck.hpp"
#include "adabn/layers.hpp"
#include "adabn/rng.hpp"
#include "adabn/tensor.hpp"

namespace adabn {

namespace {

constexpr double kStep = 1e-5;
constexpr double kSmoothTol = 1e-6;
constexpr double kKinkedTol = 1e-4;

TensorD random_tensor(Shape shape, rng::Stream& stream, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stream.next_uniform(lo, hi);
  return t;
}

// Random linear functional turning a tensor-valued layer into a scalar map;
// its gradient with respect to the layer output is the weight tensor itself.
TensorD random_probe(const Shape& shape, rng::Stream& stream) {
  return random_tensor(shape, stream, -1.0, 1.0);
}

double dot(const TensorD& a, const TensorD& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double check_conv(rng::Stream& stream) {
  const int N = 2, C = 2, H = 6, W = 5, F = 3;
  ConvParams<double> params;
  params.kernels = random_tensor({F, C, 3, 3}, stream);
  params.bias.resize(F);
  for (double& b : params.bias) b = stream.next_uniform(-0.5, 0.5);
  params.stride = 1;
  params.padding = 1;
  const TensorD input = random_tensor({N, C, H, W}, stream);

  auto [out, cache] = conv2d(input, params);
  const TensorD probe = random_probe(out.shape(), stream);
  const auto grads = conv2d_grad(cache, probe, params);

  double worst = 0.0;
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& x) {
                                auto [y, c] = conv2d(x, params);
                                return dot(y, probe);
                              },
                              input, grads.input, kStep));
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& k) {
                                ConvParams<double> p = params;
                                p.kernels = k;
                                auto [y, c] = conv2d(input, p);
                                return dot(y, probe);
                              },
                              params.kernels, grads.kernels, kStep));
  const TensorD bias_point({F}, params.bias);
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& b) {
                                ConvParams<double> p = params;
                                p.bias.assign(b.data(), b.data() + b.size());
                                auto [y, c] = conv2d(input, p);
                                return dot(y, probe);
                              },
                              bias_point, TensorD({F}, grads.bias), kStep));
  return worst;
}

double check_pool(rng::Stream& stream) {
  const int N = 2, C = 2, H = 6, W = 6, K = 2;
  TensorD input = random_tensor({N, C, H, W}, stream, 0.0, 1.0);
  // keep every window maximum strict so the argmax is stable under +/- h
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < H / K; ++oy)
        for (int ox = 0; ox < W / K; ++ox) {
          double best = -1.0, second = -1.0;
          int by = 0, bx = 0;
          for (int dy = 0; dy < K; ++dy)
            for (int dx = 0; dx < K; ++dx) {
              const double v = input.at(n, c, oy * K + dy, ox * K + dx);
              if (v > best) {
                second = best;
                best = v;
                by = dy;
                bx = dx;
              } else if (v > second) {
                second = v;
              }
            }
          if (best - second < 1e-3) input.at(n, c, oy * K + by, ox * K + bx) += 2e-3;
        }

  auto [out, cache] = maxpool2d(input, K);
  const TensorD probe = random_probe(out.shape(), stream);
  const TensorD grad = maxpool2d_grad(cache, probe);
  return finite_difference_check(
      [&](const TensorD& x) {
        auto [y, c] = maxpool2d(x, K);
        return dot(y, probe);
      },
      input, grad, kStep);
}

double check_dense(rng::Stream& stream) {
  const int N = 3, D = 7, O = 4;
  DenseParams<double> params;
  params.weights = random_tensor({D, O}, stream);
  params.bias.resize(O);
  for (double& b : params.bias) b = stream.next_uniform(-0.5, 0.5);
  const TensorD input = random_tensor({N, D}, stream);

  auto [out, cache] = dense_affine(input, params);
  const TensorD probe = random_probe(out.shape(), stream);
  const auto grads = dense_grad(cache, probe, params);

  double worst = 0.0;
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& x) {
                                auto [y, c] = dense_affine(x, params);
                                return dot(y, probe);
                              },
                              input, grads.input, kStep));
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& w) {
                                DenseParams<double> p = params;
                                p.weights = w;
                                auto [y, c] = dense_affine(input, p);
                                return dot(y, probe);
                              },
                              params.weights, grads.weights, kStep));
  const TensorD bias_point({O}, params.bias);
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& b) {
                                DenseParams<double> p = params;
                                p.bias.assign(b.data(), b.data() + b.size());
                                auto [y, c] = dense_affine(input, p);
                                return dot(y, probe);
                              },
                              bias_point, TensorD({O}, grads.bias), kStep));
  return worst;
}

double check_relu(rng::Stream& stream) {
  const int N = 4, D = 9;
  TensorD input({N, D});
  // sample away from the kink: |x| in [0.1, 1]
  for (std::int64_t i = 0; i < input.size(); ++i) {
    const double mag = stream.next_uniform(0.1, 1.0);
    input[i] = stream.next_unit() < 0.5 ? -mag : mag;
  }
  auto [out, cache] = relu(input);
  const TensorD probe = random_probe(out.shape(), stream);
  const TensorD grad = relu_grad(cache, probe);
  return finite_difference_check(
      [&](const TensorD& x) {
        auto [y, c] = relu(x);
        return dot(y, probe);
      },
      input, grad, kStep);
}

double check_softmax(rng::Stream& stream) {
  const int N = 4, C = 5;
  const TensorD logits = random_tensor({N, C}, stream, -2.0, 2.0);
  std::vector<int> labels(N);
  for (int& l : labels) l = static_cast<int>(stream.next_below(C));
  const auto loss = softmax_cross_entropy(logits, labels);
  return finite_difference_check(
      [&](const TensorD& x) { return softmax_cross_entropy(x, std::span<const int>(labels)).loss; },
      logits, loss.grad_logits, kStep);
}

double check_batchnorm(rng::Stream& stream) {
  const int N = 3, C = 2, H = 4, W = 3;
  BatchNormParams<double> params(C);
  for (int c = 0; c < C; ++c) {
    params.gamma[static_cast<std::size_t>(c)] = stream.next_uniform(0.5, 1.5);
    params.beta[static_cast<std::size_t>(c)] = stream.next_uniform(-0.5, 0.5);
  }
  const TensorD input = random_tensor({N, C, H, W}, stream);

  BatchNormParams<double> scratch = params;
  auto [out, cache] = bn_forward_train(input, scratch);
  const TensorD probe = random_probe(out.shape(), stream);
  const auto grads = bn_backward(cache, probe, params);

  double worst = 0.0;
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& x) {
                                BatchNormParams<double> p = params;
                                auto [y, c] = bn_forward_train(x, p);
                                return dot(y, probe);
                              },
                              input, grads.input, kStep));
  const TensorD gamma_point({C}, params.gamma);
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& g) {
                                BatchNormParams<double> p = params;
                                p.gamma.assign(g.data(), g.data() + g.size());
                                auto [y, c] = bn_forward_train(input, p);
                                return dot(y, probe);
                              },
                              gamma_point, TensorD({C}, grads.gamma), kStep));
  const TensorD beta_point({C}, params.beta);
  worst = std::max(worst, finite_difference_check(
                              [&](const TensorD& b) {
                                BatchNormParams<double> p = params;
                                p.beta.assign(b.data(), b.data() + b.size());
                                auto [y, c] = bn_forward_train(input, p);
                                return dot(y, probe);
                              },
                              beta_point, TensorD({C}, grads.beta), kStep));
  return worst;
}

// conv -> relu -> dense -> softmax loss, differentiated through the whole
// chain with respect to the input image.
double check_composed(rng::Stream& stream) {
  const int N = 2, C = 1, H = 6, W = 6, F = 3;
  ConvParams<double> conv;
  conv.kernels = random_tensor({F, C, 3, 3}, stream);
  conv.bias.assign(F, 0.0);
  const int oh = H - 2, ow = W - 2;
  const int flat = F * oh * ow;
  DenseParams<double> dense;
  dense.weights = random_tensor({flat, 3}, stream, -0.5, 0.5);
  dense.bias.assign(3, 0.0);
  std::vector<int> labels(N);
  for (int& l : labels) l = static_cast<int>(stream.next_below(3));
  const TensorD input = random_tensor({N, C, H, W}, stream);

  const auto forward = [&](const TensorD& x) {
    auto [c1, k1] = conv2d(x, conv);
    auto [r1, rc1] = relu(c1);
    auto [logits, dc] = dense_affine(r1.reshaped({N, flat}), dense);
    return softmax_cross_entropy(logits, std::span<const int>(labels)).loss;
  };

  auto [c1, k1] = conv2d(input, conv);
  auto [r1, rc1] = relu(c1);
  auto [logits, dc] = dense_affine(r1.reshaped({N, flat}), dense);
  const auto loss = softmax_cross_entropy(logits, std::span<const int>(labels));
  const auto dense_grads = dense_grad(dc, loss.grad_logits, dense);
  const TensorD g_r1 = relu_grad(rc1, dense_grads.input.reshaped(r1.shape()));
  const auto conv_grads = conv2d_grad(k1, g_r1, conv);

  return finite_difference_check(forward, input, conv_grads.input, kStep);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int points) {
  struct Entry {
    const char* name;
    double (*check)(rng::Stream&);
    double tolerance;
  };
  const Entry entries[] = {
      {"conv2d", check_conv, kSmoothTol},
      {"maxpool2d", check_pool, kKinkedTol},
      {"dense_affine", check_dense, kSmoothTol},
      {"relu", check_relu, kKinkedTol},
      {"softmax_cross_entropy", check_softmax, kSmoothTol},
      {"batchnorm_forward_train", check_batchnorm, kSmoothTol},
      {"composed_chain", check_composed, kKinkedTol},
  };

  std::vector<GradCheckResult> results;
  for (std::size_t e = 0; e < std::size(entries); ++e) {
    GradCheckResult result;
    result.layer = entries[e].name;
    result.tolerance = entries[e].tolerance;
    result.points = points;
    for (int p = 0; p < points; ++p) {
      // one independent stream per (layer, point)
      rng::Stream point_stream(
          rng::stream_key(seed, rng::kTest, std::uint64_t(e), std::uint64_t(p)));
      result.max_rel_error = std::max(result.max_rel_error, entries[e].check(point_stream));
    }
    results.push_back(result);
  }
  return results;
}

}  // namespace adabn

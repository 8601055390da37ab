#include "adabn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <future>
#include <numeric>

#include "adabn/errors.hpp"
#include "adabn/rng.hpp"

namespace adabn {

namespace {

// Fixed layer ids keep the init/dropout streams identical across scenarios,
// whether or not the normalization site exists.
enum LayerId : std::uint64_t {
  kLayerConv1 = 1,
  kLayerConv2 = 2,
  kLayerConv3 = 3,
  kLayerDense = 4,
  kLayerDropout = 5,
};

void kaiming_uniform(std::span<float> weights, int fan_in, rng::Stream& stream) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& w : weights) w = static_cast<float>(stream.next_uniform(-bound, bound));
}

struct Velocities {
  std::array<std::vector<float>, 3> conv_kernels;
  std::array<std::vector<float>, 3> conv_bias;
  std::vector<float> dense_weights, dense_bias;
  std::vector<float> bn_gamma, bn_beta;

  explicit Velocities(const Model& model) {
    for (int i = 0; i < 3; ++i) {
      conv_kernels[static_cast<std::size_t>(i)]
          .resize(static_cast<std::size_t>(model.convs[static_cast<std::size_t>(i)].kernels.size()));
      conv_bias[static_cast<std::size_t>(i)]
          .resize(model.convs[static_cast<std::size_t>(i)].bias.size());
    }
    dense_weights.resize(static_cast<std::size_t>(model.dense.weights.size()));
    dense_bias.resize(model.dense.bias.size());
    bn_gamma.resize(model.bn.gamma.size());
    bn_beta.resize(model.bn.beta.size());
  }
};

std::pair<TensorF, std::vector<int>> gather(const LabeledDataset& data,
                                            std::span<const int> ids) {
  const int C = data.channels(), H = data.height(), W = data.width();
  const std::int64_t per = static_cast<std::int64_t>(C) * H * W;
  TensorF batch({static_cast<int>(ids.size()), C, H, W});
  std::vector<int> labels(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    std::memcpy(batch.data() + static_cast<std::int64_t>(i) * per,
                data.images.data() + static_cast<std::int64_t>(id) * per,
                static_cast<std::size_t>(per) * sizeof(float));
    labels[i] = data.labels[static_cast<std::size_t>(id)];
  }
  return {std::move(batch), std::move(labels)};
}

std::vector<double> batch_averages(const TensorF& batch) {
  const int n = batch.dim(0);
  const std::int64_t per = batch.size() / n;
  std::vector<double> averages(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* p = batch.data() + static_cast<std::int64_t>(i) * per;
    double acc = 0.0;
    for (std::int64_t j = 0; j < per; ++j) acc += static_cast<double>(p[j]);
    averages[static_cast<std::size_t>(i)] = acc / static_cast<double>(per);
  }
  return averages;
}

// One SGD step over the full forward/backward chain. Returns the batch loss.
double train_step(Model& model, Velocities& vel, const TensorF& input,
                  std::span<const int> labels, bool apply_bn, std::uint64_t dropout_key,
                  const TrainConfig& config) {
  const float lr = static_cast<float>(config.learning_rate);
  const float mom = static_cast<float>(config.sgd_momentum);

  std::optional<BNCache<float>> bn_cache;
  TensorF x = input;
  if (apply_bn) {
    auto [normalized, cache] = bn_forward_train(x, model.bn);
    x = std::move(normalized);
    bn_cache = std::move(cache);
  }

  auto [c1, k1] = conv2d(x, model.convs[0]);
  auto [r1, rc1] = relu(c1);
  auto [p1, pc1] = maxpool2d(r1, 2);
  auto [c2, k2] = conv2d(p1, model.convs[1]);
  auto [r2, rc2] = relu(c2);
  auto [p2, pc2] = maxpool2d(r2, 2);
  auto [c3, k3] = conv2d(p2, model.convs[2]);
  auto [r3, rc3] = relu(c3);
  auto [p3, pc3] = maxpool2d(r3, 2);

  const int n = input.dim(0);
  TensorF flat = p3.reshaped({n, model.flat_dim});
  auto [dropped, drop_cache] = dropout(flat, model.dropout_rate, dropout_key, Mode::kTrain);
  auto [logits, dense_cache] = dense_affine(dropped, model.dense);
  auto loss = softmax_cross_entropy(logits, labels);

  auto dense_grads = dense_grad(dense_cache, loss.grad_logits, model.dense);
  TensorF g_flat = dropout_grad(drop_cache, dense_grads.input);
  TensorF g_p3 = g_flat.reshaped(p3.shape());
  TensorF g_r3 = maxpool2d_grad(pc3, g_p3);
  TensorF g_c3 = relu_grad(rc3, g_r3);
  auto conv3_grads = conv2d_grad(k3, g_c3, model.convs[2]);
  TensorF g_r2 = maxpool2d_grad(pc2, conv3_grads.input);
  TensorF g_c2 = relu_grad(rc2, g_r2);
  auto conv2_grads = conv2d_grad(k2, g_c2, model.convs[1]);
  TensorF g_r1 = maxpool2d_grad(pc1, conv2_grads.input);
  TensorF g_c1 = relu_grad(rc1, g_r1);
  auto conv1_grads = conv2d_grad(k1, g_c1, model.convs[0]);

  if (apply_bn) {
    auto bn_grads = bn_backward(*bn_cache, conv1_grads.input, model.bn);
    sgd_update(model.bn.gamma, bn_grads.gamma, vel.bn_gamma, lr, mom);
    sgd_update(model.bn.beta, bn_grads.beta, vel.bn_beta, lr, mom);
  }

  const std::array<ConvGrads<float>*, 3> conv_grads = {&conv1_grads, &conv2_grads, &conv3_grads};
  for (std::size_t i = 0; i < 3; ++i) {
    sgd_update(model.convs[i].kernels.values(), conv_grads[i]->kernels.values(),
               vel.conv_kernels[i], lr, mom);
    sgd_update(model.convs[i].bias, conv_grads[i]->bias, vel.conv_bias[i], lr, mom);
  }
  sgd_update(model.dense.weights.values(), dense_grads.weights.values(), vel.dense_weights, lr,
             mom);
  sgd_update(model.dense.bias, dense_grads.bias, vel.dense_bias, lr, mom);

  return loss.loss;
}

TensorF eval_forward(const Model& model, const TensorF& input) {
  TensorF x = input;
  if (model.scenario == Scenario::kBn) x = bn_forward_eval(x, model.bn);
  // the adaptive site is an identity at evaluation time
  for (const ConvParams<float>& conv : model.convs) {
    auto [c, kc] = conv2d(x, conv);
    auto [r, rc] = relu(c);
    auto [p, pc] = maxpool2d(r, 2);
    x = std::move(p);
  }
  TensorF flat = x.reshaped({input.dim(0), model.flat_dim});
  auto [logits, dc] = dense_affine(flat, model.dense);
  return std::move(logits);
}

}  // namespace

Model build_model(const TrainConfig& config, int channels, int height, int width,
                  int class_count) {
  if (class_count < 2) throw DataError("build_model: need at least two classes");

  Model model;
  model.scenario = config.scenario;
  model.dropout_rate = config.dropout_rate;
  model.class_count = class_count;
  model.bn = BatchNormParams<float>(channels);
  model.shape_chain.push_back({"input", {channels, height, width}});
  if (model.has_norm_site())
    model.shape_chain.push_back({"norm_site", {channels, height, width}});

  int c = channels, h = height, w = width;
  for (int i = 0; i < 3; ++i) {
    const int filters = config.conv_filters[static_cast<std::size_t>(i)];
    ConvParams<float> conv;
    conv.kernels = TensorF({filters, c, 3, 3});
    conv.bias.assign(static_cast<std::size_t>(filters), 0.0f);
    conv.stride = 1;
    conv.padding = 0;
    const int oh = conv_extent(h, 0, 3, 1, "height");
    const int ow = conv_extent(w, 0, 3, 1, "width");
    rng::Stream stream(rng::stream_key(config.seed, rng::kInit, kLayerConv1 + std::uint64_t(i)));
    kaiming_uniform(conv.kernels.values(), c * 3 * 3, stream);
    model.convs[static_cast<std::size_t>(i)] = std::move(conv);
    model.shape_chain.push_back({"conv" + std::to_string(i + 1), {filters, oh, ow}});
    if (oh < 2 || ow < 2)
      throw ShapeError("build_model: " + std::to_string(oh) + "x" + std::to_string(ow) +
                       " feature map after conv" + std::to_string(i + 1) +
                       " cannot be pooled; input too small");
    c = filters;
    h = oh / 2;
    w = ow / 2;
    model.shape_chain.push_back({"maxpool" + std::to_string(i + 1), {c, h, w}});
  }

  model.flat_dim = c * h * w;
  model.shape_chain.push_back({"flatten", {model.flat_dim}});
  model.shape_chain.push_back({"dropout", {model.flat_dim}});

  model.dense.weights = TensorF({model.flat_dim, class_count});
  model.dense.bias.assign(static_cast<std::size_t>(class_count), 0.0f);
  rng::Stream stream(rng::stream_key(config.seed, rng::kInit, kLayerDense));
  kaiming_uniform(model.dense.weights.values(), model.flat_dim, stream);
  model.shape_chain.push_back({"dense_softmax", {class_count}});
  return model;
}

void sgd_update(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
                float learning_rate, float momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw ShapeError("sgd_update: sizes differ (params " + std::to_string(params.size()) +
                     ", grads " + std::to_string(grads.size()) + ", velocity " +
                     std::to_string(velocity.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= learning_rate * velocity[i];
  }
}

double evaluate_accuracy(const Model& model, const LabeledDataset& data,
                         std::span<const int> indices) {
  if (indices.empty()) throw DataError("evaluate_accuracy: empty index set");
  constexpr int kChunk = 128;
  long correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    auto [batch, labels] = gather(data, indices.subspan(start, end - start));
    const TensorF logits = eval_forward(model, batch);
    const int classes = logits.dim(1);
    for (int i = 0; i < logits.dim(0); ++i) {
      int best = 0;
      for (int j = 1; j < classes; ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

RunMetrics run_training(const TrainConfig& config, const LabeledDataset& data,
                        std::span<const int> train_indices, std::span<const int> val_indices) {
  config.validate();
  if (train_indices.empty()) throw DataError("run_training: empty training split");
  for (int id : train_indices)
    if (id < 0 || id >= data.count())
      throw DataError("run_training: training index " + std::to_string(id) + " out of range");

  const auto t0 = std::chrono::steady_clock::now();
  Model model =
      build_model(config, data.channels(), data.height(), data.width(), data.class_count);
  Velocities velocities(model);
  ClassAverageTable calibration(data.class_count);
  std::optional<ThresholdTable> thresholds;

  RunMetrics metrics;
  metrics.shape_chain = model.shape_chain;

  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const BatchPlan plan =
        make_batches(static_cast<int>(train_indices.size()), config.batch_size,
                     rng::stream_key(config.seed, rng::kShuffle, std::uint64_t(epoch)));
    double loss_sum = 0.0;
    long seen = 0;
    long gated = 0;
    int batch_index = 0;
    for (const std::vector<int>& positions : plan.batches) {
      std::vector<int> ids(positions.size());
      for (std::size_t i = 0; i < positions.size(); ++i)
        ids[i] = train_indices[static_cast<std::size_t>(positions[i])];
      auto [batch, labels] = gather(data, ids);

      bool apply_bn = false;
      if (config.scenario == Scenario::kBn) {
        apply_bn = true;
      } else if (config.scenario == Scenario::kAdaptive) {
        const std::vector<double> averages = batch_averages(batch);
        if (epoch == 1) {
          for (std::size_t i = 0; i < averages.size(); ++i)
            calibration.add(labels[i], averages[i]);
        } else {
          GateRecord record;
          if (config.gate_force_on) {
            record.decision = true;
            record.trigger_instance = 0;
            record.trigger_class = labels[0];
            record.trigger_average = averages[0];
          } else {
            record = gate_averages(averages, labels, *thresholds);
          }
          record.epoch = epoch;
          record.batch_index = batch_index;
          metrics.gate_log.add(record);
          apply_bn = record.decision;
          if (record.decision) ++gated;
        }
      }

      const double loss =
          train_step(model, velocities, batch, labels, apply_bn,
                     rng::stream_key(config.seed, rng::kDropout, kLayerDropout, step), config);
      if (apply_bn) ++metrics.bn_batches_applied;
      loss_sum += loss * static_cast<double>(labels.size());
      seen += static_cast<long>(labels.size());
      ++step;
      ++batch_index;
    }

    if (config.scenario == Scenario::kAdaptive && epoch == 1)
      thresholds = finalize_thresholds(calibration, config.upr_p, config.lor_p);

    double fraction = 0.0;
    if (config.scenario == Scenario::kBn)
      fraction = 1.0;
    else if (config.scenario == Scenario::kAdaptive && epoch > 1)
      fraction = static_cast<double>(gated) / static_cast<double>(plan.batches.size());

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = loss_sum / static_cast<double>(seen);
    em.val_accuracy = evaluate_accuracy(model, data, val_indices);
    em.bn_fraction = fraction;
    metrics.epochs.push_back(em);
  }

  metrics.final_accuracy = metrics.epochs.back().val_accuracy;
  metrics.thresholds = std::move(thresholds);
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return metrics;
}

CrossvalSummary summarize_folds(std::vector<RunMetrics> folds) {
  CrossvalSummary summary;
  summary.folds = std::move(folds);
  for (const RunMetrics& fold : summary.folds)
    summary.fold_accuracies.push_back(fold.final_accuracy);
  const double k = static_cast<double>(summary.fold_accuracies.size());
  double mean = 0.0;
  for (double a : summary.fold_accuracies) mean += a;
  mean /= k;
  double var = 0.0;
  for (double a : summary.fold_accuracies) var += (a - mean) * (a - mean);
  summary.mean_accuracy = mean;
  summary.std_accuracy = std::sqrt(var / k);  // population deviation over the K folds
  return summary;
}

CrossvalSummary run_crossval(const TrainConfig& config, const LabeledDataset& data) {
  config.validate();
  const int n = data.count();
  const int k = config.folds;

  // Pool sized so each fold trains on subset_train instances once its
  // validation slice is removed.
  int pool_size = n;
  if (config.subset_train > 0)
    pool_size = std::min(n, config.subset_train + config.subset_train / (k - 1));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream subset_stream(rng::stream_key(config.seed, rng::kSubset));
  rng::shuffle(std::span<int>(order), subset_stream);
  order.resize(static_cast<std::size_t>(pool_size));

  const FoldSplit split = kfold_split(pool_size, k, rng::stream_key(config.seed, rng::kFold));

  std::vector<std::future<RunMetrics>> futures;
  for (int f = 0; f < k; ++f) {
    futures.push_back(std::async(std::launch::async, [&, f] {
      const FoldSplit::Fold& fold = split.folds[static_cast<std::size_t>(f)];
      std::vector<int> train, val;
      for (int pos : fold.train) train.push_back(order[static_cast<std::size_t>(pos)]);
      for (int pos : fold.validation) val.push_back(order[static_cast<std::size_t>(pos)]);
      if (config.subset_train > 0 && static_cast<int>(train.size()) > config.subset_train)
        train.resize(static_cast<std::size_t>(config.subset_train));
      if (config.subset_eval > 0 && static_cast<int>(val.size()) > config.subset_eval)
        val.resize(static_cast<std::size_t>(config.subset_eval));
      TrainConfig fold_config = config;
      fold_config.seed = rng::stream_key(config.seed, rng::kFold, std::uint64_t(f) + 1);
      return run_training(fold_config, data, train, val);
    }));
  }
  std::vector<RunMetrics> folds;
  for (auto& future : futures) folds.push_back(future.get());
  return summarize_folds(std::move(folds));
}

std::pair<std::vector<int>, std::vector<int>> holdout_split(const TrainConfig& config, int n) {
  if (n < 2) throw DataError("holdout_split: need at least two instances");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream stream(rng::stream_key(config.seed, rng::kSubset));
  rng::shuffle(std::span<int>(order), stream);

  int val_n = config.subset_eval > 0 ? config.subset_eval : (n + 5) / 6;
  val_n = std::min(val_n, n - 1);
  int train_n = n - val_n;
  if (config.subset_train > 0) train_n = std::min(train_n, config.subset_train);

  std::vector<int> val(order.begin(), order.begin() + val_n);
  std::vector<int> train(order.begin() + val_n, order.begin() + val_n + train_n);
  return {std::move(train), std::move(val)};
}

LabeledDataset load_dataset(const TrainConfig& config) {
  const std::string& name = config.dataset;
  if (name == "synthetic") {
    LabeledDataset data = make_synthetic_digits(config.synthetic_size, config.seed);
    return data;
  }
  if (name == "mnist" || name == "fashion_mnist") {
    const std::string dir = config.data_dir + "/" + name;
    LabeledDataset data =
        read_idx_pair(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    data.name = name;
    return data;
  }
  if (name == "cifar10") {
    std::vector<std::string> paths;
    for (int i = 1; i <= 5; ++i)
      paths.push_back(config.data_dir + "/cifar10/data_batch_" + std::to_string(i) + ".bin");
    return read_cifar_bin(paths, CifarVariant::kCifar10);
  }
  if (name == "cifar100")
    return read_cifar_bin({config.data_dir + "/cifar100/train.bin"}, CifarVariant::kCifar100);
  throw ConfigError("dataset: expected synthetic, mnist, fashion_mnist, cifar10 or cifar100, got '" +
                    name + "'");
}

}  // namespace adabn

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adabn/batchnorm.hpp"
#include "adabn/config.hpp"
#include "adabn/dataset.hpp"
#include "adabn/gate.hpp"
#include "adabn/layers.hpp"
#include "adabn/tensor.hpp"

namespace adabn {

struct ShapeStage {
  std::string layer;
  Shape output;  // per instance, channels-first
};

// The fixed architecture: optional normalization site in front of the first
// conv layer, then three conv(3x3) + relu + maxpool(2x2) blocks, flatten,
// dropout, dense softmax head.
struct Model {
  Scenario scenario = Scenario::kNoBn;
  BatchNormParams<float> bn;  // meaningful when the scenario carries a norm site
  std::array<ConvParams<float>, 3> convs;
  DenseParams<float> dense;
  double dropout_rate = 0.0;
  int class_count = 0;
  int flat_dim = 0;
  std::vector<ShapeStage> shape_chain;

  bool has_norm_site() const { return scenario != Scenario::kNoBn; }
};

// Deterministic build: Kaiming-uniform fan-in weights from per-layer streams
// keyed by (seed, layer id), zero biases, gamma=1, beta=0. Throws ShapeError
// when the input cannot survive the three pool halvings.
Model build_model(const TrainConfig& config, int channels, int height, int width,
                  int class_count);

// v <- momentum * v + grad; theta <- theta - lr * v.
void sgd_update(std::span<float> params, std::span<const float> grads, std::span<float> velocity,
                float learning_rate, float momentum);

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = 0.0;
  double bn_fraction = 0.0;  // share of batches that took the BN path
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  double final_accuracy = 0.0;
  double wall_seconds = 0.0;
  GateLog gate_log;                          // adaptive scenario only
  std::optional<ThresholdTable> thresholds;  // adaptive scenario only
  long bn_batches_applied = 0;
  std::vector<ShapeStage> shape_chain;
};

// One full training run on the given split. Scenario semantics:
//   bn       - the norm site is active on every batch from epoch 1;
//   no_bn    - the site is absent;
//   adaptive - epoch 1 trains un-normalized while calibrating per-class
//              averages, thresholds are finalized at its end, and every
//              later batch is normalized iff the gate fires (or
//              gate_force_on is set).
RunMetrics run_training(const TrainConfig& config, const LabeledDataset& data,
                        std::span<const int> train_indices, std::span<const int> val_indices);

// Top-1 accuracy in evaluation mode (dropout identity; running statistics
// for the bn scenario; identity pass-through for adaptive).
double evaluate_accuracy(const Model& model, const LabeledDataset& data,
                         std::span<const int> indices);

struct CrossvalSummary {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation over folds
  std::vector<RunMetrics> folds;
};

CrossvalSummary summarize_folds(std::vector<RunMetrics> folds);

// K-fold protocol: a seeded pool is carved so each fold trains on
// subset_train instances and validates on its slice capped to subset_eval;
// every fold gets a fresh seeded model. Folds run concurrently, results
// merge by fold index.
CrossvalSummary run_crossval(const TrainConfig& config, const LabeledDataset& data);

// Seeded holdout split used by the single-run `train` subcommand.
std::pair<std::vector<int>, std::vector<int>> holdout_split(const TrainConfig& config, int n);

// Loads the configured dataset (synthetic sets are generated in memory).
LabeledDataset load_dataset(const TrainConfig& config);

}  // namespace adabn

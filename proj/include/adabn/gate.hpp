#pragma once

#include <optional>
#include <span>
#include <vector>

#include "adabn/tensor.hpp"

namespace adabn {

// Whole-batch normalization gate. During the first (calibration) epoch the
// mean pixel value of every training instance is accumulated per class; the
// per-class means then span an interval [a_min, a_max] via the configured
// fractional widths, and from the second epoch on a batch is normalized iff
// it contains at least one instance whose average falls strictly outside its
// own class interval.

// Mean over all channels and pixels of one [0,1] image, accumulated in flat
// row-major order.
template <typename T>
double instance_average(const Tensor<T>& image) {
  if (image.size() < 1) throw DataError("instance_average: empty tensor");
  double acc = 0.0;
  for (std::int64_t i = 0; i < image.size(); ++i) acc += static_cast<double>(image[i]);
  return acc / static_cast<double>(image.size());
}

class ClassAverageTable {
public:
  explicit ClassAverageTable(int class_count)
      : sums_(static_cast<std::size_t>(class_count), 0.0),
        counts_(static_cast<std::size_t>(class_count), 0) {}

  void add(int class_id, double average);
  int class_count() const { return static_cast<int>(sums_.size()); }
  long count(int class_id) const { return counts_[check(class_id)]; }
  // Mean of the recorded instance averages; the class must have appeared.
  double mean(int class_id) const;

private:
  std::size_t check(int class_id) const;
  std::vector<double> sums_;
  std::vector<long> counts_;
};

struct ThresholdTable {
  std::vector<double> mean;   // calibrated per-class average
  std::vector<double> a_min;  // mean * (1 - lor_p)
  std::vector<double> a_max;  // mean * (1 + upr_p)
  double upr_p = 0.0;
  double lor_p = 0.0;

  int class_count() const { return static_cast<int>(mean.size()); }
};

// Single-pass calibration over a traversal of (image, class id) pairs.
// Accumulation follows the given order, so the result is bitwise
// deterministic for a fixed shuffle.
template <typename Dataset>
ClassAverageTable calibrate(const Dataset& data, std::span<const int> indices) {
  ClassAverageTable table(data.class_count);
  for (int id : indices)
    table.add(data.labels[static_cast<std::size_t>(id)], instance_average(data.image(id)));
  return table;
}

// Collapses the calibration table into per-class intervals. Every class must
// have been seen at least once; upr_p >= 0 and lor_p in [0,1].
ThresholdTable finalize_thresholds(const ClassAverageTable& table, double upr_p, double lor_p);

struct GateRecord {
  int epoch = 0;
  int batch_index = 0;
  bool decision = false;
  // Present iff decision is true: the first out-of-range instance.
  int trigger_instance = -1;
  int trigger_class = -1;
  double trigger_average = 0.0;
};

// Decision over precomputed instance averages. Strict comparisons: a value
// exactly on a bound does not trigger.
GateRecord gate_averages(std::span<const double> averages, std::span<const int> labels,
                         const ThresholdTable& thresholds);

// Decision over a raw batch [N x C x H x W]; averages computed internally.
template <typename T>
GateRecord gate_batch(const Tensor<T>& images, std::span<const int> labels,
                      const ThresholdTable& thresholds) {
  require_rank(images, 4, "gate_batch images");
  const int n = images.dim(0);
  if (static_cast<int>(labels.size()) != n)
    throw DataError("gate_batch: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " images");
  const std::int64_t per = images.size() / n;
  std::vector<double> averages(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const T* p = images.data() + static_cast<std::size_t>(i) * per;
    for (std::int64_t j = 0; j < per; ++j) acc += static_cast<double>(p[j]);
    averages[static_cast<std::size_t>(i)] = acc / static_cast<double>(per);
  }
  return gate_averages(averages, labels, thresholds);
}

struct EpochGateStat {
  int epoch = 0;
  long batches_total = 0;
  long batches_gated = 0;
  double fraction() const {
    return batches_total == 0 ? 0.0
                              : static_cast<double>(batches_gated) /
                                    static_cast<double>(batches_total);
  }
};

class GateLog {
public:
  void add(const GateRecord& record);
  bool empty() const { return records_.empty(); }
  const std::vector<GateRecord>& records() const { return records_; }
  // Ordered per-epoch totals.
  std::vector<EpochGateStat> per_epoch() const;

private:
  std::vector<GateRecord> records_;
};

struct GateStats {
  std::vector<EpochGateStat> epochs;
  long batches_total = 0;
  long batches_gated = 0;
  double pooled_fraction = 0.0;
};

GateStats gate_stats(const GateLog& log);

}  // namespace adabn

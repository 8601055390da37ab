#include <cmath>
#include <numeric>

#include <doctest.h>

#include "adabn/dataset.hpp"
#include "adabn/gate.hpp"
#include "adabn/rng.hpp"
#include "oracles.hpp"

using namespace adabn;

TEST_SUITE("adaptive_gate") {

TEST_CASE("instance_average basics") {
  CHECK(instance_average(TensorF({1, 2, 2}, {0.0f, 0.5f, 0.5f, 1.0f})) == doctest::Approx(0.5));
  CHECK(instance_average(TensorF::full({3, 4, 4}, 0.375f)) == doctest::Approx(0.375));
  CHECK_THROWS_AS(instance_average(TensorF()), DataError);
}

TEST_CASE("instance_average matches the flat-loop oracle") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 0));
  const TensorF image = oracles::random_tensor<float>({3, 32, 32}, stream, 0.0, 1.0);
  double acc = 0;
  for (std::int64_t i = 0; i < image.size(); ++i) acc += image[i];
  CHECK(std::abs(instance_average(image) - acc / image.size()) < 1e-12);
}

TEST_CASE("calibration table means") {
  ClassAverageTable table(3);
  table.add(0, 0.4);
  table.add(0, 0.6);
  table.add(1, 0.9);
  table.add(2, 0.1);
  CHECK(table.mean(0) == doctest::Approx(0.5));
  CHECK(table.mean(1) == 0.9);  // single instance: the mean is that instance
  CHECK(table.count(2) == 1);
  CHECK_THROWS_AS(table.add(3, 0.2), DataError);
}

TEST_CASE("calibration over 1000 instances matches a two-pass oracle") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 1));
  const int n = 1000, classes = 10;
  std::vector<double> averages(n);
  std::vector<int> labels(n);
  ClassAverageTable table(classes);
  for (int i = 0; i < n; ++i) {
    averages[std::size_t(i)] = stream.next_uniform(0.0, 1.0);
    labels[std::size_t(i)] = static_cast<int>(stream.next_below(classes));
    table.add(labels[std::size_t(i)], averages[std::size_t(i)]);
  }
  const auto want = oracles::class_means_two_pass(averages, labels, classes);
  for (int c = 0; c < classes; ++c)
    CHECK(std::abs(table.mean(c) - want[std::size_t(c)]) < 1e-12);
}

TEST_CASE("calibrate traverses a dataset stream") {
  const LabeledDataset data = make_synthetic_digits(200, 17);
  std::vector<int> order(200);
  std::iota(order.begin(), order.end(), 0);
  const ClassAverageTable table = calibrate(data, order);

  std::vector<double> averages;
  for (int i = 0; i < 200; ++i) averages.push_back(instance_average(data.image(i)));
  const auto want = oracles::class_means_two_pass(averages, data.labels, 10);
  for (int c = 0; c < 10; ++c) {
    CHECK(table.count(c) == 20);
    CHECK(std::abs(table.mean(c) - want[std::size_t(c)]) < 1e-12);
  }
}

TEST_CASE("finalize_thresholds substitution") {
  ClassAverageTable table(1);
  table.add(0, 0.5);
  const ThresholdTable t = finalize_thresholds(table, 0.1, 0.1);
  CHECK(t.a_min[0] == doctest::Approx(0.45));
  CHECK(t.a_max[0] == doctest::Approx(0.55));

  const ThresholdTable degenerate = finalize_thresholds(table, 0.0, 0.0);
  CHECK(degenerate.a_min[0] == 0.5);
  CHECK(degenerate.a_max[0] == 0.5);

  CHECK_THROWS_AS(finalize_thresholds(table, 0.1, 1.5), ParameterError);
  CHECK_THROWS_AS(finalize_thresholds(table, -0.1, 0.1), ParameterError);

  ClassAverageTable missing(2);
  missing.add(0, 0.5);
  CHECK_THROWS_WITH_AS(finalize_thresholds(missing, 0.1, 0.1), doctest::Contains("class 1"),
                       CalibrationError);
}

TEST_CASE("interval always brackets the calibrated mean") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 2));
  ClassAverageTable table(10);
  for (int i = 0; i < 200; ++i)
    table.add(i % 10, stream.next_uniform(0.05, 0.95));
  const ThresholdTable t = finalize_thresholds(table, 0.1, 0.1);
  for (int c = 0; c < 10; ++c) {
    CHECK(t.a_min[std::size_t(c)] <= t.mean[std::size_t(c)]);
    CHECK(t.mean[std::size_t(c)] <= t.a_max[std::size_t(c)]);
    // width proportional to the mean
    CHECK(t.a_max[std::size_t(c)] - t.mean[std::size_t(c)] ==
          doctest::Approx(0.1 * t.mean[std::size_t(c)]));
  }
}

namespace {

ThresholdTable fixed_thresholds(std::vector<double> means, double upr, double lor) {
  ClassAverageTable table(static_cast<int>(means.size()));
  for (std::size_t c = 0; c < means.size(); ++c) table.add(static_cast<int>(c), means[c]);
  return finalize_thresholds(table, upr, lor);
}

}  // namespace

TEST_CASE("gate decision and trigger identity") {
  const ThresholdTable t = fixed_thresholds({0.5, 0.8}, 0.1, 0.1);

  std::vector<double> in_range = {0.5, 0.52, 0.78, 0.85};
  std::vector<int> labels = {0, 0, 1, 1};
  CHECK_FALSE(gate_averages(in_range, labels, t).decision);

  // one instance out of range among 16 in range
  std::vector<double> averages(16, 0.5);
  std::vector<int> batch_labels(16, 0);
  averages[11] = 0.56;  // above 0.55
  const GateRecord record = gate_averages(averages, batch_labels, t);
  CHECK(record.decision);
  CHECK(record.trigger_instance == 11);
  CHECK(record.trigger_class == 0);
  CHECK(record.trigger_average == doctest::Approx(0.56));

  std::vector<double> one = {0.5};
  std::vector<int> unknown = {2};
  CHECK_THROWS_AS(gate_averages(one, unknown, t), DataError);
}

TEST_CASE("boundary values do not trigger (strict comparisons)") {
  const ThresholdTable t = fixed_thresholds({0.5}, 0.1, 0.1);
  std::vector<double> at_bounds = {0.45, 0.55};
  std::vector<int> labels = {0, 0};
  CHECK_FALSE(gate_averages(at_bounds, labels, t).decision);
}

TEST_CASE("gate matches the brute-force oracle on random batches") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 3));
  const int classes = 10;
  int mismatches = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> means(classes);
    for (double& m : means) m = stream.next_uniform(0.1, 0.9);
    const ThresholdTable t =
        fixed_thresholds(means, stream.next_uniform(0.0, 0.3), stream.next_uniform(0.0, 0.3));
    const int n = 1 + static_cast<int>(stream.next_below(32));
    std::vector<double> averages(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[std::size_t(i)] = static_cast<int>(stream.next_below(classes));
      averages[std::size_t(i)] = stream.next_uniform(0.0, 1.2);
    }
    const bool got = gate_averages(averages, labels, t).decision;
    const bool want = oracles::gate_bruteforce(averages, labels, t.a_min, t.a_max);
    mismatches += got != want;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("gate union property over batch partitions") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 4));
  const ThresholdTable t = fixed_thresholds({0.3, 0.6, 0.9}, 0.15, 0.2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(stream.next_below(30));
    std::vector<double> averages(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[std::size_t(i)] = static_cast<int>(stream.next_below(3));
      averages[std::size_t(i)] = stream.next_uniform(0.0, 1.1);
    }
    const std::size_t cut = 1 + stream.next_below(std::uint64_t(n - 1));
    const bool whole = gate_averages(averages, labels, t).decision;
    const bool left = gate_averages(std::span(averages).subspan(0, cut),
                                    std::span(labels).subspan(0, cut), t)
                          .decision;
    const bool right = gate_averages(std::span(averages).subspan(cut),
                                     std::span(labels).subspan(cut), t)
                           .decision;
    CHECK(whole == (left || right));
  }
}

TEST_CASE("enlarging every interval never flips a decision on") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 5));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> means = {0.4, 0.7};
    const double upr = stream.next_uniform(0.0, 0.2), lor = stream.next_uniform(0.0, 0.2);
    const ThresholdTable narrow = fixed_thresholds(means, upr, lor);
    const ThresholdTable wide = fixed_thresholds(means, upr + 0.1, lor + 0.1);
    const int n = 1 + static_cast<int>(stream.next_below(16));
    std::vector<double> averages(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[std::size_t(i)] = static_cast<int>(stream.next_below(2));
      averages[std::size_t(i)] = stream.next_uniform(0.0, 1.0);
    }
    if (!gate_averages(averages, labels, narrow).decision)
      CHECK_FALSE(gate_averages(averages, labels, wide).decision);
  }
}

TEST_CASE("zero widths gate every batch with an off-mean instance") {
  rng::Stream stream(rng::stream_key(11, rng::kTest, 6));
  const ThresholdTable t = fixed_thresholds({0.5, 0.25}, 0.0, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(stream.next_below(8));
    std::vector<double> averages(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    bool any_off_mean = false;
    for (int i = 0; i < n; ++i) {
      labels[std::size_t(i)] = static_cast<int>(stream.next_below(2));
      const double mean = t.mean[std::size_t(labels[std::size_t(i)])];
      const bool off = stream.next_unit() < 0.5;
      averages[std::size_t(i)] = off ? mean + stream.next_uniform(-0.1, 0.1) : mean;
      any_off_mean = any_off_mean || averages[std::size_t(i)] != mean;
    }
    CHECK(gate_averages(averages, labels, t).decision == any_off_mean);
  }
}

TEST_CASE("decision is permutation invariant, only the trigger may move") {
  const ThresholdTable t = fixed_thresholds({0.5}, 0.05, 0.05);
  std::vector<double> averages = {0.5, 0.9, 0.51, 0.8};
  std::vector<int> labels = {0, 0, 0, 0};
  const GateRecord forward = gate_averages(averages, labels, t);
  std::vector<double> reversed(averages.rbegin(), averages.rend());
  const GateRecord backward = gate_averages(reversed, labels, t);
  CHECK(forward.decision == backward.decision);
  CHECK(forward.trigger_instance == 1);   // 0.9 is the first hit forward
  CHECK(backward.trigger_instance == 0);  // 0.8 is the first hit reversed
}

TEST_CASE("gate_batch computes averages from raw images") {
  const ThresholdTable t = fixed_thresholds({0.5}, 0.1, 0.1);
  TensorF images({2, 1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f, 1.0f, 1.0f, 1.0f, 1.0f});
  std::vector<int> labels = {0, 0};
  const GateRecord record = gate_batch(images, labels, t);
  CHECK(record.decision);
  CHECK(record.trigger_instance == 1);
  CHECK(record.trigger_average == doctest::Approx(1.0));
}

TEST_CASE("gate_stats fractions") {
  GateLog log;
  for (int b = 0; b < 100; ++b) {
    GateRecord r;
    r.epoch = 2;
    r.batch_index = b;
    r.decision = b < 25;
    if (r.decision) {
      r.trigger_instance = 0;
      r.trigger_class = 0;
      r.trigger_average = 1.0;
    }
    log.add(r);
  }
  const GateStats stats = gate_stats(log);
  CHECK(stats.batches_total == 100);
  CHECK(stats.batches_gated == 25);
  CHECK(stats.pooled_fraction == doctest::Approx(0.25));
  CHECK(stats.epochs.size() == 1);
  CHECK(stats.epochs[0].fraction() == doctest::Approx(0.25));

  GateLog empty;
  CHECK_THROWS_AS(gate_stats(empty), DataError);

  GateLog none;
  for (int b = 0; b < 100; ++b) {
    GateRecord r;
    r.epoch = 2;
    r.batch_index = b;
    none.add(r);
  }
  CHECK(gate_stats(none).pooled_fraction == 0.0);
}

TEST_CASE("pooled gated fraction grows with batch size on i.i.d. averages") {
  // fixed thresholds, synthetic i.i.d. instance averages
  const ThresholdTable t = fixed_thresholds({0.5}, 0.1, 0.1);
  const int n = 4992;  // divisible by 4, 8, 16 and 32
  int monotone = 0;
  std::vector<double> spearmans;
  for (int rep = 0; rep < 20; ++rep) {
    rng::Stream stream(rng::stream_key(13, rng::kTest, rep));
    std::vector<double> averages(n);
    for (double& a : averages) a = stream.next_uniform(0.42, 0.58);  // ~12.5% out of band
    std::vector<int> labels(n, 0);

    std::vector<double> fractions;
    const std::vector<double> sizes = {4, 8, 16, 32};
    for (int batch : {4, 8, 16, 32}) {
      long gated = 0;
      for (int start = 0; start < n; start += batch) {
        const bool hit = gate_averages(std::span(averages).subspan(std::size_t(start),
                                                                   std::size_t(batch)),
                                       std::span(labels).subspan(std::size_t(start),
                                                                 std::size_t(batch)),
                                       t)
                             .decision;
        gated += hit;
      }
      fractions.push_back(static_cast<double>(gated) / (static_cast<double>(n) / batch));
    }
    bool nondecreasing = true;
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i)
      nondecreasing = nondecreasing && fractions[i] <= fractions[i + 1];
    monotone += nondecreasing;
    spearmans.push_back(oracles::spearman(sizes, fractions));
  }
  CHECK(monotone == 20);
  for (double s : spearmans) CHECK(s > 0.0);
}

}  // TEST_SUITE

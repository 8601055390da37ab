// Acceptance suite: every release-gating property of the engine, one
// pass/fail line each. Exits nonzero if any criterion fails.
//
//   adabn_acceptance --cli <path to the adabn binary> [--workdir <dir>]
//
// Uses a real MNIST pair under $ADABN_DATA_DIR/mnist when present; otherwise
// the deterministic procedural digit set is written to IDX files and loaded
// back through the same ingestion path.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include <json.hpp>

#include "adabn/batchnorm.hpp"
#include "adabn/checks.hpp"
#include "adabn/config.hpp"
#include "adabn/dataset.hpp"
#include "adabn/errors.hpp"
#include "adabn/gate.hpp"
#include "adabn/report.hpp"
#include "adabn/rng.hpp"
#include "adabn/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace adabn;

namespace {

constexpr std::uint64_t kSeed = 2024;

struct Context {
  std::string cli_path;
  fs::path workdir;
  bool have_real_mnist = false;
  std::string mnist_dir;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

bool report(int index, const char* name, bool pass, const std::string& detail, double seconds) {
  std::printf("[%s] criterion %d (%s): %s (%.1fs)\n", pass ? "PASS" : "FAIL", index, name,
              detail.c_str(), seconds);
  std::fflush(stdout);
  return pass;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// The 6000-instance calibration source: real MNIST when available.
LabeledDataset calibration_dataset(const Context& ctx, int n) {
  if (ctx.have_real_mnist) {
    LabeledDataset full = read_idx_pair(ctx.mnist_dir + "/train-images-idx3-ubyte",
                                        ctx.mnist_dir + "/train-labels-idx1-ubyte");
    LabeledDataset subset;
    subset.name = "mnist";
    subset.class_count = full.class_count;
    subset.labels.assign(full.labels.begin(), full.labels.begin() + n);
    std::vector<float> pixels(full.images.data(),
                              full.images.data() + std::int64_t(n) * full.channels() *
                                                       full.height() * full.width());
    subset.images =
        TensorF({n, full.channels(), full.height(), full.width()}, std::move(pixels));
    return subset;
  }
  // written to IDX and parsed back so the file path is exercised too
  const LabeledDataset generated = make_synthetic_digits(n, kSeed);
  const fs::path img = fs::path("acceptance-images-idx3-ubyte");
  const fs::path lbl = fs::path("acceptance-labels-idx1-ubyte");
  write_idx_pair(generated, img.string(), lbl.string());
  return read_idx_pair(img.string(), lbl.string());
}

// ---------------------------------------------------------------------------

bool criterion1_gradient_checks(const Context&) {
  Timer timer;
  const auto results = run_gradient_checks(kSeed, 10);
  bool pass = true;
  std::string detail;
  const char* required[] = {"conv2d",
                            "maxpool2d",
                            "dense_affine",
                            "relu",
                            "softmax_cross_entropy",
                            "batchnorm_forward_train"};
  for (const char* name : required) {
    bool found = false;
    for (const auto& r : results) found = found || r.layer == name;
    pass = pass && found;
  }
  for (const auto& r : results) {
    pass = pass && r.pass();
    detail += r.layer + "=" + fmt(r.max_rel_error) + " ";
  }
  const double seconds = timer.seconds();
  pass = pass && seconds < 120.0;
  return report(1, "gradient checks, 10 points per layer", pass, detail, seconds);
}

bool criterion2_bn_property(const Context&) {
  Timer timer;
  double worst_mean = 0.0, worst_var = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    rng::Stream stream(rng::stream_key(kSeed, rng::kTest, 200 + trial));
    const TensorD input = oracles::random_tensor<double>({32, 3, 5, 7}, stream, -2.0, 2.0);
    BatchNormParams<double> params(3);
    auto [out, cache] = bn_forward_train(input, params);
    const std::int64_t m = cache.reduce_count;
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int n = 0; n < 32; ++n)
        for (int h = 0; h < 5; ++h)
          for (int w = 0; w < 7; ++w) mean += cache.x_hat.at(n, c, h, w);
      mean /= double(m);
      double var = 0.0;
      for (int n = 0; n < 32; ++n)
        for (int h = 0; h < 5; ++h)
          for (int w = 0; w < 7; ++w) {
            const double d = cache.x_hat.at(n, c, h, w) - mean;
            var += d * d;
          }
      var /= double(m);
      const double sigma2 = cache.var[std::size_t(c)];
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_var = std::max(worst_var, std::abs(var - sigma2 / (sigma2 + params.eps)));
    }
  }
  const bool pass = worst_mean < 1e-10 && worst_var < 1e-9;
  return report(2, "bn normalization property over 100 batches", pass,
                "max|mean(x_hat)|=" + fmt(worst_mean) + " max|var-target|=" + fmt(worst_var),
                timer.seconds());
}

bool criterion3_gate_oracle(const Context&) {
  Timer timer;
  rng::Stream stream(rng::stream_key(kSeed, rng::kTest, 300));
  const int classes = 10;
  long mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    ClassAverageTable table(classes);
    for (int c = 0; c < classes; ++c) table.add(c, stream.next_uniform(0.05, 0.95));
    const ThresholdTable thresholds = finalize_thresholds(
        table, stream.next_uniform(0.0, 0.4), stream.next_uniform(0.0, 0.4));
    const int n = 1 + int(stream.next_below(32));
    std::vector<double> averages(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[std::size_t(i)] = int(stream.next_below(classes));
      averages[std::size_t(i)] = stream.next_uniform(0.0, 1.3);
    }
    const bool got = gate_averages(averages, labels, thresholds).decision;
    const bool want =
        oracles::gate_bruteforce(averages, labels, thresholds.a_min, thresholds.a_max);
    mismatches += got != want;
  }
  return report(3, "gate agrees with the brute-force oracle on 10^4 batches", mismatches == 0,
                "mismatches=" + std::to_string(mismatches) + "/10000", timer.seconds());
}

bool criterion4_scenario_equivalence(const Context&) {
  Timer timer;
  const LabeledDataset data = make_synthetic_digits(1000, kSeed);
  std::vector<int> train, val;
  for (int i = 0; i < 600; ++i) train.push_back(i);
  for (int i = 600; i < 800; ++i) val.push_back(i);

  TrainConfig base;
  base.scenario = Scenario::kAdaptive;
  base.batch_size = 8;
  base.epochs = 3;
  base.learning_rate = 0.002;
  base.seed = kSeed;

  // (a) gate can never fire: bitwise equal to no_bn from epoch 2 on
  TrainConfig never = base;
  never.lor_p = 1.0;
  never.upr_p = 1e6;
  TrainConfig no_bn = never;
  no_bn.scenario = Scenario::kNoBn;
  const RunMetrics adaptive_run = run_training(never, data, train, val);
  const RunMetrics no_bn_run = run_training(no_bn, data, train, val);

  bool pass = adaptive_run.bn_batches_applied == 0;
  const std::string csv_a = metrics_csv(adaptive_run);
  const std::string csv_b = metrics_csv(no_bn_run);
  const auto rows_from = [](const std::string& csv, int epoch_from) {
    std::string out;
    std::size_t pos = 0;
    int line = -1;  // header
    while (pos < csv.size()) {
      const std::size_t next = csv.find('\n', pos);
      const std::string row = csv.substr(pos, next - pos);
      if (line >= epoch_from - 1) out += row + "\n";
      ++line;
      pos = next + 1;
    }
    return out;
  };
  pass = pass && rows_from(csv_a, 2) == rows_from(csv_b, 2);
  for (std::size_t e = 1; e < adaptive_run.epochs.size(); ++e) {
    pass = pass && std::memcmp(&adaptive_run.epochs[e].mean_loss,
                               &no_bn_run.epochs[e].mean_loss, sizeof(double)) == 0;
    pass = pass && std::memcmp(&adaptive_run.epochs[e].val_accuracy,
                               &no_bn_run.epochs[e].val_accuracy, sizeof(double)) == 0;
  }

  // (b) forced always-on: the bn code path runs on every batch from epoch 2
  TrainConfig forced = base;
  forced.gate_force_on = true;
  const RunMetrics forced_run = run_training(forced, data, train, val);
  long total = 0;
  for (const EpochGateStat& e : forced_run.gate_log.per_epoch()) {
    pass = pass && e.fraction() == 1.0;
    total += e.batches_total;
  }
  pass = pass && forced_run.bn_batches_applied == total && total > 0;
  for (const EpochMetrics& e : forced_run.epochs)
    if (e.epoch >= 2) pass = pass && e.bn_fraction == 1.0;

  return report(4, "scenario equivalence under degenerate gates", pass,
                "never-fires rows match no_bn bitwise; forced-on fraction=1.0 over " +
                    std::to_string(total) + " batches",
                timer.seconds());
}

bool criterion5_batch_size_trend(const Context& ctx) {
  Timer timer;
  const int n = 6000;
  const LabeledDataset data = calibration_dataset(ctx, n);

  ClassAverageTable table(data.class_count);
  std::vector<double> averages(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    averages[std::size_t(i)] = instance_average(data.image(i));
    table.add(data.labels[std::size_t(i)], averages[std::size_t(i)]);
  }
  const ThresholdTable thresholds = finalize_thresholds(table, 0.10, 0.10);

  const std::vector<double> sizes = {4, 8, 16, 32};
  int good = 0;
  std::string detail;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> fractions;
    for (int batch_size : {4, 8, 16, 32}) {
      const BatchPlan plan =
          make_batches(n, batch_size, rng::stream_key(kSeed, rng::kTest, 500 + rep));
      long gated = 0;
      for (const std::vector<int>& batch : plan.batches) {
        std::vector<double> avg;
        std::vector<int> lbl;
        for (int id : batch) {
          avg.push_back(averages[std::size_t(id)]);
          lbl.push_back(data.labels[std::size_t(id)]);
        }
        gated += gate_averages(avg, lbl, thresholds).decision;
      }
      fractions.push_back(double(gated) / double(plan.batches.size()));
    }
    bool nondecreasing = true;
    for (int i = 0; i < 3; ++i)
      nondecreasing = nondecreasing && fractions[std::size_t(i)] <= fractions[std::size_t(i) + 1];
    const double rho = oracles::spearman(sizes, fractions);
    if (nondecreasing && rho > 0.0) ++good;
    if (rep == 0)
      detail = "rep0 fractions: " + fmt(fractions[0]) + " " + fmt(fractions[1]) + " " +
               fmt(fractions[2]) + " " + fmt(fractions[3]) + "; ";
  }
  const double seconds = timer.seconds();
  const bool pass = good >= 18 && seconds < 300.0;
  return report(5, "gated fraction non-decreasing in batch size", pass,
                detail + std::to_string(good) + "/20 replications monotone with Spearman>0",
                seconds);
}

bool criterion6_desk_scale(const Context& ctx) {
  Timer timer;
  TrainConfig base;
  base.dataset = ctx.have_real_mnist ? "mnist" : "synthetic";
  if (ctx.have_real_mnist)
    base.data_dir = ctx.mnist_dir.substr(0, ctx.mnist_dir.find_last_of('/'));
  base.synthetic_size = 9000;
  base.batch_size = 4;
  base.epochs = 5;
  base.folds = 3;
  base.subset_train = 6000;
  base.subset_eval = 1000;
  base.learning_rate = 0.003;  // stable for every scenario at batch size 4
  base.sgd_momentum = 0.9;
  base.seed = kSeed;

  const LabeledDataset data = load_dataset(base);
  double means[3] = {0, 0, 0};
  const Scenario order[3] = {Scenario::kBn, Scenario::kNoBn, Scenario::kAdaptive};
  std::string detail;
  for (int s = 0; s < 3; ++s) {
    TrainConfig config = base;
    config.scenario = order[s];
    const CrossvalSummary summary = run_crossval(config, data);
    means[s] = summary.mean_accuracy;
    detail += to_string(order[s]) + "=" + fmt(summary.mean_accuracy * 100.0) + "%(+/-" +
              fmt(summary.std_accuracy * 100.0) + ") ";
  }
  const double best_baseline = std::max(means[0], means[1]);
  const double seconds = timer.seconds();
  const bool pass = means[2] >= best_baseline - 0.015 && means[0] >= 0.90 &&
                    means[1] >= 0.90 && means[2] >= 0.90 && seconds < 1800.0;
  return report(6, "desk-scale 3-fold accuracy, batch 4", pass, detail, seconds);
}

bool criterion7_determinism(const Context& ctx) {
  Timer timer;
  const fs::path out1 = ctx.workdir / "det1";
  const fs::path out2 = ctx.workdir / "det2";
  const std::string config =
      " scenario=adaptive dataset=synthetic synthetic_size=1200 subset_train=400"
      " subset_eval=100 epochs=2 batch_size=8 learning_rate=0.002 folds=3 seed=11";
  for (const fs::path& out : {out1, out2}) {
    const std::string cmd =
        ctx.cli_path + " crossval --out " + out.string() + config + " > /dev/null";
    if (std::system(cmd.c_str()) != 0)
      return report(7, "crossval determinism", false, "cli invocation failed", timer.seconds());
  }

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  bool pass = true;
  pass = pass && slurp(out1 / "metrics.csv") == slurp(out2 / "metrics.csv");
  pass = pass && slurp(out1 / "gate.csv") == slurp(out2 / "gate.csv");

  // run.json must agree once the timing block (timestamp, wall clock) is gone
  auto j1 = nlohmann::ordered_json::parse(slurp(out1 / "run.json"));
  auto j2 = nlohmann::ordered_json::parse(slurp(out2 / "run.json"));
  j1.erase("timing");
  j2.erase("timing");
  pass = pass && j1.dump() == j2.dump();

  return report(7, "crossval reruns byte-identical minus timestamps", pass,
                pass ? "metrics.csv, gate.csv and stripped run.json all agree"
                     : "artifact mismatch between reruns",
                timer.seconds());
}

bool criterion8_format_fidelity(const Context& ctx) {
  Timer timer;
  const fs::path dir = ctx.workdir / "fixtures";
  fs::create_directories(dir);
  bool pass = true;
  std::string detail;

  // IDX round trip
  const LabeledDataset digits = make_synthetic_digits(64, kSeed);
  const auto img1 = dir / "a-images-idx3-ubyte", lbl1 = dir / "a-labels-idx1-ubyte";
  const auto img2 = dir / "b-images-idx3-ubyte", lbl2 = dir / "b-labels-idx1-ubyte";
  write_idx_pair(digits, img1.string(), lbl1.string());
  const LabeledDataset parsed = read_idx_pair(img1.string(), lbl1.string());
  write_idx_pair(parsed, img2.string(), lbl2.string());
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  pass = pass && slurp(img1) == slurp(img2) && slurp(lbl1) == slurp(lbl2);
  detail += pass ? "idx round-trip ok; " : "idx round-trip broken; ";

  // CIFAR round trip (both variants)
  rng::Stream stream(rng::stream_key(kSeed, rng::kTest, 800));
  LabeledDataset cifar;
  cifar.class_count = 10;
  cifar.name = "cifar10";
  {
    std::vector<float> pixels;
    for (int i = 0; i < 5; ++i) {
      cifar.labels.push_back(int(stream.next_below(10)));
      for (int p = 0; p < 3072; ++p)
        pixels.push_back(float(stream.next_below(256)) / 255.0f);
    }
    cifar.images = TensorF({5, 3, 32, 32}, std::move(pixels));
  }
  const auto c1 = dir / "cifar_a.bin", c2 = dir / "cifar_b.bin";
  write_cifar_bin(cifar, c1.string(), CifarVariant::kCifar10);
  const LabeledDataset cifar_parsed = read_cifar_bin({c1.string()}, CifarVariant::kCifar10);
  write_cifar_bin(cifar_parsed, c2.string(), CifarVariant::kCifar10);
  pass = pass && slurp(c1) == slurp(c2) && cifar_parsed.labels == cifar.labels;
  detail += "cifar round-trip ";
  detail += (slurp(c1) == slurp(c2)) ? "ok; " : "broken; ";

  // typed errors: wrong magic, truncated record, count mismatch
  int typed = 0;
  {
    std::ofstream bad(dir / "bad_magic", std::ios::binary);
    const unsigned char header[] = {0x00, 0x00, 0x08, 0x01, 0, 0, 0, 1, 5};
    bad.write(reinterpret_cast<const char*>(header), sizeof header);
  }
  try {
    read_idx_pair((dir / "bad_magic").string(), lbl1.string());
  } catch (const FormatError&) {
    ++typed;
  }
  {
    std::ofstream bad(dir / "truncated.bin", std::ios::binary);
    std::vector<char> half(1600, 3);
    bad.write(half.data(), std::streamsize(half.size()));
  }
  try {
    read_cifar_bin({(dir / "truncated.bin").string()}, CifarVariant::kCifar10);
  } catch (const FormatError&) {
    ++typed;
  }
  {
    LabeledDataset two = make_synthetic_digits(2, kSeed);
    write_idx_pair(two, (dir / "c-images-idx3-ubyte").string(),
                   (dir / "c-labels-idx1-ubyte").string());
  }
  try {
    read_idx_pair(img1.string(), (dir / "c-labels-idx1-ubyte").string());
  } catch (const ConsistencyError&) {
    ++typed;
  }
  pass = pass && typed == 3;
  detail += "typed errors " + std::to_string(typed) + "/3";

  return report(8, "format fidelity and typed parse errors", pass, detail, timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.workdir = fs::temp_directory_path() / "adabn_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli")
      ctx.cli_path = argv[i + 1];
    else if (flag == "--workdir")
      ctx.workdir = argv[i + 1];
  }
  if (ctx.cli_path.empty()) {
    std::fprintf(stderr, "usage: adabn_acceptance --cli <adabn binary> [--workdir <dir>]\n");
    return 2;
  }
  fs::create_directories(ctx.workdir);
  fs::current_path(ctx.workdir);

  if (const char* env = std::getenv("ADABN_DATA_DIR")) {
    ctx.mnist_dir = std::string(env) + "/mnist";
    ctx.have_real_mnist = fs::exists(ctx.mnist_dir + "/train-images-idx3-ubyte") &&
                          fs::exists(ctx.mnist_dir + "/train-labels-idx1-ubyte");
  }
  std::printf("dataset source: %s\n",
              ctx.have_real_mnist ? ctx.mnist_dir.c_str() : "procedural digits via IDX files");

  int failures = 0;
  failures += !criterion1_gradient_checks(ctx);
  failures += !criterion2_bn_property(ctx);
  failures += !criterion3_gate_oracle(ctx);
  failures += !criterion4_scenario_equivalence(ctx);
  failures += !criterion5_batch_size_trend(ctx);
  failures += !criterion6_desk_scale(ctx);
  failures += !criterion7_determinism(ctx);
  failures += !criterion8_format_fidelity(ctx);

  std::printf("%d/8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}

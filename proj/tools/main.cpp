// adabn command line: train / crossval / compare / gatereport / gradcheck.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adabn/checks.hpp"
#include "adabn/config.hpp"
#include "adabn/errors.hpp"
#include "adabn/report.hpp"
#include "adabn/trainer.hpp"

namespace {

using adabn::TrainConfig;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
};

TrainConfig resolve(const CommonArgs& args) {
  std::vector<std::pair<std::string, std::string>> file_kvs;
  if (!args.config_path.empty()) file_kvs = adabn::load_config_file(args.config_path);
  std::vector<std::pair<std::string, std::string>> flag_kvs;
  for (const std::string& item : args.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw adabn::UsageError("override '" + item + "' is not of the form key=value");
    flag_kvs.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  TrainConfig config = adabn::resolve_config(file_kvs, flag_kvs);
  config.validate();
  return config;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "plain-text key = value configuration file");
  sub->add_option("--out", args.out_dir, "output directory for run.json / csv / svg artifacts");
  sub->add_option("overrides", args.overrides, "key=value settings overriding the config file");
}

void finish_run_json(nlohmann::ordered_json& j, const std::string& out_dir, double wall_seconds) {
  j["timing"]["wall_seconds"] = wall_seconds;
  adabn::write_text_file(out_dir + "/run.json", j.dump(2) + "\n");
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw adabn::IoError("cannot create output directory " + out_dir);
}

int cmd_train(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig config = resolve(args);
  ensure_out_dir(args.out_dir);
  const adabn::LabeledDataset data = adabn::load_dataset(config);
  const auto [train_idx, val_idx] = adabn::holdout_split(config, data.count());

  const adabn::RunMetrics metrics = adabn::run_training(config, data, train_idx, val_idx);
  adabn::write_text_file(args.out_dir + "/metrics.csv", adabn::metrics_csv(metrics));
  if (config.scenario == adabn::Scenario::kAdaptive) {
    const auto epochs = metrics.gate_log.per_epoch();
    adabn::write_text_file(args.out_dir + "/gate.csv", adabn::gate_csv(epochs));
    const adabn::GateStats stats = adabn::gate_stats(metrics.gate_log);
    adabn::write_text_file(args.out_dir + "/gate_fractions.svg",
                           adabn::svg_gate_chart({{config.batch_size, stats.pooled_fraction}}));
  }

  nlohmann::ordered_json j = adabn::run_json_header("train", config);
  j["results"] = adabn::metrics_to_json(metrics);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish_run_json(j, args.out_dir, wall);
  std::printf("final_accuracy=%s\n", adabn::format_fixed(metrics.final_accuracy).c_str());
  return 0;
}

int cmd_crossval(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig config = resolve(args);
  ensure_out_dir(args.out_dir);
  const adabn::LabeledDataset data = adabn::load_dataset(config);

  const adabn::CrossvalSummary summary = adabn::run_crossval(config, data);
  adabn::write_text_file(args.out_dir + "/metrics.csv", adabn::metrics_csv(summary));
  if (config.scenario == adabn::Scenario::kAdaptive) {
    const auto epochs = adabn::aggregate_gate_epochs(summary.folds);
    adabn::write_text_file(args.out_dir + "/gate.csv", adabn::gate_csv(epochs));
    long total = 0, gated = 0;
    for (const auto& e : epochs) {
      total += e.batches_total;
      gated += e.batches_gated;
    }
    const double pooled = total ? static_cast<double>(gated) / static_cast<double>(total) : 0.0;
    adabn::write_text_file(args.out_dir + "/gate_fractions.svg",
                           adabn::svg_gate_chart({{config.batch_size, pooled}}));
  }

  nlohmann::ordered_json j = adabn::run_json_header("crossval", config);
  j["results"] = adabn::summary_to_json(summary);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish_run_json(j, args.out_dir, wall);
  std::printf("mean_accuracy=%s std=%s\n", adabn::format_fixed(summary.mean_accuracy).c_str(),
              adabn::format_fixed(summary.std_accuracy).c_str());
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig base = resolve(args);
  ensure_out_dir(args.out_dir);
  const adabn::LabeledDataset data = adabn::load_dataset(base);

  std::vector<adabn::CompareRow> rows;
  std::vector<adabn::GateBar> bars;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (int batch_size : base.batch_sizes) {
    adabn::CompareRow row;
    row.batch_size = batch_size;
    for (adabn::Scenario scenario :
         {adabn::Scenario::kBn, adabn::Scenario::kNoBn, adabn::Scenario::kAdaptive}) {
      TrainConfig config = base;
      config.batch_size = batch_size;
      config.scenario = scenario;
      const adabn::CrossvalSummary summary = adabn::run_crossval(config, data);
      const double mean_pct = summary.mean_accuracy * 100.0;
      const double std_pct = summary.std_accuracy * 100.0;
      switch (scenario) {
        case adabn::Scenario::kBn: row.bn_mean = mean_pct; row.bn_std = std_pct; break;
        case adabn::Scenario::kNoBn: row.no_bn_mean = mean_pct; row.no_bn_std = std_pct; break;
        case adabn::Scenario::kAdaptive:
          row.adaptive_mean = mean_pct;
          row.adaptive_std = std_pct;
          break;
      }
      nlohmann::ordered_json cell;
      cell["batch_size"] = batch_size;
      cell["scenario"] = adabn::to_string(scenario);
      cell["summary"] = adabn::summary_to_json(summary);
      cells.push_back(std::move(cell));
      if (scenario == adabn::Scenario::kAdaptive) {
        const auto epochs = adabn::aggregate_gate_epochs(summary.folds);
        long total = 0, gated = 0;
        for (const auto& e : epochs) {
          total += e.batches_total;
          gated += e.batches_gated;
        }
        bars.push_back(
            {batch_size, total ? static_cast<double>(gated) / static_cast<double>(total) : 0.0});
      }
    }
    rows.push_back(row);
  }

  adabn::write_text_file(args.out_dir + "/compare.csv", adabn::compare_csv(rows));
  adabn::write_text_file(args.out_dir + "/gate_fractions.svg", adabn::svg_gate_chart(bars));

  nlohmann::ordered_json j = adabn::run_json_header("compare", base);
  j["results"] = std::move(cells);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish_run_json(j, args.out_dir, wall);
  std::printf("compare: %zu batch sizes x 3 scenarios written to %s\n", rows.size(),
              args.out_dir.c_str());
  return 0;
}

// Calibrates on the configured dataset and reports gate fractions per batch
// size over seeded replications; no training involved.
int cmd_gatereport(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig config = resolve(args);
  ensure_out_dir(args.out_dir);
  const adabn::LabeledDataset data = adabn::load_dataset(config);
  const int n = config.subset_train > 0 ? std::min(config.subset_train, data.count())
                                        : data.count();

  std::vector<int> calibration_order(static_cast<std::size_t>(n));
  std::iota(calibration_order.begin(), calibration_order.end(), 0);
  const adabn::ClassAverageTable table = adabn::calibrate(data, calibration_order);
  const adabn::ThresholdTable thresholds =
      adabn::finalize_thresholds(table, config.upr_p, config.lor_p);
  std::vector<double> averages(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    averages[static_cast<std::size_t>(i)] = adabn::instance_average(data.image(i));

  std::string csv = "batch_size,replication,batches_total,batches_gated,fraction\n";
  std::vector<adabn::GateBar> bars;
  nlohmann::ordered_json result = nlohmann::ordered_json::array();
  for (int batch_size : config.batch_sizes) {
    long pooled_total = 0, pooled_gated = 0;
    for (int rep = 0; rep < config.replications; ++rep) {
      const adabn::BatchPlan plan = adabn::make_batches(
          n, batch_size, adabn::rng::stream_key(config.seed, adabn::rng::kTest, rep));
      long gated = 0;
      for (const std::vector<int>& batch : plan.batches) {
        std::vector<double> batch_avg;
        std::vector<int> batch_lbl;
        for (int id : batch) {
          batch_avg.push_back(averages[static_cast<std::size_t>(id)]);
          batch_lbl.push_back(data.labels[static_cast<std::size_t>(id)]);
        }
        if (adabn::gate_averages(batch_avg, batch_lbl, thresholds).decision) ++gated;
      }
      const long total = static_cast<long>(plan.batches.size());
      pooled_total += total;
      pooled_gated += gated;
      csv += std::to_string(batch_size) + "," + std::to_string(rep) + "," +
             std::to_string(total) + "," + std::to_string(gated) + "," +
             adabn::format_fixed(static_cast<double>(gated) / static_cast<double>(total)) + "\n";
    }
    const double pooled =
        static_cast<double>(pooled_gated) / static_cast<double>(pooled_total);
    bars.push_back({batch_size, pooled});
    result.push_back({{"batch_size", batch_size},
                      {"pooled_fraction", pooled},
                      {"batches_total", pooled_total},
                      {"batches_gated", pooled_gated}});
  }

  adabn::write_text_file(args.out_dir + "/gate_sizes.csv", csv);
  adabn::write_text_file(args.out_dir + "/gate_fractions.svg", adabn::svg_gate_chart(bars));

  nlohmann::ordered_json j = adabn::run_json_header("gatereport", config);
  j["results"] = std::move(result);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish_run_json(j, args.out_dir, wall);
  for (const adabn::GateBar& bar : bars)
    std::printf("batch_size=%d gated_fraction=%s\n", bar.batch_size,
                adabn::format_fixed(bar.gated_fraction).c_str());
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig config = resolve(args);
  ensure_out_dir(args.out_dir);

  const std::vector<adabn::GradCheckResult> results =
      adabn::run_gradient_checks(config.seed, 10);
  bool all_pass = true;
  for (const adabn::GradCheckResult& r : results) {
    all_pass = all_pass && r.pass();
    std::printf("%-24s max_rel_error=%.3e tolerance=%.0e %s\n", r.layer.c_str(),
                r.max_rel_error, r.tolerance, r.pass() ? "PASS" : "FAIL");
  }

  nlohmann::ordered_json j = adabn::run_json_header("gradcheck", config);
  j["results"] = adabn::gradcheck_to_json(results);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish_run_json(j, args.out_dir, wall);
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN training engine with a per-batch adaptive normalization gate"};
  app.require_subcommand(1);

  CommonArgs train_args, crossval_args, compare_args, gate_args, grad_args;
  CLI::App* train = app.add_subcommand("train", "single training run on a holdout split");
  add_common(train, train_args);
  CLI::App* crossval = app.add_subcommand("crossval", "K-fold cross-validated training");
  add_common(crossval, crossval_args);
  CLI::App* compare =
      app.add_subcommand("compare", "all three scenarios over the configured batch sizes");
  add_common(compare, compare_args);
  CLI::App* gatereport =
      app.add_subcommand("gatereport", "calibrate and report gate fractions per batch size");
  add_common(gatereport, gate_args);
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference checks of every layer backward");
  add_common(gradcheck, grad_args);

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(train_args);
    if (crossval->parsed()) return cmd_crossval(crossval_args);
    if (compare->parsed()) return cmd_compare(compare_args);
    if (gatereport->parsed()) return cmd_gatereport(gate_args);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const adabn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "adabn/checks.hpp"
#include "adabn/config.hpp"
#include "adabn/gate.hpp"
#include "adabn/trainer.hpp"

namespace adabn {

// Fixed-width numeric formatting used by every CSV artifact.
std::string format_fixed(double value, int decimals = 6);

void write_text_file(const std::string& path, const std::string& content);

// Per-epoch rows of a single run: epoch,mean_loss,val_accuracy,bn_fraction.
std::string metrics_csv(const RunMetrics& metrics);

// Per-fold per-epoch rows: fold,epoch,mean_loss,val_accuracy,bn_fraction.
std::string metrics_csv(const CrossvalSummary& summary);

// epoch,batches_total,batches_gated,fraction.
std::string gate_csv(const std::vector<EpochGateStat>& epochs);

// Per-epoch gate counts summed across folds.
std::vector<EpochGateStat> aggregate_gate_epochs(const std::vector<RunMetrics>& folds);

struct CompareRow {
  int batch_size = 0;
  // percent accuracy (mean, population std) per scenario
  double bn_mean = 0, bn_std = 0;
  double no_bn_mean = 0, no_bn_std = 0;
  double adaptive_mean = 0, adaptive_std = 0;
};

// batch_size,bn,bn_std,no_bn,no_bn_std,adaptive,adaptive_std with the
// deviation cells rendered "(+/-x.xxxxxx)".
std::string compare_csv(const std::vector<CompareRow>& rows);

struct GateBar {
  int batch_size = 0;
  double gated_fraction = 0.0;
};

// Static bar chart: one gated/passed bar pair per batch size.
std::string svg_gate_chart(const std::vector<GateBar>& bars);

// Common run.json skeleton: artifact id, subcommand, resolved config and a
// timing block (the only non-reproducible part of any report).
nlohmann::ordered_json run_json_header(const std::string& subcommand, const TrainConfig& config);

nlohmann::ordered_json metrics_to_json(const RunMetrics& metrics);
nlohmann::ordered_json summary_to_json(const CrossvalSummary& summary);
nlohmann::ordered_json gradcheck_to_json(const std::vector<GradCheckResult>& results);

}  // namespace adabn

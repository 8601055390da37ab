#include "adabn/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>

#include "adabn/errors.hpp"
#include "adabn/version.hpp"

namespace adabn {

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

namespace {

void append_epoch_row(std::string& csv, const EpochMetrics& e) {
  csv += std::to_string(e.epoch) + "," + format_fixed(e.mean_loss) + "," +
         format_fixed(e.val_accuracy) + "," + format_fixed(e.bn_fraction) + "\n";
}

}  // namespace

std::string metrics_csv(const RunMetrics& metrics) {
  std::string csv = "epoch,mean_loss,val_accuracy,bn_fraction\n";
  for (const EpochMetrics& e : metrics.epochs) append_epoch_row(csv, e);
  return csv;
}

std::string metrics_csv(const CrossvalSummary& summary) {
  std::string csv = "fold,epoch,mean_loss,val_accuracy,bn_fraction\n";
  for (std::size_t f = 0; f < summary.folds.size(); ++f)
    for (const EpochMetrics& e : summary.folds[f].epochs) {
      csv += std::to_string(f) + ",";
      append_epoch_row(csv, e);
    }
  return csv;
}

std::string gate_csv(const std::vector<EpochGateStat>& epochs) {
  std::string csv = "epoch,batches_total,batches_gated,fraction\n";
  for (const EpochGateStat& e : epochs)
    csv += std::to_string(e.epoch) + "," + std::to_string(e.batches_total) + "," +
           std::to_string(e.batches_gated) + "," + format_fixed(e.fraction()) + "\n";
  return csv;
}

std::vector<EpochGateStat> aggregate_gate_epochs(const std::vector<RunMetrics>& folds) {
  std::map<int, EpochGateStat> by_epoch;
  for (const RunMetrics& fold : folds)
    for (const EpochGateStat& e : fold.gate_log.per_epoch()) {
      EpochGateStat& agg = by_epoch[e.epoch];
      agg.epoch = e.epoch;
      agg.batches_total += e.batches_total;
      agg.batches_gated += e.batches_gated;
    }
  std::vector<EpochGateStat> out;
  for (const auto& [epoch, stat] : by_epoch) out.push_back(stat);
  return out;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string csv = "batch_size,bn,bn_std,no_bn,no_bn_std,adaptive,adaptive_std\n";
  const auto pm = [](double std_pct) { return "(+/-" + format_fixed(std_pct) + ")"; };
  for (const CompareRow& r : rows)
    csv += std::to_string(r.batch_size) + "," + format_fixed(r.bn_mean) + "," + pm(r.bn_std) +
           "," + format_fixed(r.no_bn_mean) + "," + pm(r.no_bn_std) + "," +
           format_fixed(r.adaptive_mean) + "," + pm(r.adaptive_std) + "\n";
  return csv;
}

std::string svg_gate_chart(const std::vector<GateBar>& bars) {
  const int bar_w = 36, pair_gap = 6, group_gap = 34;
  const int plot_h = 260, left = 64, top = 48, bottom = 56;
  const int group_w = 2 * bar_w + pair_gap;
  const int width = left + 24 + static_cast<int>(bars.size()) * (group_w + group_gap);
  const int height = top + plot_h + bottom;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\">\n";
  svg += "  <style>.bar.gated{fill:#c0504d;}.bar.passed{fill:#4f81bd;}"
         "text{font-size:12px;}</style>\n";
  svg += "  <text x=\"" + std::to_string(width / 2) +
         "\" y=\"20\" text-anchor=\"middle\">Batches normalized vs passed through, by batch "
         "size (%)</text>\n";

  // axes and horizontal guides every 25%
  svg += "  <line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" +
         std::to_string(left) + "\" y2=\"" + std::to_string(top + plot_h) +
         "\" stroke=\"#333\"/>\n";
  svg += "  <line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top + plot_h) +
         "\" x2=\"" + std::to_string(width - 12) + "\" y2=\"" + std::to_string(top + plot_h) +
         "\" stroke=\"#333\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    const int y = top + plot_h - tick * plot_h / 100;
    svg += "  <text x=\"" + std::to_string(left - 8) + "\" y=\"" + std::to_string(y + 4) +
           "\" text-anchor=\"end\">" + std::to_string(tick) + "</text>\n";
  }

  int x = left + 18;
  for (const GateBar& bar : bars) {
    const double gated_pct = bar.gated_fraction * 100.0;
    const double passed_pct = 100.0 - gated_pct;
    const int gated_h = static_cast<int>(gated_pct * plot_h / 100.0 + 0.5);
    const int passed_h = plot_h - gated_h;

    svg += "  <rect class=\"bar gated\" x=\"" + std::to_string(x) + "\" y=\"" +
           std::to_string(top + plot_h - gated_h) + "\" width=\"" + std::to_string(bar_w) +
           "\" height=\"" + std::to_string(gated_h) + "\"/>\n";
    svg += "  <text x=\"" + std::to_string(x + bar_w / 2) + "\" y=\"" +
           std::to_string(top + plot_h - gated_h - 4) + "\" text-anchor=\"middle\">" +
           format_fixed(gated_pct, 2) + "</text>\n";

    const int x2 = x + bar_w + pair_gap;
    svg += "  <rect class=\"bar passed\" x=\"" + std::to_string(x2) + "\" y=\"" +
           std::to_string(top + plot_h - passed_h) + "\" width=\"" + std::to_string(bar_w) +
           "\" height=\"" + std::to_string(passed_h) + "\"/>\n";
    svg += "  <text x=\"" + std::to_string(x2 + bar_w / 2) + "\" y=\"" +
           std::to_string(top + plot_h - passed_h - 4) + "\" text-anchor=\"middle\">" +
           format_fixed(passed_pct, 2) + "</text>\n";

    svg += "  <text x=\"" + std::to_string(x + group_w / 2) + "\" y=\"" +
           std::to_string(top + plot_h + 18) + "\" text-anchor=\"middle\">batch " +
           std::to_string(bar.batch_size) + "</text>\n";
    x += group_w + group_gap;
  }

  svg += "  <text x=\"" + std::to_string(left + 18) + "\" y=\"" +
         std::to_string(height - 14) + "\">normalized (left bar) / passed through (right bar)" +
         "</text>\n";
  svg += "</svg>\n";
  return svg;
}

nlohmann::ordered_json run_json_header(const std::string& subcommand, const TrainConfig& config) {
  nlohmann::ordered_json j;
  j["artifact"] = {{"name", kArtifactName}, {"version", kArtifactVersion}};
  j["subcommand"] = subcommand;
  j["config"] = config_to_json(config);

  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  j["timing"] = {{"timestamp", stamp}, {"wall_seconds", 0.0}};
  return j;
}

nlohmann::ordered_json metrics_to_json(const RunMetrics& metrics) {
  nlohmann::ordered_json j;
  j["final_accuracy"] = metrics.final_accuracy;
  j["bn_batches_applied"] = metrics.bn_batches_applied;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const EpochMetrics& e : metrics.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"bn_fraction", e.bn_fraction}});
  j["epochs"] = std::move(epochs);
  nlohmann::ordered_json chain = nlohmann::ordered_json::array();
  for (const ShapeStage& s : metrics.shape_chain) {
    nlohmann::ordered_json stage;
    stage["layer"] = s.layer;
    stage["output"] = s.output;
    chain.push_back(std::move(stage));
  }
  j["shape_chain"] = std::move(chain);
  if (metrics.thresholds) {
    nlohmann::ordered_json t;
    t["upr_p"] = metrics.thresholds->upr_p;
    t["lor_p"] = metrics.thresholds->lor_p;
    t["mean"] = metrics.thresholds->mean;
    t["a_min"] = metrics.thresholds->a_min;
    t["a_max"] = metrics.thresholds->a_max;
    j["thresholds"] = std::move(t);
  }
  return j;
}

nlohmann::ordered_json summary_to_json(const CrossvalSummary& summary) {
  nlohmann::ordered_json j;
  j["fold_accuracies"] = summary.fold_accuracies;
  j["mean_accuracy"] = summary.mean_accuracy;
  j["std_accuracy"] = summary.std_accuracy;
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const RunMetrics& fold : summary.folds) folds.push_back(metrics_to_json(fold));
  j["folds"] = std::move(folds);
  return j;
}

nlohmann::ordered_json gradcheck_to_json(const std::vector<GradCheckResult>& results) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const GradCheckResult& r : results)
    j.push_back({{"layer", r.layer},
                 {"max_rel_error", r.max_rel_error},
                 {"tolerance", r.tolerance},
                 {"points", r.points},
                 {"pass", r.pass()}});
  return j;
}

}  // namespace adabn

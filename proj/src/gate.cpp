#include "adabn/gate.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "adabn/errors.hpp"

namespace adabn {

std::size_t ClassAverageTable::check(int class_id) const {
  if (class_id < 0 || class_id >= class_count())
    throw DataError("class id " + std::to_string(class_id) + " outside [0," +
                    std::to_string(class_count()) + ")");
  return static_cast<std::size_t>(class_id);
}

void ClassAverageTable::add(int class_id, double average) {
  const std::size_t c = check(class_id);
  sums_[c] += average;
  counts_[c] += 1;
}

double ClassAverageTable::mean(int class_id) const {
  const std::size_t c = check(class_id);
  if (counts_[c] == 0)
    throw CalibrationError("class " + std::to_string(class_id) +
                           " never appeared during calibration");
  return sums_[c] / static_cast<double>(counts_[c]);
}

ThresholdTable finalize_thresholds(const ClassAverageTable& table, double upr_p, double lor_p) {
  if (upr_p < 0.0)
    throw ParameterError("upper threshold width must be non-negative, got " +
                         std::to_string(upr_p));
  if (lor_p < 0.0 || lor_p > 1.0)
    throw ParameterError("lower threshold width must lie in [0,1], got " + std::to_string(lor_p));

  ThresholdTable t;
  t.upr_p = upr_p;
  t.lor_p = lor_p;
  const int classes = table.class_count();
  t.mean.resize(static_cast<std::size_t>(classes));
  t.a_min.resize(static_cast<std::size_t>(classes));
  t.a_max.resize(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    const double m = table.mean(c);  // throws CalibrationError for absent classes
    const std::size_t sc = static_cast<std::size_t>(c);
    t.mean[sc] = m;
    t.a_max[sc] = m + m * upr_p;
    t.a_min[sc] = m - m * lor_p;
  }
  return t;
}

GateRecord gate_averages(std::span<const double> averages, std::span<const int> labels,
                         const ThresholdTable& thresholds) {
  if (averages.size() != labels.size())
    throw DataError("gate: " + std::to_string(averages.size()) + " averages for " +
                    std::to_string(labels.size()) + " labels");
  GateRecord record;
  for (std::size_t i = 0; i < averages.size(); ++i) {
    const int cls = labels[i];
    if (cls < 0 || cls >= thresholds.class_count())
      throw DataError("gate: unknown class id " + std::to_string(cls));
    const std::size_t sc = static_cast<std::size_t>(cls);
    const double a = averages[i];
    if (a > thresholds.a_max[sc] || a < thresholds.a_min[sc]) {
      record.decision = true;
      record.trigger_instance = static_cast<int>(i);
      record.trigger_class = cls;
      record.trigger_average = a;
      return record;
    }
  }
  return record;
}

void GateLog::add(const GateRecord& record) { records_.push_back(record); }

std::vector<EpochGateStat> GateLog::per_epoch() const {
  std::map<int, EpochGateStat> by_epoch;
  for (const GateRecord& r : records_) {
    EpochGateStat& s = by_epoch[r.epoch];
    s.epoch = r.epoch;
    s.batches_total += 1;
    if (r.decision) s.batches_gated += 1;
  }
  std::vector<EpochGateStat> out;
  out.reserve(by_epoch.size());
  for (const auto& [epoch, stat] : by_epoch) out.push_back(stat);
  return out;
}

GateStats gate_stats(const GateLog& log) {
  if (log.empty()) throw DataError("gate_stats: empty log");
  GateStats stats;
  stats.epochs = log.per_epoch();
  for (const EpochGateStat& e : stats.epochs) {
    stats.batches_total += e.batches_total;
    stats.batches_gated += e.batches_gated;
  }
  stats.pooled_fraction =
      static_cast<double>(stats.batches_gated) / static_cast<double>(stats.batches_total);
  return stats;
}

}  // namespace adabn

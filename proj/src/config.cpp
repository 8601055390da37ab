#include "adabn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "adabn/errors.hpp"

namespace adabn {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kBn: return "bn";
    case Scenario::kNoBn: return "no_bn";
    case Scenario::kAdaptive: return "adaptive";
  }
  return "adaptive";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "bn") return Scenario::kBn;
  if (s == "no_bn") return Scenario::kNoBn;
  if (s == "adaptive") return Scenario::kAdaptive;
  throw ConfigError("scenario: expected bn, no_bn or adaptive, got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const std::string v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  if (used != v.size()) throw ConfigError(key + ": expected a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty entry in '" + value + "'");
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct KeySpec {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<nlohmann::ordered_json(const TrainConfig&)> get;
};

const std::vector<std::pair<std::string, KeySpec>>& key_specs() {
  static const std::vector<std::pair<std::string, KeySpec>> specs = {
      {"scenario",
       {[](TrainConfig& c, const std::string&, const std::string& v) {
          c.scenario = scenario_from_string(trim(v));
        },
        [](const TrainConfig& c) { return to_string(c.scenario); }}},
      {"dataset",
       {[](TrainConfig& c, const std::string&, const std::string& v) { c.dataset = trim(v); },
        [](const TrainConfig& c) { return c.dataset; }}},
      {"data_dir",
       {[](TrainConfig& c, const std::string&, const std::string& v) { c.data_dir = trim(v); },
        [](const TrainConfig& c) { return c.data_dir; }}},
      {"batch_size",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.batch_size = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.batch_size; }}},
      {"batch_sizes",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.batch_sizes = parse_int_list(k, v);
        },
        [](const TrainConfig& c) { return join_ints(c.batch_sizes); }}},
      {"epochs",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.epochs = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.epochs; }}},
      {"learning_rate",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.learning_rate = parse_real(k, v);
        },
        [](const TrainConfig& c) { return c.learning_rate; }}},
      {"sgd_momentum",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.sgd_momentum = parse_real(k, v);
        },
        [](const TrainConfig& c) { return c.sgd_momentum; }}},
      {"seed",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.seed = static_cast<std::uint64_t>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.seed; }}},
      {"upr_p",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.upr_p = parse_real(k, v);
        },
        [](const TrainConfig& c) { return c.upr_p; }}},
      {"lor_p",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.lor_p = parse_real(k, v);
        },
        [](const TrainConfig& c) { return c.lor_p; }}},
      {"conv_filters",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          const auto list = parse_int_list(k, v);
          if (list.size() != 3) throw ConfigError(k + ": expected exactly three filter counts");
          std::copy(list.begin(), list.end(), c.conv_filters.begin());
        },
        [](const TrainConfig& c) {
          return join_ints({c.conv_filters[0], c.conv_filters[1], c.conv_filters[2]});
        }}},
      {"dropout_rate",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.dropout_rate = parse_real(k, v);
        },
        [](const TrainConfig& c) { return c.dropout_rate; }}},
      {"folds",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.folds = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.folds; }}},
      {"subset_train",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.subset_train = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.subset_train; }}},
      {"subset_eval",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.subset_eval = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.subset_eval; }}},
      {"synthetic_size",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.synthetic_size = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.synthetic_size; }}},
      {"gate_force_on",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.gate_force_on = parse_bool(k, v);
        },
        [](const TrainConfig& c) { return c.gate_force_on; }}},
      {"replications",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          c.replications = static_cast<int>(parse_int(k, v));
        },
        [](const TrainConfig& c) { return c.replications; }}},
  };
  return specs;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, spec] : key_specs()) out.push_back(key);
    return out;
  }();
  return keys;
}

void apply_kv(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, spec] : key_specs()) {
    if (name == key) {
      spec.set(config, key, value);
      return;
    }
  }
  std::string known;
  for (const std::string& k : config_keys()) known += (known.empty() ? "" : ", ") + k;
  throw UsageError("unknown config key '" + key + "'; valid keys: " + known);
}

std::vector<std::pair<std::string, std::string>> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> kvs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    kvs.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return kvs;
}

TrainConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_kvs,
                           const std::vector<std::pair<std::string, std::string>>& flag_kvs) {
  TrainConfig config;
  for (const auto& [k, v] : file_kvs) apply_kv(config, k, v);
  for (const auto& [k, v] : flag_kvs) apply_kv(config, k, v);
  return config;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (scenario == Scenario::kAdaptive && epochs < 2)
    throw ConfigError("adaptive scenario needs epochs >= 2 (epoch 1 is calibration only)");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (sgd_momentum < 0 || sgd_momentum >= 1) throw ConfigError("sgd_momentum must lie in [0,1)");
  if (upr_p < 0) throw ConfigError("upr_p must be non-negative");
  if (lor_p < 0 || lor_p > 1) throw ConfigError("lor_p must lie in [0,1]");
  if (dropout_rate < 0 || dropout_rate >= 1) throw ConfigError("dropout_rate must lie in [0,1)");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (subset_train < 0 || subset_eval < 0) throw ConfigError("subset sizes must be non-negative");
  if (synthetic_size < 10) throw ConfigError("synthetic_size must cover all 10 classes");
  if (replications < 1) throw ConfigError("replications must be positive");
  for (int b : batch_sizes)
    if (b < 1) throw ConfigError("batch_sizes entries must be positive");
  for (int f : conv_filters)
    if (f < 1) throw ConfigError("conv_filters entries must be positive");
}

nlohmann::ordered_json config_to_json(const TrainConfig& config) {
  nlohmann::ordered_json j;
  for (const auto& [key, spec] : key_specs()) j[key] = spec.get(config);
  return j;
}

TrainConfig config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig config;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string())
      text = value.get<std::string>();
    else if (value.is_boolean())
      text = value.get<bool>() ? "true" : "false";
    else
      text = value.dump();
    apply_kv(config, key, text);
  }
  return config;
}

}  // namespace adabn

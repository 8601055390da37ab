#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace adabn {

enum class Scenario { kBn, kNoBn, kAdaptive };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// Resolved experiment configuration. Values layer as
// defaults < config file < command-line overrides.
struct TrainConfig {
  Scenario scenario = Scenario::kAdaptive;
  std::string dataset = "synthetic";
  std::string data_dir = "data";
  int batch_size = 4;
  std::vector<int> batch_sizes = {4, 8, 16, 32};  // compare / gatereport sweeps
  int epochs = 10;
  double learning_rate = 0.01;
  double sgd_momentum = 0.9;
  std::uint64_t seed = 1;
  double upr_p = 0.10;
  double lor_p = 0.10;
  std::array<int, 3> conv_filters = {32, 64, 64};
  double dropout_rate = 0.2;
  int folds = 3;
  int subset_train = 6000;     // training instances per fold (0 = all available)
  int subset_eval = 1000;      // validation instances per fold (0 = full slice)
  int synthetic_size = 9000;   // generated size when dataset == "synthetic"
  bool gate_force_on = false;  // adaptive scenario: normalize every batch from epoch 2
  int replications = 20;       // gatereport sweep count

  bool operator==(const TrainConfig&) const = default;

  // Throws ConfigError when the combination is invalid.
  void validate() const;
};

// Known keys in declaration order (drives usage text and the JSON echo).
const std::vector<std::string>& config_keys();

// Applies one key=value assignment. Unknown key -> UsageError listing the
// valid keys; unparsable value -> ConfigError naming the key.
void apply_kv(TrainConfig& config, const std::string& key, const std::string& value);

// Plain-text `key = value` lines; '#' starts a comment; blank lines ignored.
std::vector<std::pair<std::string, std::string>> load_config_file(const std::string& path);

// Layered resolution over the built-in defaults.
TrainConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_kvs,
                           const std::vector<std::pair<std::string, std::string>>& flag_kvs);

// Full echo of a resolved config; parsing it back yields an equal config.
nlohmann::ordered_json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::ordered_json& j);

}  // namespace adabn

#include "odemri/run_config.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "odemri/errors.hpp"

namespace odemri {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown config key '" +
                        (section.empty() ? item.key() : section + "." + item.key()) + "'");
  }
}

template <typename T>
void read_field(const json& j, const std::string& section, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + section + "." + key + "' has the wrong type");
  }
}

std::string read_string(const json& j, const std::string& section, const char* key,
                        const std::string& fallback) {
  std::string value = fallback;
  read_field(j, section, key, value);
  return value;
}

void parse_data(const json& j, DataGenConfig& data) {
  check_keys(j, "data",
             {"train_count", "test_count", "height", "width", "coils", "accel_row", "accel_col",
              "acs_size", "noise_sigma", "min_ellipses", "max_ellipses", "min_intensity",
              "max_intensity", "phase_order"});
  read_field(j, "data", "train_count", data.train_count);
  read_field(j, "data", "test_count", data.test_count);
  read_field(j, "data", "height", data.height);
  read_field(j, "data", "width", data.width);
  read_field(j, "data", "coils", data.coils);
  read_field(j, "data", "accel_row", data.accel_row);
  read_field(j, "data", "accel_col", data.accel_col);
  read_field(j, "data", "acs_size", data.acs_size);
  read_field(j, "data", "noise_sigma", data.noise_sigma);
  read_field(j, "data", "min_ellipses", data.min_ellipses);
  read_field(j, "data", "max_ellipses", data.max_ellipses);
  read_field(j, "data", "min_intensity", data.min_intensity);
  read_field(j, "data", "max_intensity", data.max_intensity);
  read_field(j, "data", "phase_order", data.phase_order);
}

void parse_network(const json& j, NetworkConfig& net) {
  check_keys(j, "network",
             {"num_blocks", "feature_channels", "augment_channels", "steps", "t0", "t1",
              "activation", "mode"});
  read_field(j, "network", "num_blocks", net.num_blocks);
  read_field(j, "network", "feature_channels", net.feature_channels);
  read_field(j, "network", "augment_channels", net.augment_channels);
  read_field(j, "network", "steps", net.integrator.steps);
  read_field(j, "network", "t0", net.integrator.t0);
  read_field(j, "network", "t1", net.integrator.t1);
  net.activation = activation_from_string(
      read_string(j, "network", "activation", to_string(net.activation)));
  net.mode = network_mode_from_string(read_string(j, "network", "mode", to_string(net.mode)));
}

void parse_train(const json& j, TrainConfig& train) {
  check_keys(j, "train", {"epochs", "batch_size", "learning_rate", "optimizer", "weight_decay"});
  read_field(j, "train", "epochs", train.epochs);
  read_field(j, "train", "batch_size", train.batch_size);
  read_field(j, "train", "learning_rate", train.learning_rate);
  train.optimizer =
      optimizer_from_string(read_string(j, "train", "optimizer", to_string(train.optimizer)));
  read_field(j, "train", "weight_decay", train.weight_decay);
}

void parse_paths(const json& j, RunPaths& paths) {
  check_keys(j, "paths", {"data_dir", "checkpoint", "log_csv", "out_dir"});
  read_field(j, "paths", "data_dir", paths.data_dir);
  read_field(j, "paths", "checkpoint", paths.checkpoint);
  read_field(j, "paths", "log_csv", paths.log_csv);
  read_field(j, "paths", "out_dir", paths.out_dir);
}

}  // namespace

void RunConfig::seed_all(std::uint64_t s) {
  seed = s;
  data.seed = s;
  train.seed = s;
}

void RunConfig::validate() const {
  data.validate();
  train.validate();
}

RunConfig parse_run_config_text(const std::string& text, const std::string& context) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("config " + context + " is not a JSON object");
  check_keys(j, "", {"data", "network", "train", "paths", "seed"});

  RunConfig config;
  if (j.contains("data")) parse_data(j.at("data"), config.data);
  if (j.contains("network")) parse_network(j.at("network"), config.train.network);
  if (j.contains("train")) parse_train(j.at("train"), config.train);
  if (j.contains("paths")) parse_paths(j.at("paths"), config.paths);
  std::uint64_t seed = config.seed;
  read_field(j, "", "seed", seed);
  config.seed_all(seed);
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), "'" + path + "'");
}

std::string canonical_config_json(const RunConfig& config) {
  const NetworkConfig& net = config.train.network;
  json j;
  j["data"] = {{"train_count", config.data.train_count},
               {"test_count", config.data.test_count},
               {"height", config.data.height},
               {"width", config.data.width},
               {"coils", config.data.coils},
               {"accel_row", config.data.accel_row},
               {"accel_col", config.data.accel_col},
               {"acs_size", config.data.acs_size},
               {"noise_sigma", config.data.noise_sigma},
               {"min_ellipses", config.data.min_ellipses},
               {"max_ellipses", config.data.max_ellipses},
               {"min_intensity", config.data.min_intensity},
               {"max_intensity", config.data.max_intensity},
               {"phase_order", config.data.phase_order},
               {"seed", config.data.seed}};
  j["network"] = {{"num_blocks", net.num_blocks},
                  {"feature_channels", net.feature_channels},
                  {"augment_channels", net.augment_channels},
                  {"steps", net.integrator.steps},
                  {"t0", net.integrator.t0},
                  {"t1", net.integrator.t1},
                  {"activation", to_string(net.activation)},
                  {"mode", to_string(net.mode)}};
  j["train"] = {{"epochs", config.train.epochs},
                {"batch_size", config.train.batch_size},
                {"learning_rate", config.train.learning_rate},
                {"optimizer", to_string(config.train.optimizer)},
                {"weight_decay", config.train.weight_decay},
                {"seed", config.train.seed}};
  return j.dump();
}

std::string config_digest(const RunConfig& config) {
  const std::string payload = canonical_config_json(config);
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace odemri

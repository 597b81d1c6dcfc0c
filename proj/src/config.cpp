// SPDX-License-Identifier: Apache-2.0
#include "mmfl/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mmfl/channel.hpp"
#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': cannot parse '" + value +
                      "' as a number");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "': cannot parse '" + value +
                      "' as an integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': cannot parse '" + value +
                    "' as a bool");
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  for (const auto& item : split_list(value)) {
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

}  // namespace

Model SimConfig::model(int model_m) const {
  const auto idx = static_cast<std::size_t>(model_m - 1);
  Model m;
  m.kind = model_kinds[idx] == "mlp" ? ModelKind::kMlp : ModelKind::kLogistic;
  m.num_classes = dataset == "mnist" ? 10 : classes;
  m.feature_dim = dataset == "mnist" ? 784 : feature_dims[idx];
  m.hidden_units = hidden_units[idx];
  m.l2_reg = l2_reg;
  return m;
}

std::vector<int> SimConfig::model_dims() const {
  std::vector<int> dims;
  for (int m = 1; m <= num_models; ++m) dims.push_back(model(m).dim());
  return dims;
}

int SimConfig::d_max() const {
  const auto dims = model_dims();
  return *std::max_element(dims.begin(), dims.end());
}

int SimConfig::frames() const {
  return (rounds + num_models - 1) / num_models;
}

double SimConfig::eta_for_round(int round_t, int slots) const {
  if (eta.size() == 1) return eta.front();
  const int frame = round_t / std::max(slots, 1);
  return eta[static_cast<std::size_t>(frame)];
}

double SimConfig::sigma2_ul_effective() const {
  if (sigma2_ul >= 0.0) return sigma2_ul;
  return noise_variance_watts(psd_dbm_hz, ul_bandwidth_hz, bs_noise_figure_db);
}

double SimConfig::sigma2_dl_effective() const {
  if (sigma2_dl >= 0.0) return sigma2_dl;
  return noise_variance_watts(psd_dbm_hz, dl_bandwidth_hz,
                              device_noise_figure_db);
}

Eigen::VectorXd SimConfig::power_caps() const {
  Eigen::VectorXd caps(num_devices);
  const int d = d_max();
  for (int k = 0; k < num_devices; ++k) {
    const double dbm = device_power_dbm.size() == 1
                           ? device_power_dbm.front()
                           : device_power_dbm[static_cast<std::size_t>(k)];
    caps(k) = static_cast<double>(d) * dbm_to_watts(dbm) / 2.0;
  }
  return caps;
}

SimConfig parse_config(const std::string& text) {
  SimConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"scheme", [&](auto& k, auto& v) { (void)k; cfg.scheme = v; }},
      {"seed",
       [&](auto& k, auto& v) {
         cfg.seed = static_cast<std::uint64_t>(parse_int(k, v));
       }},
      {"realizations",
       [&](auto& k, auto& v) { cfg.realizations = static_cast<int>(parse_int(k, v)); }},
      {"threads",
       [&](auto& k, auto& v) { cfg.threads = static_cast<int>(parse_int(k, v)); }},
      {"K",
       [&](auto& k, auto& v) { cfg.num_devices = static_cast<int>(parse_int(k, v)); }},
      {"M",
       [&](auto& k, auto& v) { cfg.num_models = static_cast<int>(parse_int(k, v)); }},
      {"N",
       [&](auto& k, auto& v) { cfg.num_antennas = static_cast<int>(parse_int(k, v)); }},
      {"rounds",
       [&](auto& k, auto& v) { cfg.rounds = static_cast<int>(parse_int(k, v)); }},
      {"J",
       [&](auto& k, auto& v) {
         cfg.local_iterations = static_cast<int>(parse_int(k, v));
       }},
      {"batch_size",
       [&](auto& k, auto& v) { cfg.batch_size = static_cast<int>(parse_int(k, v)); }},
      {"eta", [&](auto& k, auto& v) { cfg.eta = parse_double_list(k, v); }},
      {"dataset", [&](auto& k, auto& v) { (void)k; cfg.dataset = v; }},
      {"classes",
       [&](auto& k, auto& v) { cfg.classes = static_cast<int>(parse_int(k, v)); }},
      {"model_kinds",
       [&](auto& k, auto& v) {
         (void)k;
         cfg.model_kinds = split_list(v);
       }},
      {"feature_dims",
       [&](auto& k, auto& v) { cfg.feature_dims = parse_int_list(k, v); }},
      {"hidden_units",
       [&](auto& k, auto& v) { cfg.hidden_units = parse_int_list(k, v); }},
      {"synth_train",
       [&](auto& k, auto& v) { cfg.synth_train = static_cast<int>(parse_int(k, v)); }},
      {"synth_test",
       [&](auto& k, auto& v) { cfg.synth_test = static_cast<int>(parse_int(k, v)); }},
      {"synth_margin",
       [&](auto& k, auto& v) { cfg.synth_margin = parse_double(k, v); }},
      {"l2_reg", [&](auto& k, auto& v) { cfg.l2_reg = parse_double(k, v); }},
      {"mnist_train_images",
       [&](auto& k, auto& v) { (void)k; cfg.mnist_train_images = v; }},
      {"mnist_train_labels",
       [&](auto& k, auto& v) { (void)k; cfg.mnist_train_labels = v; }},
      {"mnist_test_images",
       [&](auto& k, auto& v) { (void)k; cfg.mnist_test_images = v; }},
      {"mnist_test_labels",
       [&](auto& k, auto& v) { (void)k; cfg.mnist_test_labels = v; }},
      {"distance_min_km",
       [&](auto& k, auto& v) { cfg.distance_min_km = parse_double(k, v); }},
      {"distance_max_km",
       [&](auto& k, auto& v) { cfg.distance_max_km = parse_double(k, v); }},
      {"distances_km",
       [&](auto& k, auto& v) { cfg.distances_km = parse_double_list(k, v); }},
      {"shadow_std_db",
       [&](auto& k, auto& v) { cfg.shadow_std_db = parse_double(k, v); }},
      {"psd_dbm_hz",
       [&](auto& k, auto& v) { cfg.psd_dbm_hz = parse_double(k, v); }},
      {"ul_bandwidth_hz",
       [&](auto& k, auto& v) { cfg.ul_bandwidth_hz = parse_double(k, v); }},
      {"bs_noise_figure_db",
       [&](auto& k, auto& v) { cfg.bs_noise_figure_db = parse_double(k, v); }},
      {"dl_bandwidth_hz",
       [&](auto& k, auto& v) { cfg.dl_bandwidth_hz = parse_double(k, v); }},
      {"device_noise_figure_db",
       [&](auto& k, auto& v) { cfg.device_noise_figure_db = parse_double(k, v); }},
      {"sigma2_ul",
       [&](auto& k, auto& v) { cfg.sigma2_ul = parse_double(k, v); }},
      {"sigma2_dl",
       [&](auto& k, auto& v) { cfg.sigma2_dl = parse_double(k, v); }},
      {"device_power_dbm",
       [&](auto& k, auto& v) { cfg.device_power_dbm = parse_double_list(k, v); }},
      {"bs_power_dbm",
       [&](auto& k, auto& v) { cfg.bs_power_dbm = parse_double(k, v); }},
      {"bcd_tol", [&](auto& k, auto& v) { cfg.bcd_tol = parse_double(k, v); }},
      {"bcd_max_iter",
       [&](auto& k, auto& v) { cfg.bcd_max_iter = static_cast<int>(parse_int(k, v)); }},
      {"compute_gap_bound",
       [&](auto& k, auto& v) { cfg.compute_gap_bound = parse_bool(k, v); }},
      {"bound_r", [&](auto& k, auto& v) { cfg.bound_r = parse_double(k, v); }},
      {"bound_phi",
       [&](auto& k, auto& v) { cfg.bound_phi = parse_double(k, v); }},
      {"bound_delta",
       [&](auto& k, auto& v) { cfg.bound_delta = parse_double(k, v); }},
      {"solver_trace",
       [&](auto& k, auto& v) { cfg.solver_trace = parse_bool(k, v); }},
      {"audit", [&](auto& k, auto& v) { cfg.audit = parse_bool(k, v); }},
      {"timing", [&](auto& k, auto& v) { cfg.timing = parse_bool(k, v); }},
  };

  std::set<std::string> seen;
  std::stringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    it->second(key, value);
  }
  validate(cfg);
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void validate(const SimConfig& cfg) {
  if (cfg.scheme != "multimodel" && cfg.scheme != "ideal" &&
      cfg.scheme != "seqnmodel") {
    throw ConfigError("scheme must be multimodel, ideal or seqnmodel");
  }
  if (cfg.realizations < 1) throw ConfigError("realizations must be >= 1");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  if (cfg.num_devices < 1 || cfg.num_models < 1 || cfg.num_antennas < 1) {
    throw ConfigError("K, M and N must be positive");
  }
  if (cfg.num_devices % cfg.num_models != 0) {
    throw ConfigError("K = " + std::to_string(cfg.num_devices) +
                      " must be divisible by M = " +
                      std::to_string(cfg.num_models));
  }
  if (cfg.rounds < 1 || cfg.local_iterations < 1 || cfg.batch_size < 1) {
    throw ConfigError("rounds, J and batch_size must be positive");
  }
  if (!(cfg.bcd_tol > 0.0) || cfg.bcd_max_iter < 1) {
    throw ConfigError("bcd_tol must be > 0 and bcd_max_iter >= 1");
  }
  if (cfg.eta.empty()) throw ConfigError("eta must not be empty");
  for (double e : cfg.eta) {
    if (!(e > 0.0)) throw ConfigError("eta values must be positive");
  }
  // The sequential baseline treats every round as its own frame, so an
  // explicit eta schedule must cover all rounds there.
  const int frames_needed =
      cfg.scheme == "seqnmodel" ? cfg.rounds : cfg.frames();
  if (cfg.eta.size() != 1 &&
      cfg.eta.size() < static_cast<std::size_t>(frames_needed)) {
    throw ConfigError("eta list must cover all " +
                      std::to_string(frames_needed) + " frames");
  }

  if (cfg.dataset != "synthetic" && cfg.dataset != "mnist") {
    throw ConfigError("dataset must be synthetic or mnist");
  }
  const auto m = static_cast<std::size_t>(cfg.num_models);
  if (cfg.model_kinds.size() != m || cfg.hidden_units.size() != m) {
    throw ConfigError("model_kinds and hidden_units must list one entry per model");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (cfg.model_kinds[i] != "logistic" && cfg.model_kinds[i] != "mlp") {
      throw ConfigError("model kind must be logistic or mlp");
    }
    if (cfg.model_kinds[i] == "mlp" && cfg.hidden_units[i] < 1) {
      throw ConfigError("mlp models need hidden_units >= 1");
    }
  }
  if (cfg.dataset == "synthetic") {
    if (cfg.feature_dims.size() != m) {
      throw ConfigError("feature_dims must list one entry per model");
    }
    if (cfg.classes < 2) throw ConfigError("classes must be >= 2");
    if (cfg.synth_train < 1 || cfg.synth_test < 1) {
      throw ConfigError("synth_train and synth_test must be positive");
    }
    if (cfg.synth_train % cfg.num_devices != 0) {
      throw ConfigError("synth_train must be divisible by K for the even split");
    }
    if (cfg.batch_size > cfg.synth_train / cfg.num_devices) {
      throw ConfigError("batch_size exceeds the per-device shard size");
    }
  } else {
    if (cfg.mnist_train_images.empty() || cfg.mnist_train_labels.empty() ||
        cfg.mnist_test_images.empty() || cfg.mnist_test_labels.empty()) {
      throw ConfigError("mnist dataset needs all four idx file paths");
    }
  }

  if (!cfg.distances_km.empty() &&
      cfg.distances_km.size() != static_cast<std::size_t>(cfg.num_devices)) {
    throw ConfigError("distances_km must list one entry per device");
  }
  if (cfg.distances_km.empty() &&
      !(0.0 < cfg.distance_min_km && cfg.distance_min_km < cfg.distance_max_km)) {
    throw ConfigError("need 0 < distance_min_km < distance_max_km");
  }
  for (double d : cfg.distances_km) {
    if (!(d > 0.0)) throw ConfigError("distances must be positive");
  }
  if (cfg.device_power_dbm.size() != 1 &&
      cfg.device_power_dbm.size() != static_cast<std::size_t>(cfg.num_devices)) {
    throw ConfigError("device_power_dbm must be a scalar or one entry per device");
  }
  if (cfg.scheme != "ideal" && !(cfg.sigma2_ul_effective() > 0.0)) {
    throw ConfigError("uplink noise variance must be positive for OAA schemes");
  }
  if (cfg.sigma2_dl >= 0.0 && !(cfg.sigma2_dl >= 0.0)) {
    throw ConfigError("sigma2_dl must be >= 0");
  }
  if (cfg.compute_gap_bound) {
    for (const auto& kind : cfg.model_kinds) {
      if (kind != "logistic") {
        throw ConfigError("compute_gap_bound requires logistic models");
      }
    }
    if (!(cfg.l2_reg > 0.0)) {
      throw ConfigError("compute_gap_bound requires l2_reg > 0");
    }
  }
}

}  // namespace mmfl

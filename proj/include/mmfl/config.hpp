// SPDX-License-Identifier: Apache-2.0
//
// Flat key = value experiment configuration. Every key mirrors a SimConfig
// field; unknown or duplicate keys are hard errors so a typo cannot silently
// change an experiment.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mmfl/learning.hpp"

namespace mmfl {

struct SimConfig {
  // control
  std::string scheme = "multimodel";  // multimodel | ideal | seqnmodel
  std::uint64_t seed = 1;
  int realizations = 10;
  int threads = 0;  // 0 = hardware concurrency

  // system sizes
  int num_devices = 12;      // K
  int num_models = 3;        // M
  int num_antennas = 16;     // N
  int rounds = 30;           // T, total communication rounds
  int local_iterations = 20; // J
  int batch_size = 50;
  std::vector<double> eta = {0.1};  // per frame; single value broadcasts

  // data
  std::string dataset = "synthetic";  // synthetic | mnist
  int classes = 4;
  std::vector<std::string> model_kinds = {"logistic", "logistic", "logistic"};
  std::vector<int> feature_dims = {10, 14, 18};  // per model, synthetic only
  std::vector<int> hidden_units = {0, 0, 0};     // per model, mlp only
  int synth_train = 4800;
  int synth_test = 2000;
  double synth_margin = 1.0;
  double l2_reg = 1e-3;
  std::string mnist_train_images;
  std::string mnist_train_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;

  // channel and link budget
  double distance_min_km = 0.02;
  double distance_max_km = 0.5;
  std::vector<double> distances_km;  // optional fixed distances
  double shadow_std_db = 8.0;
  double psd_dbm_hz = -174.0;
  double ul_bandwidth_hz = 1e6;
  double bs_noise_figure_db = 2.0;
  double dl_bandwidth_hz = 1e7;
  double device_noise_figure_db = 8.0;
  // Negative = derive from the budget above. sigma2_dl has no further
  // receive-processing gain applied: the downlink design is external and the
  // update equation only needs the post-processed variance.
  double sigma2_ul = -1.0;
  double sigma2_dl = -1.0;
  std::vector<double> device_power_dbm = {23.0};  // scalar broadcasts to K
  double bs_power_dbm = 47.0;  // exposed for completeness, not consumed

  // solver
  double bcd_tol = 1e-6;
  int bcd_max_iter = 100;

  // diagnostics
  bool compute_gap_bound = false;
  double bound_r = 1.0;      // 0 = calibrate from an error-free run
  double bound_phi = -1.0;   // negative = estimate when the gap bound is on
  double bound_delta = -1.0;
  bool solver_trace = false;
  bool audit = false;
  bool timing = false;  // write elapsed_ms values (breaks byte-reproducibility)

  // derived quantities
  Model model(int model_m) const;          // 1-based
  std::vector<int> model_dims() const;
  int d_max() const;
  int frames() const;                      // ceil(rounds / M)
  /// Learning rate of the frame containing round_t, where a frame spans
  /// `slots` rounds (M for the multimodel pipeline, 1 for the sequential
  /// baseline).
  double eta_for_round(int round_t, int slots) const;
  double sigma2_ul_effective() const;
  double sigma2_dl_effective() const;
  /// Per-device total transmit energy caps D_max * P_ul_k, with
  /// 2 P_ul_k the per-channel-use budget from device_power_dbm.
  Eigen::VectorXd power_caps() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown and duplicate
/// keys throw ConfigError. The result is validated before returning.
SimConfig parse_config(const std::string& text);
SimConfig load_config(const std::string& path);

/// Cross-field validation; throws ConfigError on violations.
void validate(const SimConfig& cfg);

}  // namespace mmfl

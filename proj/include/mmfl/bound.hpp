// SPDX-License-Identifier: Apache-2.0
//
// Convergence-analysis quantities for the aggregated training error. The
// per-frame aggregation error bound combines the inverse-SINR sum of the
// frame's beamforming state with the scaled downlink noise; accumulating the
// per-frame terms H_n through the contraction factors G_n yields the
// optimality-gap bound after S frames. Diagnostic only: nothing here feeds
// back into the optimization.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmfl/beamform.hpp"
#include "mmfl/channel.hpp"
#include "mmfl/scheduler.hpp"

namespace mmfl {

struct BoundConstants {
  double smoothness = 0.0;        // L
  double strong_convexity = 0.0;  // lambda
  double model_norm_bound = 0.0;  // r: bound on || packed local model ||^2
  double gradient_divergence = 0.0;  // phi
  double minibatch_variance = 0.0;   // delta
  std::vector<double> device_weights;  // c_k, convex weights (default 1/K)
  std::vector<double> eta;             // per-frame learning rates
  int local_iterations = 0;            // J
  int num_models = 0;                  // M
  int num_devices = 0;                 // K
  std::vector<double> initial_gap;     // Gamma_m = ||theta_{m,0} - theta*||^2
  double sigma2_d_tilde = 0.0;         // sigma_d^2 * D_max / 2
  double sigma2_u_tilde = 0.0;         // sigma_u^2 * D_max / 2

  double eta_at(int frame) const {
    return eta.size() == 1 ? eta.front()
                           : eta[static_cast<std::size_t>(frame)];
  }
};

/// Per-frame aggregation error bound:
/// r M K sum_i (interference_i + sigma2_u_tilde) / (amplitude sum_i)^2
///   + 2 K sigma2_d_tilde.
double error_bound(const BeamformerState& state, const ChannelSet& channels,
                   const Schedule& schedule, const BoundConstants& consts);

/// H(w, p) = 4 r M K sum_i (...) -- the error bound's uplink part with the
/// leading factor 4, excluding the downlink term.
double h_term(const BeamformerState& state, const ChannelSet& channels,
              const Schedule& schedule, const BoundConstants& consts);

/// Contraction factor G_n = 4 (1 - eta_n lambda)^(2 J M). Positive whenever
/// eta_n < 1 / lambda.
double contraction_factor(double eta, const BoundConstants& consts);

/// Per-frame drift constant
/// C_n = 4 eta_n^2 J^2 (M^2 phi + K^2 delta) + 8 K sigma2_d_tilde.
double drift_constant(double eta, const BoundConstants& consts);

/// Optimality-gap bound after num_frames frames for model_m (1-based):
/// Gamma_m prod G_n + Lambda + sum_{n <= S-2} H_n prod_{s > n} G_s + H_{S-1}.
/// Throws DomainError when any eta_n >= 1 / lambda.
double gap_bound(std::span<const double> h_values, const BoundConstants& consts,
                 int num_frames, int model_m);

/// Long-form CSV export: frame,h_n,g_n,c_n,model,gap_bound with the
/// cumulative bound through each frame.
void write_bound_csv(const std::string& path,
                     std::span<const double> h_values,
                     const BoundConstants& consts);

}  // namespace mmfl

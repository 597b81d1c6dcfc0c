// SPDX-License-Identifier: Apache-2.0
//
// Per-frame joint transmit-power / receive-beamforming optimization. The
// solved problem minimizes the sum over groups of
//
//   (cross-group interference + 1) / (own-group received signal)
//
// i.e. the sum of inverse SINRs after receive beamforming, over unit-norm
// receive beamformers w_i and boxed per-device transmit powers p_k. Block
// coordinate descent alternates an exact generalized-eigenvector update for
// each w_i with an exact closed-form KKT update for each group's powers.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mmfl/channel.hpp"
#include "mmfl/scheduler.hpp"

namespace mmfl {

/// One frame's beamforming solution: M unit-norm receive beamformers and K
/// transmit powers (total energy for the whole model transmission, watts).
struct BeamformerState {
  std::vector<Eigen::VectorXcd> w;  // M vectors of dimension N, unit norm
  Eigen::VectorXd p;                // K powers, 0 <= p_k <= cap_k
};

/// Channels scaled by the effective uplink noise: f_k = h_k / sigma_u_tilde
/// with sigma_u_tilde^2 = sigma_u^2 * D_max / 2.
struct NormalizedChannels {
  std::vector<Eigen::VectorXcd> f;
  double sigma2_u_tilde = 0.0;

  static NormalizedChannels build(const ChannelSet& channels, int d_max);
};

/// |f_q^H w_i|^2 for every (beamformer i, device q); M x K.
Eigen::MatrixXd beam_gains(const BeamformerState& state,
                           const NormalizedChannels& nch);

/// Objective with amplitude-sum denominators (the tight form):
/// sum_i [sum_{j != i} sum_{q in K_j} p_q |h_q^H w_i|^2 + sigma2_u_tilde] /
///       (sum_{k in K_i} sqrt(p_k) |h_k^H w_i|)^2.
double objective_p2(const BeamformerState& state, const ChannelSet& channels,
                    const Schedule& schedule, int d_max);

/// Upper-bound objective actually optimized: sum over groups of inverse SINR,
/// sum_i [sum_{j != i} sum_{q in K_j} p_q |f_q^H w_i|^2 + 1] /
///       sum_{k in K_i} p_k |f_k^H w_i|^2.
double objective_p3(const BeamformerState& state,
                    const NormalizedChannels& nch, const Schedule& schedule);

/// Exact minimizer of group i's inverse SINR over unit-norm w: the
/// generalized eigenvector of (A, B) with the smallest generalized
/// eigenvalue, where A = interference covariance + I and B = own-group
/// signal covariance. A is positive definite, so the pencil is solved as the
/// dominant Hermitian eigenvector of L^-1 B L^-H with A = L L^H.
Eigen::VectorXcd update_w(int group_i, const Eigen::VectorXd& p,
                          const NormalizedChannels& nch,
                          const Schedule& schedule);

/// Closed-form KKT power update for group i, all other groups fixed: every
/// device transmits at its cap except at most one, which is reduced until the
/// group's signal level reaches the interference-balancing target. Returns
/// the K/M powers for group i in device order.
Eigen::VectorXd update_p_group(int group_i, const BeamformerState& state,
                               const NormalizedChannels& nch,
                               const Schedule& schedule,
                               const Eigen::VectorXd& caps);

struct BcdIterate {
  int iteration = 0;
  double obj_p3 = 0.0;
  double obj_p2 = 0.0;
};

struct BcdOptions {
  double tol = 1e-6;   // relative objective decrease that stops iteration
  int max_iter = 100;  // outer BCD iterations
};

struct BcdResult {
  BeamformerState state;
  std::vector<BcdIterate> trace;  // trace[0] is the initial point
  bool converged = false;
  int iterations = 0;
  // Block updates that would have raised the objective and were kept at the
  // previous value instead. Zero whenever the closed forms are exact.
  int reverted_updates = 0;
};

/// Solves one frame by BCD: update_w for i = 1..M, then update_p_group for
/// i = 1..M, until the relative decrease of the objective falls below tol or
/// max_iter is reached. The trace is non-increasing. Default initialization:
/// full power, each w_i the dominant eigenvector of its own-group covariance.
BcdResult bcd_solve(const ChannelSet& channels, const Schedule& schedule,
                    const Eigen::VectorXd& caps, int d_max,
                    std::optional<BeamformerState> init = std::nullopt,
                    const BcdOptions& options = {});

/// Single-group baseline beamformer: full power for all K devices and w the
/// unit-norm maximizer of the aggregated SNR sum_k p_k |f_k^H w|^2.
BeamformerState snr_max_beamformer(const ChannelSet& channels,
                                   const Eigen::VectorXd& caps, int d_max);

}  // namespace mmfl

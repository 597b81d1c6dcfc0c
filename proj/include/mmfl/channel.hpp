// SPDX-License-Identifier: Apache-2.0
//
// Frame-static wireless channel generation and link-budget helpers. Channels
// follow the urban macro model h_k = sqrt(G_k) * hbar with hbar standard
// circularly-symmetric complex Gaussian, path gain
// G_k[dB] = -136.3 - 35 log10(d_k) - psi_k and log-normal shadowing psi_k.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mmfl/rng.hpp"

namespace mmfl {

/// Per-device placement of the deployment.
struct Geometry {
  std::vector<double> distances_km;  // BS-device distances
  double shadow_std_db = 0.0;        // std of the shadowing term, dB
};

/// One frame's channel realization for all K devices plus noise variances.
/// Channels are constant within a frame and redrawn across frames.
struct ChannelSet {
  int frame_index = 0;
  std::vector<Eigen::VectorXcd> h;  // K channel vectors, each N entries
  std::vector<double> gain_linear;  // per-device linear path gain (diagnostic)
  double sigma2_ul = 0.0;           // uplink receiver noise variance, watts
  double sigma2_dl = 0.0;           // downlink post-processed noise variance, watts

  int num_devices() const { return static_cast<int>(h.size()); }
  int num_antennas() const {
    return h.empty() ? 0 : static_cast<int>(h.front().size());
  }
};

/// Path gain in dB for distance d_km kilometers and shadowing psi_db.
/// Throws DomainError for non-positive distance.
double path_gain_db(double d_km, double psi_db);

double db_to_linear(double db);
double dbm_to_watts(double dbm);

/// Receiver noise power in dBm: PSD + 10 log10(bandwidth) + noise figure.
/// Throws DomainError for non-positive bandwidth.
double noise_variance_dbm(double psd_dbm_hz, double bandwidth_hz,
                          double noise_figure_db);

/// Same budget expressed in linear watts.
double noise_variance_watts(double psd_dbm_hz, double bandwidth_hz,
                            double noise_figure_db);

/// Per-device distances, uniform on (lo_km, hi_km).
std::vector<double> sample_distances_km(int num_devices, double lo_km,
                                        double hi_km, Rng& rng);

/// Per-device shadowing in dB, Gaussian with the given std. Drawn once per
/// device per realization; the shadowing term carries no time index.
std::vector<double> sample_shadowing_db(int num_devices, double std_db,
                                        Rng& rng);

/// Draws one frame's channels. Deterministic given the rng substream, which
/// callers derive from (seed, realization, frame).
ChannelSet sample_channels(const Geometry& geometry,
                           std::span<const double> shadowing_db,
                           int num_antennas, int frame_index, double sigma2_ul,
                           double sigma2_dl, Rng& rng);

}  // namespace mmfl

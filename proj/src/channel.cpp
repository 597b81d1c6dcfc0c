// SPDX-License-Identifier: Apache-2.0
#include "mmfl/channel.hpp"

#include <cmath>
#include <string>

#include "mmfl/errors.hpp"

namespace mmfl {

double path_gain_db(double d_km, double psi_db) {
  if (!(d_km > 0.0)) {
    throw DomainError("path_gain_db: distance must be positive, got " +
                      std::to_string(d_km) + " km");
  }
  return -136.3 - 35.0 * std::log10(d_km) - psi_db;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double noise_variance_dbm(double psd_dbm_hz, double bandwidth_hz,
                          double noise_figure_db) {
  if (!(bandwidth_hz > 0.0)) {
    throw DomainError("noise_variance_dbm: bandwidth must be positive, got " +
                      std::to_string(bandwidth_hz) + " Hz");
  }
  return psd_dbm_hz + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
}

double noise_variance_watts(double psd_dbm_hz, double bandwidth_hz,
                            double noise_figure_db) {
  return dbm_to_watts(
      noise_variance_dbm(psd_dbm_hz, bandwidth_hz, noise_figure_db));
}

std::vector<double> sample_distances_km(int num_devices, double lo_km,
                                        double hi_km, Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(num_devices));
  for (auto& v : d) v = rng.uniform(lo_km, hi_km);
  return d;
}

std::vector<double> sample_shadowing_db(int num_devices, double std_db,
                                        Rng& rng) {
  std::vector<double> psi(static_cast<std::size_t>(num_devices));
  for (auto& v : psi) v = std_db * rng.normal();
  return psi;
}

ChannelSet sample_channels(const Geometry& geometry,
                           std::span<const double> shadowing_db,
                           int num_antennas, int frame_index, double sigma2_ul,
                           double sigma2_dl, Rng& rng) {
  const auto K = geometry.distances_km.size();
  if (num_antennas < 1 || K < 1) {
    throw DomainError("sample_channels: need at least one antenna and device");
  }
  if (shadowing_db.size() != K) {
    throw DomainError("sample_channels: shadowing size mismatch");
  }
  ChannelSet out;
  out.frame_index = frame_index;
  out.sigma2_ul = sigma2_ul;
  out.sigma2_dl = sigma2_dl;
  out.h.resize(K);
  out.gain_linear.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double gain =
        db_to_linear(path_gain_db(geometry.distances_km[k], shadowing_db[k]));
    out.gain_linear[k] = gain;
    const double amp = std::sqrt(gain);
    Eigen::VectorXcd hk(num_antennas);
    for (int n = 0; n < num_antennas; ++n) hk(n) = amp * rng.cnormal();
    out.h[k] = std::move(hk);
  }
  return out;
}

}  // namespace mmfl

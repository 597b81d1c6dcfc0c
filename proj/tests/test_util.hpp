// SPDX-License-Identifier: Apache-2.0
//
// Shared builders for randomized test instances.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mmfl/beamform.hpp"
#include "mmfl/channel.hpp"
#include "mmfl/rng.hpp"
#include "mmfl/scheduler.hpp"

namespace testutil {

inline Eigen::VectorXcd random_cvector(int n, mmfl::Rng& rng,
                                       double scale = 1.0) {
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rng.cnormal();
  return v;
}

inline Eigen::VectorXcd random_unit(int n, mmfl::Rng& rng) {
  Eigen::VectorXcd v = random_cvector(n, rng);
  v.normalize();
  return v;
}

/// Channels with CN(0, scale^2) entries; sigma2_ul chosen so that the
/// noise-normalized gains sit in the interference-relevant regime.
inline mmfl::ChannelSet random_channels(int num_devices, int num_antennas,
                                        mmfl::Rng& rng, double scale = 1.0,
                                        double sigma2_ul = 1.0,
                                        double sigma2_dl = 1.0) {
  mmfl::ChannelSet cs;
  cs.sigma2_ul = sigma2_ul;
  cs.sigma2_dl = sigma2_dl;
  cs.gain_linear.assign(static_cast<std::size_t>(num_devices), scale * scale);
  for (int k = 0; k < num_devices; ++k) {
    cs.h.push_back(random_cvector(num_antennas, rng, scale));
  }
  return cs;
}

inline mmfl::Schedule random_schedule(int num_devices, int num_models,
                                      mmfl::Rng& rng) {
  return mmfl::partition_devices(num_devices, num_models, rng);
}

/// Feasible random state: unit-norm beamformers, powers uniform in
/// (0.05, 1] * cap to stay clear of degenerate denominators.
inline mmfl::BeamformerState random_state(int num_devices, int num_models,
                                          int num_antennas,
                                          const Eigen::VectorXd& caps,
                                          mmfl::Rng& rng) {
  mmfl::BeamformerState st;
  for (int i = 0; i < num_models; ++i) {
    st.w.push_back(random_unit(num_antennas, rng));
  }
  st.p.resize(num_devices);
  for (int k = 0; k < num_devices; ++k) {
    st.p(k) = caps(k) * (0.05 + 0.95 * rng.real01());
  }
  return st;
}

}  // namespace testutil

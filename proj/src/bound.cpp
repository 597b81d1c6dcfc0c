// SPDX-License-Identifier: Apache-2.0
#include "mmfl/bound.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

/// sum_i (cross-group interference_i + sigma2_u_tilde) / (amplitude sum_i)^2
/// over raw channels, the frame-level uplink error core.
double inverse_sinr_sum(const BeamformerState& state,
                        const ChannelSet& channels, const Schedule& schedule,
                        double sigma2_u_tilde) {
  double total = 0.0;
  for (int i = 1; i <= schedule.num_models; ++i) {
    const auto& w = state.w[static_cast<std::size_t>(i - 1)];
    double interference = 0.0;
    for (int j = 1; j <= schedule.num_models; ++j) {
      if (j == i) continue;
      for (int q : schedule.group(j)) {
        interference += state.p(q) * std::norm(channels.h[q].dot(w));
      }
    }
    double amp = 0.0;
    for (int k : schedule.group(i)) {
      amp += std::sqrt(state.p(k)) * std::abs(channels.h[k].dot(w));
    }
    if (!(amp > 0.0)) {
      throw DegenerateError("bound: group " + std::to_string(i) +
                            " has zero received amplitude");
    }
    total += (interference + sigma2_u_tilde) / (amp * amp);
  }
  return total;
}

void check_hypothesis(const BoundConstants& consts, int num_frames) {
  for (int n = 0; n < num_frames; ++n) {
    if (!(consts.eta_at(n) * consts.strong_convexity < 1.0)) {
      throw DomainError("gap_bound: eta_" + std::to_string(n) +
                        " violates eta < 1/lambda");
    }
  }
}

}  // namespace

double error_bound(const BeamformerState& state, const ChannelSet& channels,
                   const Schedule& schedule, const BoundConstants& consts) {
  const double m = static_cast<double>(consts.num_models);
  const double k = static_cast<double>(consts.num_devices);
  return consts.model_norm_bound * m * k *
             inverse_sinr_sum(state, channels, schedule,
                              consts.sigma2_u_tilde) +
         2.0 * k * consts.sigma2_d_tilde;
}

double h_term(const BeamformerState& state, const ChannelSet& channels,
              const Schedule& schedule, const BoundConstants& consts) {
  const double m = static_cast<double>(consts.num_models);
  const double k = static_cast<double>(consts.num_devices);
  return 4.0 * consts.model_norm_bound * m * k *
         inverse_sinr_sum(state, channels, schedule, consts.sigma2_u_tilde);
}

double contraction_factor(double eta, const BoundConstants& consts) {
  const double base = 1.0 - eta * consts.strong_convexity;
  return 4.0 * std::pow(base, 2.0 * consts.local_iterations *
                                  consts.num_models);
}

double drift_constant(double eta, const BoundConstants& consts) {
  const double j = static_cast<double>(consts.local_iterations);
  const double m = static_cast<double>(consts.num_models);
  const double k = static_cast<double>(consts.num_devices);
  return 4.0 * eta * eta * j * j *
             (m * m * consts.gradient_divergence +
              k * k * consts.minibatch_variance) +
         8.0 * k * consts.sigma2_d_tilde;
}

double gap_bound(std::span<const double> h_values, const BoundConstants& consts,
                 int num_frames, int model_m) {
  if (num_frames < 1 ||
      h_values.size() < static_cast<std::size_t>(num_frames)) {
    throw DomainError("gap_bound: need H values for every frame");
  }
  check_hypothesis(consts, num_frames);

  // suffix[n] = prod_{s=n}^{S-1} G_s, suffix[S] = 1.
  std::vector<double> suffix(static_cast<std::size_t>(num_frames) + 1, 1.0);
  for (int n = num_frames - 1; n >= 0; --n) {
    suffix[static_cast<std::size_t>(n)] =
        contraction_factor(consts.eta_at(n), consts) *
        suffix[static_cast<std::size_t>(n) + 1];
  }

  double lambda_term = drift_constant(consts.eta_at(num_frames - 1), consts);
  double h_sum = h_values[static_cast<std::size_t>(num_frames - 1)];
  for (int n = 0; n <= num_frames - 2; ++n) {
    lambda_term += drift_constant(consts.eta_at(n), consts) *
                   suffix[static_cast<std::size_t>(n) + 1];
    h_sum += h_values[static_cast<std::size_t>(n)] *
             suffix[static_cast<std::size_t>(n) + 1];
  }
  return consts.initial_gap[static_cast<std::size_t>(model_m - 1)] *
             suffix[0] +
         lambda_term + h_sum;
}

void write_bound_csv(const std::string& path,
                     std::span<const double> h_values,
                     const BoundConstants& consts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << "frame,h_n,g_n,c_n,model,gap_bound\n";
  char buf[512];
  for (std::size_t n = 0; n < h_values.size(); ++n) {
    const double eta = consts.eta_at(static_cast<int>(n));
    for (int m = 1; m <= consts.num_models; ++m) {
      const double gap = gap_bound(h_values, consts, static_cast<int>(n) + 1, m);
      std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%d,%.12g\n", n,
                    h_values[n], contraction_factor(eta, consts),
                    drift_constant(eta, consts), m, gap);
      out << buf;
    }
  }
}

}  // namespace mmfl

// SPDX-License-Identifier: Apache-2.0
#include "mmfl/oaa.hpp"

#include <cmath>
#include <complex>
#include <string>

#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

using Complex = std::complex<double>;

/// Phase-aligning transmit weight a_k = sqrt(p_k) h_k^H w / |h_k^H w|.
Complex transmit_weight(double power, const Eigen::VectorXcd& h,
                        const Eigen::VectorXcd& w) {
  const Complex inner = h.dot(w);  // h^H w
  const double mag = std::abs(inner);
  const double amp = std::sqrt(power);
  if (mag == 0.0) return {amp, 0.0};
  return amp * inner / mag;
}

}  // namespace

PackedModel pack_complex(std::span<const double> theta) {
  const int dim = static_cast<int>(theta.size());
  if (dim % 2 != 0) {
    throw DomainError("pack_complex: dimension must be even, got " +
                      std::to_string(dim));
  }
  PackedModel out;
  out.source_dim = dim;
  const int half = dim / 2;
  out.values.resize(half);
  for (int l = 0; l < half; ++l) {
    out.values(l) = Complex(theta[static_cast<std::size_t>(l)],
                            theta[static_cast<std::size_t>(half + l)]);
  }
  return out;
}

PackedModel pack_model(std::span<const double> theta) {
  if (theta.size() % 2 == 0) return pack_complex(theta);
  std::vector<double> padded(theta.begin(), theta.end());
  padded.push_back(0.0);
  PackedModel out = pack_complex(padded);
  out.source_dim = static_cast<int>(theta.size());
  return out;
}

std::vector<double> unpack(const PackedModel& packed) {
  const int half = static_cast<int>(packed.values.size());
  std::vector<double> theta(static_cast<std::size_t>(2 * half));
  for (int l = 0; l < half; ++l) {
    theta[static_cast<std::size_t>(l)] = packed.values(l).real();
    theta[static_cast<std::size_t>(half + l)] = packed.values(l).imag();
  }
  theta.resize(static_cast<std::size_t>(packed.source_dim));
  return theta;
}

std::vector<int> place_models(const Schedule& schedule, int round_t,
                              std::span<const int> model_dims, int d_max,
                              Rng& rng) {
  const int window = packed_length(d_max);
  std::vector<int> offsets(static_cast<std::size_t>(schedule.num_models), 0);
  for (int i = 1; i <= schedule.num_models; ++i) {
    const int m = schedule.assigned_model(i, round_t);
    const int dim = model_dims[static_cast<std::size_t>(m - 1)];
    if (dim > d_max) {
      throw DomainError("place_models: model " + std::to_string(m) +
                        " exceeds D_max");
    }
    const int slack = window - packed_length(dim);
    offsets[static_cast<std::size_t>(i - 1)] =
        slack > 0 ? static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(slack) + 1))
                  : 0;
  }
  return offsets;
}

std::vector<Eigen::VectorXd> downlink_broadcast(const Eigen::VectorXd& theta,
                                                double sigma2_dl,
                                                int num_receivers, Rng& rng) {
  if (sigma2_dl < 0.0) {
    throw DomainError("downlink_broadcast: sigma2_dl must be >= 0");
  }
  const double std_dev = std::sqrt(sigma2_dl);
  std::vector<Eigen::VectorXd> received;
  received.reserve(static_cast<std::size_t>(num_receivers));
  for (int r = 0; r < num_receivers; ++r) {
    Eigen::VectorXd copy = theta;
    for (Eigen::Index d = 0; d < copy.size(); ++d) {
      copy(d) += std_dev * rng.normal();
    }
    received.push_back(std::move(copy));
  }
  return received;
}

AggregationResult uplink_aggregate(
    const std::vector<Eigen::VectorXd>& locals, const BeamformerState& state,
    const ChannelSet& channels, const Schedule& schedule, int round_t,
    std::span<const int> placement_offsets, std::span<const int> model_dims,
    int d_max, double sigma2_ul, Rng& rng, bool per_channel_use,
    UplinkAudit* audit) {
  const int num_groups = schedule.num_models;
  const int num_devices = schedule.num_devices;
  const int num_antennas = channels.num_antennas();
  const int window = packed_length(d_max);

  // Pack every device's transmission once; norms double as the out-of-band
  // scalar reports the receiver needs for rescaling.
  std::vector<PackedModel> packed(static_cast<std::size_t>(num_devices));
  std::vector<double> norm(static_cast<std::size_t>(num_devices));
  std::vector<Complex> weight(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    const int i = schedule.group_of(k);
    const int m = schedule.assigned_model(i, round_t);
    const auto& theta = locals[static_cast<std::size_t>(k)];
    if (theta.size() != model_dims[static_cast<std::size_t>(m - 1)]) {
      throw DomainError("uplink_aggregate: device " + std::to_string(k) +
                        " local model has wrong dimension");
    }
    packed[static_cast<std::size_t>(k)] =
        pack_model(std::span<const double>(theta.data(),
                                           static_cast<std::size_t>(theta.size())));
    packed[static_cast<std::size_t>(k)].placement_offset =
        placement_offsets[static_cast<std::size_t>(i - 1)];
    norm[static_cast<std::size_t>(k)] =
        packed[static_cast<std::size_t>(k)].values.norm();
    if (!(norm[static_cast<std::size_t>(k)] > 0.0)) {
      throw DegenerateError("uplink_aggregate: device " + std::to_string(k) +
                            " has a zero-norm local model");
    }
    weight[static_cast<std::size_t>(k)] =
        transmit_weight(state.p(k), channels.h[static_cast<std::size_t>(k)],
                        state.w[static_cast<std::size_t>(i - 1)]);
  }

  // Effective channels after receive beamforming; real and non-negative by
  // the phase alignment of the transmit weights.
  Eigen::VectorXd alpha(num_devices);
  std::vector<double> alpha_sum(static_cast<std::size_t>(num_groups), 0.0);
  for (int k = 0; k < num_devices; ++k) {
    const int i = schedule.group_of(k);
    const Complex effective =
        state.w[static_cast<std::size_t>(i - 1)].dot(
            channels.h[static_cast<std::size_t>(k)]) *
        weight[static_cast<std::size_t>(k)];
    alpha(k) = effective.real() / norm[static_cast<std::size_t>(k)];
    alpha_sum[static_cast<std::size_t>(i - 1)] += alpha(k);
  }
  for (int i = 1; i <= num_groups; ++i) {
    if (!(alpha_sum[static_cast<std::size_t>(i - 1)] > 0.0)) {
      throw DegenerateError("uplink_aggregate: group " + std::to_string(i) +
                            " has zero effective-channel sum");
    }
  }

  // One receiver noise vector per channel use, shared by all groups. The
  // closed-form path projects the same draws the literal path adds to the
  // received signal, so both paths produce identical outputs.
  Eigen::MatrixXcd noise_raw(num_antennas, window);
  const double noise_std = std::sqrt(sigma2_ul);
  for (int l = 0; l < window; ++l) {
    for (int n = 0; n < num_antennas; ++n) {
      noise_raw(n, l) = noise_std * rng.cnormal();
    }
  }

  AggregationResult result;
  result.weights = Eigen::VectorXd::Zero(num_devices);
  for (int k = 0; k < num_devices; ++k) {
    const int i = schedule.group_of(k);
    result.weights(k) = alpha(k) / alpha_sum[static_cast<std::size_t>(i - 1)];
  }
  result.global_models.resize(static_cast<std::size_t>(num_groups));
  result.diagnostics.resize(static_cast<std::size_t>(num_groups));
  if (audit != nullptr) {
    audit->weighted_locals.assign(static_cast<std::size_t>(num_groups), {});
    audit->interference.assign(static_cast<std::size_t>(num_groups), {});
    audit->noise.assign(static_cast<std::size_t>(num_groups), {});
    audit->output.assign(static_cast<std::size_t>(num_groups), {});
  }

  // Zero-padded normalized transmissions over the full window, needed by the
  // literal path and by the interference slices.
  std::vector<Eigen::VectorXcd> padded(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    const auto& pk = packed[static_cast<std::size_t>(k)];
    Eigen::VectorXcd full = Eigen::VectorXcd::Zero(window);
    full.segment(pk.placement_offset, pk.values.size()) =
        pk.values / norm[static_cast<std::size_t>(k)];
    padded[static_cast<std::size_t>(k)] = std::move(full);
  }

  // Received vectors per channel use for the literal path.
  Eigen::MatrixXcd received;
  if (per_channel_use) {
    received = noise_raw;
    for (int k = 0; k < num_devices; ++k) {
      received.noalias() += channels.h[static_cast<std::size_t>(k)] *
                            (weight[static_cast<std::size_t>(k)] *
                             padded[static_cast<std::size_t>(k)].transpose());
    }
  }

  for (int i = 1; i <= num_groups; ++i) {
    const int m = schedule.assigned_model(i, round_t);
    const int dim = model_dims[static_cast<std::size_t>(m - 1)];
    const int len = packed_length(dim);
    const int offset = placement_offsets[static_cast<std::size_t>(i - 1)];
    const auto& w = state.w[static_cast<std::size_t>(i - 1)];
    const double inv_alpha = 1.0 / alpha_sum[static_cast<std::size_t>(i - 1)];

    Eigen::VectorXcd signal = Eigen::VectorXcd::Zero(len);
    for (int k : schedule.group(i)) {
      signal += alpha(k) * packed[static_cast<std::size_t>(k)].values;
    }

    Eigen::VectorXcd interference = Eigen::VectorXcd::Zero(len);
    for (int j = 1; j <= num_groups; ++j) {
      if (j == i) continue;
      for (int q : schedule.group(j)) {
        const Complex coeff =
            w.dot(channels.h[static_cast<std::size_t>(q)]) *
            weight[static_cast<std::size_t>(q)];
        interference +=
            coeff * padded[static_cast<std::size_t>(q)].segment(offset, len);
      }
    }

    Eigen::VectorXcd noise(len);
    for (int l = 0; l < len; ++l) noise(l) = w.dot(noise_raw.col(offset + l));

    Eigen::VectorXcd z;
    if (per_channel_use) {
      z.resize(len);
      for (int l = 0; l < len; ++l) z(l) = w.dot(received.col(offset + l));
    } else {
      z = signal + interference + noise;
    }

    PackedModel update;
    update.values = inv_alpha * z;
    update.source_dim = dim;
    update.placement_offset = offset;
    const std::vector<double> real = unpack(update);
    result.global_models[static_cast<std::size_t>(m - 1)] =
        Eigen::Map<const Eigen::VectorXd>(real.data(),
                                          static_cast<Eigen::Index>(real.size()));

    auto& diag = result.diagnostics[static_cast<std::size_t>(i - 1)];
    diag.signal_power = signal.squaredNorm();
    diag.interference_power = interference.squaredNorm();
    diag.noise_power = noise.squaredNorm();

    if (audit != nullptr) {
      audit->weighted_locals[static_cast<std::size_t>(i - 1)] =
          inv_alpha * signal;
      audit->interference[static_cast<std::size_t>(i - 1)] =
          inv_alpha * interference;
      audit->noise[static_cast<std::size_t>(i - 1)] = inv_alpha * noise;
      audit->output[static_cast<std::size_t>(i - 1)] = update.values;
    }
  }
  return result;
}

AggregationResult ideal_aggregate(const std::vector<Eigen::VectorXd>& locals,
                                  const Schedule& schedule, int round_t,
                                  std::span<const int> model_dims) {
  AggregationResult result;
  result.weights = Eigen::VectorXd::Zero(schedule.num_devices);
  result.global_models.resize(static_cast<std::size_t>(schedule.num_models));
  result.diagnostics.resize(static_cast<std::size_t>(schedule.num_models));
  const double weight = 1.0 / static_cast<double>(schedule.group_size());
  for (int i = 1; i <= schedule.num_models; ++i) {
    const int m = schedule.assigned_model(i, round_t);
    const int dim = model_dims[static_cast<std::size_t>(m - 1)];
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    for (int k : schedule.group(i)) {
      mean += locals[static_cast<std::size_t>(k)];
      result.weights(k) = weight;
    }
    mean *= weight;
    result.global_models[static_cast<std::size_t>(m - 1)] = std::move(mean);
    result.diagnostics[static_cast<std::size_t>(i - 1)].signal_power =
        result.global_models[static_cast<std::size_t>(m - 1)].squaredNorm();
  }
  return result;
}

}  // namespace mmfl

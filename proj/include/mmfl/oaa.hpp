// SPDX-License-Identifier: Apache-2.0
//
// Physical aggregation path. Real parameter vectors are packed into complex
// vectors (first half -> real parts, second half -> imaginary parts),
// zero-padded into a shared window of D_max/2 channel uses at a per-group
// random placement, transmitted simultaneously by all K devices with
// phase-aligned transmit weights, beamformed and rescaled at the receiver,
// and unpacked back to real vectors. Cross-group terms enter through the
// overlap of the interferers' windows with the group being decoded.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mmfl/beamform.hpp"
#include "mmfl/channel.hpp"
#include "mmfl/rng.hpp"
#include "mmfl/scheduler.hpp"

namespace mmfl {

/// Complex-packed parameter vector. source_dim is the original real
/// dimension; odd dimensions are padded with one trailing zero before the
/// split and the pad is stripped again on unpack.
struct PackedModel {
  Eigen::VectorXcd values;
  int source_dim = 0;
  int placement_offset = 0;  // complex positions into the shared window
};

/// Number of complex symbols used by a D-dimensional real vector.
inline int packed_length(int dim) { return (dim + 1) / 2; }

/// Strict packing: values[l] = theta[l] + j theta[D/2 + l]. Throws
/// DomainError for odd D; padding is the caller's job.
PackedModel pack_complex(std::span<const double> theta);

/// Packing with the odd-dimension pad applied automatically.
PackedModel pack_model(std::span<const double> theta);

/// Exact inverse of pack_model: [Re; Im] with the pad stripped.
std::vector<double> unpack(const PackedModel& packed);

/// One shared placement offset per group for round t: uniform over
/// {0, ..., L_max - L_m} complex positions, 0 when the model fills the
/// window. All devices of a group use the same offset.
std::vector<int> place_models(const Schedule& schedule, int round_t,
                              std::span<const int> model_dims, int d_max,
                              Rng& rng);

/// Noisy downlink broadcast: each of the receivers gets
/// theta + N(0, sigma2_dl I) with independent noise per device.
std::vector<Eigen::VectorXd> downlink_broadcast(const Eigen::VectorXd& theta,
                                                double sigma2_dl,
                                                int num_receivers, Rng& rng);

struct GroupDiagnostics {
  double signal_power = 0.0;        // ||sum_k alpha_k theta~_k||^2
  double interference_power = 0.0;  // cross-group term power, pre-rescale
  double noise_power = 0.0;         // post-beamforming noise power, pre-rescale
};

struct AggregationResult {
  std::vector<Eigen::VectorXd> global_models;  // M, indexed by model - 1
  Eigen::VectorXd weights;                     // K aggregation weights rho_k
  std::vector<GroupDiagnostics> diagnostics;   // per group
};

/// Per-group complex-domain decomposition of one aggregation, all terms
/// scaled like the output so they sum to it exactly.
struct UplinkAudit {
  std::vector<Eigen::VectorXcd> weighted_locals;  // sum_k rho_k theta~_k
  std::vector<Eigen::VectorXcd> interference;     // cross-group term / sum alpha
  std::vector<Eigen::VectorXcd> noise;            // beamformed noise / sum alpha
  std::vector<Eigen::VectorXcd> output;           // complex global update
};

/// Over-the-air uplink aggregation of one round. locals[k] is device k's
/// updated local model (dimension of the model its group trains in round t).
/// The default path evaluates the post-beamforming signal in closed form;
/// per_channel_use = true instead synthesizes the N-dimensional received
/// vector for every channel use and applies the beamformers literally. Both
/// paths consume the identical noise draws and agree to numerical precision.
AggregationResult uplink_aggregate(
    const std::vector<Eigen::VectorXd>& locals, const BeamformerState& state,
    const ChannelSet& channels, const Schedule& schedule, int round_t,
    std::span<const int> placement_offsets, std::span<const int> model_dims,
    int d_max, double sigma2_ul, Rng& rng, bool per_channel_use = false,
    UplinkAudit* audit = nullptr);

/// Error-free baseline: per-group plain average of the exact local models
/// (uniform weights, the equal-effective-channel limit of the OAA update).
AggregationResult ideal_aggregate(const std::vector<Eigen::VectorXd>& locals,
                                  const Schedule& schedule, int round_t,
                                  std::span<const int> model_dims);

}  // namespace mmfl

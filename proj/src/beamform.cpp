// SPDX-License-Identifier: Apache-2.0
#include "mmfl/beamform.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXcd own_group_covariance(const Eigen::VectorXd& p,
                                      const NormalizedChannels& nch,
                                      const Schedule& schedule, int group_i) {
  const auto n = nch.f.front().size();
  Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(n, n);
  for (int k : schedule.group(group_i)) {
    if (p(k) > 0.0) b.noalias() += p(k) * nch.f[k] * nch.f[k].adjoint();
  }
  return b;
}

Eigen::VectorXcd dominant_eigenvector(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  if (es.info() != Eigen::Success) {
    throw DegenerateError("beamform: Hermitian eigendecomposition failed");
  }
  Eigen::VectorXcd v = es.eigenvectors().col(m.rows() - 1);
  v.normalize();
  return v;
}

}  // namespace

NormalizedChannels NormalizedChannels::build(const ChannelSet& channels,
                                             int d_max) {
  if (d_max < 1) throw DomainError("NormalizedChannels: D_max must be >= 1");
  NormalizedChannels out;
  out.sigma2_u_tilde = channels.sigma2_ul * static_cast<double>(d_max) / 2.0;
  if (!(out.sigma2_u_tilde > 0.0)) {
    throw DomainError("NormalizedChannels: sigma2_ul * D_max / 2 must be > 0");
  }
  const double inv = 1.0 / std::sqrt(out.sigma2_u_tilde);
  out.f.reserve(channels.h.size());
  for (const auto& hk : channels.h) out.f.push_back(inv * hk);
  return out;
}

Eigen::MatrixXd beam_gains(const BeamformerState& state,
                           const NormalizedChannels& nch) {
  const int m = static_cast<int>(state.w.size());
  const int k = static_cast<int>(nch.f.size());
  Eigen::MatrixXd g(m, k);
  for (int i = 0; i < m; ++i) {
    for (int q = 0; q < k; ++q) {
      g(i, q) = std::norm(nch.f[q].dot(state.w[i]));
    }
  }
  return g;
}

double objective_p2(const BeamformerState& state, const ChannelSet& channels,
                    const Schedule& schedule, int d_max) {
  const double sigma2_tilde =
      channels.sigma2_ul * static_cast<double>(d_max) / 2.0;
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
    double amp_sum = 0.0;
    for (int k : schedule.group(i)) {
      amp_sum += std::sqrt(state.p(k)) * std::abs(channels.h[k].dot(w));
    }
    if (!(amp_sum > 0.0)) {
      throw DegenerateError("objective_p2: group " + std::to_string(i) +
                            " has zero received amplitude");
    }
    total += (interference + sigma2_tilde) / (amp_sum * amp_sum);
  }
  return total;
}

double objective_p3(const BeamformerState& state,
                    const NormalizedChannels& nch, const Schedule& schedule) {
  double total = 0.0;
  for (int i = 1; i <= schedule.num_models; ++i) {
    const auto& w = state.w[static_cast<std::size_t>(i - 1)];
    double interference = 0.0;
    for (int j = 1; j <= schedule.num_models; ++j) {
      if (j == i) continue;
      for (int q : schedule.group(j)) {
        interference += state.p(q) * std::norm(nch.f[q].dot(w));
      }
    }
    double signal = 0.0;
    for (int k : schedule.group(i)) {
      signal += state.p(k) * std::norm(nch.f[k].dot(w));
    }
    if (!(signal > 0.0)) {
      throw DegenerateError("objective_p3: group " + std::to_string(i) +
                            " has zero received signal power");
    }
    total += (interference + 1.0) / signal;
  }
  return total;
}

Eigen::VectorXcd update_w(int group_i, const Eigen::VectorXd& p,
                          const NormalizedChannels& nch,
                          const Schedule& schedule) {
  const auto n = nch.f.front().size();
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(n, n);
  for (int j = 1; j <= schedule.num_models; ++j) {
    if (j == group_i) continue;
    for (int q : schedule.group(j)) {
      if (p(q) > 0.0) a.noalias() += p(q) * nch.f[q] * nch.f[q].adjoint();
    }
  }
  Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(n, n);
  for (int k : schedule.group(group_i)) {
    if (p(k) > 0.0) b.noalias() += p(k) * nch.f[k] * nch.f[k].adjoint();
  }
  if (!(b.norm() > 0.0)) {
    throw DegenerateError("update_w: group " + std::to_string(group_i) +
                          " has no transmitting device");
  }

  // min w^H A w / w^H B w  ==  max w^H B w / w^H A w with A positive
  // definite. Substituting u = L^H w for A = L L^H turns the right-hand side
  // into a plain Hermitian Rayleigh quotient of C = L^-1 B L^-H.
  Eigen::LLT<Eigen::MatrixXcd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw DegenerateError("update_w: Cholesky factorization failed");
  }
  const Eigen::MatrixXcd l = llt.matrixL();
  Eigen::MatrixXcd c = l.triangularView<Eigen::Lower>().solve(b);
  c = l.triangularView<Eigen::Lower>()
          .solve(c.adjoint())
          .adjoint();  // L^-1 B L^-H
  c = 0.5 * (c + c.adjoint());  // strip numeric skew before eigensolving

  const Eigen::VectorXcd u = dominant_eigenvector(c);
  Eigen::VectorXcd w = l.adjoint().triangularView<Eigen::Upper>().solve(u);
  w.normalize();
  return w;
}

Eigen::VectorXd update_p_group(int group_i, const BeamformerState& state,
                               const NormalizedChannels& nch,
                               const Schedule& schedule,
                               const Eigen::VectorXd& caps) {
  const int m = schedule.num_models;
  const auto& members = schedule.group(group_i);
  const Eigen::MatrixXd g = beam_gains(state, nch);

  // Signal levels g_jj^T p_j of the other groups, needed in the denominators.
  std::vector<double> level(static_cast<std::size_t>(m) + 1, 0.0);
  for (int j = 1; j <= m; ++j) {
    if (j == group_i) continue;
    double s = 0.0;
    for (int q : schedule.group(j)) s += g(j - 1, q) * state.p(q);
    if (!(s > 0.0)) {
      throw DegenerateError("update_p_group: group " + std::to_string(j) +
                            " has zero signal level");
    }
    level[static_cast<std::size_t>(j)] = s;
  }

  // Interference received by group i plus noise.
  double received = 1.0;
  for (int j = 1; j <= m; ++j) {
    if (j == group_i) continue;
    for (int q : schedule.group(j)) received += g(group_i - 1, q) * state.p(q);
  }

  // a_min is the signal level at which the benefit to this group balances
  // the interference this group causes elsewhere; k_prime attains it
  // (ties broken toward the lowest device index).
  double a_min = kInf;
  int k_prime = members.front();
  for (int k : members) {
    double caused = 0.0;
    for (int j = 1; j <= m; ++j) {
      if (j == group_i) continue;
      caused += g(j - 1, k) / level[static_cast<std::size_t>(j)];
    }
    const double candidate =
        caused > 0.0 ? std::sqrt(received / caused * g(group_i - 1, k)) : kInf;
    if (candidate < a_min) {
      a_min = candidate;
      k_prime = k;
    }
  }

  Eigen::VectorXd p_group(members.size());
  double cap_level = 0.0;
  for (std::size_t idx = 0; idx < members.size(); ++idx) {
    p_group(static_cast<Eigen::Index>(idx)) = caps(members[idx]);
    cap_level += g(group_i - 1, members[idx]) * caps(members[idx]);
  }
  if (a_min < kInf) {
    const double excess = std::max(cap_level - a_min, 0.0);
    for (std::size_t idx = 0; idx < members.size(); ++idx) {
      if (members[idx] != k_prime) continue;
      const double cap = caps(k_prime);
      const double own_gain = g(group_i - 1, k_prime);
      double value;
      if (own_gain > 0.0) {
        value = std::min(std::max(cap - excess / own_gain, 0.0), cap);
      } else {
        // Zero own gain: the device only interferes, so shed its power
        // whenever the cap level overshoots the balancing target.
        value = excess > 0.0 ? 0.0 : cap;
      }
      p_group(static_cast<Eigen::Index>(idx)) = value;
    }
  }
  return p_group;
}

BcdResult bcd_solve(const ChannelSet& channels, const Schedule& schedule,
                    const Eigen::VectorXd& caps, int d_max,
                    std::optional<BeamformerState> init,
                    const BcdOptions& options) {
  if (!(options.tol > 0.0) || options.max_iter < 1) {
    throw ConfigError("bcd_solve: tol must be > 0 and max_iter >= 1");
  }
  const NormalizedChannels nch = NormalizedChannels::build(channels, d_max);
  const int m = schedule.num_models;

  BcdResult result;
  if (init.has_value()) {
    result.state = std::move(*init);
  } else {
    result.state.p = caps;
    result.state.w.resize(static_cast<std::size_t>(m));
    for (int i = 1; i <= m; ++i) {
      result.state.w[static_cast<std::size_t>(i - 1)] = dominant_eigenvector(
          own_group_covariance(caps, nch, schedule, i));
    }
  }
  BeamformerState& state = result.state;

  double obj = objective_p3(state, nch, schedule);
  result.trace.push_back(
      {0, obj, objective_p2(state, channels, schedule, d_max)});

  for (int it = 1; it <= options.max_iter; ++it) {
    const double prev = obj;

    for (int i = 1; i <= m; ++i) {
      Eigen::VectorXcd w_old = state.w[static_cast<std::size_t>(i - 1)];
      state.w[static_cast<std::size_t>(i - 1)] =
          update_w(i, state.p, nch, schedule);
      const double candidate = objective_p3(state, nch, schedule);
      if (candidate > obj) {
        state.w[static_cast<std::size_t>(i - 1)] = std::move(w_old);
        ++result.reverted_updates;
      } else {
        obj = candidate;
      }
    }

    for (int i = 1; i <= m; ++i) {
      const auto& members = schedule.group(i);
      Eigen::VectorXd p_old(members.size());
      for (std::size_t idx = 0; idx < members.size(); ++idx) {
        p_old(static_cast<Eigen::Index>(idx)) = state.p(members[idx]);
      }
      const Eigen::VectorXd p_new =
          update_p_group(i, state, nch, schedule, caps);
      for (std::size_t idx = 0; idx < members.size(); ++idx) {
        state.p(members[idx]) = p_new(static_cast<Eigen::Index>(idx));
      }
      const double candidate = objective_p3(state, nch, schedule);
      if (candidate > obj) {
        for (std::size_t idx = 0; idx < members.size(); ++idx) {
          state.p(members[idx]) = p_old(static_cast<Eigen::Index>(idx));
        }
        ++result.reverted_updates;
      } else {
        obj = candidate;
      }
    }

    result.iterations = it;
    result.trace.push_back(
        {it, obj, objective_p2(state, channels, schedule, d_max)});

    const double scale = std::max(std::abs(prev), 1e-300);
    if ((prev - obj) / scale < options.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

BeamformerState snr_max_beamformer(const ChannelSet& channels,
                                   const Eigen::VectorXd& caps, int d_max) {
  const NormalizedChannels nch = NormalizedChannels::build(channels, d_max);
  const auto n = nch.f.front().size();
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t k = 0; k < nch.f.size(); ++k) {
    r.noalias() += caps(static_cast<Eigen::Index>(k)) * nch.f[k] *
                   nch.f[k].adjoint();
  }
  BeamformerState state;
  state.p = caps;
  state.w.push_back(dominant_eigenvector(r));
  return state;
}

}  // namespace mmfl

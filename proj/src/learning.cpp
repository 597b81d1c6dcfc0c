// SPDX-License-Identifier: Apache-2.0
#include "mmfl/learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmfl/errors.hpp"

namespace mmfl {

namespace {

/// Numerically stable softmax of a logit vector, in place.
void softmax_inplace(Eigen::VectorXd& logits) {
  const double peak = logits.maxCoeff();
  logits = (logits.array() - peak).exp();
  logits /= logits.sum();
}

struct LogisticViews {
  Eigen::Map<const Eigen::MatrixXd> weights;  // C x b, row-major by class
  Eigen::Map<const Eigen::VectorXd> bias;     // C
};

LogisticViews logistic_views(const Model& model, const Eigen::VectorXd& theta) {
  const int c = model.num_classes;
  const int b = model.feature_dim;
  return {Eigen::Map<const Eigen::MatrixXd>(theta.data(), c, b),
          Eigen::Map<const Eigen::VectorXd>(theta.data() + c * b, c)};
}

}  // namespace

int Model::dim() const {
  switch (kind) {
    case ModelKind::kLogistic:
      return num_classes * (feature_dim + 1);
    case ModelKind::kMlp:
      return hidden_units * (feature_dim + 1) +
             num_classes * (hidden_units + 1);
  }
  return 0;
}

LossGrad sample_loss_grad(const Model& model, const Eigen::VectorXd& theta,
                          const Dataset& data, std::span<const int> batch) {
  if (theta.size() != model.dim()) {
    throw DomainError("sample_loss_grad: theta has dimension " +
                      std::to_string(theta.size()) + ", model expects " +
                      std::to_string(model.dim()));
  }
  if (model.feature_dim != data.feature_dim() ||
      model.num_classes != data.num_classes) {
    throw DomainError("sample_loss_grad: model/data shape mismatch");
  }
  if (batch.empty()) {
    throw DomainError("sample_loss_grad: empty batch");
  }

  const int c = model.num_classes;
  const int b = model.feature_dim;
  LossGrad out;
  out.grad = Eigen::VectorXd::Zero(theta.size());
  double loss = 0.0;

  if (model.kind == ModelKind::kLogistic) {
    const auto views = logistic_views(model, theta);
    Eigen::Map<Eigen::MatrixXd> grad_w(out.grad.data(), c, b);
    Eigen::Map<Eigen::VectorXd> grad_b(out.grad.data() + c * b, c);
    for (int s : batch) {
      const Eigen::VectorXd x = data.features.row(s).transpose();
      Eigen::VectorXd prob = views.weights * x + views.bias;
      const double true_logit = prob(data.labels[static_cast<std::size_t>(s)]);
      const double peak = prob.maxCoeff();
      loss += std::log((prob.array() - peak).exp().sum()) + peak - true_logit;
      softmax_inplace(prob);
      prob(data.labels[static_cast<std::size_t>(s)]) -= 1.0;
      grad_w.noalias() += prob * x.transpose();
      grad_b += prob;
    }
  } else {
    const int h = model.hidden_units;
    Eigen::Map<const Eigen::MatrixXd> w1(theta.data(), h, b);
    Eigen::Map<const Eigen::VectorXd> b1(theta.data() + h * b, h);
    Eigen::Map<const Eigen::MatrixXd> w2(theta.data() + h * (b + 1), c, h);
    Eigen::Map<const Eigen::VectorXd> b2(theta.data() + h * (b + 1) + c * h, c);
    Eigen::Map<Eigen::MatrixXd> g_w1(out.grad.data(), h, b);
    Eigen::Map<Eigen::VectorXd> g_b1(out.grad.data() + h * b, h);
    Eigen::Map<Eigen::MatrixXd> g_w2(out.grad.data() + h * (b + 1), c, h);
    Eigen::Map<Eigen::VectorXd> g_b2(out.grad.data() + h * (b + 1) + c * h, c);
    for (int s : batch) {
      const Eigen::VectorXd x = data.features.row(s).transpose();
      const Eigen::VectorXd hidden = ((w1 * x + b1).array().tanh()).matrix();
      Eigen::VectorXd prob = w2 * hidden + b2;
      const double true_logit = prob(data.labels[static_cast<std::size_t>(s)]);
      const double peak = prob.maxCoeff();
      loss += std::log((prob.array() - peak).exp().sum()) + peak - true_logit;
      softmax_inplace(prob);
      prob(data.labels[static_cast<std::size_t>(s)]) -= 1.0;
      g_w2.noalias() += prob * hidden.transpose();
      g_b2 += prob;
      const Eigen::VectorXd back =
          (w2.transpose() * prob).array() * (1.0 - hidden.array().square());
      g_w1.noalias() += back * x.transpose();
      g_b1 += back;
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss = loss * inv + 0.5 * model.l2_reg * theta.squaredNorm();
  out.grad = out.grad * inv + model.l2_reg * theta;
  return out;
}

Eigen::VectorXd local_sgd(const Model& model, const Eigen::VectorXd& theta_start,
                          const Dataset& data, std::span<const int> local_indices,
                          int num_steps, int batch_size, double eta, Rng& rng) {
  if (num_steps < 1 || !(eta >= 0.0)) {
    throw DomainError("local_sgd: need J >= 1 and eta >= 0");
  }
  if (batch_size < 1 ||
      batch_size > static_cast<int>(local_indices.size())) {
    throw DomainError("local_sgd: batch size must be in [1, |local data|]");
  }
  Eigen::VectorXd theta = theta_start;
  std::vector<int> order(local_indices.begin(), local_indices.end());
  std::size_t pos = order.size();  // forces a shuffle before the first batch
  std::vector<int> batch;
  for (int step = 0; step < num_steps; ++step) {
    if (pos >= order.size()) {
      rng.shuffle(order);
      pos = 0;
    }
    const std::size_t take =
        std::min(static_cast<std::size_t>(batch_size), order.size() - pos);
    batch.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                 order.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
    const LossGrad lg = sample_loss_grad(model, theta, data, batch);
    theta -= eta * lg.grad;
  }
  return theta;
}

double test_accuracy(const Model& model, const Eigen::VectorXd& theta,
                     const Dataset& test) {
  const int n = test.num_samples();
  if (n == 0) return 0.0;
  int correct = 0;
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd x = test.features.row(s).transpose();
    Eigen::VectorXd logits;
    if (model.kind == ModelKind::kLogistic) {
      const auto views = logistic_views(model, theta);
      logits = views.weights * x + views.bias;
    } else {
      const int h = model.hidden_units;
      const int b = model.feature_dim;
      const int c = model.num_classes;
      Eigen::Map<const Eigen::MatrixXd> w1(theta.data(), h, b);
      Eigen::Map<const Eigen::VectorXd> b1(theta.data() + h * b, h);
      Eigen::Map<const Eigen::MatrixXd> w2(theta.data() + h * (b + 1), c, h);
      Eigen::Map<const Eigen::VectorXd> b2(theta.data() + h * (b + 1) + c * h,
                                           c);
      logits = w2 * ((w1 * x + b1).array().tanh()).matrix() + b2;
    }
    int best = 0;
    for (int j = 1; j < logits.size(); ++j) {
      if (logits(j) > logits(best)) best = j;  // ties keep the lowest class
    }
    if (best == test.labels[static_cast<std::size_t>(s)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Dataset make_synthetic(int num_classes, int feature_dim, int num_samples,
                       double margin, Rng& rng) {
  if (num_classes < 2 || num_samples < num_classes) {
    throw ConfigError("make_synthetic: need C >= 2 and S >= C");
  }
  Eigen::MatrixXd means(num_classes, feature_dim);
  for (int c = 0; c < num_classes; ++c) {
    Eigen::VectorXd dir(feature_dim);
    for (int d = 0; d < feature_dim; ++d) dir(d) = rng.normal();
    const double n = dir.norm();
    if (n > 0.0) dir /= n;
    means.row(c) = margin * dir.transpose();
  }
  // Anisotropic cluster noise, stds ramping geometrically up to kSpread.
  // Ill-conditioned class covariances keep gradient training from finding
  // the discriminant direction in a handful of steps, which is what makes
  // round budgets matter at desk scale.
  constexpr double kSpread = 6.0;
  Eigen::VectorXd noise_std(feature_dim);
  for (int d = 0; d < feature_dim; ++d) {
    const double frac =
        feature_dim > 1 ? static_cast<double>(d) / (feature_dim - 1) : 0.0;
    noise_std(d) = std::pow(kSpread, frac);
  }
  Dataset data;
  data.num_classes = num_classes;
  data.features.resize(num_samples, feature_dim);
  data.labels.resize(static_cast<std::size_t>(num_samples));
  for (int s = 0; s < num_samples; ++s) {
    const int label = s % num_classes;
    data.labels[static_cast<std::size_t>(s)] = label;
    for (int d = 0; d < feature_dim; ++d) {
      data.features(s, d) = means(label, d) + noise_std(d) * rng.normal();
    }
  }
  return data;
}

std::vector<std::vector<int>> partition_evenly(int num_samples,
                                               int num_devices, Rng& rng) {
  if (num_devices < 1 || num_samples % num_devices != 0) {
    throw ConfigError("partition_evenly: device count " +
                      std::to_string(num_devices) +
                      " does not evenly divide " +
                      std::to_string(num_samples) + " samples");
  }
  std::vector<int> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int shard = num_samples / num_devices;
  std::vector<std::vector<int>> parts(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(k) * shard;
    parts[static_cast<std::size_t>(k)].assign(first, first + shard);
    std::sort(parts[static_cast<std::size_t>(k)].begin(),
              parts[static_cast<std::size_t>(k)].end());
  }
  return parts;
}

ConvexityConstants logistic_constants(const Model& model, const Dataset& data) {
  const int s = data.num_samples();
  const int b = data.feature_dim();
  Eigen::MatrixXd extended(s, b + 1);
  extended.leftCols(b) = data.features;
  extended.col(b).setOnes();
  const Eigen::MatrixXd gram =
      extended.transpose() * extended / static_cast<double>(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  ConvexityConstants out;
  out.strong_convexity = model.l2_reg;
  out.smoothness = model.l2_reg + 0.25 * es.eigenvalues().maxCoeff();
  return out;
}

Eigen::VectorXd minimize_full_batch(const Model& model, const Dataset& data,
                                    int max_iters, double grad_tol) {
  std::vector<int> all(static_cast<std::size_t>(data.num_samples()));
  std::iota(all.begin(), all.end(), 0);
  const ConvexityConstants k = logistic_constants(model, data);
  const double step = 1.0 / k.smoothness;
  // Nesterov momentum for the strongly convex case when lambda > 0,
  // plain gradient descent otherwise.
  const double momentum =
      k.strong_convexity > 0.0
          ? (std::sqrt(k.smoothness) - std::sqrt(k.strong_convexity)) /
                (std::sqrt(k.smoothness) + std::sqrt(k.strong_convexity))
          : 0.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.dim());
  Eigen::VectorXd lookahead = theta;
  for (int it = 0; it < max_iters; ++it) {
    const LossGrad lg = sample_loss_grad(model, lookahead, data, all);
    if (lg.grad.norm() < grad_tol) {
      theta = lookahead;
      break;
    }
    const Eigen::VectorXd next = lookahead - step * lg.grad;
    lookahead = next + momentum * (next - theta);
    theta = next;
  }
  return theta;
}

}  // namespace mmfl

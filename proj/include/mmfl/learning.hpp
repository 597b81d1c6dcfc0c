// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale models and training: multinomial logistic regression (optionally
// L2-regularized, which makes the loss strongly convex) and a one-hidden-layer
// tanh MLP, plus mini-batch SGD, dataset generation/ingestion and accuracy
// measurement.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "mmfl/rng.hpp"

namespace mmfl {

struct Dataset {
  Eigen::MatrixXd features;  // S x b, one sample per row
  std::vector<int> labels;   // S entries in [0, C)
  int num_classes = 0;

  int num_samples() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

enum class ModelKind { kLogistic, kMlp };

struct Model {
  ModelKind kind = ModelKind::kLogistic;
  int feature_dim = 0;
  int num_classes = 0;
  int hidden_units = 0;  // MLP only
  double l2_reg = 0.0;

  /// Parameter count: C (b + 1) for logistic, H (b + 1) + C (H + 1) for MLP.
  int dim() const;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean cross-entropy over the batch plus (l2_reg / 2) ||theta||^2, and its
/// gradient with respect to theta.
LossGrad sample_loss_grad(const Model& model, const Eigen::VectorXd& theta,
                          const Dataset& data, std::span<const int> batch);

/// J steps of mini-batch SGD, theta <- theta - (eta / |B|) sum grad.
/// Batches are drawn without replacement within an epoch and the order is
/// reshuffled at every epoch boundary; a trailing batch may be smaller.
Eigen::VectorXd local_sgd(const Model& model, const Eigen::VectorXd& theta_start,
                          const Dataset& data, std::span<const int> local_indices,
                          int num_steps, int batch_size, double eta, Rng& rng);

/// Fraction of argmax-correct predictions; ties resolve to the lowest class.
double test_accuracy(const Model& model, const Eigen::VectorXd& theta,
                     const Dataset& test);

/// Gaussian class clusters with means margin * (random unit direction) and
/// identity covariance; labels are balanced round-robin.
Dataset make_synthetic(int num_classes, int feature_dim, int num_samples,
                       double margin, Rng& rng);

/// Random even split of sample indices across devices.
/// Throws ConfigError when K does not divide the sample count.
std::vector<std::vector<int>> partition_evenly(int num_samples,
                                               int num_devices, Rng& rng);

/// Reads a big-endian IDX image/label file pair; pixel values are scaled to
/// [0, 1]. Throws FormatError with byte offsets on malformed input.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

/// Smoothness and strong-convexity constants of the regularized logistic
/// loss on the given data: lambda = l2_reg and
/// L = l2_reg + (1/4) lambda_max(X~^T X~ / S) with a bias column appended.
struct ConvexityConstants {
  double smoothness = 0.0;       // L
  double strong_convexity = 0.0;  // lambda
};
ConvexityConstants logistic_constants(const Model& model, const Dataset& data);

/// Deterministic full-batch minimizer (Nesterov accelerated gradient for the
/// strongly convex case); used to obtain reference optima.
Eigen::VectorXd minimize_full_batch(const Model& model, const Dataset& data,
                                    int max_iters = 200000,
                                    double grad_tol = 1e-10);

}  // namespace mmfl

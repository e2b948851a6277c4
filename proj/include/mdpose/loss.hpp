#pragma once

#include <Eigen/Core>
#include <vector>

#include "mdpose/fbi.hpp"
#include "mdpose/standardize.hpp"

namespace mdpose {

// Hard-sample-weighted regression loss. With L0 the per-sample mean squared
// error in standardized coordinates:
//
//   loss = L0 + epsilon * (L0 + alpha)^2 * L0 * exp(L0 / (1 - alpha))
//
// where 1 - alpha tracks the mean of L0 over the training set. The exponent
// argument is clamped at 50 to keep outliers finite; the clamped branch
// still grows polynomially, so the loss stays strictly increasing in L0.
struct WeightedLossConfig {
  double epsilon = 0.001;
  double alpha = 0.5;
  Standardizer normalization_stats;  // the space L0 is evaluated in

  void validate() const;
};

inline constexpr double kExpClamp = 50.0;

// Per-sample mean squared error over all coordinates; inputs standardized.
double l0(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt);

struct WeightedLossResult {
  double loss = 0.0;
  double dloss_dl0 = 0.0;  // analytic derivative
  bool clamped = false;
};

WeightedLossResult weighted_loss(double l0_value, const WeightedLossConfig& cfg);

struct AlphaEstimate {
  double alpha = 0.5;
  double mean_l0 = 0.0;
  bool clamped = false;
};

// alpha = 1 - mean(L0), clamped into [0.01, 0.99]. Throws on empty input.
AlphaEstimate estimate_alpha(const std::vector<double>& per_sample_l0);

struct FbiCeResult {
  double loss = 0.0;
  Eigen::MatrixXd d_logits;  // m x 3, standard softmax/cross-entropy form
  bool clamped = false;      // a true-class probability hit the 1e-12 floor
};

// Mean over bones of -log p(true class).
FbiCeResult fbi_ce_loss(const Eigen::MatrixXd& class_probs, const FbiMatrix& gt);

}  // namespace mdpose

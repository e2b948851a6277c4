#include "mdpose/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace mdpose {

void WeightedLossConfig::validate() const {
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("loss: epsilon must be >= 0");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("loss: alpha must be in (0, 1)");
  }
  for (int i = 0; i < normalization_stats.stddev.size(); ++i) {
    if (!(normalization_stats.stddev(i) > 0.0)) {
      throw std::invalid_argument("loss: normalization stddev must be > 0");
    }
  }
}

double l0(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("l0: length mismatch");
  }
  if (pred.size() == 0) {
    throw std::invalid_argument("l0: empty vectors");
  }
  return (pred - gt).squaredNorm() / static_cast<double>(pred.size());
}

WeightedLossResult weighted_loss(double l0_value, const WeightedLossConfig& cfg) {
  cfg.validate();
  if (!(l0_value >= 0.0)) {
    throw std::invalid_argument("weighted_loss: l0 must be >= 0");
  }
  WeightedLossResult r;
  const double a = cfg.alpha;
  const double t = l0_value / (1.0 - a);
  r.clamped = t > kExpClamp;
  const double e = std::exp(r.clamped ? kExpClamp : t);
  const double s = l0_value + a;
  const double l1 = s * s * l0_value * e;
  r.loss = l0_value + cfg.epsilon * l1;
  // In the clamped branch the exponential is constant in L0.
  double dl1 = e * (2.0 * s * l0_value + s * s);
  if (!r.clamped) {
    dl1 += e * s * s * l0_value / (1.0 - a);
  }
  r.dloss_dl0 = 1.0 + cfg.epsilon * dl1;
  return r;
}

AlphaEstimate estimate_alpha(const std::vector<double>& per_sample_l0) {
  if (per_sample_l0.empty()) {
    throw std::invalid_argument("estimate_alpha: empty dataset");
  }
  double sum = 0.0;
  for (double v : per_sample_l0) sum += v;
  AlphaEstimate est;
  est.mean_l0 = sum / static_cast<double>(per_sample_l0.size());
  double raw = 1.0 - est.mean_l0;
  est.clamped = raw < 0.01 || raw > 0.99;
  est.alpha = std::min(0.99, std::max(0.01, raw));
  return est;
}

FbiCeResult fbi_ce_loss(const Eigen::MatrixXd& class_probs, const FbiMatrix& gt) {
  const int m = gt.bone_count();
  if (class_probs.rows() != m || class_probs.cols() != 3) {
    throw std::invalid_argument("fbi_ce_loss: expected m x 3 probabilities");
  }
  for (int i = 0; i < m; ++i) {
    const double sum = class_probs.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-6 || class_probs.row(i).minCoeff() < -1e-12) {
      throw std::invalid_argument("fbi_ce_loss: row " + std::to_string(i) +
                                  " is not a distribution");
    }
  }
  FbiCeResult r;
  r.d_logits.resize(m, 3);
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const int truth = gt.classes[static_cast<std::size_t>(i)];
    double p = class_probs(i, truth);
    if (p < 1e-12) {
      p = 1e-12;
      r.clamped = true;
    }
    total += -std::log(p);
    for (int c = 0; c < 3; ++c) {
      const double y = c == truth ? 1.0 : 0.0;
      r.d_logits(i, c) = (class_probs(i, c) - y) / static_cast<double>(m);
    }
  }
  r.loss = total / static_cast<double>(m);
  return r;
}

}  // namespace mdpose

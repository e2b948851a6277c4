#pragma once

#include <Eigen/Core>

#include <nlohmann/json.hpp>

namespace mdpose {

// Per-coordinate z-scoring fitted on a training split. Near-constant
// coordinates (e.g. the root entries of a root-relative pose) get a unit
// scale so apply/invert stay an exact identity for them.
struct Standardizer {
  Eigen::VectorXd mean, stddev;

  static Standardizer fit(const Eigen::MatrixXd& rows);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd apply_one(const Eigen::VectorXd& v) const;
  Eigen::VectorXd invert_one(const Eigen::VectorXd& v) const;

  int dim() const { return static_cast<int>(mean.size()); }
};

nlohmann::json standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::json& j);

}  // namespace mdpose

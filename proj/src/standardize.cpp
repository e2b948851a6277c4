#include "mdpose/standardize.hpp"

#include <stdexcept>

namespace mdpose {

namespace {
constexpr double kDegenerateStd = 1e-9;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) {
    throw std::invalid_argument("standardizer: need at least one row");
  }
  Standardizer s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::VectorXd var =
      (rows.rowwise() - s.mean.transpose()).array().square().colwise().mean().transpose();
  s.stddev = var.cwiseSqrt();
  for (int i = 0; i < s.stddev.size(); ++i) {
    if (s.stddev(i) < kDegenerateStd) s.stddev(i) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) {
    throw std::invalid_argument("standardizer: dimension mismatch");
  }
  return (rows.rowwise() - mean.transpose()).array().rowwise() /
         stddev.transpose().array();
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) {
    throw std::invalid_argument("standardizer: dimension mismatch");
  }
  return (rows.array().rowwise() * stddev.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

Eigen::VectorXd Standardizer::apply_one(const Eigen::VectorXd& v) const {
  return apply(v.transpose()).transpose();
}

Eigen::VectorXd Standardizer::invert_one(const Eigen::VectorXd& v) const {
  return invert(v.transpose()).transpose();
}

nlohmann::json standardizer_to_json(const Standardizer& s) {
  nlohmann::json mean = nlohmann::json::array();
  nlohmann::json stddev = nlohmann::json::array();
  for (int i = 0; i < s.mean.size(); ++i) {
    mean.push_back(s.mean(i));
    stddev.push_back(s.stddev(i));
  }
  return {{"mean", mean}, {"stddev", stddev}};
}

Standardizer standardizer_from_json(const nlohmann::json& j) {
  Standardizer s;
  const auto& mean = j.at("mean");
  const auto& stddev = j.at("stddev");
  if (mean.size() != stddev.size()) {
    throw std::invalid_argument("standardizer: mean/stddev size mismatch");
  }
  s.mean.resize(static_cast<Eigen::Index>(mean.size()));
  s.stddev.resize(static_cast<Eigen::Index>(stddev.size()));
  for (std::size_t i = 0; i < mean.size(); ++i) {
    s.mean(static_cast<Eigen::Index>(i)) = mean[i].get<double>();
    s.stddev(static_cast<Eigen::Index>(i)) = stddev[i].get<double>();
    if (!(s.stddev(static_cast<Eigen::Index>(i)) > 0.0)) {
      throw std::invalid_argument("standardizer: stddev must be > 0");
    }
  }
  return s;
}

}  // namespace mdpose

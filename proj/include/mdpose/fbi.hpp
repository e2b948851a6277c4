#pragma once

#include <Eigen/Core>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdpose/skeleton.hpp"

namespace mdpose {

// Ternary forward-or-backward bone status: for each oriented bone, whether
// the child joint is nearer the camera than the parent (forward), farther
// (backward), or the bone lies close enough to the image plane to count as
// parallel.

struct FbiMatrix {
  static constexpr int kForward = 0;
  static constexpr int kBackward = 1;
  static constexpr int kParallel = 2;

  std::vector<int> classes;  // one status per bone, row order = topology bone order

  int bone_count() const { return static_cast<int>(classes.size()); }

  Eigen::MatrixXd one_hot() const;        // m x 3, exactly one 1 per row
  Eigen::VectorXd flat_one_hot() const;   // 3m, bone-major

  bool operator==(const FbiMatrix&) const = default;
};

struct FbiLabelConfig {
  // A bone whose |z extent| is below parallel_fraction * bone_length counts
  // as parallel. Zero-length bones are always parallel.
  double parallel_fraction = 0.15;

  void validate() const;
};

FbiMatrix label_fbi(const Pose3D& pose, const SkeletonTopology& topo, const FbiLabelConfig& cfg);

// Fraction of bones whose class matches. The probability overload takes
// argmax per row; ties break toward the lowest class index.
double fbi_accuracy(const FbiMatrix& pred, const FbiMatrix& gt);
double fbi_accuracy(const Eigen::MatrixXd& class_probs, const FbiMatrix& gt);

nlohmann::json fbi_to_json(const FbiMatrix& fbi);                       // [0, 2, 1, ...]
FbiMatrix fbi_from_json(const nlohmann::json& j, int expected_m = -1);

}  // namespace mdpose

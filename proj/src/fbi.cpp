#include "mdpose/fbi.hpp"

#include <cmath>
#include <stdexcept>

namespace mdpose {

Eigen::MatrixXd FbiMatrix::one_hot() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(bone_count(), 3);
  for (int i = 0; i < bone_count(); ++i) {
    m(i, classes[static_cast<std::size_t>(i)]) = 1.0;
  }
  return m;
}

Eigen::VectorXd FbiMatrix::flat_one_hot() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(3 * bone_count());
  for (int i = 0; i < bone_count(); ++i) {
    v(3 * i + classes[static_cast<std::size_t>(i)]) = 1.0;
  }
  return v;
}

void FbiLabelConfig::validate() const {
  if (!(parallel_fraction >= 0.0 && parallel_fraction < 1.0)) {
    throw std::invalid_argument("fbi: parallel_fraction must be in [0, 1)");
  }
}

FbiMatrix label_fbi(const Pose3D& pose, const SkeletonTopology& topo, const FbiLabelConfig& cfg) {
  cfg.validate();
  FbiMatrix out;
  out.classes.resize(static_cast<std::size_t>(topo.bone_count()));
  for (int i = 0; i < topo.bone_count(); ++i) {
    const Eigen::Vector3d b = bone_vector(pose, topo, i);
    const double len = b.norm();
    int cls;
    if (len == 0.0 || std::abs(b.z()) <= cfg.parallel_fraction * len) {
      cls = FbiMatrix::kParallel;
    } else if (b.z() < 0.0) {
      cls = FbiMatrix::kForward;  // child nearer the camera
    } else {
      cls = FbiMatrix::kBackward;
    }
    out.classes[static_cast<std::size_t>(i)] = cls;
  }
  return out;
}

double fbi_accuracy(const FbiMatrix& pred, const FbiMatrix& gt) {
  if (pred.bone_count() != gt.bone_count()) {
    throw std::invalid_argument("fbi_accuracy: bone count mismatch");
  }
  int correct = 0;
  for (int i = 0; i < gt.bone_count(); ++i) {
    if (pred.classes[static_cast<std::size_t>(i)] == gt.classes[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(gt.bone_count());
}

double fbi_accuracy(const Eigen::MatrixXd& class_probs, const FbiMatrix& gt) {
  if (class_probs.rows() != gt.bone_count() || class_probs.cols() != 3) {
    throw std::invalid_argument("fbi_accuracy: expected m x 3 probabilities");
  }
  FbiMatrix pred;
  pred.classes.resize(static_cast<std::size_t>(gt.bone_count()));
  for (int i = 0; i < gt.bone_count(); ++i) {
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (class_probs(i, c) > class_probs(i, best)) best = c;  // strict: ties keep lowest index
    }
    pred.classes[static_cast<std::size_t>(i)] = best;
  }
  return fbi_accuracy(pred, gt);
}

nlohmann::json fbi_to_json(const FbiMatrix& fbi) { return nlohmann::json(fbi.classes); }

FbiMatrix fbi_from_json(const nlohmann::json& j, int expected_m) {
  FbiMatrix f;
  f.classes = j.get<std::vector<int>>();
  for (int c : f.classes) {
    if (c < 0 || c > 2) {
      throw std::invalid_argument("fbi: class index out of range");
    }
  }
  if (expected_m >= 0 && f.bone_count() != expected_m) {
    throw std::invalid_argument("fbi: bone count mismatch");
  }
  return f;
}

}  // namespace mdpose

#include "mdpose/skeleton.hpp"

#include <cmath>
#include <stdexcept>

#include "mdpose/io.hpp"

namespace mdpose {

void SkeletonTopology::validate() const {
  const int j = joint_count();
  if (j < 2) {
    throw std::invalid_argument("topology: need at least 2 joints");
  }
  if (static_cast<int>(parent_index.size()) != j) {
    throw std::invalid_argument("topology: parent_index size mismatch");
  }
  if (root_joint < 0 || root_joint >= j) {
    throw std::invalid_argument("topology: root_joint out of range");
  }
  if (parent_index[static_cast<std::size_t>(root_joint)] != -1) {
    throw std::invalid_argument("topology: root joint must have parent -1");
  }
  for (int i = 0; i < j; ++i) {
    const int p = parent_index[static_cast<std::size_t>(i)];
    if (i == root_joint) continue;
    if (p < 0 || p >= j || p == i) {
      throw std::invalid_argument("topology: bad parent for joint " + std::to_string(i));
    }
  }
  // Every joint must reach the root; catches cycles and disconnected parts.
  for (int i = 0; i < j; ++i) {
    int cur = i;
    int hops = 0;
    while (cur != root_joint) {
      cur = parent_index[static_cast<std::size_t>(cur)];
      if (cur < 0 || ++hops > j) {
        throw std::invalid_argument("topology: joint " + std::to_string(i) +
                                    " does not reach the root");
      }
    }
  }
  for (const auto& [p, c] : fbi_bones) {
    if (p < 0 || p >= j || c < 0 || c >= j || p == c) {
      throw std::invalid_argument("topology: fbi bone references invalid joints");
    }
  }
}

SkeletonTopology SkeletonTopology::human17() {
  SkeletonTopology t;
  t.joint_names = {"pelvis",     "r_hip",   "r_knee",     "r_ankle", "l_hip",   "l_knee",
                   "l_ankle",    "spine",   "thorax",     "neck",    "head",    "l_shoulder",
                   "l_elbow",    "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
  t.parent_index = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  t.root_joint = 0;
  // 14 oriented bones: 8 limb segments, the spine chain, and the clavicles.
  t.fbi_bones = {
      {1, 2},    // r_hip -> r_knee
      {2, 3},    // r_knee -> r_ankle
      {4, 5},    // l_hip -> l_knee
      {5, 6},    // l_knee -> l_ankle
      {14, 15},  // r_shoulder -> r_elbow
      {15, 16},  // r_elbow -> r_wrist
      {11, 12},  // l_shoulder -> l_elbow
      {12, 13},  // l_elbow -> l_wrist
      {0, 7},    // pelvis -> spine
      {7, 8},    // spine -> thorax
      {8, 9},    // thorax -> neck
      {9, 10},   // neck -> head
      {8, 11},   // thorax -> l_shoulder
      {8, 14},   // thorax -> r_shoulder
  };
  t.validate();
  return t;
}

nlohmann::json topology_to_json(const SkeletonTopology& topo) {
  nlohmann::json bones = nlohmann::json::array();
  for (const auto& [p, c] : topo.fbi_bones) {
    bones.push_back({p, c});
  }
  return {{"joints", topo.joint_names},
          {"parents", topo.parent_index},
          {"fbi_bones", bones},
          {"root", topo.root_joint}};
}

SkeletonTopology topology_from_json(const nlohmann::json& j) {
  SkeletonTopology t;
  t.joint_names = j.at("joints").get<std::vector<std::string>>();
  t.parent_index = j.at("parents").get<std::vector<int>>();
  for (const auto& b : j.at("fbi_bones")) {
    t.fbi_bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
  }
  t.root_joint = j.at("root").get<int>();
  t.validate();
  return t;
}

std::uint64_t topology_hash(const SkeletonTopology& topo) {
  return fnv1a64(topology_to_json(topo).dump());
}

Eigen::VectorXd Pose3D::flat() const {
  Eigen::VectorXd v(coords.rows() * 3);
  for (int i = 0; i < coords.rows(); ++i) {
    v.segment<3>(3 * i) = coords.row(i).transpose();
  }
  return v;
}

Pose3D Pose3D::from_flat(const Eigen::VectorXd& v) {
  if (v.size() % 3 != 0) {
    throw std::invalid_argument("pose3d: flat size not divisible by 3");
  }
  Pose3D p;
  p.coords.resize(v.size() / 3, 3);
  for (int i = 0; i < p.coords.rows(); ++i) {
    p.coords.row(i) = v.segment<3>(3 * i).transpose();
  }
  return p;
}

Eigen::VectorXd Pose2D::flat() const {
  Eigen::VectorXd v(coords.rows() * 2);
  for (int i = 0; i < coords.rows(); ++i) {
    v.segment<2>(2 * i) = coords.row(i).transpose();
  }
  return v;
}

Pose2D Pose2D::from_flat(const Eigen::VectorXd& v) {
  if (v.size() % 2 != 0) {
    throw std::invalid_argument("pose2d: flat size not divisible by 2");
  }
  Pose2D p;
  p.coords.resize(v.size() / 2, 2);
  for (int i = 0; i < p.coords.rows(); ++i) {
    p.coords.row(i) = v.segment<2>(2 * i).transpose();
  }
  return p;
}

Pose3D root_relative(const Pose3D& pose, const SkeletonTopology& topo) {
  if (pose.joint_count() != topo.joint_count()) {
    throw std::invalid_argument("root_relative: joint count mismatch");
  }
  Pose3D out = pose;
  const Eigen::RowVector3d root = pose.coords.row(topo.root_joint);
  out.coords.rowwise() -= root;
  out.coords.row(topo.root_joint).setZero();  // exact, not just up to rounding
  return out;
}

double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  if (pred.joint_count() != gt.joint_count()) {
    throw std::invalid_argument("mpjpe: joint count mismatch");
  }
  const int j = pred.joint_count();
  double sum = 0.0;
  for (int i = 0; i < j; ++i) {
    sum += (pred.coords.row(i) - gt.coords.row(i)).norm();
  }
  return sum / static_cast<double>(j);
}

Eigen::Vector3d bone_vector(const Pose3D& pose, const SkeletonTopology& topo, int bone) {
  if (bone < 0 || bone >= topo.bone_count()) {
    throw std::out_of_range("bone_vector: bone index out of range");
  }
  const auto& [p, c] = topo.fbi_bones[static_cast<std::size_t>(bone)];
  return (pose.coords.row(c) - pose.coords.row(p)).transpose();
}

}  // namespace mdpose

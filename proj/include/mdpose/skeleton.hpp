#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace mdpose {

// Skeleton data model and coordinate conventions.
//
// Camera frame: x right, y down, z increasing away from the camera.
// 3D coordinates are millimeters; 2D coordinates are pixels.

struct SkeletonTopology {
  std::vector<std::string> joint_names;             // size J
  std::vector<int> parent_index;                    // -1 for the root
  std::vector<std::pair<int, int>> fbi_bones;       // (parent joint, child joint)
  int root_joint = 0;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int bone_count() const { return static_cast<int>(fbi_bones.size()); }

  // Throws std::invalid_argument if the parent links do not form a single
  // tree rooted at root_joint or any bone references an invalid joint.
  void validate() const;

  // 17-joint skeleton with 14 oriented bones. The bone order is fixed and is
  // shared by labeling, training and evaluation.
  static SkeletonTopology human17();
};

nlohmann::json topology_to_json(const SkeletonTopology& topo);
SkeletonTopology topology_from_json(const nlohmann::json& j);
std::uint64_t topology_hash(const SkeletonTopology& topo);

struct Pose3D {
  Eigen::MatrixX3d coords;  // J rows, mm

  int joint_count() const { return static_cast<int>(coords.rows()); }

  // Flat layout is joint-major: (x0, y0, z0, x1, y1, z1, ...).
  Eigen::VectorXd flat() const;
  static Pose3D from_flat(const Eigen::VectorXd& v);
};

struct Pose2D {
  Eigen::MatrixX2d coords;  // J rows, px

  int joint_count() const { return static_cast<int>(coords.rows()); }

  Eigen::VectorXd flat() const;
  static Pose2D from_flat(const Eigen::VectorXd& v);
};

// Translates the pose so the root joint sits exactly at the origin.
Pose3D root_relative(const Pose3D& pose, const SkeletonTopology& topo);

// Mean per-joint Euclidean distance in mm. Expects both poses root-relative
// on a shared topology; throws on mismatched joint counts.
double mpjpe(const Pose3D& pred, const Pose3D& gt);

// child - parent coordinates of fbi_bones[bone], mm.
Eigen::Vector3d bone_vector(const Pose3D& pose, const SkeletonTopology& topo, int bone);

}  // namespace mdpose

#pragma once

#include <Eigen/Core>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mdpose/skeleton.hpp"

namespace mdpose {

// Pinhole camera. Poses are kept root-relative; the subject sits at
// subject_distance in front of the camera, so a joint with root-relative
// depth z projects at absolute depth z + subject_distance.
struct CameraModel {
  double focal_length = 1150.0;                   // px
  Eigen::Vector2d principal_point{512.0, 512.0};  // px
  double subject_distance = 5500.0;               // mm

  void validate() const;
};

nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);

struct ProjectionError : std::runtime_error {
  int joint;
  explicit ProjectionError(int joint_index);
};

// u = f * x / Z + u0, v = f * y / Z + v0 with Z = z + subject_distance.
// Throws ProjectionError if any joint lands at or behind the camera plane.
Pose2D project(const Pose3D& root_relative_pose, const CameraModel& cam);

// Inverse of project given the true root-relative depth per joint.
Pose3D backproject(const Pose2D& pose2d, const Eigen::VectorXd& z_mm, const CameraModel& cam);

}  // namespace mdpose

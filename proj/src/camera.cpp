#include "mdpose/camera.hpp"

namespace mdpose {

void CameraModel::validate() const {
  if (!(focal_length > 0.0)) {
    throw std::invalid_argument("camera: focal_length must be > 0");
  }
  if (!(subject_distance > 0.0)) {
    throw std::invalid_argument("camera: subject_distance must be > 0");
  }
}

nlohmann::json camera_to_json(const CameraModel& cam) {
  return {{"focal_length", cam.focal_length},
          {"principal_point", {cam.principal_point.x(), cam.principal_point.y()}},
          {"subject_distance", cam.subject_distance}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  cam.focal_length = j.at("focal_length").get<double>();
  cam.principal_point.x() = j.at("principal_point").at(0).get<double>();
  cam.principal_point.y() = j.at("principal_point").at(1).get<double>();
  cam.subject_distance = j.at("subject_distance").get<double>();
  cam.validate();
  return cam;
}

ProjectionError::ProjectionError(int joint_index)
    : std::runtime_error("projection: joint " + std::to_string(joint_index) +
                         " at or behind the camera plane"),
      joint(joint_index) {}

Pose2D project(const Pose3D& pose, const CameraModel& cam) {
  cam.validate();
  Pose2D out;
  out.coords.resize(pose.joint_count(), 2);
  for (int i = 0; i < pose.joint_count(); ++i) {
    const double z = pose.coords(i, 2) + cam.subject_distance;
    if (!(z > 0.0)) {
      throw ProjectionError(i);
    }
    out.coords(i, 0) = cam.focal_length * pose.coords(i, 0) / z + cam.principal_point.x();
    out.coords(i, 1) = cam.focal_length * pose.coords(i, 1) / z + cam.principal_point.y();
  }
  return out;
}

Pose3D backproject(const Pose2D& pose2d, const Eigen::VectorXd& z_mm, const CameraModel& cam) {
  cam.validate();
  if (z_mm.size() != pose2d.joint_count()) {
    throw std::invalid_argument("backproject: depth count mismatch");
  }
  Pose3D out;
  out.coords.resize(pose2d.joint_count(), 3);
  for (int i = 0; i < pose2d.joint_count(); ++i) {
    const double z = z_mm(i) + cam.subject_distance;
    if (!(z > 0.0)) {
      throw ProjectionError(i);
    }
    out.coords(i, 0) = (pose2d.coords(i, 0) - cam.principal_point.x()) * z / cam.focal_length;
    out.coords(i, 1) = (pose2d.coords(i, 1) - cam.principal_point.y()) * z / cam.focal_length;
    out.coords(i, 2) = z_mm(i);
  }
  return out;
}

}  // namespace mdpose

#pragma once

#include <string>

#include "mdpose/fbi.hpp"
#include "mdpose/skeleton.hpp"

namespace mdpose {

// Diagnostic two-panel orthographic skeleton plot (front: x/y, side: z/y).
// Joints are circles; bones follow the parent links; bones labeled forward
// are tinted. Pass a null fbi to skip the tint.
std::string render_pose_svg(const Pose3D& pose_mm, const SkeletonTopology& topo,
                            const FbiMatrix* fbi = nullptr);

}  // namespace mdpose

#include "mdpose/svg.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace mdpose {

namespace {

constexpr double kPanel = 300.0;
constexpr double kPad = 24.0;

struct Panel {
  double offset_x;
  int axis_h;  // column of coords used horizontally (0 = x, 2 = z)
};

}  // namespace

std::string render_pose_svg(const Pose3D& pose_mm, const SkeletonTopology& topo,
                            const FbiMatrix* fbi) {
  const auto& c = pose_mm.coords;
  const double extent = std::max({c.col(0).cwiseAbs().maxCoeff(), c.col(1).cwiseAbs().maxCoeff(),
                                  c.col(2).cwiseAbs().maxCoeff(), 1.0});
  const double scale = (kPanel / 2.0 - kPad) / extent;

  std::map<std::pair<int, int>, bool> forward;  // (parent, child) -> tinted
  if (fbi != nullptr) {
    for (int i = 0; i < topo.bone_count(); ++i) {
      if (fbi->classes[static_cast<std::size_t>(i)] == FbiMatrix::kForward) {
        forward[topo.fbi_bones[static_cast<std::size_t>(i)]] = true;
      }
    }
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanel << "\" height=\""
      << kPanel << "\" viewBox=\"0 0 " << 2 * kPanel << " " << kPanel << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#fdfdfd\"/>\n";
  svg << "<line x1=\"" << kPanel << "\" y1=\"0\" x2=\"" << kPanel << "\" y2=\"" << kPanel
      << "\" stroke=\"#ddd\"/>\n";

  const Panel panels[2] = {{0.0, 0}, {kPanel, 2}};
  for (const Panel& p : panels) {
    auto px = [&](int joint) {
      return p.offset_x + kPanel / 2.0 + scale * c(joint, p.axis_h);
    };
    auto py = [&](int joint) { return kPanel / 2.0 + scale * c(joint, 1); };

    for (int i = 0; i < topo.joint_count(); ++i) {
      if (i == topo.root_joint) continue;
      const int parent = topo.parent_index[static_cast<std::size_t>(i)];
      const bool tinted = forward.count({parent, i}) > 0;
      svg << "<line x1=\"" << px(parent) << "\" y1=\"" << py(parent) << "\" x2=\"" << px(i)
          << "\" y2=\"" << py(i) << "\" stroke=\"" << (tinted ? "#d9544f" : "#445")
          << "\" stroke-width=\"2\"/>\n";
    }
    for (int i = 0; i < topo.joint_count(); ++i) {
      svg << "<circle cx=\"" << px(i) << "\" cy=\"" << py(i) << "\" r=\"3.5\" fill=\""
          << (i == topo.root_joint ? "#2a6" : "#333") << "\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mdpose

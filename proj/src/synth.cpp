#include "mdpose/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace mdpose {

void SynthConfig::validate(const SkeletonTopology& topo) const {
  const std::size_t j = static_cast<std::size_t>(topo.joint_count());
  if (bone_lengths.size() != j || rest_directions.size() != j || joint_angle_ranges.size() != j) {
    throw std::invalid_argument("synth: per-joint vectors must have one entry per joint");
  }
  for (int i = 0; i < topo.joint_count(); ++i) {
    if (i == topo.root_joint) continue;
    if (!(bone_lengths[static_cast<std::size_t>(i)] > 0.0)) {
      throw std::invalid_argument("synth: bone length must be > 0 for joint " + std::to_string(i));
    }
    if (rest_directions[static_cast<std::size_t>(i)].norm() == 0.0) {
      throw std::invalid_argument("synth: zero rest direction for joint " + std::to_string(i));
    }
  }
  for (const auto& r : joint_angle_ranges) {
    for (int a = 0; a < 3; ++a) {
      if (!(r.min[a] <= r.max[a])) {
        throw std::invalid_argument("synth: empty angle range");
      }
    }
  }
  if (noise_2d_std < 0.0 || coarse_z_noise_std < 0.0) {
    throw std::invalid_argument("synth: noise std must be >= 0");
  }
  if (!(fbi_flip_prob >= 0.0 && fbi_flip_prob <= 1.0)) {
    throw std::invalid_argument("synth: fbi_flip_prob must be in [0, 1]");
  }
  if (count < 0) {
    throw std::invalid_argument("synth: count must be >= 0");
  }
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("synth: train_fraction must be in [0, 1]");
  }
}

namespace {

JointAngleRange sym_range(double x, double y, double z) {
  JointAngleRange r;
  r.min = Eigen::Vector3d(-x, -y, -z);
  r.max = Eigen::Vector3d(x, y, z);
  return r;
}

}  // namespace

SynthConfig SynthConfig::defaults(const SkeletonTopology& topo) {
  const int j = topo.joint_count();
  SynthConfig cfg;
  cfg.bone_lengths.assign(static_cast<std::size_t>(j), 0.0);
  cfg.rest_directions.assign(static_cast<std::size_t>(j), Eigen::Vector3d::UnitY());
  cfg.joint_angle_ranges.assign(static_cast<std::size_t>(j), JointAngleRange{});

  // Adult-proportioned segment lengths (mm) and a standing rest stance:
  // subject facing the camera, legs and arms down, spine up (-y).
  const std::map<std::string, std::pair<double, Eigen::Vector3d>> table = {
      {"r_hip", {130.0, {-1.0, 0.15, 0.0}}},
      {"l_hip", {130.0, {1.0, 0.15, 0.0}}},
      {"r_knee", {450.0, {0.0, 1.0, 0.0}}},
      {"l_knee", {450.0, {0.0, 1.0, 0.0}}},
      {"r_ankle", {430.0, {0.0, 1.0, 0.0}}},
      {"l_ankle", {430.0, {0.0, 1.0, 0.0}}},
      {"spine", {230.0, {0.0, -1.0, 0.0}}},
      {"thorax", {240.0, {0.0, -1.0, 0.0}}},
      {"neck", {120.0, {0.0, -1.0, 0.0}}},
      {"head", {180.0, {0.0, -1.0, 0.0}}},
      {"l_shoulder", {170.0, {1.0, -0.1, 0.0}}},
      {"r_shoulder", {170.0, {-1.0, -0.1, 0.0}}},
      {"l_elbow", {280.0, {0.25, 1.0, 0.0}}},
      {"r_elbow", {280.0, {-0.25, 1.0, 0.0}}},
      {"l_wrist", {250.0, {0.0, 1.0, 0.0}}},
      {"r_wrist", {250.0, {0.0, 1.0, 0.0}}},
  };
  const std::map<std::string, JointAngleRange> ranges = {
      {"pelvis", sym_range(0.25, std::numbers::pi, 0.25)},  // whole-body orientation
      {"r_hip", sym_range(0.12, 0.12, 0.12)},
      {"l_hip", sym_range(0.12, 0.12, 0.12)},
      {"r_knee", sym_range(1.0, 0.5, 0.5)},
      {"l_knee", sym_range(1.0, 0.5, 0.5)},
      {"r_ankle", sym_range(1.1, 0.25, 0.25)},
      {"l_ankle", sym_range(1.1, 0.25, 0.25)},
      {"spine", sym_range(0.2, 0.2, 0.2)},
      {"thorax", sym_range(0.2, 0.2, 0.2)},
      {"neck", sym_range(0.3, 0.3, 0.3)},
      {"head", sym_range(0.35, 0.35, 0.35)},
      {"l_shoulder", sym_range(0.15, 0.15, 0.15)},
      {"r_shoulder", sym_range(0.15, 0.15, 0.15)},
      {"l_elbow", sym_range(1.2, 1.0, 1.0)},
      {"r_elbow", sym_range(1.2, 1.0, 1.0)},
      {"l_wrist", sym_range(1.3, 0.4, 0.4)},
      {"r_wrist", sym_range(1.3, 0.4, 0.4)},
  };

  for (int i = 0; i < j; ++i) {
    const std::string& name = topo.joint_names[static_cast<std::size_t>(i)];
    if (auto it = table.find(name); it != table.end()) {
      cfg.bone_lengths[static_cast<std::size_t>(i)] = it->second.first;
      cfg.rest_directions[static_cast<std::size_t>(i)] = it->second.second.normalized();
    } else if (i != topo.root_joint) {
      cfg.bone_lengths[static_cast<std::size_t>(i)] = 300.0;
    }
    if (auto it = ranges.find(name); it != ranges.end()) {
      cfg.joint_angle_ranges[static_cast<std::size_t>(i)] = it->second;
    }
  }
  cfg.validate(topo);
  return cfg;
}

nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json rests = nlohmann::json::array();
  for (const auto& d : cfg.rest_directions) {
    rests.push_back({d.x(), d.y(), d.z()});
  }
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : cfg.joint_angle_ranges) {
    ranges.push_back({{"min", {r.min.x(), r.min.y(), r.min.z()}},
                      {"max", {r.max.x(), r.max.y(), r.max.z()}}});
  }
  return {{"bone_lengths", cfg.bone_lengths},
          {"rest_directions", rests},
          {"joint_angle_ranges", ranges},
          {"noise_2d_std", cfg.noise_2d_std},
          {"coarse_z_noise_std", cfg.coarse_z_noise_std},
          {"fbi_flip_prob", cfg.fbi_flip_prob},
          {"seed", cfg.seed},
          {"count", cfg.count},
          {"train_fraction", cfg.train_fraction}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, const SkeletonTopology& topo) {
  SynthConfig cfg;
  cfg.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
  for (const auto& d : j.at("rest_directions")) {
    cfg.rest_directions.emplace_back(d.at(0).get<double>(), d.at(1).get<double>(),
                                     d.at(2).get<double>());
  }
  for (const auto& r : j.at("joint_angle_ranges")) {
    JointAngleRange range;
    for (int a = 0; a < 3; ++a) {
      range.min[a] = r.at("min").at(static_cast<std::size_t>(a)).get<double>();
      range.max[a] = r.at("max").at(static_cast<std::size_t>(a)).get<double>();
    }
    cfg.joint_angle_ranges.push_back(range);
  }
  cfg.noise_2d_std = j.at("noise_2d_std").get<double>();
  cfg.coarse_z_noise_std = j.at("coarse_z_noise_std").get<double>();
  cfg.fbi_flip_prob = j.at("fbi_flip_prob").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.count = j.at("count").get<int>();
  cfg.train_fraction = j.at("train_fraction").get<double>();
  cfg.validate(topo);
  return cfg;
}

namespace {

void scale_range_about_mid(JointAngleRange& r, double amplitude) {
  const Eigen::Vector3d mid = 0.5 * (r.min + r.max);
  const Eigen::Vector3d half = 0.5 * (r.max - r.min);
  r.min = mid - amplitude * half;
  r.max = mid + amplitude * half;
}

}  // namespace

SynthConfig action_preset(const SynthConfig& base, int action) {
  if (action < 0 || action >= kActionBins) {
    throw std::invalid_argument("action_preset: bin out of range");
  }
  SynthConfig cfg = base;
  const double amplitude = 0.3 + 0.08 * static_cast<double>(action);
  for (std::size_t i = 0; i < cfg.joint_angle_ranges.size(); ++i) {
    scale_range_about_mid(cfg.joint_angle_ranges[i], amplitude);
  }
  // Whole-body yaw restricted to a narrow sector per bin; sectors are
  // disjoint (width 0.6 of the tile they sit in).
  const double tile = 2.0 * std::numbers::pi / kActionBins;
  const double center = -std::numbers::pi + (static_cast<double>(action) + 0.5) * tile;
  const double halfwidth = 0.3 * tile;
  auto& root = cfg.joint_angle_ranges[0];
  root.min.y() = center - halfwidth;
  root.max.y() = center + halfwidth;
  return cfg;
}

SynthConfig ood_preset(const SynthConfig& base) {
  SynthConfig cfg = base;
  const double amplitude = 1.7;  // beyond the strongest training bin (1.42)
  for (std::size_t i = 0; i < cfg.joint_angle_ranges.size(); ++i) {
    scale_range_about_mid(cfg.joint_angle_ranges[i], amplitude);
  }
  auto& root = cfg.joint_angle_ranges[0];
  root.min.y() = -std::numbers::pi;
  root.max.y() = std::numbers::pi;
  return cfg;
}

Pose3D sample_pose(const SynthConfig& cfg, const SkeletonTopology& topo, Rng& rng) {
  const int j = topo.joint_count();

  // Draw all angles in joint-index order so the stream layout is fixed.
  std::vector<Eigen::Vector3d> angles(static_cast<std::size_t>(j));
  for (int i = 0; i < j; ++i) {
    const auto& r = cfg.joint_angle_ranges[static_cast<std::size_t>(i)];
    for (int a = 0; a < 3; ++a) {
      angles[static_cast<std::size_t>(i)][a] = rng.uniform(r.min[a], r.max[a]);
    }
  }

  // Parent-before-child traversal order.
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(j));
  std::vector<bool> placed(static_cast<std::size_t>(j), false);
  order.push_back(topo.root_joint);
  placed[static_cast<std::size_t>(topo.root_joint)] = true;
  while (static_cast<int>(order.size()) < j) {
    bool progressed = false;
    for (int i = 0; i < j; ++i) {
      if (placed[static_cast<std::size_t>(i)]) continue;
      const int p = topo.parent_index[static_cast<std::size_t>(i)];
      if (placed[static_cast<std::size_t>(p)]) {
        order.push_back(i);
        placed[static_cast<std::size_t>(i)] = true;
        progressed = true;
      }
    }
    if (!progressed) {
      throw std::invalid_argument("sample_pose: topology is not a tree");
    }
  }

  auto rotation = [](const Eigen::Vector3d& a) {
    return (Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()) *
            Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()))
        .toRotationMatrix();
  };

  std::vector<Eigen::Matrix3d> frame(static_cast<std::size_t>(j));
  Pose3D pose;
  pose.coords.setZero(j, 3);
  frame[static_cast<std::size_t>(topo.root_joint)] =
      rotation(angles[static_cast<std::size_t>(topo.root_joint)]);
  for (int k = 1; k < j; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    const int p = topo.parent_index[static_cast<std::size_t>(i)];
    frame[static_cast<std::size_t>(i)] =
        frame[static_cast<std::size_t>(p)] * rotation(angles[static_cast<std::size_t>(i)]);
    const Eigen::Vector3d bone = cfg.bone_lengths[static_cast<std::size_t>(i)] *
                                 cfg.rest_directions[static_cast<std::size_t>(i)].normalized();
    pose.coords.row(i) = pose.coords.row(p) +
                         (frame[static_cast<std::size_t>(i)] * bone).transpose();
  }
  return pose;
}

Sample corrupt(const Sample& sample, const SynthConfig& cfg, Rng& rng) {
  Sample out = sample;
  out.pose2d_noisy = sample.pose2d;
  for (int i = 0; i < out.pose2d_noisy.joint_count(); ++i) {
    out.pose2d_noisy.coords(i, 0) += rng.normal(0.0, cfg.noise_2d_std);
    out.pose2d_noisy.coords(i, 1) += rng.normal(0.0, cfg.noise_2d_std);
  }
  out.coarse_z_noisy = sample.coarse_z_gt;
  for (int i = 0; i < out.coarse_z_noisy.size(); ++i) {
    out.coarse_z_noisy(i) += rng.normal(0.0, cfg.coarse_z_noise_std);
  }
  out.fbi_noisy = sample.fbi_gt;
  for (auto& cls : out.fbi_noisy.classes) {
    if (rng.uniform() < cfg.fbi_flip_prob) {
      cls = static_cast<int>(rng.below(3));
    }
  }
  return out;
}

}  // namespace mdpose

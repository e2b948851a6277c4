#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdpose/camera.hpp"
#include "mdpose/fbi.hpp"
#include "mdpose/rng.hpp"
#include "mdpose/skeleton.hpp"

namespace mdpose {

// Synthetic data generation: forward kinematics over the skeleton tree,
// pinhole projection, and detector-style corruption. Replaces a capture
// dataset at desk scale.

struct JointAngleRange {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();  // x/y/z rotation bounds, radians
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

struct SynthConfig {
  // All per-joint vectors are indexed by child joint; the root slot carries
  // the whole-body orientation range (bone length/rest direction unused).
  std::vector<double> bone_lengths;                 // mm
  std::vector<Eigen::Vector3d> rest_directions;     // unit vectors in the parent frame
  std::vector<JointAngleRange> joint_angle_ranges;  // uniform sampling bounds

  double noise_2d_std = 3.0;        // px
  double coarse_z_noise_std = 30.0; // mm
  double fbi_flip_prob = 0.05;
  std::uint64_t seed = 1;
  int count = 20000;
  double train_fraction = 0.8;

  void validate(const SkeletonTopology& topo) const;

  // Arbitrary-but-fixed adult proportions and motion ranges for human17.
  static SynthConfig defaults(const SkeletonTopology& topo);
};

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, const SkeletonTopology& topo);

// One of 15 disjoint pose regimes: a narrow whole-body yaw sector crossed
// with a limb amplitude that grows with the bin index.
SynthConfig action_preset(const SynthConfig& base, int action);
inline constexpr int kActionBins = 15;

// Pose regime outside every training preset (larger amplitudes, free yaw);
// used to probe generalization.
SynthConfig ood_preset(const SynthConfig& base);

// Forward kinematics from the root over the topology tree. Joint rotations
// are drawn uniformly from joint_angle_ranges; bone lengths are exact.
// Deterministic given the rng state. Root lands at the origin.
Pose3D sample_pose(const SynthConfig& cfg, const SkeletonTopology& topo, Rng& rng);

struct Sample {
  int id = 0;
  int action = 0;  // 0-based bin, reported as A1..A15
  bool is_test = false;
  Pose3D pose3d_gt;                // root-relative, mm
  Pose2D pose2d;                   // clean projection, px
  Pose2D pose2d_noisy;
  Eigen::VectorXd coarse_z_gt;     // per-joint root-relative depth, mm
  Eigen::VectorXd coarse_z_noisy;
  FbiMatrix fbi_gt;
  FbiMatrix fbi_noisy;
};

// Fills the noisy fields from the clean ones: additive Gaussian noise on 2D
// and coarse depth; each bone's class resampled uniformly with probability
// fbi_flip_prob. Ground-truth fields are untouched.
Sample corrupt(const Sample& sample, const SynthConfig& cfg, Rng& rng);

}  // namespace mdpose

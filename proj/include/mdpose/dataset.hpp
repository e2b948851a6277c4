#pragma once

#include <filesystem>
#include <vector>

#include "mdpose/synth.hpp"

namespace mdpose {

struct Dataset {
  SkeletonTopology topo;
  CameraModel cam;
  SynthConfig cfg;
  FbiLabelConfig fbi_cfg;
  std::vector<Sample> samples;

  std::vector<int> train_indices() const;
  std::vector<int> test_indices() const;
};

// Generates cfg.count paired samples, one action bin per sample (cycling
// A1..A15), and a deterministic seeded train/test split. With
// per_action_presets off, poses are drawn straight from cfg's angle ranges
// (used for out-of-domain evaluation sets built from ood_preset).
Dataset make_dataset(const SynthConfig& cfg, const CameraModel& cam, const SkeletonTopology& topo,
                     const FbiLabelConfig& fbi_cfg, bool per_action_presets = true);

// JSON-lines format: a header line carrying the topology, config echo and
// their hashes, then one sample per line.
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);
void write_dataset_jsonl(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset_jsonl(const std::filesystem::path& path);

// Row-major batch assembly, one sample per row.
Eigen::MatrixXd gather_pose2d_noisy(const Dataset& ds, const std::vector<int>& idx);  // N x 2J
Eigen::MatrixXd gather_pose2d_clean(const Dataset& ds, const std::vector<int>& idx);  // N x 2J
Eigen::MatrixXd gather_z_gt(const Dataset& ds, const std::vector<int>& idx);          // N x J
Eigen::MatrixXd gather_z_noisy(const Dataset& ds, const std::vector<int>& idx);       // N x J
Eigen::MatrixXd gather_fbi_onehot_gt(const Dataset& ds, const std::vector<int>& idx);     // N x 3m
Eigen::MatrixXd gather_fbi_onehot_noisy(const Dataset& ds, const std::vector<int>& idx);  // N x 3m
Eigen::MatrixXd gather_pose3d_gt(const Dataset& ds, const std::vector<int>& idx);     // N x 3J

}  // namespace mdpose

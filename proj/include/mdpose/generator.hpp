#pragma once

#include <cstdint>
#include <vector>

#include "mdpose/dataset.hpp"
#include "mdpose/net.hpp"
#include "mdpose/standardize.hpp"

namespace mdpose {

// Two parallel heads mapping 2D joints to depth evidence: an explicit
// per-joint depth (which, paired with the 2D joints, forms a coarse 3D pose)
// and per-bone forward/backward class probabilities. The heads share no
// parameters.

struct CoarsePose {
  Pose2D pose2d;      // conditioning input, px
  Eigen::VectorXd z;  // per-joint explicit depth, standardized units
};

struct GeneratorModel {
  net::MlpModel coarse_head;  // 2J -> J, linear
  net::MlpModel fbi_head;     // 2J -> 3m, per-group softmax
  Standardizer in2d;          // noisy 2D input space
  Standardizer z_out;         // clean depth target space, mm <-> standardized
};

struct GenTrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool train_coarse = true;
  bool train_fbi = true;
};

struct GenEpochRow {
  int epoch = 0;
  double coarse_loss = 0.0;   // train L0 on standardized z
  double fbi_loss = 0.0;      // train cross-entropy
  double test_fbi_acc = 0.0;
  double test_z_mae_mm = 0.0;
};

struct GenMetrics {
  std::vector<GenEpochRow> rows;
};

// Batch entry points; one sample per row, standardized 2D in.
Eigen::MatrixXd predict_coarse_std(const GeneratorModel& gen, const Eigen::MatrixXd& in2d_std);
Eigen::MatrixXd predict_fbi_probs_std(const GeneratorModel& gen, const Eigen::MatrixXd& in2d_std);

CoarsePose predict_coarse(const GeneratorModel& gen, const Pose2D& pose2d_px);
Eigen::MatrixXd predict_fbi(const GeneratorModel& gen, const Pose2D& pose2d_px);  // m x 3
Eigen::VectorXd coarse_z_mm(const GeneratorModel& gen, const CoarsePose& coarse);

// Supervised pre-training: noisy 2D in, clean targets; coarse head minimizes
// plain L0, fbi head minimizes cross-entropy.
GeneratorModel train_generator(const Dataset& ds, const net::MlpSpec& coarse_spec,
                               const net::MlpSpec& fbi_spec, const GenTrainConfig& cfg,
                               GenMetrics* metrics = nullptr);

nlohmann::json generator_to_json(const GeneratorModel& gen);
GeneratorModel generator_from_json(const nlohmann::json& j);
void save_generator(const std::filesystem::path& path, const GeneratorModel& gen,
                    const std::string& tag, const std::string& config_hash);
GeneratorModel load_generator(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_tag = {});

}  // namespace mdpose

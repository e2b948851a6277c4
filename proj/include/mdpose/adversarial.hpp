#pragma once

#include <cstdint>
#include <vector>

#include "mdpose/generator.hpp"

namespace mdpose {

// Conditional adversarial fine-tuning of the coarse-depth head. The
// discriminator judges (2D pose, depth) pairs, conditioning by input
// concatenation: input = [standardized 2D | standardized z], one logit out.

struct Discriminator {
  net::MlpModel net;  // 3J -> 1
};

struct AdvConfig {
  double lambda_adv = 0.01;     // generator adversarial-loss weight
  int d_steps_per_g_step = 1;
  int epochs = 25;
  int batch_size = 128;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  std::uint64_t seed = 1;
  bool supervised_only = false;  // skip the discriminator entirely

  void validate() const;
};

// Binary cross-entropy with logits over paired real/fake batches:
// mean_i [softplus(-real_i) + softplus(fake_i)]. Gradients are exact.
struct DLogitsLoss {
  double loss = 0.0;
  Eigen::VectorXd d_real, d_fake;
  double accuracy = 0.0;  // real classified real + fake classified fake
};

DLogitsLoss d_loss_from_logits(const Eigen::VectorXd& real_logits,
                               const Eigen::VectorXd& fake_logits);

struct DLossResult {
  double loss = 0.0;
  net::Gradients grads;  // w.r.t. discriminator parameters
  double accuracy = 0.0;
};

DLossResult d_loss(const Discriminator& d, const Eigen::MatrixXd& real_inputs,
                   const Eigen::MatrixXd& fake_inputs, Rng* rng = nullptr);

// Non-saturating generator objective mean_i softplus(-fake_i) evaluated
// through the frozen discriminator (eval mode); d_input carries the gradient
// back to the discriminator input, whose depth slice feeds the generator.
struct GAdvResult {
  double loss = 0.0;
  Eigen::MatrixXd d_input;
};

GAdvResult g_adv_loss(const Discriminator& d, const Eigen::MatrixXd& fake_inputs);

// Lifts (2D px, per-joint depth mm) to 3D and returns the mean absolute
// deviation of the skeleton-tree bone lengths from the reference lengths.
double bone_plausibility(const Pose2D& pose2d_px, const Eigen::VectorXd& z_mm,
                         const CameraModel& cam, const SkeletonTopology& topo,
                         const std::vector<double>& reference_lengths);
double bone_plausibility(const CoarsePose& coarse, const Standardizer& z_stats,
                         const CameraModel& cam, const SkeletonTopology& topo,
                         const std::vector<double>& reference_lengths);

// Mean bone_plausibility of the generator's predictions over a set of poses.
double mean_bone_plausibility(const GeneratorModel& gen, const Dataset& ds,
                              const std::vector<int>& idx);

struct FinetuneEpochRow {
  int epoch = 0;
  double d_loss = 0.0;
  double d_acc = 0.0;
  double g_sup = 0.0;   // supervised L0 part
  double g_adv = 0.0;   // adversarial part
  double bone_dev = 0.0;  // on the out-of-domain set, mm
};

struct FinetuneMetrics {
  std::vector<FinetuneEpochRow> rows;
  bool diverged = false;
};

struct FinetuneResult {
  GeneratorModel generator;
  Discriminator discriminator;
  FinetuneMetrics metrics;
};

// Alternating updates: d_steps_per_g_step discriminator steps (real =
// ground-truth depth with its 2D, fake = generator output with the same 2D),
// then one generator step on supervised L0 + lambda_adv * adversarial loss.
// On a non-finite loss, returns the last epoch-end state with
// metrics.diverged set. ood holds the out-of-domain poses for the per-epoch
// bone deviation metric (may be null).
FinetuneResult finetune(const GeneratorModel& pretrained, const Dataset& ds,
                        const net::MlpSpec& d_spec, const AdvConfig& cfg,
                        const Dataset* ood = nullptr);

void save_discriminator(const std::filesystem::path& path, const Discriminator& d,
                        const std::string& config_hash);
Discriminator load_discriminator(const std::filesystem::path& path);

}  // namespace mdpose

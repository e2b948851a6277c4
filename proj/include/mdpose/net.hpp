#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdpose/rng.hpp"

namespace mdpose::net {

// Dense-network kit shared by the generator heads, the discriminator and the
// refiner: residual blocks of linear -> normalize -> relu -> dropout (twice,
// plus an identity skip), with an exact hand-derived backward pass. All math
// is double precision so finite-difference checks stay tight.

enum class OutputActivation { kLinear, kGroupSoftmax3 };
enum class Mode { kTrain, kEval };

struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  int hidden_dim = 256;
  int num_residual_blocks = 2;
  bool use_batch_stats_norm = true;
  double dropout_rate = 0.1;
  OutputActivation output_activation = OutputActivation::kLinear;

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& j);

struct DenseLayer {
  Eigen::MatrixXd w;     // in x out
  Eigen::RowVectorXd b;  // 1 x out
};

struct NormLayer {
  Eigen::RowVectorXd gamma, beta;
  Eigen::RowVectorXd running_mean, running_var;
};

struct ResidualBlock {
  DenseLayer lin1, lin2;
  NormLayer norm1, norm2;  // empty when normalization is disabled
};

struct MlpModel {
  MlpSpec spec;
  DenseLayer stem;      // input -> hidden; absent when num_residual_blocks == 0
  NormLayer stem_norm;
  std::vector<ResidualBlock> blocks;
  DenseLayer head;      // hidden -> output (input -> output when no blocks)
};

// Weights drawn N(0, sqrt(2 / fan_in)), biases zero, norm scales 1/0,
// running stats 0/1. Deterministic per seed.
MlpModel init(const MlpSpec& spec, std::uint64_t seed);

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.9;

struct NormCache {
  Eigen::MatrixXd xhat;
  Eigen::RowVectorXd inv_std;
  Eigen::RowVectorXd new_running_mean, new_running_var;  // train mode only
};

struct StageCache {
  Eigen::MatrixXd lin_in;    // input to the dense layer
  NormCache norm;
  Eigen::MatrixXd pre_relu;  // post-norm (or post-dense) activations
  Eigen::MatrixXd dropout_mask;  // empty when dropout inactive
};

struct Cache {
  MlpSpec spec;
  Mode mode = Mode::kEval;
  Eigen::MatrixXd input;
  std::vector<StageCache> stages;            // stem, then two per block
  std::vector<Eigen::MatrixXd> block_inputs; // skip-connection sources
  Eigen::MatrixXd head_in;
  Eigen::MatrixXd logits;   // pre output activation
  Eigen::MatrixXd output;
};

struct ForwardResult {
  Eigen::MatrixXd output;
  Cache cache;
};

// Forward pass over a batch (one sample per row). Train mode with active
// dropout needs an rng; eval mode is a pure function of (model, batch).
// Batch-stats normalization requires >= 2 rows in train mode. Running-stat
// updates are returned in the cache, never applied implicitly; call
// apply_norm_updates from the training step.
ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& batch, Mode mode,
                      Rng* rng = nullptr);

void apply_norm_updates(MlpModel& model, const Cache& cache);

struct DenseGrad {
  Eigen::MatrixXd w;
  Eigen::RowVectorXd b;
};

struct NormGrad {
  Eigen::RowVectorXd gamma, beta;
};

struct BlockGrad {
  DenseGrad lin1, lin2;
  NormGrad norm1, norm2;
};

struct Gradients {
  DenseGrad stem;
  NormGrad stem_norm;
  std::vector<BlockGrad> blocks;
  DenseGrad head;
  Eigen::MatrixXd input;  // dL/d(batch)
};

// Exact reverse-mode differentiation of forward. d_output is the gradient
// w.r.t. the post-activation output; backward_from_logits injects the
// gradient before the output activation (fused softmax/cross-entropy path).
Gradients backward(const MlpModel& model, const Cache& cache, const Eigen::MatrixXd& d_output);
Gradients backward_from_logits(const MlpModel& model, const Cache& cache,
                               const Eigen::MatrixXd& d_logits);

void axpy(Gradients& acc, const Gradients& g, double scale = 1.0);

// Flat views over every trainable parameter (running stats excluded), in a
// fixed order shared with Gradients.
std::vector<Eigen::Map<Eigen::VectorXd>> param_views(MlpModel& model);
std::vector<Eigen::Map<const Eigen::VectorXd>> param_views(const MlpModel& model);
std::vector<Eigen::Map<const Eigen::VectorXd>> grad_views(const Gradients& grads);

struct OptimState {
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Eigen::VectorXd> m, v;  // aligned with param_views order
};

OptimState make_optim_state(const MlpModel& model, double learning_rate = 1e-3);

// Adaptive-moment update with bias correction. Throws on non-finite
// gradients without touching the model.
void opt_step(MlpModel& model, const Gradients& grads, OptimState& state);

// loss_fn maps the network output to (loss, dL/d_output).
using LossFn =
    std::function<std::pair<double, Eigen::MatrixXd>(const Eigen::MatrixXd& output)>;

// Central finite differences on a strided subsample of each parameter array
// versus the analytic gradients. Requires dropout_rate == 0. Returns
// max |a - n| / max(|a|, |n|, 1e-8).
double grad_check(const MlpModel& model, const Eigen::MatrixXd& batch, const LossFn& loss_fn,
                  double fd_step = 1e-5, int samples_per_param = 24);

// Checkpoints: JSON with a spec echo, flat parameter arrays per layer,
// optional optimizer state and a content hash over the parameter payload.
nlohmann::json model_to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j,
                         const std::optional<MlpSpec>& expected_spec = {});
nlohmann::json optim_to_json(const OptimState& state);
OptimState optim_from_json(const nlohmann::json& j);

void save_model_checkpoint(const std::filesystem::path& path, const MlpModel& model,
                           const OptimState* optim, const std::string& tag,
                           const std::string& config_hash);

struct LoadedCheckpoint {
  MlpModel model;
  std::optional<OptimState> optim;
  std::string tag;
  std::string config_hash;
};

// Verifies the content hash; rejects a spec or tag mismatch.
LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path,
                                       const std::optional<MlpSpec>& expected_spec = {},
                                       const std::optional<std::string>& expected_tag = {});

}  // namespace mdpose::net

#pragma once

#include <filesystem>
#include <string>

#include "mdpose/adversarial.hpp"
#include "mdpose/dataset.hpp"
#include "mdpose/refiner.hpp"

namespace mdpose {

// One JSON file per run; every field except the seed has a default. Errors
// name the offending field path.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/out";

  SkeletonTopology topo;
  CameraModel camera;
  FbiLabelConfig fbi;
  SynthConfig synth;

  // generator heads
  int gen_hidden_dim = 128;
  int gen_blocks = 2;
  double gen_dropout = 0.1;
  bool gen_batch_norm = true;
  GenTrainConfig gen_train;

  // discriminator
  int d_hidden_dim = 64;
  int d_blocks = 1;
  double d_dropout = 0.0;
  bool d_batch_norm = true;
  AdvConfig adv;

  // refiner
  int ref_hidden_dim = 256;
  int ref_blocks = 2;
  double ref_dropout = 0.1;
  bool ref_batch_norm = true;
  RefinerTrainConfig ref_train;
  RefinerMode ref_mode = RefinerMode::kFinal;

  net::MlpSpec coarse_spec() const;
  net::MlpSpec fbi_spec() const;
  net::MlpSpec discriminator_spec() const;
  net::MlpSpec refiner_spec(RefinerMode mode) const;

  nlohmann::json to_json() const;
  std::string hash() const;  // hex digest of the canonical config dump

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig defaults(std::uint64_t seed);
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mdpose

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdpose/runconfig.hpp"

namespace mdpose {

// CLI entry points. Each command is deterministic given the config, writes
// outputs atomically and throws on error (the tool maps that to a nonzero
// exit status). Artifacts live under cfg.out_dir with fixed names:
//   dataset.jsonl, generator.json, generator_ft.json, discriminator.json,
//   refiner_base.json, refiner_final.json, *_metrics.csv, eval.csv

void cmd_synth(const RunConfig& cfg);

void cmd_label(const SkeletonTopology& topo, const FbiLabelConfig& fbi_cfg,
               const std::filesystem::path& poses_in, const std::filesystem::path& fbi_out);

void cmd_train_gen(const RunConfig& cfg);

// Returns false when fine-tuning hit a non-finite loss (the last-good
// checkpoint is still written).
bool cmd_finetune(const RunConfig& cfg, const std::filesystem::path& generator_ckpt);

void cmd_train_refiner(const RunConfig& cfg, RefinerMode mode);

void cmd_eval(const RunConfig& cfg, const std::vector<std::filesystem::path>& refiner_ckpts,
              int render_count = 0);

// Returns true when every reported error is under its threshold.
bool cmd_gradcheck(const RunConfig& cfg);

// Out-of-domain evaluation poses (shared by finetune metrics and tests).
Dataset make_ood_dataset(const RunConfig& cfg, int count);

std::filesystem::path dataset_path(const RunConfig& cfg);
std::filesystem::path generator_path(const RunConfig& cfg);
std::filesystem::path generator_ft_path(const RunConfig& cfg);
std::filesystem::path discriminator_path(const RunConfig& cfg);
std::filesystem::path refiner_path(const RunConfig& cfg, RefinerMode mode);
std::filesystem::path eval_csv_path(const RunConfig& cfg);

}  // namespace mdpose

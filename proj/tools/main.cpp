#include <CLI11.hpp>
#include <iostream>

#include "mdpose/commands.hpp"
#include "mdpose/version.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "run configuration JSON");
  if (config_required) c->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--out", opts.out_dir, "override the output directory");
}

mdpose::RunConfig resolve(const CommonOpts& opts) {
  mdpose::RunConfig cfg = opts.config_path.empty()
                              ? mdpose::RunConfig::defaults(opts.seed.value_or(1))
                              : mdpose::load_run_config(opts.config_path);
  if (opts.seed.has_value()) {
    // Re-derive from JSON so every component seed follows the override.
    nlohmann::json j = cfg.to_json();
    j["seed"] = *opts.seed;
    cfg = mdpose::RunConfig::from_json(j);
  }
  if (opts.out_dir.has_value()) cfg.out_dir = *opts.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mdpose: synthetic 3D pose lifting with explicit + ordinal depth channels"};
  app.set_version_flag("--version", mdpose::kVersion);
  app.require_subcommand(1);

  CommonOpts synth_opts, gen_opts, ft_opts, ref_opts, eval_opts, grad_opts, label_opts;

  auto* synth = app.add_subcommand("synth", "generate the paired dataset");
  add_common(synth, synth_opts);

  auto* label = app.add_subcommand("label", "compute bone labels for a 3D pose file");
  std::string label_in, label_out;
  label->add_option("--config", label_opts.config_path, "run configuration JSON (topology/threshold)");
  label->add_option("--in", label_in, "JSON file with a 'poses' array")->required();
  label->add_option("--out", label_out, "output JSON path")->required();

  auto* train_gen = app.add_subcommand("train-gen", "pre-train the two-head generator");
  add_common(train_gen, gen_opts);

  auto* finetune = app.add_subcommand("finetune", "adversarially fine-tune the depth head");
  std::string gen_ckpt;
  add_common(finetune, ft_opts);
  finetune->add_option("--generator", gen_ckpt, "pre-trained generator checkpoint");

  auto* train_ref = app.add_subcommand("train-refiner", "train the 3D pose refiner");
  std::string mode = "";
  add_common(train_ref, ref_opts);
  train_ref->add_option("--mode", mode, "base|final (default from config)");

  auto* eval = app.add_subcommand("eval", "per-action MPJPE table for refiner checkpoints");
  std::vector<std::string> ckpts;
  int render_count = 0;
  add_common(eval, eval_opts);
  eval->add_option("--ckpt", ckpts, "refiner checkpoint path (repeatable)")->required();
  eval->add_option("--render", render_count, "render the first N test poses as SVG");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck, grad_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      mdpose::cmd_synth(resolve(synth_opts));
    } else if (label->parsed()) {
      const mdpose::RunConfig cfg = resolve(label_opts);
      mdpose::cmd_label(cfg.topo, cfg.fbi, label_in, label_out);
    } else if (train_gen->parsed()) {
      mdpose::cmd_train_gen(resolve(gen_opts));
    } else if (finetune->parsed()) {
      const mdpose::RunConfig cfg = resolve(ft_opts);
      const std::filesystem::path ckpt =
          gen_ckpt.empty() ? mdpose::generator_path(cfg) : std::filesystem::path(gen_ckpt);
      if (!mdpose::cmd_finetune(cfg, ckpt)) return 2;
    } else if (train_ref->parsed()) {
      const mdpose::RunConfig cfg = resolve(ref_opts);
      mdpose::RefinerMode m = cfg.ref_mode;
      if (mode == "base") {
        m = mdpose::RefinerMode::kBase;
      } else if (mode == "final") {
        m = mdpose::RefinerMode::kFinal;
      } else if (!mode.empty()) {
        throw std::invalid_argument("--mode must be base or final");
      }
      mdpose::cmd_train_refiner(cfg, m);
    } else if (eval->parsed()) {
      const mdpose::RunConfig cfg = resolve(eval_opts);
      std::vector<std::filesystem::path> paths(ckpts.begin(), ckpts.end());
      mdpose::cmd_eval(cfg, paths, render_count);
    } else if (gradcheck->parsed()) {
      if (!mdpose::cmd_gradcheck(resolve(grad_opts))) return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

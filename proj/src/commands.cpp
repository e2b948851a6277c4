#include "mdpose/commands.hpp"

#include <iomanip>
#include <iostream>
#include <sstream>

#include "mdpose/gradcheck.hpp"
#include "mdpose/io.hpp"
#include "mdpose/svg.hpp"
#include "mdpose/version.hpp"

namespace mdpose {

namespace {

std::string csv_header_comment(const RunConfig& cfg) {
  return "# mdpose " + std::string(kVersion) + " config=" + cfg.hash() + "\n";
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(9) << v;
  return ss.str();
}

}  // namespace

std::filesystem::path dataset_path(const RunConfig& cfg) { return cfg.out_dir / "dataset.jsonl"; }
std::filesystem::path generator_path(const RunConfig& cfg) { return cfg.out_dir / "generator.json"; }
std::filesystem::path generator_ft_path(const RunConfig& cfg) {
  return cfg.out_dir / "generator_ft.json";
}
std::filesystem::path discriminator_path(const RunConfig& cfg) {
  return cfg.out_dir / "discriminator.json";
}
std::filesystem::path refiner_path(const RunConfig& cfg, RefinerMode mode) {
  return cfg.out_dir / (mode == RefinerMode::kBase ? "refiner_base.json" : "refiner_final.json");
}
std::filesystem::path eval_csv_path(const RunConfig& cfg) { return cfg.out_dir / "eval.csv"; }

Dataset make_ood_dataset(const RunConfig& cfg, int count) {
  SynthConfig ood = ood_preset(cfg.synth);
  ood.count = count;
  ood.train_fraction = 0.0;  // evaluation only
  ood.seed = cfg.synth.seed ^ 0x00d5eedull;
  return make_dataset(ood, cfg.camera, cfg.topo, cfg.fbi, /*per_action_presets=*/false);
}

void cmd_synth(const RunConfig& cfg) {
  const Dataset ds = make_dataset(cfg.synth, cfg.camera, cfg.topo, cfg.fbi);
  write_dataset_jsonl(dataset_path(cfg), ds);
  std::cout << "wrote " << dataset_path(cfg).string() << " (" << ds.samples.size() << " samples, "
            << ds.train_indices().size() << " train / " << ds.test_indices().size() << " test)\n";
}

void cmd_label(const SkeletonTopology& topo, const FbiLabelConfig& fbi_cfg,
               const std::filesystem::path& poses_in, const std::filesystem::path& fbi_out) {
  const nlohmann::json in = nlohmann::json::parse(read_text_file(poses_in));
  if (!in.contains("poses") || !in.at("poses").is_array()) {
    throw std::invalid_argument("label: input must carry a 'poses' array");
  }
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& flat : in.at("poses")) {
    Eigen::VectorXd v(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      v(static_cast<Eigen::Index>(i)) = flat[i].get<double>();
    }
    if (v.size() != 3 * topo.joint_count()) {
      throw std::invalid_argument("label: pose with " + std::to_string(v.size()) +
                                  " values, expected " + std::to_string(3 * topo.joint_count()));
    }
    labels.push_back(fbi_to_json(label_fbi(Pose3D::from_flat(v), topo, fbi_cfg)));
  }
  const nlohmann::json out = {{"format", "mdpose-fbi"},
                              {"version", kVersion},
                              {"topology_hash", to_hex(topology_hash(topo))},
                              {"parallel_fraction", fbi_cfg.parallel_fraction},
                              {"fbi", labels}};
  atomic_write_file(fbi_out, out.dump());
  std::cout << "wrote " << fbi_out.string() << " (" << labels.size() << " poses)\n";
}

void cmd_train_gen(const RunConfig& cfg) {
  const Dataset ds = read_dataset_jsonl(dataset_path(cfg));
  GenMetrics metrics;
  const GeneratorModel gen =
      train_generator(ds, cfg.coarse_spec(), cfg.fbi_spec(), cfg.gen_train, &metrics);
  save_generator(generator_path(cfg), gen, "generator", cfg.hash());

  std::ostringstream csv;
  csv << csv_header_comment(cfg);
  csv << "epoch,coarse_loss,fbi_loss,test_fbi_acc,test_z_mae_mm\n";
  for (const auto& r : metrics.rows) {
    csv << r.epoch << ',' << fmt(r.coarse_loss) << ',' << fmt(r.fbi_loss) << ','
        << fmt(r.test_fbi_acc) << ',' << fmt(r.test_z_mae_mm) << '\n';
  }
  atomic_write_file(cfg.out_dir / "gen_metrics.csv", csv.str());
  std::cout << "wrote " << generator_path(cfg).string() << "\n";
}

bool cmd_finetune(const RunConfig& cfg, const std::filesystem::path& generator_ckpt) {
  const Dataset ds = read_dataset_jsonl(dataset_path(cfg));
  const GeneratorModel pre = load_generator(generator_ckpt);
  const Dataset ood = make_ood_dataset(cfg, 1000);

  const FinetuneResult res = finetune(pre, ds, cfg.discriminator_spec(), cfg.adv, &ood);
  save_generator(generator_ft_path(cfg), res.generator, "generator_ft", cfg.hash());
  save_discriminator(discriminator_path(cfg), res.discriminator, cfg.hash());

  std::ostringstream csv;
  csv << csv_header_comment(cfg);
  csv << "epoch,d_loss,d_acc,g_sup,g_adv,bone_dev\n";
  for (const auto& r : res.metrics.rows) {
    csv << r.epoch << ',' << fmt(r.d_loss) << ',' << fmt(r.d_acc) << ',' << fmt(r.g_sup) << ','
        << fmt(r.g_adv) << ',' << fmt(r.bone_dev) << '\n';
  }
  atomic_write_file(cfg.out_dir / "finetune_metrics.csv", csv.str());

  if (res.metrics.diverged) {
    std::cerr << "finetune: non-finite loss, wrote last-good checkpoint\n";
    return false;
  }
  std::cout << "wrote " << generator_ft_path(cfg).string() << "\n";
  return true;
}

void cmd_train_refiner(const RunConfig& cfg, RefinerMode mode) {
  const Dataset ds = read_dataset_jsonl(dataset_path(cfg));
  GeneratorModel gen;
  const GeneratorModel* gen_ptr = nullptr;
  if (cfg.ref_train.inputs == RefinerInputSource::kGenerator) {
    const auto path = std::filesystem::exists(generator_ft_path(cfg)) ? generator_ft_path(cfg)
                                                                      : generator_path(cfg);
    gen = load_generator(path);
    gen_ptr = &gen;
  }
  RefinerMetrics metrics;
  const RefinerModel model =
      train_refiner(ds, cfg.refiner_spec(mode), cfg.ref_train, gen_ptr, &metrics);
  const std::string tag = mode == RefinerMode::kBase ? "refiner_base" : "refiner_final";
  save_refiner(refiner_path(cfg, mode), model, tag, cfg.hash());

  std::ostringstream csv;
  csv << csv_header_comment(cfg);
  csv << "epoch,alpha,train_loss,train_mean_l0,test_mpjpe,clamp_events\n";
  for (const auto& r : metrics.rows) {
    csv << r.epoch << ',' << fmt(r.alpha) << ',' << fmt(r.train_loss) << ','
        << fmt(r.train_mean_l0) << ',' << fmt(r.test_mpjpe) << ',' << r.clamp_events << '\n';
  }
  atomic_write_file(cfg.out_dir / (tag + "_metrics.csv"), csv.str());
  std::cout << "wrote " << refiner_path(cfg, mode).string() << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::vector<std::filesystem::path>& refiner_ckpts,
              int render_count) {
  const Dataset ds = read_dataset_jsonl(dataset_path(cfg));
  const std::vector<int> test_idx = ds.test_indices();
  GeneratorModel gen;
  const GeneratorModel* gen_ptr = nullptr;
  if (cfg.ref_train.inputs == RefinerInputSource::kGenerator) {
    const auto path = std::filesystem::exists(generator_ft_path(cfg)) ? generator_ft_path(cfg)
                                                                      : generator_path(cfg);
    gen = load_generator(path);
    gen_ptr = &gen;
  }

  std::ostringstream csv;
  csv << csv_header_comment(cfg);
  csv << "tag";
  for (int a = 0; a < kActionBins; ++a) csv << ",A" << (a + 1);
  csv << ",Avg\n";

  bool rendered = false;
  for (const auto& path : refiner_ckpts) {
    const Envelope env = open_envelope(read_text_file(path));
    const RefinerModel model = load_refiner(path);
    const EvalTable table = evaluate(model, ds, test_idx, cfg.ref_train.inputs, gen_ptr);
    csv << env.tag;
    for (int a = 0; a < kActionBins; ++a) {
      csv << ',' << fmt(table.per_action[static_cast<std::size_t>(a)]);
    }
    csv << ',' << fmt(table.avg) << '\n';
    for (int bin : table.missing_bins) {
      std::cerr << "eval: no test samples in bin A" << (bin + 1) << " for " << env.tag << "\n";
    }

    if (!rendered && render_count > 0) {
      rendered = true;
      for (int k = 0; k < std::min<int>(render_count, static_cast<int>(test_idx.size())); ++k) {
        const Sample& s = ds.samples[static_cast<std::size_t>(test_idx[static_cast<std::size_t>(k)])];
        std::optional<Eigen::VectorXd> z;
        std::optional<Eigen::MatrixXd> fbi;
        if (model.mode == RefinerMode::kFinal) {
          z = s.coarse_z_noisy;
          fbi = s.fbi_noisy.one_hot();
        }
        const Pose3D pred = refine(model, ds.topo, s.pose2d_noisy, z, fbi);
        const FbiMatrix pred_fbi = label_fbi(pred, ds.topo, ds.fbi_cfg);
        atomic_write_file(cfg.out_dir / ("pose_" + std::to_string(s.id) + ".svg"),
                          render_pose_svg(pred, ds.topo, &pred_fbi));
      }
    }
  }
  atomic_write_file(eval_csv_path(cfg), csv.str());
  std::cout << "wrote " << eval_csv_path(cfg).string() << "\n";
}

bool cmd_gradcheck(const RunConfig& cfg) {
  const GradCheckReport report = run_grad_checks(cfg);
  std::ostringstream csv;
  csv << csv_header_comment(cfg);
  csv << "component,max_rel_error,threshold,pass\n";
  for (const auto& r : report.rows) {
    std::cout << (r.pass ? "[ok]   " : "[FAIL] ") << r.component << "  max_rel_error="
              << fmt(r.max_rel_error) << "  threshold=" << fmt(r.threshold) << "\n";
    csv << r.component << ',' << fmt(r.max_rel_error) << ',' << fmt(r.threshold) << ','
        << (r.pass ? 1 : 0) << '\n';
  }
  atomic_write_file(cfg.out_dir / "gradcheck.csv", csv.str());
  return report.all_pass();
}

}  // namespace mdpose

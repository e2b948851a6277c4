#include "mdpose/runconfig.hpp"

#include <stdexcept>

#include "mdpose/io.hpp"

namespace mdpose {

namespace {

// Field-path-aware accessors so malformed configs fail with the exact
// offending key.
template <class T>
T fetch(const nlohmann::json& j, const std::string& path, const T& fallback) {
  const nlohmann::json* cur = &j;
  std::size_t begin = 0;
  while (begin <= path.size()) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (!cur->is_object() || !cur->contains(key)) {
      return fallback;
    }
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  try {
    return cur->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config error at '" + path + "': wrong type");
  }
}

bool has_path(const nlohmann::json& j, const std::string& path) {
  const nlohmann::json* cur = &j;
  std::size_t begin = 0;
  while (begin <= path.size()) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (!cur->is_object() || !cur->contains(key)) return false;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  return true;
}

}  // namespace

net::MlpSpec RunConfig::coarse_spec() const {
  net::MlpSpec s;
  s.input_dim = 2 * topo.joint_count();
  s.output_dim = topo.joint_count();
  s.hidden_dim = gen_hidden_dim;
  s.num_residual_blocks = gen_blocks;
  s.dropout_rate = gen_dropout;
  s.use_batch_stats_norm = gen_batch_norm;
  s.output_activation = net::OutputActivation::kLinear;
  return s;
}

net::MlpSpec RunConfig::fbi_spec() const {
  net::MlpSpec s = coarse_spec();
  s.output_dim = 3 * topo.bone_count();
  s.output_activation = net::OutputActivation::kGroupSoftmax3;
  return s;
}

net::MlpSpec RunConfig::discriminator_spec() const {
  net::MlpSpec s;
  s.input_dim = 3 * topo.joint_count();
  s.output_dim = 1;
  s.hidden_dim = d_hidden_dim;
  s.num_residual_blocks = d_blocks;
  s.dropout_rate = d_dropout;
  s.use_batch_stats_norm = d_batch_norm;
  return s;
}

net::MlpSpec RunConfig::refiner_spec(RefinerMode mode) const {
  net::MlpSpec s;
  s.input_dim = refiner_input_dim(topo, mode);
  s.output_dim = 3 * topo.joint_count();
  s.hidden_dim = ref_hidden_dim;
  s.num_residual_blocks = ref_blocks;
  s.dropout_rate = ref_dropout;
  s.use_batch_stats_norm = ref_batch_norm;
  return s;
}

RunConfig RunConfig::defaults(std::uint64_t seed) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.topo = SkeletonTopology::human17();
  cfg.synth = SynthConfig::defaults(cfg.topo);
  cfg.synth.seed = seed;
  cfg.gen_train.seed = seed;
  cfg.adv.seed = seed;
  cfg.ref_train.seed = seed;
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"out_dir", out_dir.string()},
      {"topology", topology_to_json(topo)},
      {"camera", camera_to_json(camera)},
      {"fbi", {{"parallel_fraction", fbi.parallel_fraction}}},
      {"synth", synth_config_to_json(synth)},
      {"generator",
       {{"hidden_dim", gen_hidden_dim},
        {"blocks", gen_blocks},
        {"dropout", gen_dropout},
        {"batch_norm", gen_batch_norm},
        {"epochs", gen_train.epochs},
        {"batch_size", gen_train.batch_size},
        {"learning_rate", gen_train.learning_rate}}},
      {"adversarial",
       {{"hidden_dim", d_hidden_dim},
        {"blocks", d_blocks},
        {"dropout", d_dropout},
        {"batch_norm", d_batch_norm},
        {"lambda_adv", adv.lambda_adv},
        {"d_steps_per_g_step", adv.d_steps_per_g_step},
        {"epochs", adv.epochs},
        {"batch_size", adv.batch_size},
        {"lr_g", adv.lr_g},
        {"lr_d", adv.lr_d}}},
      {"refiner",
       {{"hidden_dim", ref_hidden_dim},
        {"blocks", ref_blocks},
        {"dropout", ref_dropout},
        {"batch_norm", ref_batch_norm},
        {"epochs", ref_train.epochs},
        {"batch_size", ref_train.batch_size},
        {"learning_rate", ref_train.learning_rate},
        {"epsilon", ref_train.epsilon},
        {"inputs", ref_train.inputs == RefinerInputSource::kCorrupted ? "corrupted" : "generator"},
        {"mode", ref_mode == RefinerMode::kBase ? "base" : "final"}}},
  };
}

std::string RunConfig::hash() const {
  // out_dir does not influence any computation; leaving it out lets reruns
  // into different directories produce byte-identical artifacts.
  nlohmann::json j = to_json();
  j.erase("out_dir");
  return to_hex(fnv1a64(j.dump()));
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!has_path(j, "seed")) {
    throw std::invalid_argument("config error at 'seed': field is required");
  }
  RunConfig cfg = defaults(fetch<std::uint64_t>(j, "seed", 0));
  cfg.out_dir = fetch<std::string>(j, "out_dir", cfg.out_dir.string());

  if (has_path(j, "topology") && j.at("topology").is_object()) {
    cfg.topo = topology_from_json(j.at("topology"));
    cfg.synth = SynthConfig::defaults(cfg.topo);
  }
  cfg.camera.focal_length = fetch<double>(j, "camera.focal_length", cfg.camera.focal_length);
  if (has_path(j, "camera.principal_point")) {
    const auto& pp = j.at("camera").at("principal_point");
    cfg.camera.principal_point = {pp.at(0).get<double>(), pp.at(1).get<double>()};
  }
  cfg.camera.subject_distance =
      fetch<double>(j, "camera.subject_distance", cfg.camera.subject_distance);
  cfg.fbi.parallel_fraction =
      fetch<double>(j, "fbi.parallel_fraction", cfg.fbi.parallel_fraction);

  cfg.synth.seed = cfg.seed;
  cfg.synth.count = fetch<int>(j, "synth.count", cfg.synth.count);
  cfg.synth.train_fraction = fetch<double>(j, "synth.train_fraction", cfg.synth.train_fraction);
  cfg.synth.noise_2d_std = fetch<double>(j, "synth.noise_2d_std", cfg.synth.noise_2d_std);
  cfg.synth.coarse_z_noise_std =
      fetch<double>(j, "synth.coarse_z_noise_std", cfg.synth.coarse_z_noise_std);
  cfg.synth.fbi_flip_prob = fetch<double>(j, "synth.fbi_flip_prob", cfg.synth.fbi_flip_prob);
  if (has_path(j, "synth.bone_lengths")) {
    const auto& bl = j.at("synth").at("bone_lengths");
    if (!bl.is_object()) {
      throw std::invalid_argument(
          "config error at 'synth.bone_lengths': expected {joint_name: mm}");
    }
    for (const auto& [name, value] : bl.items()) {
      bool found = false;
      for (int i = 0; i < cfg.topo.joint_count(); ++i) {
        if (cfg.topo.joint_names[static_cast<std::size_t>(i)] == name) {
          cfg.synth.bone_lengths[static_cast<std::size_t>(i)] = value.get<double>();
          found = true;
        }
      }
      if (!found) {
        throw std::invalid_argument("config error at 'synth.bone_lengths." + name +
                                    "': unknown joint");
      }
    }
  }

  cfg.gen_hidden_dim = fetch<int>(j, "generator.hidden_dim", cfg.gen_hidden_dim);
  cfg.gen_blocks = fetch<int>(j, "generator.blocks", cfg.gen_blocks);
  cfg.gen_dropout = fetch<double>(j, "generator.dropout", cfg.gen_dropout);
  cfg.gen_batch_norm = fetch<bool>(j, "generator.batch_norm", cfg.gen_batch_norm);
  cfg.gen_train.epochs = fetch<int>(j, "generator.epochs", cfg.gen_train.epochs);
  cfg.gen_train.batch_size = fetch<int>(j, "generator.batch_size", cfg.gen_train.batch_size);
  cfg.gen_train.learning_rate =
      fetch<double>(j, "generator.learning_rate", cfg.gen_train.learning_rate);
  cfg.gen_train.seed = cfg.seed;

  cfg.d_hidden_dim = fetch<int>(j, "adversarial.hidden_dim", cfg.d_hidden_dim);
  cfg.d_blocks = fetch<int>(j, "adversarial.blocks", cfg.d_blocks);
  cfg.d_dropout = fetch<double>(j, "adversarial.dropout", cfg.d_dropout);
  cfg.d_batch_norm = fetch<bool>(j, "adversarial.batch_norm", cfg.d_batch_norm);
  cfg.adv.lambda_adv = fetch<double>(j, "adversarial.lambda_adv", cfg.adv.lambda_adv);
  cfg.adv.d_steps_per_g_step =
      fetch<int>(j, "adversarial.d_steps_per_g_step", cfg.adv.d_steps_per_g_step);
  cfg.adv.epochs = fetch<int>(j, "adversarial.epochs", cfg.adv.epochs);
  cfg.adv.batch_size = fetch<int>(j, "adversarial.batch_size", cfg.adv.batch_size);
  cfg.adv.lr_g = fetch<double>(j, "adversarial.lr_g", cfg.adv.lr_g);
  cfg.adv.lr_d = fetch<double>(j, "adversarial.lr_d", cfg.adv.lr_d);
  cfg.adv.seed = cfg.seed;

  cfg.ref_hidden_dim = fetch<int>(j, "refiner.hidden_dim", cfg.ref_hidden_dim);
  cfg.ref_blocks = fetch<int>(j, "refiner.blocks", cfg.ref_blocks);
  cfg.ref_dropout = fetch<double>(j, "refiner.dropout", cfg.ref_dropout);
  cfg.ref_batch_norm = fetch<bool>(j, "refiner.batch_norm", cfg.ref_batch_norm);
  cfg.ref_train.epochs = fetch<int>(j, "refiner.epochs", cfg.ref_train.epochs);
  cfg.ref_train.batch_size = fetch<int>(j, "refiner.batch_size", cfg.ref_train.batch_size);
  cfg.ref_train.learning_rate =
      fetch<double>(j, "refiner.learning_rate", cfg.ref_train.learning_rate);
  cfg.ref_train.epsilon = fetch<double>(j, "refiner.epsilon", cfg.ref_train.epsilon);
  cfg.ref_train.seed = cfg.seed;
  const std::string inputs = fetch<std::string>(j, "refiner.inputs", "corrupted");
  if (inputs == "corrupted") {
    cfg.ref_train.inputs = RefinerInputSource::kCorrupted;
  } else if (inputs == "generator") {
    cfg.ref_train.inputs = RefinerInputSource::kGenerator;
  } else {
    throw std::invalid_argument("config error at 'refiner.inputs': expected corrupted|generator");
  }
  const std::string mode = fetch<std::string>(j, "refiner.mode", "final");
  if (mode == "base") {
    cfg.ref_mode = RefinerMode::kBase;
  } else if (mode == "final") {
    cfg.ref_mode = RefinerMode::kFinal;
  } else {
    throw std::invalid_argument("config error at 'refiner.mode': expected base|final");
  }

  cfg.camera.validate();
  cfg.fbi.validate();
  cfg.synth.validate(cfg.topo);
  cfg.adv.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace mdpose

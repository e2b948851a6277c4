#include "mdpose/dataset.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mdpose/io.hpp"
#include "mdpose/version.hpp"

namespace mdpose {

namespace {

// Stream ids keeping per-sample draws, the split and downstream consumers
// decoupled from each other.
constexpr std::uint64_t kSampleStream = 0x5a11;
constexpr std::uint64_t kSplitStream = 0x5712;

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = a[i].get<double>();
  return v;
}

std::string action_name(int action) { return "A" + std::to_string(action + 1); }

int action_from_name(const std::string& name) {
  if (name.size() < 2 || name[0] != 'A') {
    throw std::invalid_argument("dataset: bad action tag " + name);
  }
  return std::stoi(name.substr(1)) - 1;
}

}  // namespace

std::vector<int> Dataset::train_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    if (!samples[static_cast<std::size_t>(i)].is_test) idx.push_back(i);
  }
  return idx;
}

std::vector<int> Dataset::test_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    if (samples[static_cast<std::size_t>(i)].is_test) idx.push_back(i);
  }
  return idx;
}

Dataset make_dataset(const SynthConfig& cfg, const CameraModel& cam, const SkeletonTopology& topo,
                     const FbiLabelConfig& fbi_cfg, bool per_action_presets) {
  cfg.validate(topo);
  cam.validate();
  fbi_cfg.validate();
  if (cfg.count < 2) {
    throw std::invalid_argument("make_dataset: count must be >= 2");
  }

  Dataset ds;
  ds.topo = topo;
  ds.cam = cam;
  ds.cfg = cfg;
  ds.fbi_cfg = fbi_cfg;
  ds.samples.resize(static_cast<std::size_t>(cfg.count));

  // Each sample owns an rng stream derived from (seed, index), so generation
  // order is irrelevant.
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng = Rng::derive(cfg.seed, kSampleStream, static_cast<std::uint64_t>(i));
    const int action = i % kActionBins;
    const SynthConfig preset = per_action_presets ? action_preset(cfg, action) : cfg;

    Sample s;
    s.id = i;
    s.action = action;
    const Pose3D pose = sample_pose(preset, topo, rng);
    s.pose3d_gt = root_relative(pose, topo);
    s.fbi_gt = label_fbi(s.pose3d_gt, topo, fbi_cfg);
    s.pose2d = project(s.pose3d_gt, cam);
    s.coarse_z_gt = s.pose3d_gt.coords.col(2);
    s = corrupt(s, cfg, rng);
    ds.samples[static_cast<std::size_t>(i)] = s;
  }

  // Seeded permutation split.
  std::vector<int> perm(static_cast<std::size_t>(cfg.count));
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng = Rng::derive(cfg.seed, kSplitStream);
  split_rng.shuffle(perm);
  const int n_train = static_cast<int>(
      std::llround(cfg.train_fraction * static_cast<double>(cfg.count)));
  for (int k = 0; k < cfg.count; ++k) {
    ds.samples[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])].is_test =
        (k >= n_train);
  }
  return ds;
}

std::string dataset_to_jsonl(const Dataset& ds) {
  nlohmann::json config = {{"synth", synth_config_to_json(ds.cfg)},
                           {"camera", camera_to_json(ds.cam)},
                           {"fbi", {{"parallel_fraction", ds.fbi_cfg.parallel_fraction}}}};
  nlohmann::json header = {{"format", "mdpose-dataset"},
                           {"version", kVersion},
                           {"topology", topology_to_json(ds.topo)},
                           {"topology_hash", to_hex(topology_hash(ds.topo))},
                           {"config", config},
                           {"config_hash", to_hex(fnv1a64(config.dump()))}};
  std::ostringstream out;
  out << header.dump() << "\n";
  for (const auto& s : ds.samples) {
    nlohmann::json line = {{"id", s.id},
                           {"action", action_name(s.action)},
                           {"split", s.is_test ? "test" : "train"},
                           {"pose3d_gt", vec_to_json(s.pose3d_gt.flat())},
                           {"pose2d", vec_to_json(s.pose2d.flat())},
                           {"pose2d_noisy", vec_to_json(s.pose2d_noisy.flat())},
                           {"coarse_z_gt", vec_to_json(s.coarse_z_gt)},
                           {"coarse_z_noisy", vec_to_json(s.coarse_z_noisy)},
                           {"fbi_gt", fbi_to_json(s.fbi_gt)},
                           {"fbi_noisy", fbi_to_json(s.fbi_noisy)}};
    out << line.dump() << "\n";
  }
  return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("dataset: empty file");
  }
  const nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<std::string>() != "mdpose-dataset") {
    throw std::invalid_argument("dataset: unrecognized format tag");
  }
  Dataset ds;
  ds.topo = topology_from_json(header.at("topology"));
  const auto& config = header.at("config");
  ds.cam = camera_from_json(config.at("camera"));
  ds.cfg = synth_config_from_json(config.at("synth"), ds.topo);
  ds.fbi_cfg.parallel_fraction = config.at("fbi").at("parallel_fraction").get<double>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    Sample s;
    s.id = j.at("id").get<int>();
    s.action = action_from_name(j.at("action").get<std::string>());
    s.is_test = j.at("split").get<std::string>() == "test";
    s.pose3d_gt = Pose3D::from_flat(vec_from_json(j.at("pose3d_gt")));
    s.pose2d = Pose2D::from_flat(vec_from_json(j.at("pose2d")));
    s.pose2d_noisy = Pose2D::from_flat(vec_from_json(j.at("pose2d_noisy")));
    s.coarse_z_gt = vec_from_json(j.at("coarse_z_gt"));
    s.coarse_z_noisy = vec_from_json(j.at("coarse_z_noisy"));
    s.fbi_gt = fbi_from_json(j.at("fbi_gt"), ds.topo.bone_count());
    s.fbi_noisy = fbi_from_json(j.at("fbi_noisy"), ds.topo.bone_count());
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  atomic_write_file(path, dataset_to_jsonl(ds));
}

Dataset read_dataset_jsonl(const std::filesystem::path& path) {
  return dataset_from_jsonl(read_text_file(path));
}

namespace {

template <class Getter>
Eigen::MatrixXd gather(const Dataset& ds, const std::vector<int>& idx, int cols, Getter get) {
  Eigen::MatrixXd m(static_cast<int>(idx.size()), cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    m.row(static_cast<int>(r)) =
        get(ds.samples[static_cast<std::size_t>(idx[r])]).transpose();
  }
  return m;
}

}  // namespace

Eigen::MatrixXd gather_pose2d_noisy(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, 2 * ds.topo.joint_count(),
                [](const Sample& s) { return s.pose2d_noisy.flat(); });
}

Eigen::MatrixXd gather_pose2d_clean(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, 2 * ds.topo.joint_count(),
                [](const Sample& s) { return s.pose2d.flat(); });
}

Eigen::MatrixXd gather_z_gt(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, ds.topo.joint_count(),
                [](const Sample& s) { return s.coarse_z_gt; });
}

Eigen::MatrixXd gather_z_noisy(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, ds.topo.joint_count(),
                [](const Sample& s) { return s.coarse_z_noisy; });
}

Eigen::MatrixXd gather_fbi_onehot_gt(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, 3 * ds.topo.bone_count(),
                [](const Sample& s) { return s.fbi_gt.flat_one_hot(); });
}

Eigen::MatrixXd gather_fbi_onehot_noisy(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, 3 * ds.topo.bone_count(),
                [](const Sample& s) { return s.fbi_noisy.flat_one_hot(); });
}

Eigen::MatrixXd gather_pose3d_gt(const Dataset& ds, const std::vector<int>& idx) {
  return gather(ds, idx, 3 * ds.topo.joint_count(),
                [](const Sample& s) { return s.pose3d_gt.flat(); });
}

}  // namespace mdpose

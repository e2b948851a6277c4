#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mdpose/dataset.hpp"

using namespace mdpose;

namespace {

const SkeletonTopology& topo() {
  static const SkeletonTopology t = SkeletonTopology::human17();
  return t;
}

}  // namespace

TEST_CASE("collapsed angle ranges give a fixed rest pose") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  for (auto& r : cfg.joint_angle_ranges) {
    const Eigen::Vector3d mid = 0.5 * (r.min + r.max);
    r.min = mid;
    r.max = mid;
  }
  Rng a(1), b(999);
  const Pose3D pa = sample_pose(cfg, topo(), a);
  const Pose3D pb = sample_pose(cfg, topo(), b);
  CHECK((pa.coords - pb.coords).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampled bone lengths match the configured lengths") {
  const SynthConfig cfg = SynthConfig::defaults(topo());
  for (int k = 0; k < 50; ++k) {
    Rng rng = Rng::derive(3, 0x11, static_cast<std::uint64_t>(k));
    const Pose3D p = sample_pose(cfg, topo(), rng);
    for (int i = 0; i < topo().joint_count(); ++i) {
      if (i == topo().root_joint) continue;
      const int parent = topo().parent_index[static_cast<std::size_t>(i)];
      const double len = (p.coords.row(i) - p.coords.row(parent)).norm();
      const double want = cfg.bone_lengths[static_cast<std::size_t>(i)];
      CHECK(std::abs(len - want) / want < 1e-9);
    }
  }
}

TEST_CASE("sample_pose is deterministic per (seed, index)") {
  const SynthConfig cfg = SynthConfig::defaults(topo());
  Rng a = Rng::derive(42, 7, 3);
  Rng b = Rng::derive(42, 7, 3);
  const Pose3D pa = sample_pose(cfg, topo(), a);
  const Pose3D pb = sample_pose(cfg, topo(), b);
  CHECK((pa.coords - pb.coords).cwiseAbs().maxCoeff() == 0.0);

  Rng c = Rng::derive(42, 7, 4);
  const Pose3D pc = sample_pose(cfg, topo(), c);
  CHECK((pa.coords - pc.coords).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sample_pose roots at the origin") {
  const SynthConfig cfg = SynthConfig::defaults(topo());
  Rng rng(5);
  const Pose3D p = sample_pose(cfg, topo(), rng);
  CHECK(p.coords.row(topo().root_joint).norm() == 0.0);
}

TEST_CASE("projection formula") {
  CameraModel cam;
  cam.focal_length = 1000.0;
  cam.principal_point = {0.0, 0.0};
  cam.subject_distance = 5000.0;

  Pose3D p;
  p.coords.setZero(17, 3);
  SUBCASE("axis ray hits the principal point") {
    const Pose2D q = project(p, cam);
    CHECK(q.coords.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("lateral offset follows u = f x / z") {
    p.coords(4, 0) = 100.0;  // depth stays subject_distance
    const Pose2D q = project(p, cam);
    CHECK(q.coords(4, 0) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(q.coords(4, 1) == 0.0);
  }
  SUBCASE("doubling f doubles centered coordinates") {
    Rng rng(8);
    for (int i = 0; i < 17; ++i) {
      p.coords(i, 0) = rng.normal(0, 300);
      p.coords(i, 1) = rng.normal(0, 300);
      p.coords(i, 2) = rng.normal(0, 300);
    }
    const Pose2D q1 = project(p, cam);
    CameraModel cam2 = cam;
    cam2.focal_length *= 2.0;
    const Pose2D q2 = project(p, cam2);
    CHECK((q2.coords - 2.0 * q1.coords).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("behind-camera joints are reported by index") {
    p.coords(9, 2) = -cam.subject_distance - 1.0;
    CHECK_THROWS_AS(project(p, cam), ProjectionError);
    try {
      project(p, cam);
    } catch (const ProjectionError& e) {
      CHECK(e.joint == 9);
    }
  }
}

TEST_CASE("projection round trip recovers lateral coordinates") {
  const SynthConfig cfg = SynthConfig::defaults(topo());
  CameraModel cam;
  for (int k = 0; k < 30; ++k) {
    Rng rng = Rng::derive(9, 0x22, static_cast<std::uint64_t>(k));
    const Pose3D p = root_relative(sample_pose(cfg, topo(), rng), topo());
    const Pose2D q = project(p, cam);
    const Pose3D lifted = backproject(q, p.coords.col(2), cam);
    for (int i = 0; i < 17; ++i) {
      const double scale = std::max(1.0, p.coords.row(i).norm());
      CHECK((lifted.coords.row(i) - p.coords.row(i)).norm() / scale < 1e-9);
    }
  }
}

TEST_CASE("corrupt with zero noise is the identity") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.noise_2d_std = 0.0;
  cfg.coarse_z_noise_std = 0.0;
  cfg.fbi_flip_prob = 0.0;
  const Dataset ds = make_dataset([&] {
    SynthConfig c = cfg;
    c.count = 20;
    return c;
  }(), CameraModel{}, topo(), FbiLabelConfig{});
  for (const auto& s : ds.samples) {
    CHECK((s.pose2d_noisy.coords - s.pose2d.coords).cwiseAbs().maxCoeff() == 0.0);
    CHECK((s.coarse_z_noisy - s.coarse_z_gt).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.fbi_noisy == s.fbi_gt);
  }
}

TEST_CASE("corrupt keeps one-hot labels valid under full resampling") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.fbi_flip_prob = 1.0;
  Sample s;
  s.pose2d.coords.setZero(17, 2);
  s.coarse_z_gt = Eigen::VectorXd::Zero(17);
  s.fbi_gt.classes.assign(14, 0);
  Rng rng(31);
  const Sample out = corrupt(s, cfg, rng);
  CHECK(out.fbi_noisy.bone_count() == 14);
  for (int c : out.fbi_noisy.classes) {
    CHECK(c >= 0);
    CHECK(c <= 2);
  }
  const Eigen::MatrixXd oh = out.fbi_noisy.one_hot();
  for (int i = 0; i < 14; ++i) CHECK(oh.row(i).sum() == 1.0);
  // ground truth untouched
  CHECK(out.fbi_gt == s.fbi_gt);
  CHECK((out.coarse_z_gt - s.coarse_z_gt).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corruption noise has the configured spread") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.noise_2d_std = 2.0;
  Sample s;
  s.pose2d.coords.setZero(17, 2);
  s.coarse_z_gt = Eigen::VectorXd::Zero(17);
  s.fbi_gt.classes.assign(14, 0);
  Rng rng(32);
  double sum = 0.0, sumsq = 0.0;
  const int reps = 3000;  // 3000 * 34 > 1e5 noise draws
  for (int k = 0; k < reps; ++k) {
    const Sample out = corrupt(s, cfg, rng);
    sum += out.pose2d_noisy.coords.sum();
    sumsq += out.pose2d_noisy.coords.squaredNorm();
  }
  const double n = static_cast<double>(reps) * 34.0;
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(std::abs(std::sqrt(var) - 2.0) / 2.0 < 0.05);
}

TEST_CASE("dataset split arithmetic and determinism") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.count = 10;
  const Dataset a = make_dataset(cfg, CameraModel{}, topo(), FbiLabelConfig{});
  CHECK(a.train_indices().size() == 8);
  CHECK(a.test_indices().size() == 2);

  const Dataset b = make_dataset(cfg, CameraModel{}, topo(), FbiLabelConfig{});
  CHECK(dataset_to_jsonl(a) == dataset_to_jsonl(b));
}

TEST_CASE("dataset ground-truth labels are consistent with label_fbi") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.count = 300;
  const FbiLabelConfig fbi_cfg;
  const Dataset ds = make_dataset(cfg, CameraModel{}, topo(), fbi_cfg);
  for (const auto& s : ds.samples) {
    CHECK(s.fbi_gt == label_fbi(s.pose3d_gt, topo(), fbi_cfg));
    CHECK((s.coarse_z_gt - s.pose3d_gt.coords.col(2)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dataset jsonl round trip is byte stable") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.count = 40;
  const Dataset ds = make_dataset(cfg, CameraModel{}, topo(), FbiLabelConfig{});
  const std::string text = dataset_to_jsonl(ds);
  const Dataset back = dataset_from_jsonl(text);
  CHECK(dataset_to_jsonl(back) == text);
  CHECK(back.samples.size() == ds.samples.size());
  CHECK(back.samples[7].action == ds.samples[7].action);
  CHECK(back.samples[7].is_test == ds.samples[7].is_test);
}

TEST_CASE("action presets are distinct regimes and ood sits outside them") {
  const SynthConfig base = SynthConfig::defaults(topo());
  for (int a = 0; a < kActionBins; ++a) {
    const SynthConfig p = action_preset(base, a);
    for (int b = a + 1; b < kActionBins; ++b) {
      const SynthConfig q = action_preset(base, b);
      // disjoint whole-body yaw sectors
      CHECK((p.joint_angle_ranges[0].max.y() < q.joint_angle_ranges[0].min.y() ||
             q.joint_angle_ranges[0].max.y() < p.joint_angle_ranges[0].min.y()));
    }
  }
  const SynthConfig ood = ood_preset(base);
  // ood limb amplitude exceeds the strongest bin
  const auto& knee = topo();
  (void)knee;
  const SynthConfig strongest = action_preset(base, kActionBins - 1);
  const double ood_span =
      (ood.joint_angle_ranges[2].max - ood.joint_angle_ranges[2].min).norm();
  const double strongest_span =
      (strongest.joint_angle_ranges[2].max - strongest.joint_angle_ranges[2].min).norm();
  CHECK(ood_span > strongest_span);
  CHECK_THROWS_AS(action_preset(base, 15), std::invalid_argument);
}

TEST_CASE("synth config validation") {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.noise_2d_std = -1.0;
  CHECK_THROWS_AS(cfg.validate(topo()), std::invalid_argument);
  cfg = SynthConfig::defaults(topo());
  cfg.fbi_flip_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(topo()), std::invalid_argument);
  cfg = SynthConfig::defaults(topo());
  cfg.joint_angle_ranges[3].min.x() = 1.0;
  cfg.joint_angle_ranges[3].max.x() = 0.0;
  CHECK_THROWS_AS(cfg.validate(topo()), std::invalid_argument);
}

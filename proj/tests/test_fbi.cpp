#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mdpose/dataset.hpp"
#include "mdpose/fbi.hpp"
#include "mdpose/rng.hpp"

using namespace mdpose;

namespace {

// Brute-force reference classifier, written independently of label_fbi /
// bone_vector: raw coordinate arithmetic per bone.
std::vector<int> brute_force_labels(const Pose3D& pose, const SkeletonTopology& topo, double tau) {
  std::vector<int> out;
  for (const auto& [pj, cj] : topo.fbi_bones) {
    const double dx = pose.coords(cj, 0) - pose.coords(pj, 0);
    const double dy = pose.coords(cj, 1) - pose.coords(pj, 1);
    const double dz = pose.coords(cj, 2) - pose.coords(pj, 2);
    const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (len == 0.0 || std::abs(dz) <= tau * len) {
      out.push_back(2);
    } else if (dz < 0.0) {
      out.push_back(0);
    } else {
      out.push_back(1);
    }
  }
  return out;
}

Pose3D sampled_pose(std::uint64_t i, const SkeletonTopology& topo, const SynthConfig& cfg) {
  Rng rng = Rng::derive(901, 0xfb1, i);
  return sample_pose(cfg, topo, rng);
}

}  // namespace

TEST_CASE("label_fbi sign convention and parallel band") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  FbiLabelConfig cfg;
  cfg.parallel_fraction = 0.15;

  Pose3D p;
  p.coords.setZero(17, 3);
  p.coords.row(2) = Eigen::RowVector3d(0.0, 0.0, -100.0);  // bone 0 points at the camera
  FbiMatrix f = label_fbi(p, topo, cfg);
  CHECK(f.classes[0] == FbiMatrix::kForward);
  CHECK(f.one_hot()(0, 0) == 1.0);
  CHECK(f.one_hot()(0, 1) == 0.0);
  CHECK(f.one_hot()(0, 2) == 0.0);

  p.coords.row(2) = Eigen::RowVector3d(100.0, 0.0, 0.0);  // zero z extent
  f = label_fbi(p, topo, cfg);
  CHECK(f.classes[0] == FbiMatrix::kParallel);

  p.coords.row(2) = Eigen::RowVector3d(0.0, 0.0, 100.0);
  f = label_fbi(p, topo, cfg);
  CHECK(f.classes[0] == FbiMatrix::kBackward);

  // zero-length bones carry no orientation
  p.coords.row(2).setZero();
  f = label_fbi(p, topo, cfg);
  CHECK(f.classes[0] == FbiMatrix::kParallel);
}

TEST_CASE("label_fbi threshold boundary") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  FbiLabelConfig cfg;
  cfg.parallel_fraction = 0.5;
  Pose3D p;
  p.coords.setZero(17, 3);
  // |dz| = 0.5 * len exactly on the boundary counts as parallel (<=)
  p.coords.row(2) = Eigen::RowVector3d(std::sqrt(3.0), 0.0, -1.0);
  CHECK(label_fbi(p, topo, cfg).classes[0] == FbiMatrix::kParallel);
  // just past the boundary flips to forward
  p.coords.row(2) = Eigen::RowVector3d(std::sqrt(3.0) - 0.01, 0.0, -1.0);
  CHECK(label_fbi(p, topo, cfg).classes[0] == FbiMatrix::kForward);
}

TEST_CASE("label_fbi agrees with the brute-force classifier on sampled poses") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  const SynthConfig synth = SynthConfig::defaults(topo);
  FbiLabelConfig cfg;
  int mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    const Pose3D p = sampled_pose(static_cast<std::uint64_t>(k), topo, synth);
    const FbiMatrix f = label_fbi(p, topo, cfg);
    const std::vector<int> expect = brute_force_labels(p, topo, cfg.parallel_fraction);
    if (f.classes != expect) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("mirror antisymmetry: negating z swaps forward and backward") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  const SynthConfig synth = SynthConfig::defaults(topo);
  FbiLabelConfig cfg;
  for (int k = 0; k < 300; ++k) {
    const Pose3D p = sampled_pose(static_cast<std::uint64_t>(k) + 5000, topo, synth);
    Pose3D mirrored = p;
    mirrored.coords.col(2) *= -1.0;
    const FbiMatrix f = label_fbi(p, topo, cfg);
    const FbiMatrix g = label_fbi(mirrored, topo, cfg);
    for (int i = 0; i < topo.bone_count(); ++i) {
      const int a = f.classes[static_cast<std::size_t>(i)];
      const int b = g.classes[static_cast<std::size_t>(i)];
      if (a == FbiMatrix::kParallel) {
        CHECK(b == FbiMatrix::kParallel);
      } else {
        CHECK(b == (a == FbiMatrix::kForward ? FbiMatrix::kBackward : FbiMatrix::kForward));
      }
    }
  }
}

TEST_CASE("scale invariance of labels") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  const SynthConfig synth = SynthConfig::defaults(topo);
  FbiLabelConfig cfg;
  Rng srng(77);
  for (int k = 0; k < 300; ++k) {
    const Pose3D p = sampled_pose(static_cast<std::uint64_t>(k) + 9000, topo, synth);
    const double s = std::exp(srng.uniform(-3.0, 3.0));
    Pose3D scaled = p;
    scaled.coords *= s;
    CHECK(label_fbi(scaled, topo, cfg).classes == label_fbi(p, topo, cfg).classes);
  }
}

TEST_CASE("in-plane rotation invariance of labels") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  const SynthConfig synth = SynthConfig::defaults(topo);
  FbiLabelConfig cfg;
  Rng rrng(78);
  for (int k = 0; k < 300; ++k) {
    const Pose3D p = sampled_pose(static_cast<std::uint64_t>(k) + 13000, topo, synth);
    const double a = rrng.uniform(0.0, 2.0 * 3.14159265358979323846);
    Pose3D rot = p;
    for (int i = 0; i < rot.joint_count(); ++i) {
      const double x = p.coords(i, 0), y = p.coords(i, 1);
      rot.coords(i, 0) = std::cos(a) * x - std::sin(a) * y;
      rot.coords(i, 1) = std::sin(a) * x + std::cos(a) * y;
    }
    CHECK(label_fbi(rot, topo, cfg).classes == label_fbi(p, topo, cfg).classes);
  }
}

TEST_CASE("fbi_accuracy counting and tie break") {
  FbiMatrix gt;
  gt.classes = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1};
  CHECK(fbi_accuracy(gt, gt) == 1.0);

  FbiMatrix wrong = gt;
  for (auto& c : wrong.classes) c = (c + 1) % 3;
  CHECK(fbi_accuracy(wrong, gt) == 0.0);

  FbiMatrix half = gt;
  for (int i = 0; i < 7; ++i) half.classes[static_cast<std::size_t>(i)] = (gt.classes[static_cast<std::size_t>(i)] + 1) % 3;
  CHECK(fbi_accuracy(half, gt) == 0.5);

  // probability overload: exact ties resolve toward the lowest class index
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(14, 3, 1.0 / 3.0);
  FbiMatrix zeros;
  zeros.classes.assign(14, 0);
  CHECK(fbi_accuracy(probs, zeros) == 1.0);
  FbiMatrix twos;
  twos.classes.assign(14, 2);
  CHECK(fbi_accuracy(probs, twos) == 0.0);

  FbiMatrix short_fbi;
  short_fbi.classes = {0, 1};
  CHECK_THROWS_AS(fbi_accuracy(short_fbi, gt), std::invalid_argument);
}

TEST_CASE("fbi json round trip and validation") {
  FbiMatrix f;
  f.classes = {0, 2, 1, 0, 1, 2, 0, 1, 2, 0, 1, 2, 2, 2};
  const FbiMatrix back = fbi_from_json(fbi_to_json(f), 14);
  CHECK(back == f);
  CHECK_THROWS_AS(fbi_from_json(fbi_to_json(f), 10), std::invalid_argument);
  CHECK_THROWS_AS(fbi_from_json(nlohmann::json::array({0, 5}), -1), std::invalid_argument);
}

TEST_CASE("one_hot is exactly one-hot per row") {
  Rng rng(91);
  FbiMatrix f;
  for (int i = 0; i < 14; ++i) f.classes.push_back(static_cast<int>(rng.below(3)));
  const Eigen::MatrixXd oh = f.one_hot();
  for (int i = 0; i < 14; ++i) {
    CHECK(oh.row(i).sum() == 1.0);
    CHECK(oh.row(i).maxCoeff() == 1.0);
    CHECK(oh.row(i).minCoeff() == 0.0);
  }
  const Eigen::VectorXd flat = f.flat_one_hot();
  CHECK(flat.sum() == 14.0);
}

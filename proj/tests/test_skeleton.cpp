#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdpose/rng.hpp"
#include "mdpose/skeleton.hpp"
#include "mdpose/synth.hpp"

using namespace mdpose;

namespace {

Pose3D random_pose(Rng& rng, int joints = 17, double scale = 500.0) {
  Pose3D p;
  p.coords.resize(joints, 3);
  for (int i = 0; i < joints; ++i) {
    for (int c = 0; c < 3; ++c) {
      p.coords(i, c) = rng.normal(0.0, scale);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("human17 topology shape and validity") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  CHECK(topo.joint_count() == 17);
  CHECK(topo.bone_count() == 14);
  CHECK(topo.root_joint == 0);
  CHECK_NOTHROW(topo.validate());
  // parent links form a tree: exactly one root, all others parented
  int roots = 0;
  for (int p : topo.parent_index) {
    if (p == -1) ++roots;
  }
  CHECK(roots == 1);
}

TEST_CASE("topology validation rejects broken structures") {
  SkeletonTopology topo = SkeletonTopology::human17();
  topo.parent_index[3] = 3;  // self-loop
  CHECK_THROWS_AS(topo.validate(), std::invalid_argument);

  topo = SkeletonTopology::human17();
  topo.parent_index[1] = 2;
  topo.parent_index[2] = 1;  // cycle detached from root
  CHECK_THROWS_AS(topo.validate(), std::invalid_argument);

  topo = SkeletonTopology::human17();
  topo.fbi_bones[0] = {4, 4};
  CHECK_THROWS_AS(topo.validate(), std::invalid_argument);
}

TEST_CASE("topology json round trip preserves the hash") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  const SkeletonTopology back = topology_from_json(topology_to_json(topo));
  CHECK(topology_hash(back) == topology_hash(topo));
  CHECK(back.joint_names == topo.joint_names);
  CHECK(back.fbi_bones == topo.fbi_bones);
}

TEST_CASE("root_relative identity and translation") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(11);
  Pose3D p = random_pose(rng);
  p.coords.row(0).setZero();
  const Pose3D same = root_relative(p, topo);
  CHECK((same.coords - p.coords).cwiseAbs().maxCoeff() == 0.0);

  Pose3D q = p;
  q.coords.rowwise() += Eigen::RowVector3d(10.0, -5.0, 3000.0);
  const Pose3D shifted = root_relative(q, topo);
  CHECK((shifted.coords - p.coords).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("root_relative puts the root exactly at the origin and is idempotent") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(12);
  for (int k = 0; k < 50; ++k) {
    const Pose3D rr = root_relative(random_pose(rng), topo);
    CHECK(rr.coords.row(0).norm() == 0.0);
    const Pose3D rr2 = root_relative(rr, topo);
    CHECK((rr2.coords - rr.coords).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mpjpe basics") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(13);
  const Pose3D a = root_relative(random_pose(rng), topo);
  CHECK(mpjpe(a, a) == 0.0);

  Pose3D b = a;
  b.coords.row(5) += Eigen::RowVector3d(3.0, 4.0, 0.0);
  CHECK(mpjpe(b, a) == doctest::Approx(5.0 / 17.0).epsilon(1e-12));

  Pose3D short_pose;
  short_pose.coords.resize(5, 3);
  short_pose.coords.setZero();
  CHECK_THROWS_AS(mpjpe(a, short_pose), std::invalid_argument);
}

TEST_CASE("mpjpe is a metric-derived mean") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(14);
  for (int k = 0; k < 30; ++k) {
    const Pose3D a = random_pose(rng);
    const Pose3D b = random_pose(rng);
    const Pose3D c = random_pose(rng);
    CHECK(mpjpe(a, b) == doctest::Approx(mpjpe(b, a)).epsilon(1e-12));
    CHECK(mpjpe(a, c) <= mpjpe(a, b) + mpjpe(b, c) + 1e-9);
    CHECK(mpjpe(a, b) >= 0.0);
  }
}

TEST_CASE("mpjpe invariant to a shared rigid translation before root alignment") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(15);
  for (int k = 0; k < 20; ++k) {
    const Pose3D a = random_pose(rng);
    const Pose3D b = random_pose(rng);
    const Eigen::RowVector3d t(rng.normal(0, 100), rng.normal(0, 100), rng.normal(0, 100));
    Pose3D at = a, bt = b;
    at.coords.rowwise() += t;
    bt.coords.rowwise() += t;
    const double base = mpjpe(root_relative(a, topo), root_relative(b, topo));
    const double moved = mpjpe(root_relative(at, topo), root_relative(bt, topo));
    CHECK(moved == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("bone_vector definition and edge cases") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Pose3D p;
  p.coords.setZero(17, 3);
  // bone 0 is r_hip -> r_knee (joints 1 -> 2)
  p.coords.row(2) = Eigen::RowVector3d(0.0, 0.0, -100.0);
  const Eigen::Vector3d b = bone_vector(p, topo, 0);
  CHECK(b.x() == 0.0);
  CHECK(b.y() == 0.0);
  CHECK(b.z() == -100.0);

  // zero-length bone
  p.coords.row(2).setZero();
  CHECK(bone_vector(p, topo, 0).norm() == 0.0);

  CHECK_THROWS_AS(bone_vector(p, topo, 14), std::out_of_range);
  CHECK_THROWS_AS(bone_vector(p, topo, -1), std::out_of_range);
}

TEST_CASE("bone_vector matches componentwise subtraction on sampled poses") {
  const SkeletonTopology topo = SkeletonTopology::human17();
  Rng rng(16);
  for (int k = 0; k < 30; ++k) {
    const Pose3D p = random_pose(rng);
    for (int i = 0; i < topo.bone_count(); ++i) {
      const auto [pj, cj] = topo.fbi_bones[static_cast<std::size_t>(i)];
      const Eigen::Vector3d expect(p.coords(cj, 0) - p.coords(pj, 0),
                                   p.coords(cj, 1) - p.coords(pj, 1),
                                   p.coords(cj, 2) - p.coords(pj, 2));
      CHECK((bone_vector(p, topo, i) - expect).norm() == 0.0);
    }
  }
}

TEST_CASE("flat round trip for poses") {
  Rng rng(17);
  const Pose3D p = random_pose(rng);
  const Pose3D back = Pose3D::from_flat(p.flat());
  CHECK((back.coords - p.coords).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.flat().size() == 51);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdpose/generator.hpp"

using namespace mdpose;

namespace {

const SkeletonTopology& topo() {
  static const SkeletonTopology t = SkeletonTopology::human17();
  return t;
}

Dataset small_dataset(int count, double noise2d = 3.0, std::uint64_t seed = 100) {
  SynthConfig cfg = SynthConfig::defaults(topo());
  cfg.count = count;
  cfg.seed = seed;
  cfg.noise_2d_std = noise2d;
  return make_dataset(cfg, CameraModel{}, topo(), FbiLabelConfig{});
}

net::MlpSpec coarse_spec(int hidden = 48, bool norm = true, double dropout = 0.0) {
  net::MlpSpec s;
  s.input_dim = 34;
  s.output_dim = 17;
  s.hidden_dim = hidden;
  s.num_residual_blocks = 2;
  s.use_batch_stats_norm = norm;
  s.dropout_rate = dropout;
  return s;
}

net::MlpSpec fbi_spec(int hidden = 48, bool norm = true, double dropout = 0.0) {
  net::MlpSpec s = coarse_spec(hidden, norm, dropout);
  s.output_dim = 42;
  s.output_activation = net::OutputActivation::kGroupSoftmax3;
  return s;
}

}  // namespace

TEST_CASE("training one head leaves the other bitwise unchanged") {
  const Dataset ds = small_dataset(240);
  GenTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;

  GenTrainConfig coarse_only = cfg;
  coarse_only.train_fbi = false;
  const GeneratorModel a = train_generator(ds, coarse_spec(), fbi_spec(), coarse_only);

  GenTrainConfig fbi_only = cfg;
  fbi_only.train_coarse = false;
  const GeneratorModel b = train_generator(ds, coarse_spec(), fbi_spec(), fbi_only);

  const GeneratorModel both = train_generator(ds, coarse_spec(), fbi_spec(), cfg);

  // the untouched head equals its freshly initialized state
  CHECK(net::model_to_json(a.fbi_head).dump() ==
        net::model_to_json(net::init(fbi_spec(), Rng::derive(3, 0x6e03).next_u64())).dump());
  CHECK(net::model_to_json(b.coarse_head).dump() ==
        net::model_to_json(net::init(coarse_spec(), Rng::derive(3, 0x6e02).next_u64())).dump());

  // and the trained heads are independent of whether the other trains
  CHECK(net::model_to_json(both.coarse_head).dump() ==
        net::model_to_json(a.coarse_head).dump());
  CHECK(net::model_to_json(both.fbi_head).dump() == net::model_to_json(b.fbi_head).dump());
}

TEST_CASE("training is deterministic per seed") {
  const Dataset ds = small_dataset(240);
  GenTrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  GenMetrics ma, mb;
  const GeneratorModel a = train_generator(ds, coarse_spec(), fbi_spec(), cfg, &ma);
  const GeneratorModel b = train_generator(ds, coarse_spec(), fbi_spec(), cfg, &mb);
  CHECK(generator_to_json(a).dump() == generator_to_json(b).dump());
  REQUIRE(ma.rows.size() == mb.rows.size());
  for (std::size_t i = 0; i < ma.rows.size(); ++i) {
    CHECK(ma.rows[i].coarse_loss == mb.rows[i].coarse_loss);
    CHECK(ma.rows[i].fbi_loss == mb.rows[i].fbi_loss);
  }
}

TEST_CASE("predictions are deterministic and paired with the input") {
  const Dataset ds = small_dataset(240);
  GenTrainConfig cfg;
  cfg.epochs = 2;
  const GeneratorModel gen = train_generator(ds, coarse_spec(), fbi_spec(), cfg);
  const Pose2D& px = ds.samples[0].pose2d_noisy;
  const CoarsePose a = predict_coarse(gen, px);
  const CoarsePose b = predict_coarse(gen, px);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.pose2d.coords - px.coords).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.z.size() == 17);

  const Eigen::MatrixXd probs = predict_fbi(gen, px);
  CHECK(probs.rows() == 14);
  for (int i = 0; i < 14; ++i) {
    CHECK(std::abs(probs.row(i).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("one-sample memorization drives both losses under 1e-3") {
  SynthConfig one = SynthConfig::defaults(topo());
  one.count = 2;
  one.train_fraction = 0.5;  // one train sample, one test sample
  const Dataset ds = make_dataset(one, CameraModel{}, topo(), FbiLabelConfig{});
  GenTrainConfig tc;
  tc.epochs = 400;
  tc.batch_size = 1;
  tc.learning_rate = 5e-3;
  tc.seed = 4;
  GenMetrics metrics;
  // memorization capacity test: norm off so single-row batches are legal
  const GeneratorModel gen = train_generator(ds, coarse_spec(32, false), fbi_spec(32, false),
                                             tc, &metrics);
  CHECK(metrics.rows.back().coarse_loss < 1e-3);
  CHECK(metrics.rows.back().fbi_loss < 1e-3);
}

TEST_CASE("training loss is non-increasing under a 10-epoch moving average") {
  const Dataset ds = small_dataset(1500);
  GenTrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 6;
  GenMetrics metrics;
  train_generator(ds, coarse_spec(48, true, 0.1), fbi_spec(48, true, 0.1), cfg, &metrics);
  std::vector<double> ma;
  for (std::size_t i = 0; i + 10 <= metrics.rows.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i; k < i + 10; ++k) s += metrics.rows[k].coarse_loss;
    ma.push_back(s / 10.0);
  }
  for (std::size_t i = 1; i < ma.size(); ++i) {
    CHECK(ma[i] <= ma[i - 1] * (1.0 + 1e-9));
  }
}

TEST_CASE("dim mismatches and empty data are rejected") {
  const Dataset ds = small_dataset(40);
  GenTrainConfig cfg;
  net::MlpSpec bad = coarse_spec();
  bad.output_dim = 16;
  CHECK_THROWS_AS(train_generator(ds, bad, fbi_spec(), cfg), std::invalid_argument);

  net::MlpSpec bad_fbi = fbi_spec();
  bad_fbi.output_activation = net::OutputActivation::kLinear;
  CHECK_THROWS_AS(train_generator(ds, coarse_spec(), bad_fbi, cfg), std::invalid_argument);

  Dataset empty = ds;
  for (auto& s : empty.samples) s.is_test = true;
  CHECK_THROWS_AS(train_generator(empty, coarse_spec(), fbi_spec(), cfg), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves the generator") {
  const Dataset ds = small_dataset(120);
  GenTrainConfig cfg;
  cfg.epochs = 1;
  const GeneratorModel gen = train_generator(ds, coarse_spec(), fbi_spec(), cfg);
  const auto path = std::filesystem::temp_directory_path() / "mdpose_test_gen.json";
  save_generator(path, gen, "generator", "cafef00d");
  const GeneratorModel back = load_generator(path, std::string("generator"));
  CHECK(generator_to_json(back).dump() == generator_to_json(gen).dump());
  CHECK_THROWS_AS(load_generator(path, std::string("generator_ft")), std::invalid_argument);
  std::filesystem::remove(path);
}

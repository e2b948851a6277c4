#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mdpose/net.hpp"

using namespace mdpose;
using namespace mdpose::net;

namespace {

Eigen::MatrixXd random_batch(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

net::LossFn quadratic(const Eigen::MatrixXd& target) {
  return [target](const Eigen::MatrixXd& out) {
    const Eigen::MatrixXd d = out - target;
    return std::make_pair(0.5 * d.squaredNorm(), d);
  };
}

MlpSpec small_spec(bool norm, int blocks = 2) {
  MlpSpec s;
  s.input_dim = 6;
  s.output_dim = 4;
  s.hidden_dim = 10;
  s.num_residual_blocks = blocks;
  s.use_batch_stats_norm = norm;
  s.dropout_rate = 0.0;
  return s;
}

}  // namespace

TEST_CASE("init is deterministic and shaped by the spec") {
  MlpSpec s;
  s.input_dim = 34;
  s.output_dim = 17;
  s.hidden_dim = 256;
  const MlpModel a = init(s, 5);
  const MlpModel b = init(s, 5);
  CHECK(model_to_json(a).dump() == model_to_json(b).dump());
  CHECK(a.stem.w.rows() == 34);
  CHECK(a.stem.w.cols() == 256);
  CHECK(a.head.w.rows() == 256);
  CHECK(a.head.w.cols() == 17);
  CHECK(a.blocks.size() == 2);

  const MlpModel c = init(s, 6);
  CHECK(model_to_json(c).dump() != model_to_json(a).dump());
}

TEST_CASE("init weight variance is 2 / fan_in") {
  MlpSpec s;
  s.input_dim = 500;
  s.output_dim = 300;  // 150k draws
  s.num_residual_blocks = 0;
  s.use_batch_stats_norm = false;
  s.dropout_rate = 0.0;
  const MlpModel m = init(s, 42);
  const double mean = m.head.w.mean();
  const double var = (m.head.w.array() - mean).square().mean();
  CHECK(std::abs(var - 2.0 / 500.0) / (2.0 / 500.0) < 0.1);
}

TEST_CASE("identity-configured single layer reproduces its input") {
  MlpSpec s;
  s.input_dim = 5;
  s.output_dim = 5;
  s.num_residual_blocks = 0;
  s.use_batch_stats_norm = false;
  s.dropout_rate = 0.0;
  MlpModel m = init(s, 1);
  m.head.w = Eigen::MatrixXd::Identity(5, 5);
  m.head.b.setZero();
  const Eigen::MatrixXd batch = random_batch(7, 5, 2);
  const auto fr = forward(m, batch, Mode::kEval);
  CHECK((fr.output - batch).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("group softmax rows are distributions") {
  MlpSpec s = small_spec(true);
  s.output_dim = 9;
  s.output_activation = OutputActivation::kGroupSoftmax3;
  const MlpModel m = init(s, 3);
  const auto fr = forward(m, random_batch(5, 6, 4), Mode::kEval);
  for (int r = 0; r < 5; ++r) {
    for (int g = 0; g < 9; g += 3) {
      const double sum = fr.output.row(r).segment<3>(g).sum();
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      CHECK(fr.output.row(r).segment<3>(g).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("zero final-layer weights give uniform group probabilities") {
  MlpSpec s = small_spec(true);
  s.output_dim = 9;
  s.output_activation = OutputActivation::kGroupSoftmax3;
  MlpModel m = init(s, 3);
  m.head.w.setZero();
  m.head.b.setZero();
  const auto fr = forward(m, random_batch(4, 6, 5), Mode::kEval);
  CHECK((fr.output.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("eval-mode forward is pure and deterministic") {
  MlpSpec s = small_spec(true);
  s.dropout_rate = 0.3;  // must not fire in eval mode
  const MlpModel m = init(s, 7);
  const std::string before = model_to_json(m).dump();
  const Eigen::MatrixXd batch = random_batch(3, 6, 8);
  const auto a = forward(m, batch, Mode::kEval);
  const auto b = forward(m, batch, Mode::kEval);
  CHECK((a.output - b.output).cwiseAbs().maxCoeff() == 0.0);
  CHECK(model_to_json(m).dump() == before);
}

TEST_CASE("forward error contracts") {
  const MlpSpec s = small_spec(true);
  const MlpModel m = init(s, 9);
  CHECK_THROWS_AS(forward(m, random_batch(3, 5, 1), Mode::kEval), std::invalid_argument);
  // batch-stats norm needs two rows in train mode
  CHECK_THROWS_AS(forward(m, random_batch(1, 6, 1), Mode::kTrain), std::invalid_argument);
  // train-mode dropout needs an rng
  MlpSpec sd = s;
  sd.dropout_rate = 0.5;
  const MlpModel md = init(sd, 9);
  CHECK_THROWS_AS(forward(md, random_batch(4, 6, 1), Mode::kTrain), std::invalid_argument);
  Rng rng(1);
  CHECK_NOTHROW(forward(md, random_batch(4, 6, 1), Mode::kTrain, &rng));
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  const MlpSpec s = small_spec(true);
  const MlpModel m = init(s, 10);
  const auto fr = forward(m, random_batch(4, 6, 11), Mode::kTrain);
  const Gradients g = backward(m, fr.cache, Eigen::MatrixXd::Zero(4, 4));
  for (const auto& view : grad_views(g)) {
    CHECK(view.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input gradient of a sum through a single linear layer is the weight column sums") {
  MlpSpec s;
  s.input_dim = 5;
  s.output_dim = 3;
  s.num_residual_blocks = 0;
  s.use_batch_stats_norm = false;
  s.dropout_rate = 0.0;
  const MlpModel m = init(s, 12);
  const Eigen::MatrixXd batch = random_batch(4, 5, 13);
  const auto fr = forward(m, batch, Mode::kTrain);
  const Gradients g = backward(m, fr.cache, Eigen::MatrixXd::Ones(4, 3));
  const Eigen::VectorXd expect = m.head.w.rowwise().sum();
  for (int r = 0; r < 4; ++r) {
    CHECK((g.input.row(r).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("chained linear models compose like a weight product") {
  MlpSpec s1;
  s1.input_dim = 5;
  s1.output_dim = 4;
  s1.num_residual_blocks = 0;
  s1.use_batch_stats_norm = false;
  s1.dropout_rate = 0.0;
  MlpSpec s2 = s1;
  s2.input_dim = 4;
  s2.output_dim = 2;
  const MlpModel m1 = init(s1, 14);
  const MlpModel m2 = init(s2, 15);
  const Eigen::MatrixXd batch = random_batch(3, 5, 16);

  const auto f1 = forward(m1, batch, Mode::kTrain);
  const auto f2 = forward(m2, f1.output, Mode::kTrain);
  const Gradients g2 = backward(m2, f2.cache, Eigen::MatrixXd::Ones(3, 2));
  const Gradients g1 = backward(m1, f1.cache, g2.input);
  const Eigen::VectorXd expect = (m1.head.w * m2.head.w).rowwise().sum();
  for (int r = 0; r < 3; ++r) {
    CHECK((g1.input.row(r).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("grad_check on a linear model with quadratic loss is tight") {
  MlpSpec s;
  s.input_dim = 6;
  s.output_dim = 4;
  s.num_residual_blocks = 0;
  s.use_batch_stats_norm = false;
  s.dropout_rate = 0.0;
  const MlpModel m = init(s, 17);
  const double err = grad_check(m, random_batch(5, 6, 18), quadratic(random_batch(5, 4, 19)));
  CHECK(err < 1e-7);
}

TEST_CASE("grad_check on the full residual model with norm") {
  const MlpSpec s = small_spec(true);
  const MlpModel m = init(s, 20);
  const double err =
      grad_check(m, random_batch(6, 6, 21), quadratic(random_batch(6, 4, 22)), 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check on softmax head with log loss") {
  MlpSpec s = small_spec(true);
  s.output_dim = 12;
  s.output_activation = OutputActivation::kGroupSoftmax3;
  const MlpModel m = init(s, 23);
  auto loss = [](const Eigen::MatrixXd& out) {
    double l = 0.0;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(out.rows(), out.cols());
    for (int r = 0; r < out.rows(); ++r) {
      for (int g = 0; g < out.cols(); g += 3) {
        const int target = (r + g / 3) % 3;
        const double p = out(r, 3 * (g / 3) + target);
        l += -std::log(std::max(p, 1e-12));
        d(r, 3 * (g / 3) + target) = -1.0 / std::max(p, 1e-12);
      }
    }
    return std::make_pair(l, d);
  };
  const double err = grad_check(m, random_batch(5, 6, 24), loss, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check rejects active dropout") {
  MlpSpec s = small_spec(true);
  s.dropout_rate = 0.2;
  const MlpModel m = init(s, 25);
  CHECK_THROWS_AS(
      grad_check(m, random_batch(4, 6, 26), quadratic(Eigen::MatrixXd::Zero(4, 4))),
      std::invalid_argument);
}

TEST_CASE("grad_check catches a corrupted gradient") {
  const MlpSpec s = small_spec(false, 1);
  const MlpModel m = init(s, 27);
  const Eigen::MatrixXd target = random_batch(5, 4, 28);
  // reported gradient doubled in one entry relative to the reported loss
  auto corrupted = [target](const Eigen::MatrixXd& out) {
    const Eigen::MatrixXd dtrue = out - target;
    Eigen::MatrixXd d = dtrue;
    d(0, 0) *= 2.0;
    return std::make_pair(0.5 * dtrue.squaredNorm(), d);
  };
  const double err = grad_check(m, random_batch(5, 6, 29), corrupted);
  CHECK(err > 0.1);
}

TEST_CASE("dropout mask semantics under backward") {
  MlpSpec s = small_spec(false, 1);
  s.dropout_rate = 0.4;
  const MlpModel m = init(s, 30);
  Rng rng(31);
  const Eigen::MatrixXd batch = random_batch(4, 6, 32);
  const auto fr = forward(m, batch, Mode::kTrain, &rng);
  // dropped activations must contribute zero gradient through the mask
  const Gradients g = backward(m, fr.cache, Eigen::MatrixXd::Ones(4, 4));
  CHECK(std::isfinite(g.input.sum()));
  const auto& mask = fr.cache.stages.back().dropout_mask;
  CHECK(mask.size() > 0);
  const double keep = 1.0 - s.dropout_rate;
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      CHECK((mask(r, c) == 0.0 || std::abs(mask(r, c) - 1.0 / keep) < 1e-12));
    }
  }
}

TEST_CASE("apply_norm_updates follows the momentum rule") {
  const MlpSpec s = small_spec(true, 1);
  MlpModel m = init(s, 33);
  const Eigen::MatrixXd batch = random_batch(8, 6, 34);
  const auto fr = forward(m, batch, Mode::kTrain);
  const Eigen::MatrixXd pre_stem = batch * m.stem.w;
  const Eigen::RowVectorXd mu = pre_stem.colwise().mean();
  const Eigen::RowVectorXd var =
      (pre_stem.rowwise() - mu).array().square().colwise().sum() / 8.0;
  const Eigen::RowVectorXd want_mean =
      kNormMomentum * m.stem_norm.running_mean + (1.0 - kNormMomentum) * mu;
  const Eigen::RowVectorXd want_var =
      kNormMomentum * m.stem_norm.running_var + (1.0 - kNormMomentum) * var;
  apply_norm_updates(m, fr.cache);
  CHECK((m.stem_norm.running_mean - want_mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.stem_norm.running_var - want_var).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward validates cache compatibility") {
  const MlpSpec s = small_spec(true);
  const MlpModel m = init(s, 35);
  const auto fr = forward(m, random_batch(4, 6, 36), Mode::kTrain);
  CHECK_THROWS_AS(backward(m, fr.cache, Eigen::MatrixXd::Zero(4, 3)), std::invalid_argument);
  MlpSpec other = s;
  other.hidden_dim = 12;
  const MlpModel m2 = init(other, 35);
  CHECK_THROWS_AS(backward(m2, fr.cache, Eigen::MatrixXd::Zero(4, 4)), std::invalid_argument);
}

TEST_CASE("opt_step fixed point and error contract") {
  const MlpSpec s = small_spec(false, 1);
  MlpModel m = init(s, 37);
  const std::string before = model_to_json(m).dump();
  OptimState opt = make_optim_state(m);

  const auto fr = forward(m, random_batch(4, 6, 38), Mode::kTrain);
  Gradients zero = backward(m, fr.cache, Eigen::MatrixXd::Zero(4, 4));
  opt_step(m, zero, opt);
  CHECK(model_to_json(m).dump() == before);  // zero gradient, zero moments
  CHECK(opt.step == 1);

  Gradients bad = zero;
  bad.head.w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt_step(m, bad, opt), std::invalid_argument);
  CHECK(model_to_json(m).dump() == before);  // rejected update leaves the model untouched
}

TEST_CASE("constant-gradient updates approach lr * sign(g)") {
  MlpSpec s;
  s.input_dim = 1;
  s.output_dim = 1;
  s.num_residual_blocks = 0;
  s.use_batch_stats_norm = false;
  s.dropout_rate = 0.0;
  MlpModel m = init(s, 39);
  OptimState opt = make_optim_state(m, 1e-3);
  Gradients g;
  g.head.w = Eigen::MatrixXd::Constant(1, 1, -3.7);
  g.head.b = Eigen::RowVectorXd::Zero(1);
  double prev = m.head.w(0, 0);
  double last_step = 0.0;
  for (int i = 0; i < 200; ++i) {
    opt_step(m, g, opt);
    last_step = m.head.w(0, 0) - prev;
    prev = m.head.w(0, 0);
  }
  // negative gradient pushes the parameter up by ~lr per step
  CHECK(last_step == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip is exact and guarded") {
  const MlpSpec s = small_spec(true);
  MlpModel m = init(s, 40);
  OptimState opt = make_optim_state(m, 5e-4);
  // take a couple of real steps so the state is nontrivial
  for (int i = 0; i < 3; ++i) {
    const auto fr = forward(m, random_batch(4, 6, 41 + static_cast<std::uint64_t>(i)),
                            Mode::kTrain);
    const Gradients g = backward(m, fr.cache, fr.output);
    apply_norm_updates(m, fr.cache);
    opt_step(m, g, opt);
  }

  const auto path = std::filesystem::temp_directory_path() / "mdpose_test_ckpt.json";
  save_model_checkpoint(path, m, &opt, "unit", "deadbeef");
  const LoadedCheckpoint lc = load_model_checkpoint(path, s, std::string("unit"));
  CHECK(model_to_json(lc.model).dump() == model_to_json(m).dump());
  REQUIRE(lc.optim.has_value());
  CHECK(lc.optim->step == opt.step);
  CHECK(optim_to_json(*lc.optim).dump() == optim_to_json(opt).dump());
  CHECK(lc.config_hash == "deadbeef");

  MlpSpec other = s;
  other.hidden_dim = 16;
  CHECK_THROWS_AS(load_model_checkpoint(path, other), std::invalid_argument);
  CHECK_THROWS_AS(load_model_checkpoint(path, s, std::string("generator")),
                  std::invalid_argument);

  // corrupt one parameter byte: content hash must reject it
  std::string text = mdpose::read_text_file(path);
  const auto pos = text.find("\"data\":[");
  REQUIRE(pos != std::string::npos);
  text[pos + 9] = text[pos + 9] == '1' ? '2' : '1';
  mdpose::atomic_write_file(path, text);
  CHECK_THROWS_AS(load_model_checkpoint(path), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("a short training loop is bitwise reproducible") {
  const MlpSpec s = small_spec(true);
  auto run = [&] {
    MlpModel m = init(s, 50);
    OptimState opt = make_optim_state(m);
    Rng rng(51);
    for (int i = 0; i < 10; ++i) {
      const Eigen::MatrixXd batch = random_batch(6, 6, 60 + static_cast<std::uint64_t>(i));
      const Eigen::MatrixXd target = random_batch(6, 4, 80 + static_cast<std::uint64_t>(i));
      const auto fr = forward(m, batch, Mode::kTrain, &rng);
      const Gradients g = backward(m, fr.cache, fr.output - target);
      apply_norm_updates(m, fr.cache);
      opt_step(m, g, opt);
    }
    return model_to_json(m).dump();
  };
  CHECK(run() == run());
}

#include "mdpose/generator.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdpose/io.hpp"
#include "mdpose/loss.hpp"

namespace mdpose {

namespace {

constexpr std::uint64_t kShuffleStream = 0x6e01;
constexpr std::uint64_t kCoarseStream = 0x6e02;
constexpr std::uint64_t kFbiStream = 0x6e03;

int min_batch_rows(const net::MlpSpec& spec) {
  return spec.use_batch_stats_norm && spec.num_residual_blocks > 0 ? 2 : 1;
}

}  // namespace

Eigen::MatrixXd predict_coarse_std(const GeneratorModel& gen, const Eigen::MatrixXd& in2d_std) {
  return net::forward(gen.coarse_head, in2d_std, net::Mode::kEval).output;
}

Eigen::MatrixXd predict_fbi_probs_std(const GeneratorModel& gen, const Eigen::MatrixXd& in2d_std) {
  return net::forward(gen.fbi_head, in2d_std, net::Mode::kEval).output;
}

CoarsePose predict_coarse(const GeneratorModel& gen, const Pose2D& pose2d_px) {
  CoarsePose out;
  out.pose2d = pose2d_px;
  const Eigen::MatrixXd in = gen.in2d.apply(pose2d_px.flat().transpose());
  out.z = predict_coarse_std(gen, in).row(0).transpose();
  return out;
}

Eigen::MatrixXd predict_fbi(const GeneratorModel& gen, const Pose2D& pose2d_px) {
  const Eigen::MatrixXd in = gen.in2d.apply(pose2d_px.flat().transpose());
  const Eigen::VectorXd flat = predict_fbi_probs_std(gen, in).row(0).transpose();
  Eigen::MatrixXd probs(flat.size() / 3, 3);
  for (int i = 0; i < probs.rows(); ++i) {
    probs.row(i) = flat.segment<3>(3 * i).transpose();
  }
  return probs;
}

Eigen::VectorXd coarse_z_mm(const GeneratorModel& gen, const CoarsePose& coarse) {
  return gen.z_out.invert_one(coarse.z);
}

GeneratorModel train_generator(const Dataset& ds, const net::MlpSpec& coarse_spec,
                               const net::MlpSpec& fbi_spec, const GenTrainConfig& cfg,
                               GenMetrics* metrics) {
  const std::vector<int> train_idx = ds.train_indices();
  const std::vector<int> test_idx = ds.test_indices();
  if (train_idx.empty()) {
    throw std::invalid_argument("train_generator: empty training split");
  }
  const int j = ds.topo.joint_count();
  const int m = ds.topo.bone_count();
  if (coarse_spec.input_dim != 2 * j || coarse_spec.output_dim != j) {
    throw std::invalid_argument("train_generator: coarse head dims do not match topology");
  }
  if (fbi_spec.input_dim != 2 * j || fbi_spec.output_dim != 3 * m ||
      fbi_spec.output_activation != net::OutputActivation::kGroupSoftmax3) {
    throw std::invalid_argument("train_generator: fbi head dims do not match topology");
  }

  GeneratorModel gen;
  gen.in2d = Standardizer::fit(gather_pose2d_noisy(ds, train_idx));
  gen.z_out = Standardizer::fit(gather_z_gt(ds, train_idx));
  gen.coarse_head = net::init(coarse_spec, Rng::derive(cfg.seed, kCoarseStream).next_u64());
  gen.fbi_head = net::init(fbi_spec, Rng::derive(cfg.seed, kFbiStream).next_u64());

  const Eigen::MatrixXd x_train = gen.in2d.apply(gather_pose2d_noisy(ds, train_idx));
  const Eigen::MatrixXd z_train = gen.z_out.apply(gather_z_gt(ds, train_idx));
  const Eigen::MatrixXd fbi_train = gather_fbi_onehot_gt(ds, train_idx);

  Eigen::MatrixXd x_test, z_test_mm;
  if (!test_idx.empty()) {
    x_test = gen.in2d.apply(gather_pose2d_noisy(ds, test_idx));
    z_test_mm = gather_z_gt(ds, test_idx);
  }

  net::OptimState opt_coarse = net::make_optim_state(gen.coarse_head, cfg.learning_rate);
  net::OptimState opt_fbi = net::make_optim_state(gen.fbi_head, cfg.learning_rate);
  Rng rng_shuffle = Rng::derive(cfg.seed, kShuffleStream);
  Rng rng_coarse = Rng::derive(cfg.seed, kCoarseStream, 1);
  Rng rng_fbi = Rng::derive(cfg.seed, kFbiStream, 1);

  const int n = static_cast<int>(train_idx.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);
    double coarse_sum = 0.0, fbi_sum = 0.0;
    int coarse_batches = 0, fbi_batches = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(len, x_train.cols());
      Eigen::MatrixXd zb(len, z_train.cols());
      Eigen::MatrixXd fb(len, fbi_train.cols());
      for (int r = 0; r < len; ++r) {
        const int src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x_train.row(src);
        zb.row(r) = z_train.row(src);
        fb.row(r) = fbi_train.row(src);
      }

      if (cfg.train_coarse && len >= min_batch_rows(coarse_spec)) {
        auto fr = net::forward(gen.coarse_head, xb, net::Mode::kTrain, &rng_coarse);
        const Eigen::MatrixXd res = fr.output - zb;
        const double batch_loss = res.squaredNorm() / static_cast<double>(res.size());
        if (!std::isfinite(batch_loss)) {
          throw std::runtime_error("train_generator: non-finite coarse loss at epoch " +
                                   std::to_string(epoch));
        }
        coarse_sum += batch_loss;
        ++coarse_batches;
        const Eigen::MatrixXd d_out = 2.0 * res / static_cast<double>(res.size());
        const net::Gradients g = net::backward(gen.coarse_head, fr.cache, d_out);
        net::apply_norm_updates(gen.coarse_head, fr.cache);
        net::opt_step(gen.coarse_head, g, opt_coarse);
      }

      if (cfg.train_fbi && len >= min_batch_rows(fbi_spec)) {
        auto fr = net::forward(gen.fbi_head, xb, net::Mode::kTrain, &rng_fbi);
        Eigen::MatrixXd d_logits(len, 3 * m);
        double batch_loss = 0.0;
        for (int r = 0; r < len; ++r) {
          Eigen::MatrixXd probs(m, 3);
          FbiMatrix truth;
          truth.classes.resize(static_cast<std::size_t>(m));
          for (int i = 0; i < m; ++i) {
            probs.row(i) = fr.output.row(r).segment<3>(3 * i);
            for (int c = 0; c < 3; ++c) {
              if (fb(r, 3 * i + c) > 0.5) truth.classes[static_cast<std::size_t>(i)] = c;
            }
          }
          const FbiCeResult ce = fbi_ce_loss(probs, truth);
          batch_loss += ce.loss;
          for (int i = 0; i < m; ++i) {
            d_logits.row(r).segment<3>(3 * i) =
                ce.d_logits.row(i) / static_cast<double>(len);
          }
        }
        batch_loss /= static_cast<double>(len);
        if (!std::isfinite(batch_loss)) {
          throw std::runtime_error("train_generator: non-finite fbi loss at epoch " +
                                   std::to_string(epoch));
        }
        fbi_sum += batch_loss;
        ++fbi_batches;
        const net::Gradients g = net::backward_from_logits(gen.fbi_head, fr.cache, d_logits);
        net::apply_norm_updates(gen.fbi_head, fr.cache);
        net::opt_step(gen.fbi_head, g, opt_fbi);
      }
    }

    if (metrics != nullptr) {
      GenEpochRow row;
      row.epoch = epoch;
      row.coarse_loss = coarse_batches > 0 ? coarse_sum / coarse_batches : 0.0;
      row.fbi_loss = fbi_batches > 0 ? fbi_sum / fbi_batches : 0.0;
      if (!test_idx.empty()) {
        const Eigen::MatrixXd z_pred_mm = gen.z_out.invert(predict_coarse_std(gen, x_test));
        row.test_z_mae_mm = (z_pred_mm - z_test_mm).cwiseAbs().mean();
        const Eigen::MatrixXd probs = predict_fbi_probs_std(gen, x_test);
        double acc = 0.0;
        for (int r = 0; r < probs.rows(); ++r) {
          Eigen::MatrixXd p(m, 3);
          for (int i = 0; i < m; ++i) p.row(i) = probs.row(r).segment<3>(3 * i);
          acc += fbi_accuracy(p, ds.samples[static_cast<std::size_t>(
                                                test_idx[static_cast<std::size_t>(r)])]
                                     .fbi_gt);
        }
        row.test_fbi_acc = acc / static_cast<double>(probs.rows());
      }
      metrics->rows.push_back(row);
    }
  }
  return gen;
}

nlohmann::json generator_to_json(const GeneratorModel& gen) {
  return {{"coarse_head", net::model_to_json(gen.coarse_head)},
          {"fbi_head", net::model_to_json(gen.fbi_head)},
          {"in2d", standardizer_to_json(gen.in2d)},
          {"z_out", standardizer_to_json(gen.z_out)}};
}

GeneratorModel generator_from_json(const nlohmann::json& j) {
  GeneratorModel gen;
  gen.coarse_head = net::model_from_json(j.at("coarse_head"));
  gen.fbi_head = net::model_from_json(j.at("fbi_head"));
  gen.in2d = standardizer_from_json(j.at("in2d"));
  gen.z_out = standardizer_from_json(j.at("z_out"));
  return gen;
}

void save_generator(const std::filesystem::path& path, const GeneratorModel& gen,
                    const std::string& tag, const std::string& config_hash) {
  atomic_write_file(path, make_envelope(tag, config_hash, generator_to_json(gen)).dump());
}

GeneratorModel load_generator(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_tag) {
  const Envelope env = open_envelope(read_text_file(path), expected_tag);
  return generator_from_json(env.body);
}

}  // namespace mdpose

#include "mdpose/adversarial.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdpose/io.hpp"

namespace mdpose {

namespace {

constexpr std::uint64_t kShuffleStream = 0xad01;
constexpr std::uint64_t kDStream = 0xad02;
constexpr std::uint64_t kGStream = 0xad03;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void AdvConfig::validate() const {
  if (!(lambda_adv >= 0.0)) {
    throw std::invalid_argument("adversarial: lambda_adv must be >= 0");
  }
  if (d_steps_per_g_step < 1) {
    throw std::invalid_argument("adversarial: d_steps_per_g_step must be >= 1");
  }
  if (epochs < 0 || batch_size < 1) {
    throw std::invalid_argument("adversarial: bad epoch/batch configuration");
  }
}

DLogitsLoss d_loss_from_logits(const Eigen::VectorXd& real_logits,
                               const Eigen::VectorXd& fake_logits) {
  if (real_logits.size() != fake_logits.size() || real_logits.size() == 0) {
    throw std::invalid_argument("d_loss: real/fake batch size mismatch");
  }
  if (!real_logits.allFinite() || !fake_logits.allFinite()) {
    throw std::invalid_argument("d_loss: non-finite logits");
  }
  const auto n = static_cast<double>(real_logits.size());
  DLogitsLoss out;
  out.d_real.resize(real_logits.size());
  out.d_fake.resize(fake_logits.size());
  int correct = 0;
  for (Eigen::Index i = 0; i < real_logits.size(); ++i) {
    out.loss += softplus(-real_logits(i)) + softplus(fake_logits(i));
    out.d_real(i) = (sigmoid(real_logits(i)) - 1.0) / n;
    out.d_fake(i) = sigmoid(fake_logits(i)) / n;
    if (real_logits(i) > 0.0) ++correct;
    if (fake_logits(i) < 0.0) ++correct;
  }
  out.loss /= n;
  out.accuracy = static_cast<double>(correct) / (2.0 * n);
  return out;
}

DLossResult d_loss(const Discriminator& d, const Eigen::MatrixXd& real_inputs,
                   const Eigen::MatrixXd& fake_inputs, Rng* rng) {
  auto fr_real = net::forward(d.net, real_inputs, net::Mode::kTrain, rng);
  auto fr_fake = net::forward(d.net, fake_inputs, net::Mode::kTrain, rng);
  const DLogitsLoss ll = d_loss_from_logits(fr_real.output.col(0), fr_fake.output.col(0));
  DLossResult out;
  out.loss = ll.loss;
  out.accuracy = ll.accuracy;
  out.grads = net::backward(d.net, fr_real.cache, ll.d_real);
  net::axpy(out.grads, net::backward(d.net, fr_fake.cache, ll.d_fake));
  return out;
}

GAdvResult g_adv_loss(const Discriminator& d, const Eigen::MatrixXd& fake_inputs) {
  auto fr = net::forward(d.net, fake_inputs, net::Mode::kEval);
  const Eigen::VectorXd logits = fr.output.col(0);
  if (!logits.allFinite()) {
    throw std::invalid_argument("g_adv_loss: non-finite logits");
  }
  const auto n = static_cast<double>(logits.size());
  GAdvResult out;
  Eigen::MatrixXd d_logits(logits.size(), 1);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out.loss += softplus(-logits(i));
    d_logits(i, 0) = (sigmoid(logits(i)) - 1.0) / n;
  }
  out.loss /= n;
  out.d_input = net::backward(d.net, fr.cache, d_logits).input;
  return out;
}

double bone_plausibility(const Pose2D& pose2d_px, const Eigen::VectorXd& z_mm,
                         const CameraModel& cam, const SkeletonTopology& topo,
                         const std::vector<double>& reference_lengths) {
  if (static_cast<int>(reference_lengths.size()) != topo.joint_count()) {
    throw std::invalid_argument("bone_plausibility: need one reference length per joint");
  }
  const Pose3D lifted = backproject(pose2d_px, z_mm, cam);
  double dev = 0.0;
  int bones = 0;
  for (int i = 0; i < topo.joint_count(); ++i) {
    if (i == topo.root_joint) continue;
    const int p = topo.parent_index[static_cast<std::size_t>(i)];
    const double len = (lifted.coords.row(i) - lifted.coords.row(p)).norm();
    dev += std::abs(len - reference_lengths[static_cast<std::size_t>(i)]);
    ++bones;
  }
  return dev / static_cast<double>(bones);
}

double bone_plausibility(const CoarsePose& coarse, const Standardizer& z_stats,
                         const CameraModel& cam, const SkeletonTopology& topo,
                         const std::vector<double>& reference_lengths) {
  return bone_plausibility(coarse.pose2d, z_stats.invert_one(coarse.z), cam, topo,
                           reference_lengths);
}

double mean_bone_plausibility(const GeneratorModel& gen, const Dataset& ds,
                              const std::vector<int>& idx) {
  if (idx.empty()) {
    throw std::invalid_argument("mean_bone_plausibility: empty index set");
  }
  const Eigen::MatrixXd in = gen.in2d.apply(gather_pose2d_noisy(ds, idx));
  const Eigen::MatrixXd z_mm = gen.z_out.invert(predict_coarse_std(gen, in));
  double sum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Sample& s = ds.samples[static_cast<std::size_t>(idx[k])];
    sum += bone_plausibility(s.pose2d_noisy, z_mm.row(static_cast<int>(k)).transpose(), ds.cam,
                             ds.topo, ds.cfg.bone_lengths);
  }
  return sum / static_cast<double>(idx.size());
}

FinetuneResult finetune(const GeneratorModel& pretrained, const Dataset& ds,
                        const net::MlpSpec& d_spec, const AdvConfig& cfg, const Dataset* ood) {
  cfg.validate();
  const std::vector<int> train_idx = ds.train_indices();
  if (train_idx.empty()) {
    throw std::invalid_argument("finetune: empty training split");
  }
  const int j = ds.topo.joint_count();
  if (d_spec.input_dim != 3 * j || d_spec.output_dim != 1) {
    throw std::invalid_argument("finetune: discriminator dims do not match topology");
  }

  FinetuneResult res;
  res.generator = pretrained;
  res.discriminator.net = net::init(d_spec, Rng::derive(cfg.seed, kDStream).next_u64());

  const Eigen::MatrixXd x_train =
      res.generator.in2d.apply(gather_pose2d_noisy(ds, train_idx));
  const Eigen::MatrixXd z_train = res.generator.z_out.apply(gather_z_gt(ds, train_idx));

  std::vector<int> ood_idx;
  if (ood != nullptr) {
    ood_idx.resize(ood->samples.size());
    std::iota(ood_idx.begin(), ood_idx.end(), 0);
  }

  net::OptimState opt_g = net::make_optim_state(res.generator.coarse_head, cfg.lr_g);
  net::OptimState opt_d = net::make_optim_state(res.discriminator.net, cfg.lr_d);
  Rng rng_shuffle = Rng::derive(cfg.seed, kShuffleStream);
  Rng rng_d = Rng::derive(cfg.seed, kDStream, 1);
  Rng rng_g = Rng::derive(cfg.seed, kGStream, 1);

  const int n = static_cast<int>(train_idx.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const bool use_adv = !cfg.supervised_only;
  const int min_rows_g =
      res.generator.coarse_head.spec.use_batch_stats_norm &&
              res.generator.coarse_head.spec.num_residual_blocks > 0
          ? 2
          : 1;

  GeneratorModel last_good_gen = res.generator;
  Discriminator last_good_d = res.discriminator;
  FinetuneMetrics& metrics = res.metrics;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);
    double d_sum = 0.0, acc_sum = 0.0, sup_sum = 0.0, adv_sum = 0.0;
    int d_batches = 0, g_batches = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      if (len < 2) continue;  // batch-norm and real/fake accuracy both need pairs
      Eigen::MatrixXd xb(len, x_train.cols());
      Eigen::MatrixXd zb(len, z_train.cols());
      for (int r = 0; r < len; ++r) {
        const int src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x_train.row(src);
        zb.row(r) = z_train.row(src);
      }

      if (use_adv) {
        // Fakes come from the current generator in eval mode: the
        // discriminator sees the deployed mapping, and no generator rng is
        // consumed during its steps.
        for (int step = 0; step < cfg.d_steps_per_g_step; ++step) {
          const Eigen::MatrixXd z_fake = predict_coarse_std(res.generator, xb);
          Eigen::MatrixXd real(len, 3 * j), fake(len, 3 * j);
          real << xb, zb;
          fake << xb, z_fake;
          const DLossResult dl = d_loss(res.discriminator, real, fake, &rng_d);
          if (!std::isfinite(dl.loss)) {
            metrics.diverged = true;
            res.generator = last_good_gen;
            res.discriminator = last_good_d;
            return res;
          }
          d_sum += dl.loss;
          acc_sum += dl.accuracy;
          ++d_batches;
          net::opt_step(res.discriminator.net, dl.grads, opt_d);
        }
      }

      if (len < min_rows_g) continue;
      auto fr = net::forward(res.generator.coarse_head, xb, net::Mode::kTrain, &rng_g);
      const Eigen::MatrixXd resid = fr.output - zb;
      const double sup_loss = resid.squaredNorm() / static_cast<double>(resid.size());
      Eigen::MatrixXd d_out = 2.0 * resid / static_cast<double>(resid.size());
      double adv_loss = 0.0;
      if (use_adv && cfg.lambda_adv != 0.0) {
        Eigen::MatrixXd fake(len, 3 * j);
        fake << xb, fr.output;
        const GAdvResult ga = g_adv_loss(res.discriminator, fake);
        adv_loss = ga.loss;
        d_out += cfg.lambda_adv * ga.d_input.rightCols(zb.cols());
      }
      if (!std::isfinite(sup_loss) || !std::isfinite(adv_loss)) {
        metrics.diverged = true;
        res.generator = last_good_gen;
        res.discriminator = last_good_d;
        return res;
      }
      sup_sum += sup_loss;
      adv_sum += adv_loss;
      ++g_batches;
      const net::Gradients g = net::backward(res.generator.coarse_head, fr.cache, d_out);
      net::apply_norm_updates(res.generator.coarse_head, fr.cache);
      net::opt_step(res.generator.coarse_head, g, opt_g);
    }

    FinetuneEpochRow row;
    row.epoch = epoch;
    row.d_loss = d_batches > 0 ? d_sum / d_batches : 0.0;
    row.d_acc = d_batches > 0 ? acc_sum / d_batches : 0.0;
    row.g_sup = g_batches > 0 ? sup_sum / g_batches : 0.0;
    row.g_adv = g_batches > 0 ? adv_sum / g_batches : 0.0;
    if (ood != nullptr && !ood_idx.empty()) {
      row.bone_dev = mean_bone_plausibility(res.generator, *ood, ood_idx);
    }
    metrics.rows.push_back(row);
    last_good_gen = res.generator;
    last_good_d = res.discriminator;
  }
  return res;
}

void save_discriminator(const std::filesystem::path& path, const Discriminator& d,
                        const std::string& config_hash) {
  net::save_model_checkpoint(path, d.net, nullptr, "discriminator", config_hash);
}

Discriminator load_discriminator(const std::filesystem::path& path) {
  Discriminator d;
  d.net = net::load_model_checkpoint(path, {}, std::string("discriminator")).model;
  return d;
}

}  // namespace mdpose

#include "mdpose/gradcheck.hpp"

#include <cmath>

#include "mdpose/adversarial.hpp"
#include "mdpose/loss.hpp"

namespace mdpose {

namespace {

constexpr double kNetThreshold = 1e-4;
constexpr double kLossThreshold = 1e-8;

Eigen::MatrixXd random_batch(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.normal();
    }
  }
  return m;
}

// 0.5 * ||out - target||^2
net::LossFn quadratic_loss(const Eigen::MatrixXd& target) {
  return [target](const Eigen::MatrixXd& out) {
    const Eigen::MatrixXd d = out - target;
    return std::make_pair(0.5 * d.squaredNorm(), d);
  };
}

// Cross-entropy-style loss on group-softmax outputs: -mean log p(target).
net::LossFn ce_loss(const std::vector<int>& targets, int groups) {
  return [targets, groups](const Eigen::MatrixXd& out) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(out.rows(), out.cols());
    double loss = 0.0;
    const double k = static_cast<double>(out.rows() * groups);
    std::size_t t = 0;
    for (int r = 0; r < out.rows(); ++r) {
      for (int g = 0; g < groups; ++g, ++t) {
        const int col = 3 * g + targets[t % targets.size()];
        const double p = std::max(out(r, col), 1e-12);
        loss += -std::log(p) / k;
        d(r, col) = -1.0 / (k * p);
      }
    }
    return std::make_pair(loss, d);
  };
}

GradCheckRow check_net(const std::string& name, net::MlpSpec spec, const net::LossFn& loss_fn,
                       std::uint64_t seed) {
  spec.dropout_rate = 0.0;
  const net::MlpModel model = net::init(spec, seed);
  Rng rng(seed ^ 0xba7c4);
  const Eigen::MatrixXd batch = random_batch(8, spec.input_dim, rng);
  GradCheckRow row;
  row.component = name;
  row.max_rel_error = net::grad_check(model, batch, loss_fn);
  row.threshold = kNetThreshold;
  row.pass = row.max_rel_error < row.threshold;
  return row;
}

GradCheckRow check_d_loss(const net::MlpSpec& d_spec, std::uint64_t seed) {
  net::MlpSpec spec = d_spec;
  spec.dropout_rate = 0.0;
  Discriminator d;
  d.net = net::init(spec, seed);
  Rng rng(seed ^ 0xd15c);
  const Eigen::MatrixXd real = random_batch(6, spec.input_dim, rng);
  const Eigen::MatrixXd fake = random_batch(6, spec.input_dim, rng);

  const DLossResult analytic = d_loss(d, real, fake);
  auto loss_at = [&](const Discriminator& dd) { return d_loss(dd, real, fake).loss; };

  const double h = 1e-5;
  double max_rel = 0.0;
  Discriminator work = d;
  auto params = net::param_views(work.net);
  auto grads = net::grad_views(analytic.grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::Index n = params[i].size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / 16);
    for (Eigen::Index k = 0; k < n; k += stride) {
      const double orig = params[i](k);
      params[i](k) = orig + h;
      const double lp = loss_at(work);
      params[i](k) = orig - h;
      const double lm = loss_at(work);
      params[i](k) = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = grads[i](k);
      max_rel = std::max(max_rel,
                         std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
  }
  GradCheckRow row;
  row.component = "adversarial_d_loss";
  row.max_rel_error = max_rel;
  row.threshold = kNetThreshold;
  row.pass = max_rel < row.threshold;
  return row;
}

GradCheckRow check_g_adv(const net::MlpSpec& d_spec, std::uint64_t seed) {
  net::MlpSpec spec = d_spec;
  spec.dropout_rate = 0.0;
  Discriminator d;
  d.net = net::init(spec, seed);
  Rng rng(seed ^ 0x9adc);
  Eigen::MatrixXd fake = random_batch(6, spec.input_dim, rng);

  const GAdvResult analytic = g_adv_loss(d, fake);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (int r = 0; r < fake.rows(); ++r) {
    for (int c = 0; c < fake.cols(); c += 3) {  // strided over input entries
      const double orig = fake(r, c);
      fake(r, c) = orig + h;
      const double lp = g_adv_loss(d, fake).loss;
      fake(r, c) = orig - h;
      const double lm = g_adv_loss(d, fake).loss;
      fake(r, c) = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic.d_input(r, c);
      max_rel = std::max(max_rel,
                         std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
  }
  GradCheckRow row;
  row.component = "adversarial_g_adv_input";
  row.max_rel_error = max_rel;
  row.threshold = kNetThreshold;
  row.pass = max_rel < row.threshold;
  return row;
}

GradCheckRow check_weighted_loss_derivative() {
  double max_rel = 0.0;
  for (double alpha : {0.1, 0.5, 0.9}) {
    WeightedLossConfig cfg;
    cfg.epsilon = 0.001;
    cfg.alpha = alpha;
    for (int i = 1; i < 2000; ++i) {
      const double l0v = 20.0 * static_cast<double>(i) / 2000.0;
      // Stay clear of the exponent clamp; the kink is checked separately for
      // finiteness, not smoothness.
      if (l0v / (1.0 - alpha) > kExpClamp - 1.0) break;
      const double h = 1e-6 * std::max(1.0, l0v);
      const double lp = weighted_loss(l0v + h, cfg).loss;
      const double lm = weighted_loss(l0v - h, cfg).loss;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = weighted_loss(l0v, cfg).dloss_dl0;
      max_rel = std::max(max_rel,
                         std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
    }
  }
  GradCheckRow row;
  row.component = "weighted_loss_dl0";
  row.max_rel_error = max_rel;
  row.threshold = kLossThreshold;
  row.pass = max_rel < row.threshold;
  return row;
}

}  // namespace

bool GradCheckReport::all_pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return true;
}

GradCheckReport run_grad_checks(const RunConfig& cfg) {
  GradCheckReport report;
  const std::uint64_t seed = cfg.seed;
  Rng rng(seed ^ 0x6c0de);

  {
    const net::MlpSpec spec = cfg.coarse_spec();
    Eigen::MatrixXd target = random_batch(8, spec.output_dim, rng);
    report.rows.push_back(check_net("generator_coarse_head", spec, quadratic_loss(target), seed));
  }
  {
    const net::MlpSpec spec = cfg.fbi_spec();
    std::vector<int> targets;
    for (int i = 0; i < spec.output_dim / 3; ++i) {
      targets.push_back(static_cast<int>(rng.below(3)));
    }
    report.rows.push_back(
        check_net("generator_fbi_head_softmax", spec, ce_loss(targets, spec.output_dim / 3), seed));
  }
  {
    const net::MlpSpec spec = cfg.discriminator_spec();
    Eigen::MatrixXd target = random_batch(8, spec.output_dim, rng);
    report.rows.push_back(check_net("discriminator", spec, quadratic_loss(target), seed));
  }
  for (RefinerMode mode : {RefinerMode::kBase, RefinerMode::kFinal}) {
    const net::MlpSpec spec = cfg.refiner_spec(mode);
    Eigen::MatrixXd target = random_batch(8, spec.output_dim, rng);
    report.rows.push_back(check_net(mode == RefinerMode::kBase ? "refiner_base" : "refiner_final",
                                    spec, quadratic_loss(target), seed));
  }
  report.rows.push_back(check_d_loss(cfg.discriminator_spec(), seed));
  report.rows.push_back(check_g_adv(cfg.discriminator_spec(), seed));
  report.rows.push_back(check_weighted_loss_derivative());
  return report;
}

}  // namespace mdpose

#include "mdpose/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mdpose/io.hpp"

namespace mdpose {

namespace {

constexpr std::uint64_t kShuffleStream = 0x4f01;
constexpr std::uint64_t kNetStream = 0x4f02;

std::string mode_name(RefinerMode mode) {
  return mode == RefinerMode::kBase ? "base" : "final";
}

}  // namespace

int refiner_input_dim(const SkeletonTopology& topo, RefinerMode mode) {
  const int j = topo.joint_count();
  const int m = topo.bone_count();
  return mode == RefinerMode::kBase ? 2 * j : 2 * j + j + 3 * m;
}

Eigen::MatrixXd refiner_input_channels(const Dataset& ds, const std::vector<int>& idx,
                                       RefinerMode mode, RefinerInputSource source,
                                       const GeneratorModel* gen) {
  const Eigen::MatrixXd raw2d = gather_pose2d_noisy(ds, idx);
  if (mode == RefinerMode::kBase) {
    return raw2d;
  }
  Eigen::MatrixXd z_mm, fbi;
  if (source == RefinerInputSource::kCorrupted) {
    z_mm = gather_z_noisy(ds, idx);
    fbi = gather_fbi_onehot_noisy(ds, idx);
  } else {
    if (gen == nullptr) {
      throw std::invalid_argument("refiner: generator inputs requested without a generator");
    }
    const Eigen::MatrixXd in_std = gen->in2d.apply(raw2d);
    z_mm = gen->z_out.invert(predict_coarse_std(*gen, in_std));
    fbi = predict_fbi_probs_std(*gen, in_std);
  }
  Eigen::MatrixXd out(raw2d.rows(), raw2d.cols() + z_mm.cols() + fbi.cols());
  out << raw2d, z_mm, fbi;
  return out;
}

namespace {

// Splits the raw channel block, standardizes the 2D and depth parts with the
// model's statistics, and leaves the class one-hots/probabilities as-is.
Eigen::MatrixXd standardize_inputs(const RefinerModel& model, const Eigen::MatrixXd& raw) {
  const int d2 = model.in2d.dim();
  if (model.mode == RefinerMode::kBase) {
    if (raw.cols() != d2) {
      throw std::invalid_argument("refiner: input width does not match base mode");
    }
    return model.in2d.apply(raw);
  }
  const int dz = model.in_z.dim();
  if (raw.cols() < d2 + dz) {
    throw std::invalid_argument("refiner: input width does not match final mode");
  }
  Eigen::MatrixXd out = raw;
  out.leftCols(d2) = model.in2d.apply(raw.leftCols(d2));
  out.middleCols(d2, dz) = model.in_z.apply(raw.middleCols(d2, dz));
  return out;
}

}  // namespace

Eigen::MatrixXd refine_std(const RefinerModel& model, const Eigen::MatrixXd& inputs_std) {
  return net::forward(model.net, inputs_std, net::Mode::kEval).output;
}

RefinerModel train_refiner(const Dataset& ds, const net::MlpSpec& spec,
                           const RefinerTrainConfig& cfg, const GeneratorModel* gen,
                           RefinerMetrics* metrics) {
  const std::vector<int> train_idx = ds.train_indices();
  const std::vector<int> test_idx = ds.test_indices();
  if (train_idx.empty()) {
    throw std::invalid_argument("train_refiner: empty training split");
  }
  const RefinerMode mode =
      spec.input_dim == refiner_input_dim(ds.topo, RefinerMode::kBase) ? RefinerMode::kBase
                                                                       : RefinerMode::kFinal;
  if (spec.input_dim != refiner_input_dim(ds.topo, mode) ||
      spec.output_dim != 3 * ds.topo.joint_count()) {
    throw std::invalid_argument("train_refiner: spec dims do not match topology");
  }

  RefinerModel model;
  model.mode = mode;
  model.net = net::init(spec, Rng::derive(cfg.seed, kNetStream).next_u64());

  const Eigen::MatrixXd raw_train =
      refiner_input_channels(ds, train_idx, mode, cfg.inputs, gen);
  const int j2 = 2 * ds.topo.joint_count();
  model.in2d = Standardizer::fit(raw_train.leftCols(j2));
  if (mode == RefinerMode::kFinal) {
    model.in_z = Standardizer::fit(raw_train.middleCols(j2, ds.topo.joint_count()));
  }
  model.out3d = Standardizer::fit(gather_pose3d_gt(ds, train_idx));

  const Eigen::MatrixXd x_train = standardize_inputs(model, raw_train);
  const Eigen::MatrixXd y_train = model.out3d.apply(gather_pose3d_gt(ds, train_idx));
  Eigen::MatrixXd x_test, y_test_mm;
  if (!test_idx.empty()) {
    x_test = standardize_inputs(model, refiner_input_channels(ds, test_idx, mode, cfg.inputs, gen));
    y_test_mm = gather_pose3d_gt(ds, test_idx);
  }

  net::OptimState opt = net::make_optim_state(model.net, cfg.learning_rate);
  Rng rng_shuffle = Rng::derive(cfg.seed, kShuffleStream);
  Rng rng_net = Rng::derive(cfg.seed, kNetStream, 1);

  const int n = static_cast<int>(train_idx.size());
  const int coords = static_cast<int>(y_train.cols());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int min_rows = spec.use_batch_stats_norm && spec.num_residual_blocks > 0 ? 2 : 1;

  WeightedLossConfig loss_cfg;
  loss_cfg.epsilon = cfg.epsilon;
  loss_cfg.alpha = 0.5;
  loss_cfg.normalization_stats = model.out3d;

  const int alpha_batch = 1024;
  auto per_sample_l0_under_model = [&]() {
    std::vector<double> l0s;
    l0s.reserve(static_cast<std::size_t>(n));
    for (int start = 0; start < n; start += alpha_batch) {
      const int len = std::min(alpha_batch, n - start);
      const Eigen::MatrixXd pred =
          refine_std(model, x_train.middleRows(start, len));
      for (int r = 0; r < len; ++r) {
        l0s.push_back((pred.row(r) - y_train.row(start + r)).squaredNorm() /
                      static_cast<double>(coords));
      }
    }
    return l0s;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.use_weighted_loss) {
      loss_cfg.alpha = estimate_alpha(per_sample_l0_under_model()).alpha;
    }
    rng_shuffle.shuffle(order);
    double loss_sum = 0.0, l0_sum = 0.0;
    int batches = 0, clamp_events = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      if (len < min_rows) continue;
      Eigen::MatrixXd xb(len, x_train.cols());
      Eigen::MatrixXd yb(len, y_train.cols());
      for (int r = 0; r < len; ++r) {
        const int src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x_train.row(src);
        yb.row(r) = y_train.row(src);
      }

      auto fr = net::forward(model.net, xb, net::Mode::kTrain, &rng_net);
      const Eigen::MatrixXd resid = fr.output - yb;
      Eigen::MatrixXd d_out(len, coords);
      double batch_loss = 0.0, batch_l0 = 0.0;
      for (int r = 0; r < len; ++r) {
        const double sample_l0 = resid.row(r).squaredNorm() / static_cast<double>(coords);
        batch_l0 += sample_l0;
        double dloss_dl0 = 1.0;
        if (cfg.use_weighted_loss) {
          const WeightedLossResult w = weighted_loss(sample_l0, loss_cfg);
          batch_loss += w.loss;
          dloss_dl0 = w.dloss_dl0;
          if (w.clamped) ++clamp_events;
        } else {
          batch_loss += sample_l0;
        }
        d_out.row(r) = resid.row(r) * (dloss_dl0 * 2.0 /
                                       (static_cast<double>(coords) * static_cast<double>(len)));
      }
      batch_loss /= static_cast<double>(len);
      batch_l0 /= static_cast<double>(len);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train_refiner: non-finite loss at epoch " +
                                 std::to_string(epoch) + " (" + mode_name(mode) + " mode)");
      }
      loss_sum += batch_loss;
      l0_sum += batch_l0;
      ++batches;
      const net::Gradients g = net::backward(model.net, fr.cache, d_out);
      net::apply_norm_updates(model.net, fr.cache);
      net::opt_step(model.net, g, opt);
    }

    if (metrics != nullptr) {
      RefinerEpochRow row;
      row.epoch = epoch;
      row.alpha = loss_cfg.alpha;
      row.train_loss = batches > 0 ? loss_sum / batches : 0.0;
      row.train_mean_l0 = batches > 0 ? l0_sum / batches : 0.0;
      row.clamp_events = clamp_events;
      if (!test_idx.empty()) {
        const Eigen::MatrixXd pred_mm = model.out3d.invert(refine_std(model, x_test));
        double sum = 0.0;
        for (int r = 0; r < pred_mm.rows(); ++r) {
          const Pose3D pred = root_relative(
              Pose3D::from_flat(pred_mm.row(r).transpose()), ds.topo);
          const Pose3D gt = Pose3D::from_flat(y_test_mm.row(r).transpose());
          sum += mpjpe(pred, gt);
        }
        row.test_mpjpe = sum / static_cast<double>(pred_mm.rows());
      }
      metrics->rows.push_back(row);
    }
  }
  return model;
}

Pose3D refine(const RefinerModel& model, const SkeletonTopology& topo, const Pose2D& pose2d_px,
              const std::optional<Eigen::VectorXd>& coarse_z_mm,
              const std::optional<Eigen::MatrixXd>& fbi_probs) {
  const bool wants_channels = model.mode == RefinerMode::kFinal;
  if (wants_channels != (coarse_z_mm.has_value() && fbi_probs.has_value())) {
    throw std::invalid_argument(
        "refine: depth/class channels must be present exactly in final mode");
  }
  Eigen::MatrixXd raw(1, refiner_input_dim(topo, model.mode));
  if (model.mode == RefinerMode::kBase) {
    raw.row(0) = pose2d_px.flat().transpose();
  } else {
    Eigen::VectorXd fbi_flat(3 * topo.bone_count());
    if (fbi_probs->rows() != topo.bone_count() || fbi_probs->cols() != 3) {
      throw std::invalid_argument("refine: class channel must be m x 3");
    }
    for (int i = 0; i < topo.bone_count(); ++i) {
      fbi_flat.segment<3>(3 * i) = fbi_probs->row(i).transpose();
    }
    raw.row(0) << pose2d_px.flat().transpose(), coarse_z_mm->transpose(), fbi_flat.transpose();
  }
  const Eigen::MatrixXd out = refine_std(model, standardize_inputs(model, raw));
  const Pose3D pose = Pose3D::from_flat(model.out3d.invert(out).row(0).transpose());
  return root_relative(pose, topo);
}

EvalTable evaluate_predictions(const std::vector<Pose3D>& preds, const Dataset& ds,
                               const std::vector<int>& idx) {
  if (preds.size() != idx.size()) {
    throw std::invalid_argument("evaluate: prediction count does not match index set");
  }
  // Reduce in sample-id order so the table is independent of input ordering.
  std::vector<std::size_t> order(idx.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return idx[a] < idx[b]; });

  EvalTable table;
  table.per_action.fill(0.0);
  table.counts.fill(0);
  double total = 0.0;
  for (std::size_t k : order) {
    const Sample& s = ds.samples[static_cast<std::size_t>(idx[k])];
    const double err = mpjpe(preds[k], s.pose3d_gt);
    table.per_sample.push_back(err);
    table.per_sample_action.push_back(s.action);
    table.per_action[static_cast<std::size_t>(s.action)] += err;
    table.counts[static_cast<std::size_t>(s.action)] += 1;
    total += err;
  }
  for (int a = 0; a < kActionBins; ++a) {
    if (table.counts[static_cast<std::size_t>(a)] > 0) {
      table.per_action[static_cast<std::size_t>(a)] /=
          static_cast<double>(table.counts[static_cast<std::size_t>(a)]);
    } else {
      table.per_action[static_cast<std::size_t>(a)] = std::numeric_limits<double>::quiet_NaN();
      table.missing_bins.push_back(a);
    }
  }
  table.avg = table.per_sample.empty()
                  ? 0.0
                  : total / static_cast<double>(table.per_sample.size());
  return table;
}

EvalTable evaluate(const RefinerModel& model, const Dataset& ds, const std::vector<int>& idx,
                   RefinerInputSource source, const GeneratorModel* gen) {
  if (idx.empty()) {
    throw std::invalid_argument("evaluate: empty index set");
  }
  const Eigen::MatrixXd raw = refiner_input_channels(ds, idx, model.mode, source, gen);
  const Eigen::MatrixXd pred_mm = model.out3d.invert(refine_std(model, standardize_inputs(model, raw)));
  std::vector<Pose3D> preds;
  preds.reserve(idx.size());
  for (int r = 0; r < pred_mm.rows(); ++r) {
    preds.push_back(
        root_relative(Pose3D::from_flat(pred_mm.row(r).transpose()), ds.topo));
  }
  return evaluate_predictions(preds, ds, idx);
}

void save_refiner(const std::filesystem::path& path, const RefinerModel& model,
                  const std::string& tag, const std::string& config_hash) {
  nlohmann::json body = {{"net", net::model_to_json(model.net)},
                         {"mode", mode_name(model.mode)},
                         {"in2d", standardizer_to_json(model.in2d)},
                         {"out3d", standardizer_to_json(model.out3d)}};
  if (model.mode == RefinerMode::kFinal) {
    body["in_z"] = standardizer_to_json(model.in_z);
  }
  atomic_write_file(path, make_envelope(tag, config_hash, std::move(body)).dump());
}

RefinerModel load_refiner(const std::filesystem::path& path,
                          const std::optional<std::string>& expected_tag) {
  const Envelope env = open_envelope(read_text_file(path), expected_tag);
  RefinerModel model;
  model.net = net::model_from_json(env.body.at("net"));
  model.mode =
      env.body.at("mode").get<std::string>() == "base" ? RefinerMode::kBase : RefinerMode::kFinal;
  model.in2d = standardizer_from_json(env.body.at("in2d"));
  model.out3d = standardizer_from_json(env.body.at("out3d"));
  if (model.mode == RefinerMode::kFinal) {
    model.in_z = standardizer_from_json(env.body.at("in_z"));
  }
  return model;
}

}  // namespace mdpose

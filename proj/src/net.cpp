#include "mdpose/net.hpp"

#include <cmath>
#include <stdexcept>

#include "mdpose/io.hpp"

namespace mdpose::net {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("spec: dims must be >= 1");
  }
  if (num_residual_blocks < 0) {
    throw std::invalid_argument("spec: num_residual_blocks must be >= 0");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("spec: dropout_rate must be in [0, 1)");
  }
  if (output_activation == OutputActivation::kGroupSoftmax3 && output_dim % 3 != 0) {
    throw std::invalid_argument("spec: group softmax needs output_dim divisible by 3");
  }
}

nlohmann::json spec_to_json(const MlpSpec& spec) {
  return {{"input_dim", spec.input_dim},
          {"output_dim", spec.output_dim},
          {"hidden_dim", spec.hidden_dim},
          {"num_residual_blocks", spec.num_residual_blocks},
          {"use_batch_stats_norm", spec.use_batch_stats_norm},
          {"dropout_rate", spec.dropout_rate},
          {"output_activation",
           spec.output_activation == OutputActivation::kLinear ? "linear" : "group_softmax3"}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.hidden_dim = j.at("hidden_dim").get<int>();
  spec.num_residual_blocks = j.at("num_residual_blocks").get<int>();
  spec.use_batch_stats_norm = j.at("use_batch_stats_norm").get<bool>();
  spec.dropout_rate = j.at("dropout_rate").get<double>();
  const std::string act = j.at("output_activation").get<std::string>();
  if (act == "linear") {
    spec.output_activation = OutputActivation::kLinear;
  } else if (act == "group_softmax3") {
    spec.output_activation = OutputActivation::kGroupSoftmax3;
  } else {
    throw std::invalid_argument("spec: unknown output activation " + act);
  }
  spec.validate();
  return spec;
}

namespace {

// Layers feeding a batch-stats norm carry no bias: the norm subtracts the
// batch mean, which would cancel it exactly, leaving a dead parameter.
DenseLayer init_dense(int in, int out, Rng& rng, bool with_bias) {
  DenseLayer l;
  l.w.resize(in, out);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in));
  for (int c = 0; c < out; ++c) {
    for (int r = 0; r < in; ++r) {
      l.w(r, c) = rng.normal(0.0, stddev);
    }
  }
  if (with_bias) l.b = Eigen::RowVectorXd::Zero(out);
  return l;
}

NormLayer init_norm(int dim) {
  NormLayer n;
  n.gamma = Eigen::RowVectorXd::Ones(dim);
  n.beta = Eigen::RowVectorXd::Zero(dim);
  n.running_mean = Eigen::RowVectorXd::Zero(dim);
  n.running_var = Eigen::RowVectorXd::Ones(dim);
  return n;
}

}  // namespace

MlpModel init(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MlpModel m;
  m.spec = spec;
  const bool hidden_bias = !spec.use_batch_stats_norm;
  if (spec.num_residual_blocks > 0) {
    m.stem = init_dense(spec.input_dim, spec.hidden_dim, rng, hidden_bias);
    if (spec.use_batch_stats_norm) m.stem_norm = init_norm(spec.hidden_dim);
    m.blocks.resize(static_cast<std::size_t>(spec.num_residual_blocks));
    for (auto& b : m.blocks) {
      b.lin1 = init_dense(spec.hidden_dim, spec.hidden_dim, rng, hidden_bias);
      b.lin2 = init_dense(spec.hidden_dim, spec.hidden_dim, rng, hidden_bias);
      if (spec.use_batch_stats_norm) {
        b.norm1 = init_norm(spec.hidden_dim);
        b.norm2 = init_norm(spec.hidden_dim);
      }
    }
    m.head = init_dense(spec.hidden_dim, spec.output_dim, rng, true);
  } else {
    m.head = init_dense(spec.input_dim, spec.output_dim, rng, true);
  }
  return m;
}

namespace {

// dense -> [norm] -> relu -> [dropout]
Eigen::MatrixXd run_stage(const DenseLayer& lin, const NormLayer* norm,
                          const Eigen::MatrixXd& x, Mode mode, double dropout_rate, Rng* rng,
                          StageCache& sc) {
  sc.lin_in = x;
  Eigen::MatrixXd a = x * lin.w;
  if (lin.b.size() > 0) a.rowwise() += lin.b;

  if (norm != nullptr) {
    const auto n = static_cast<double>(a.rows());
    if (mode == Mode::kTrain) {
      const Eigen::RowVectorXd mu = a.colwise().mean();
      const Eigen::RowVectorXd var =
          (a.rowwise() - mu).array().square().colwise().sum() / n;
      sc.norm.inv_std = (var.array() + kNormEps).rsqrt();
      sc.norm.xhat = (a.rowwise() - mu).array().rowwise() * sc.norm.inv_std.array();
      sc.norm.new_running_mean =
          kNormMomentum * norm->running_mean + (1.0 - kNormMomentum) * mu;
      sc.norm.new_running_var =
          kNormMomentum * norm->running_var + (1.0 - kNormMomentum) * var;
    } else {
      sc.norm.inv_std = (norm->running_var.array() + kNormEps).rsqrt();
      sc.norm.xhat =
          (a.rowwise() - norm->running_mean).array().rowwise() * sc.norm.inv_std.array();
    }
    a = (sc.norm.xhat.array().rowwise() * norm->gamma.array()).rowwise() +
        norm->beta.array();
  }

  sc.pre_relu = a;
  a = a.cwiseMax(0.0);

  if (mode == Mode::kTrain && dropout_rate > 0.0) {
    sc.dropout_mask.resize(a.rows(), a.cols());
    const double keep = 1.0 - dropout_rate;
    for (int r = 0; r < a.rows(); ++r) {
      for (int c = 0; c < a.cols(); ++c) {
        sc.dropout_mask(r, c) = rng->uniform() >= dropout_rate ? 1.0 / keep : 0.0;
      }
    }
    a = a.cwiseProduct(sc.dropout_mask);
  }
  return a;
}

Eigen::MatrixXd group_softmax3(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    for (int g = 0; g < logits.cols(); g += 3) {
      const Eigen::Vector3d z = logits.row(r).segment<3>(g).transpose();
      const Eigen::Vector3d e = (z.array() - z.maxCoeff()).exp();
      out.row(r).segment<3>(g) = (e / e.sum()).transpose();
    }
  }
  return out;
}

}  // namespace

ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& batch, Mode mode, Rng* rng) {
  const MlpSpec& spec = model.spec;
  if (batch.cols() != spec.input_dim) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, expected " + std::to_string(spec.input_dim));
  }
  const bool dropout_active = mode == Mode::kTrain && spec.dropout_rate > 0.0;
  if (dropout_active && rng == nullptr) {
    throw std::invalid_argument("forward: train-mode dropout needs an rng");
  }
  if (mode == Mode::kTrain && spec.use_batch_stats_norm && spec.num_residual_blocks > 0 &&
      batch.rows() < 2) {
    throw std::invalid_argument("forward: batch-stats norm needs >= 2 rows in train mode");
  }

  Cache cache;
  cache.spec = spec;
  cache.mode = mode;
  cache.input = batch;

  Eigen::MatrixXd cur = batch;
  if (spec.num_residual_blocks > 0) {
    cache.stages.resize(1 + 2 * static_cast<std::size_t>(spec.num_residual_blocks));
    cache.block_inputs.resize(static_cast<std::size_t>(spec.num_residual_blocks));
    const NormLayer* stem_norm = spec.use_batch_stats_norm ? &model.stem_norm : nullptr;
    cur = run_stage(model.stem, stem_norm, cur, mode, spec.dropout_rate, rng, cache.stages[0]);
    for (int b = 0; b < spec.num_residual_blocks; ++b) {
      const auto& block = model.blocks[static_cast<std::size_t>(b)];
      cache.block_inputs[static_cast<std::size_t>(b)] = cur;
      const NormLayer* n1 = spec.use_batch_stats_norm ? &block.norm1 : nullptr;
      const NormLayer* n2 = spec.use_batch_stats_norm ? &block.norm2 : nullptr;
      Eigen::MatrixXd a = run_stage(block.lin1, n1, cur, mode, spec.dropout_rate, rng,
                                    cache.stages[static_cast<std::size_t>(1 + 2 * b)]);
      a = run_stage(block.lin2, n2, a, mode, spec.dropout_rate, rng,
                    cache.stages[static_cast<std::size_t>(2 + 2 * b)]);
      cur = cache.block_inputs[static_cast<std::size_t>(b)] + a;
    }
  }
  cache.head_in = cur;
  cache.logits = (cur * model.head.w).rowwise() + model.head.b;
  cache.output = spec.output_activation == OutputActivation::kGroupSoftmax3
                     ? group_softmax3(cache.logits)
                     : cache.logits;
  ForwardResult res;
  res.output = cache.output;
  res.cache = std::move(cache);
  return res;
}

void apply_norm_updates(MlpModel& model, const Cache& cache) {
  if (cache.mode != Mode::kTrain || !model.spec.use_batch_stats_norm ||
      model.spec.num_residual_blocks == 0) {
    return;
  }
  auto apply = [](NormLayer& n, const NormCache& nc) {
    n.running_mean = nc.new_running_mean;
    n.running_var = nc.new_running_var;
  };
  apply(model.stem_norm, cache.stages[0].norm);
  for (int b = 0; b < model.spec.num_residual_blocks; ++b) {
    apply(model.blocks[static_cast<std::size_t>(b)].norm1,
          cache.stages[static_cast<std::size_t>(1 + 2 * b)].norm);
    apply(model.blocks[static_cast<std::size_t>(b)].norm2,
          cache.stages[static_cast<std::size_t>(2 + 2 * b)].norm);
  }
}

namespace {

// Reverse of run_stage; fills the dense/norm grads and returns dL/d(stage in).
Eigen::MatrixXd stage_backward(const StageCache& sc, const DenseLayer& lin, const NormLayer* norm,
                               Mode mode, const Eigen::MatrixXd& d_out, DenseGrad& dlin,
                               NormGrad* dnorm) {
  Eigen::MatrixXd d = d_out;
  if (sc.dropout_mask.size() > 0) {
    d = d.cwiseProduct(sc.dropout_mask);
  }
  d = (sc.pre_relu.array() > 0.0).select(d, 0.0);

  if (norm != nullptr) {
    dnorm->gamma = d.cwiseProduct(sc.norm.xhat).colwise().sum();
    dnorm->beta = d.colwise().sum();
    Eigen::MatrixXd dxhat = d.array().rowwise() * norm->gamma.array();
    if (mode == Mode::kTrain) {
      const auto n = static_cast<double>(d.rows());
      const Eigen::RowVectorXd sum1 = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum2 = dxhat.cwiseProduct(sc.norm.xhat).colwise().sum();
      d = ((dxhat * n).rowwise() - sum1 -
           (sc.norm.xhat.array().rowwise() * sum2.array()).matrix())
              .array()
              .rowwise() *
          (sc.norm.inv_std / n).array();
    } else {
      d = dxhat.array().rowwise() * sc.norm.inv_std.array();
    }
  }

  dlin.w = sc.lin_in.transpose() * d;
  if (lin.b.size() > 0) dlin.b = d.colwise().sum();
  return d * lin.w.transpose();
}

Eigen::MatrixXd softmax3_vjp(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs) {
  Eigen::MatrixXd d(probs.rows(), probs.cols());
  for (int r = 0; r < probs.rows(); ++r) {
    for (int g = 0; g < probs.cols(); g += 3) {
      const Eigen::Vector3d p = probs.row(r).segment<3>(g).transpose();
      const Eigen::Vector3d gp = d_probs.row(r).segment<3>(g).transpose();
      d.row(r).segment<3>(g) = (p.array() * (gp.array() - gp.dot(p))).transpose();
    }
  }
  return d;
}

Gradients backward_impl(const MlpModel& model, const Cache& cache,
                        const Eigen::MatrixXd& d_logits) {
  const MlpSpec& spec = model.spec;
  Gradients g;
  g.head.w = cache.head_in.transpose() * d_logits;
  g.head.b = d_logits.colwise().sum();
  Eigen::MatrixXd d = d_logits * model.head.w.transpose();

  if (spec.num_residual_blocks > 0) {
    g.blocks.resize(static_cast<std::size_t>(spec.num_residual_blocks));
    for (int b = spec.num_residual_blocks - 1; b >= 0; --b) {
      const auto& block = model.blocks[static_cast<std::size_t>(b)];
      auto& bg = g.blocks[static_cast<std::size_t>(b)];
      const NormLayer* n1 = spec.use_batch_stats_norm ? &block.norm1 : nullptr;
      const NormLayer* n2 = spec.use_batch_stats_norm ? &block.norm2 : nullptr;
      const Eigen::MatrixXd d_skip = d;
      Eigen::MatrixXd dm =
          stage_backward(cache.stages[static_cast<std::size_t>(2 + 2 * b)], block.lin2, n2,
                         cache.mode, d, bg.lin2, spec.use_batch_stats_norm ? &bg.norm2 : nullptr);
      dm = stage_backward(cache.stages[static_cast<std::size_t>(1 + 2 * b)], block.lin1, n1,
                          cache.mode, dm, bg.lin1,
                          spec.use_batch_stats_norm ? &bg.norm1 : nullptr);
      d = dm + d_skip;
    }
    const NormLayer* stem_norm = spec.use_batch_stats_norm ? &model.stem_norm : nullptr;
    d = stage_backward(cache.stages[0], model.stem, stem_norm, cache.mode, d, g.stem,
                       spec.use_batch_stats_norm ? &g.stem_norm : nullptr);
  }
  g.input = d;
  return g;
}

void check_cache(const MlpModel& model, const Cache& cache, const Eigen::MatrixXd& d_out) {
  if (cache.spec != model.spec) {
    throw std::invalid_argument("backward: cache does not match this model spec");
  }
  if (d_out.rows() != cache.output.rows() || d_out.cols() != cache.output.cols()) {
    throw std::invalid_argument("backward: gradient shape does not match cached output");
  }
}

}  // namespace

Gradients backward(const MlpModel& model, const Cache& cache, const Eigen::MatrixXd& d_output) {
  check_cache(model, cache, d_output);
  if (model.spec.output_activation == OutputActivation::kGroupSoftmax3) {
    return backward_impl(model, cache, softmax3_vjp(cache.output, d_output));
  }
  return backward_impl(model, cache, d_output);
}

Gradients backward_from_logits(const MlpModel& model, const Cache& cache,
                               const Eigen::MatrixXd& d_logits) {
  check_cache(model, cache, d_logits);
  return backward_impl(model, cache, d_logits);
}

namespace {

template <class G>
void axpy_dense(DenseGrad& acc, const G& g, double s) {
  if (acc.w.size() == 0) {
    acc.w = s * g.w;
    acc.b = s * g.b;
  } else {
    acc.w += s * g.w;
    acc.b += s * g.b;
  }
}

void axpy_norm(NormGrad& acc, const NormGrad& g, double s) {
  if (g.gamma.size() == 0) return;
  if (acc.gamma.size() == 0) {
    acc.gamma = s * g.gamma;
    acc.beta = s * g.beta;
  } else {
    acc.gamma += s * g.gamma;
    acc.beta += s * g.beta;
  }
}

}  // namespace

void axpy(Gradients& acc, const Gradients& g, double scale) {
  if (g.stem.w.size() > 0) axpy_dense(acc.stem, g.stem, scale);
  axpy_norm(acc.stem_norm, g.stem_norm, scale);
  if (acc.blocks.size() < g.blocks.size()) acc.blocks.resize(g.blocks.size());
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    axpy_dense(acc.blocks[i].lin1, g.blocks[i].lin1, scale);
    axpy_dense(acc.blocks[i].lin2, g.blocks[i].lin2, scale);
    axpy_norm(acc.blocks[i].norm1, g.blocks[i].norm1, scale);
    axpy_norm(acc.blocks[i].norm2, g.blocks[i].norm2, scale);
  }
  axpy_dense(acc.head, g.head, scale);
}

namespace {

template <class Model, class MapT, class Out>
void collect_views(Model& m, Out& out) {
  auto add = [&out](auto& mat) {
    if (mat.size() > 0) out.emplace_back(mat.data(), mat.size());
  };
  const bool norm = m.spec.use_batch_stats_norm;
  if (m.spec.num_residual_blocks > 0) {
    add(m.stem.w);
    add(m.stem.b);
    if (norm) {
      add(m.stem_norm.gamma);
      add(m.stem_norm.beta);
    }
    for (auto& b : m.blocks) {
      add(b.lin1.w);
      add(b.lin1.b);
      if (norm) {
        add(b.norm1.gamma);
        add(b.norm1.beta);
      }
      add(b.lin2.w);
      add(b.lin2.b);
      if (norm) {
        add(b.norm2.gamma);
        add(b.norm2.beta);
      }
    }
  }
  add(m.head.w);
  add(m.head.b);
}

}  // namespace

std::vector<Eigen::Map<Eigen::VectorXd>> param_views(MlpModel& model) {
  std::vector<Eigen::Map<Eigen::VectorXd>> out;
  collect_views<MlpModel, Eigen::Map<Eigen::VectorXd>>(model, out);
  return out;
}

std::vector<Eigen::Map<const Eigen::VectorXd>> param_views(const MlpModel& model) {
  std::vector<Eigen::Map<const Eigen::VectorXd>> out;
  collect_views<const MlpModel, Eigen::Map<const Eigen::VectorXd>>(model, out);
  return out;
}

std::vector<Eigen::Map<const Eigen::VectorXd>> grad_views(const Gradients& grads) {
  std::vector<Eigen::Map<const Eigen::VectorXd>> out;
  auto add = [&out](const auto& mat) {
    if (mat.size() > 0) out.emplace_back(mat.data(), mat.size());
  };
  auto add_dense = [&](const DenseGrad& d) {
    add(d.w);
    add(d.b);
  };
  auto add_norm = [&](const NormGrad& n) {
    add(n.gamma);
    add(n.beta);
  };
  if (grads.stem.w.size() > 0) {
    add_dense(grads.stem);
    add_norm(grads.stem_norm);
    for (const auto& b : grads.blocks) {
      add_dense(b.lin1);
      add_norm(b.norm1);
      add_dense(b.lin2);
      add_norm(b.norm2);
    }
  }
  add_dense(grads.head);
  return out;
}

OptimState make_optim_state(const MlpModel& model, double learning_rate) {
  OptimState s;
  s.learning_rate = learning_rate;
  for (const auto& p : param_views(model)) {
    s.m.emplace_back(Eigen::VectorXd::Zero(p.size()));
    s.v.emplace_back(Eigen::VectorXd::Zero(p.size()));
  }
  return s;
}

void opt_step(MlpModel& model, const Gradients& grads, OptimState& state) {
  auto params = param_views(model);
  auto gs = grad_views(grads);
  if (params.size() != gs.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("opt_step: parameter/gradient layout mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != gs[i].size()) {
      throw std::invalid_argument("opt_step: gradient shape mismatch");
    }
    if (!gs[i].allFinite()) {
      throw std::invalid_argument("opt_step: non-finite gradient, update rejected");
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * gs[i];
    v = state.beta2 * v + (1.0 - state.beta2) * gs[i].cwiseProduct(gs[i]);
    const Eigen::VectorXd mhat = m / bc1;
    const Eigen::VectorXd vhat = v / bc2;
    params[i] -=
        state.learning_rate * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                                 Eigen::VectorXd::Constant(m.size(), state.epsilon));
  }
}

double grad_check(const MlpModel& model, const Eigen::MatrixXd& batch, const LossFn& loss_fn,
                  double fd_step, int samples_per_param) {
  if (model.spec.dropout_rate != 0.0) {
    throw std::invalid_argument("grad_check: dropout must be disabled");
  }
  MlpModel work = model;

  auto loss_at = [&](const MlpModel& m) {
    return loss_fn(forward(m, batch, Mode::kTrain).output).first;
  };

  const ForwardResult fr = forward(work, batch, Mode::kTrain);
  const auto [loss0, d_out] = loss_fn(fr.output);
  (void)loss0;
  const Gradients analytic = backward(work, fr.cache, d_out);

  auto params = param_views(work);
  auto gs = grad_views(analytic);
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::Index n = params[i].size();
    const Eigen::Index stride =
        std::max<Eigen::Index>(1, n / std::max(1, samples_per_param));
    for (Eigen::Index k = 0; k < n; k += stride) {
      const double orig = params[i](k);
      params[i](k) = orig + fd_step;
      const double lp = loss_at(work);
      params[i](k) = orig - fd_step;
      const double lm = loss_at(work);
      params[i](k) = orig;
      const double numeric = (lp - lm) / (2.0 * fd_step);
      const double a = gs[i](k);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json flat = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      flat.push_back(m(r, c));
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("checkpoint: parameter payload size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = data[i++].get<double>();
    }
  }
  return m;
}

nlohmann::json row_to_json(const Eigen::RowVectorXd& v) {
  nlohmann::json flat = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) flat.push_back(v(i));
  return flat;
}

Eigen::RowVectorXd row_from_json(const nlohmann::json& j) {
  Eigen::RowVectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

nlohmann::json dense_to_json(const DenseLayer& l) {
  return {{"w", matrix_to_json(l.w)}, {"b", row_to_json(l.b)}};
}

DenseLayer dense_from_json(const nlohmann::json& j) {
  DenseLayer l;
  l.w = matrix_from_json(j.at("w"));
  l.b = row_from_json(j.at("b"));
  return l;
}

nlohmann::json norm_to_json(const NormLayer& n) {
  return {{"gamma", row_to_json(n.gamma)},
          {"beta", row_to_json(n.beta)},
          {"running_mean", row_to_json(n.running_mean)},
          {"running_var", row_to_json(n.running_var)}};
}

NormLayer norm_from_json(const nlohmann::json& j) {
  NormLayer n;
  n.gamma = row_from_json(j.at("gamma"));
  n.beta = row_from_json(j.at("beta"));
  n.running_mean = row_from_json(j.at("running_mean"));
  n.running_var = row_from_json(j.at("running_var"));
  return n;
}

}  // namespace

nlohmann::json model_to_json(const MlpModel& model) {
  nlohmann::json j;
  j["spec"] = spec_to_json(model.spec);
  if (model.spec.num_residual_blocks > 0) {
    j["stem"] = dense_to_json(model.stem);
    if (model.spec.use_batch_stats_norm) j["stem_norm"] = norm_to_json(model.stem_norm);
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : model.blocks) {
      nlohmann::json bj = {{"lin1", dense_to_json(b.lin1)}, {"lin2", dense_to_json(b.lin2)}};
      if (model.spec.use_batch_stats_norm) {
        bj["norm1"] = norm_to_json(b.norm1);
        bj["norm2"] = norm_to_json(b.norm2);
      }
      blocks.push_back(bj);
    }
    j["blocks"] = blocks;
  }
  j["head"] = dense_to_json(model.head);
  return j;
}

MlpModel model_from_json(const nlohmann::json& j, const std::optional<MlpSpec>& expected_spec) {
  MlpModel m;
  m.spec = spec_from_json(j.at("spec"));
  if (expected_spec.has_value() && !(m.spec == *expected_spec)) {
    throw std::invalid_argument("checkpoint: spec mismatch with requesting model");
  }
  if (m.spec.num_residual_blocks > 0) {
    m.stem = dense_from_json(j.at("stem"));
    if (m.spec.use_batch_stats_norm) m.stem_norm = norm_from_json(j.at("stem_norm"));
    for (const auto& bj : j.at("blocks")) {
      ResidualBlock b;
      b.lin1 = dense_from_json(bj.at("lin1"));
      b.lin2 = dense_from_json(bj.at("lin2"));
      if (m.spec.use_batch_stats_norm) {
        b.norm1 = norm_from_json(bj.at("norm1"));
        b.norm2 = norm_from_json(bj.at("norm2"));
      }
      m.blocks.push_back(std::move(b));
    }
  }
  m.head = dense_from_json(j.at("head"));
  return m;
}

nlohmann::json optim_to_json(const OptimState& state) {
  nlohmann::json ms = nlohmann::json::array();
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& m : state.m) ms.push_back(row_to_json(m.transpose()));
  for (const auto& v : state.v) vs.push_back(row_to_json(v.transpose()));
  return {{"step", state.step},
          {"learning_rate", state.learning_rate},
          {"beta1", state.beta1},
          {"beta2", state.beta2},
          {"epsilon", state.epsilon},
          {"m", ms},
          {"v", vs}};
}

OptimState optim_from_json(const nlohmann::json& j) {
  OptimState s;
  s.step = j.at("step").get<long>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  for (const auto& m : j.at("m")) s.m.push_back(row_from_json(m).transpose());
  for (const auto& v : j.at("v")) s.v.push_back(row_from_json(v).transpose());
  return s;
}

void save_model_checkpoint(const std::filesystem::path& path, const MlpModel& model,
                           const OptimState* optim, const std::string& tag,
                           const std::string& config_hash) {
  nlohmann::json body = model_to_json(model);
  if (optim != nullptr) body["optimizer"] = optim_to_json(*optim);
  atomic_write_file(path, make_envelope(tag, config_hash, std::move(body)).dump());
}

LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path,
                                       const std::optional<MlpSpec>& expected_spec,
                                       const std::optional<std::string>& expected_tag) {
  const Envelope env = open_envelope(read_text_file(path), expected_tag);
  LoadedCheckpoint out;
  out.tag = env.tag;
  out.config_hash = env.config_hash;
  out.model = model_from_json(env.body, expected_spec);
  if (env.body.contains("optimizer")) {
    out.optim = optim_from_json(env.body.at("optimizer"));
  }
  return out;
}

}  // namespace mdpose::net

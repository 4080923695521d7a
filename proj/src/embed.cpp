#include "dsc/embed.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsc/errors.hpp"
#include "dsc/rng.hpp"

namespace dsc {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kMomentum = 0.1;
constexpr double kProbClamp = 1e-7;
constexpr double kZeroNorm = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& x) { return (x.array() > 0.0).cast<double>().matrix(); }

/// x * w^T + b (b is 1 x out)
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

Matrix column_sum(const Matrix& x) { return x.colwise().sum(); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix input_rows(std::span<const Correspondence> corrs) {
  Matrix x(static_cast<Eigen::Index>(corrs.size()), kInputDim);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) << corrs[i].src.x(), corrs[i].src.y(), corrs[i].src.z(), corrs[i].dst.x(), corrs[i].dst.y(),
        corrs[i].dst.z();
  }
  return x;
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
  return m;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double top = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - top).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
}

struct BlockCache {
  Matrix input;
  Matrix pre;
  Matrix normalized;
  Matrix inv_std;  // 1 x d
  Matrix z;
  Matrix activated;
  Matrix q, k, v;
  Matrix attention;
  Matrix aggregated;
  Matrix out_pre;
  NormStats batch;
};

struct ForwardCache {
  Matrix beta;
  std::vector<BlockCache> blocks;
  Matrix feats;
  Matrix head_pre;
  Matrix head_act;
  Eigen::VectorXd confidences;
};

ForwardCache run_forward(const EmbeddingNetwork& net, std::span<const Correspondence> corrs, double sigma_d,
                         NormMode mode) {
  if (corrs.empty()) throw InvalidArgument("forward: no correspondences");
  const NetworkParams& p = net.params();
  const EmbedConfig& cfg = net.config();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));

  ForwardCache cache;
  cache.beta = spatial_consistency_matrix(corrs, sigma_d);
  Matrix x = input_rows(corrs);
  cache.blocks.reserve(p.blocks.size());

  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const BlockParams& blk = p.blocks[b];
    BlockCache bc;
    bc.input = x;
    bc.pre = affine(x, blk.in_weight, blk.in_bias);
    if (cfg.use_normalization) {
      Matrix mean;
      Matrix var;
      if (mode == NormMode::training) {
        mean = bc.pre.colwise().mean();
        var = (bc.pre.rowwise() - mean.row(0)).array().square().matrix().colwise().mean();
        bc.batch = {mean, var};
      } else {
        mean = net.running_stats()[b].mean;
        var = net.running_stats()[b].var;
      }
      bc.inv_std = (var.array() + kNormEps).rsqrt().matrix();
      bc.normalized = (bc.pre.rowwise() - mean.row(0)).array().rowwise() * bc.inv_std.row(0).array();
      bc.z = bc.normalized.array().rowwise() * blk.norm_scale.row(0).array();
      bc.z.rowwise() += blk.norm_shift.row(0);
    } else {
      bc.z = bc.pre;
    }
    bc.activated = relu(bc.z);
    bc.q = bc.activated * blk.query.transpose();
    bc.k = bc.activated * blk.key.transpose();
    bc.v = bc.activated * blk.value.transpose();
    bc.attention = (bc.q * bc.k.transpose()) * inv_sqrt_d;
    bc.attention.array() *= cache.beta.array();
    softmax_rows(bc.attention);
    bc.aggregated = bc.attention * bc.v;
    bc.out_pre = affine(bc.aggregated, blk.out_weight, blk.out_bias);
    x = bc.activated + relu(bc.out_pre);
    cache.blocks.push_back(std::move(bc));
  }

  cache.feats = std::move(x);
  cache.head_pre = affine(cache.feats, p.head_weight, p.head_bias);
  cache.head_act = relu(cache.head_pre);
  const Matrix logits = affine(cache.head_act, p.logit_weight, p.logit_bias);
  cache.confidences.resize(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) cache.confidences(i) = sigmoid(logits(i, 0));
  return cache;
}

std::vector<Matrix*> tensor_list(NetworkParams& p) {
  std::vector<Matrix*> out;
  p.visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

void check_labels(std::size_t n, std::size_t labels) {
  if (n != labels) {
    throw InvalidArgument("label count " + std::to_string(labels) + " does not match " + std::to_string(n) + " rows");
  }
}

}  // namespace

void EmbedConfig::validate() const {
  if (num_blocks < 1) throw InvalidArgument("num_blocks must be >= 1");
  if (feature_dim < 2) throw InvalidArgument("feature_dim must be >= 2");
  if (!(sigma_f_init > 0.0 && std::isfinite(sigma_f_init))) throw InvalidArgument("sigma_f_init must be > 0");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (!(tau > 0.0) || !(sigma_d > 0.0)) throw InvalidArgument("tau and sigma_d must be > 0");
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams out = *this;
  out.visit([](const std::string&, Matrix& m) { m.setZero(); });
  return out;
}

std::size_t NetworkParams::scalar_count() const {
  std::size_t total = 0;
  visit([&](const std::string&, const Matrix& m) { total += static_cast<std::size_t>(m.size()); });
  return total;
}

EmbeddingNetwork::EmbeddingNetwork(const EmbedConfig& config) : config_(config) {
  config_.validate();
  const Eigen::Index d = config_.feature_dim;
  params_.blocks.resize(static_cast<std::size_t>(config_.num_blocks));
  for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
    BlockParams& blk = params_.blocks[b];
    const Eigen::Index d_in = b == 0 ? kInputDim : d;
    blk.in_weight = Matrix::Zero(d, d_in);
    blk.in_bias = Matrix::Zero(1, d);
    blk.norm_scale = Matrix::Ones(1, d);
    blk.norm_shift = Matrix::Zero(1, d);
    blk.query = Matrix::Zero(d, d);
    blk.key = Matrix::Zero(d, d);
    blk.value = Matrix::Zero(d, d);
    blk.out_weight = Matrix::Zero(d, d);
    blk.out_bias = Matrix::Zero(1, d);
    stats_.push_back({Matrix::Zero(1, d), Matrix::Ones(1, d)});
  }
  params_.head_weight = Matrix::Zero(d, d);
  params_.head_bias = Matrix::Zero(1, d);
  params_.logit_weight = Matrix::Zero(1, d);
  params_.logit_bias = Matrix::Zero(1, 1);
  params_.log_sigma_f = Matrix::Constant(1, 1, std::log(config_.sigma_f_init));
}

EmbeddingNetwork EmbeddingNetwork::empty(const EmbedConfig& config) { return EmbeddingNetwork(config); }

EmbeddingNetwork::EmbeddingNetwork(const EmbedConfig& config, std::uint64_t seed) : EmbeddingNetwork(config) {
  Rng rng(seed);
  const Eigen::Index d = config_.feature_dim;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& blk : params_.blocks) {
    blk.in_weight = gaussian(rng, d, blk.in_weight.cols(), std::sqrt(2.0 / static_cast<double>(blk.in_weight.cols())));
    blk.query = gaussian(rng, d, d, attn_std);
    blk.key = gaussian(rng, d, d, attn_std);
    blk.value = gaussian(rng, d, d, attn_std);
    blk.out_weight = gaussian(rng, d, d, std::sqrt(2.0 / static_cast<double>(d)));
  }
  params_.head_weight = gaussian(rng, d, d, std::sqrt(2.0 / static_cast<double>(d)));
  params_.logit_weight = gaussian(rng, 1, d, attn_std);
}

double EmbeddingNetwork::sigma_f() const { return std::exp(params_.log_sigma_f(0, 0)); }

EmbedOutput forward(const EmbeddingNetwork& net, std::span<const Correspondence> corrs, double sigma_d, NormMode mode) {
  ForwardCache cache = run_forward(net, corrs, sigma_d, mode);
  EmbedOutput out;
  out.feats = std::move(cache.feats);
  out.confidences = std::move(cache.confidences);
  out.attention_last = std::move(cache.blocks.back().attention);
  if (mode == NormMode::training && net.config().use_normalization) {
    for (auto& bc : cache.blocks) out.batch_stats.push_back(std::move(bc.batch));
  }
  return out;
}

double classification_loss(const Eigen::VectorXd& confidences, const std::vector<bool>& labels) {
  check_labels(static_cast<std::size_t>(confidences.size()), labels.size());
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(confidences(static_cast<Eigen::Index>(i)), kProbClamp, 1.0 - kProbClamp);
    sum -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(labels.size());
}

double spectral_matching_loss(const Matrix& feats, const std::vector<bool>& labels, double sigma_f) {
  check_labels(static_cast<std::size_t>(feats.rows()), labels.size());
  if (labels.empty()) return 0.0;
  const Matrix gamma = feature_similarity_matrix(normalize_rows(feats), sigma_f);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      const double target = labels[static_cast<std::size_t>(i)] && labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      const double diff = gamma(i, j) - target;
      sum += diff * diff;
    }
  }
  const auto n = static_cast<double>(labels.size());
  return sum / (n * n);
}

double total_loss(double l_sm, double l_class, double lambda) { return l_sm + lambda * l_class; }

GradientResult backward(const EmbeddingNetwork& net, std::span<const Correspondence> corrs, const std::vector<bool>& labels,
                        double sigma_d, double lambda, NormMode mode) {
  check_labels(corrs.size(), labels.size());
  const EmbedConfig& cfg = net.config();
  const NetworkParams& p = net.params();
  const ForwardCache cache = run_forward(net, corrs, sigma_d, mode);
  const Eigen::Index n = cache.feats.rows();
  const double nd = static_cast<double>(n);

  GradientResult out;
  out.grad = p.zeros_like();
  NetworkParams& g = out.grad;

  // Confidence head and classification loss.
  Matrix d_logit(n, 1);
  double class_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw = cache.confidences(i);
    const double y = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    const double clamped = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    class_sum -= y > 0.5 ? std::log(clamped) : std::log(1.0 - clamped);
    const bool inside = raw > kProbClamp && raw < 1.0 - kProbClamp;
    d_logit(i, 0) = inside ? lambda * (raw - y) / nd : 0.0;
  }
  out.loss.classification = class_sum / nd;

  g.logit_weight = d_logit.transpose() * cache.head_act;
  g.logit_bias = column_sum(d_logit);
  const Matrix d_head_pre = (d_logit * p.logit_weight).cwiseProduct(relu_mask(cache.head_pre));
  g.head_weight = d_head_pre.transpose() * cache.feats;
  g.head_bias = column_sum(d_head_pre);
  Matrix d_x = d_head_pre * p.head_weight;

  // Spectral matching loss on normalised features.
  const double log_sigma = p.log_sigma_f(0, 0);
  const double inv_sq = std::exp(-2.0 * log_sigma);
  Eigen::VectorXd norms(n);
  Matrix unit(n, cache.feats.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    norms(i) = cache.feats.row(i).norm();
    if (norms(i) < kZeroNorm) {
      unit.row(i).setZero();
    } else {
      unit.row(i) = cache.feats.row(i) / norms(i);
    }
  }
  Matrix d_dist = Matrix::Zero(n, n);  // dL/dD_ij
  double sm_sum = 0.0;
  double d_log_sigma = 0.0;
  const double inv_n2 = 1.0 / (nd * nd);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double dist = 0.0;
      for (Eigen::Index k = 0; k < unit.cols(); ++k) {
        const double diff = unit(i, k) - unit(j, k);
        dist += diff * diff;
      }
      const double arg = 1.0 - dist * inv_sq;
      const double gamma = arg > 0.0 ? arg : 0.0;
      const double target = labels[static_cast<std::size_t>(i)] && labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      sm_sum += (gamma - target) * (gamma - target);
      if (arg > 0.0) {
        const double d_gamma = 2.0 * (gamma - target) * inv_n2;
        d_dist(i, j) = -d_gamma * inv_sq;
        d_log_sigma += d_gamma * 2.0 * dist * inv_sq;
      }
    }
  }
  out.loss.spectral = sm_sum * inv_n2;
  out.loss.total = total_loss(out.loss.spectral, out.loss.classification, lambda);
  g.log_sigma_f(0, 0) = cfg.learn_sigma_f ? d_log_sigma : 0.0;

  // D_ij = ||u_i - u_j||^2 with d_dist symmetric:
  // dL/du_i = 2 sum_j (d_dist_ij + d_dist_ji) (u_i - u_j)
  const Matrix d_sym = d_dist + d_dist.transpose();
  const Eigen::VectorXd row_sum = d_sym.rowwise().sum();
  const Matrix d_unit = 2.0 * (unit.array().colwise() * row_sum.array()).matrix() - 2.0 * d_sym * unit;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (norms(i) < kZeroNorm) continue;
    const double along = unit.row(i).dot(d_unit.row(i));
    d_x.row(i) += (d_unit.row(i) - along * unit.row(i)) / norms(i);
  }

  // Blocks in reverse.
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const BlockParams& blk = p.blocks[bi];
    const BlockCache& bc = cache.blocks[bi];
    BlockParams& gb = g.blocks[bi];

    Matrix d_act = d_x;
    const Matrix d_out_pre = d_x.cwiseProduct(relu_mask(bc.out_pre));
    gb.out_weight = d_out_pre.transpose() * bc.aggregated;
    gb.out_bias = column_sum(d_out_pre);
    const Matrix d_agg = d_out_pre * blk.out_weight;

    const Matrix d_attn = d_agg * bc.v.transpose();
    const Matrix d_v = bc.attention.transpose() * d_agg;
    const Eigen::VectorXd row_dot = bc.attention.cwiseProduct(d_attn).rowwise().sum();
    Matrix d_scores = bc.attention.array() * (d_attn.array().colwise() - row_dot.array());
    d_scores.array() *= cache.beta.array() * inv_sqrt_d;
    const Matrix d_q = d_scores * bc.k;
    const Matrix d_k = d_scores.transpose() * bc.q;

    gb.query = d_q.transpose() * bc.activated;
    gb.key = d_k.transpose() * bc.activated;
    gb.value = d_v.transpose() * bc.activated;
    d_act += d_q * blk.query + d_k * blk.key + d_v * blk.value;

    const Matrix d_z = d_act.cwiseProduct(relu_mask(bc.z));
    Matrix d_pre;
    if (cfg.use_normalization) {
      gb.norm_scale = column_sum(d_z.cwiseProduct(bc.normalized));
      gb.norm_shift = column_sum(d_z);
      const Matrix d_norm = d_z.array().rowwise() * blk.norm_scale.row(0).array();
      if (mode == NormMode::training) {
        const Matrix sum_d = column_sum(d_norm);
        const Matrix sum_dx = column_sum(d_norm.cwiseProduct(bc.normalized));
        Matrix centered = (d_norm * nd).rowwise() - sum_d.row(0);
        centered -= (bc.normalized.array().rowwise() * sum_dx.row(0).array()).matrix();
        d_pre = (centered.array().rowwise() * bc.inv_std.row(0).array()).matrix() / nd;
      } else {
        d_pre = d_norm.array().rowwise() * bc.inv_std.row(0).array();
      }
    } else {
      d_pre = d_z;
    }
    gb.in_weight = d_pre.transpose() * bc.input;
    gb.in_bias = column_sum(d_pre);
    d_x = d_pre * blk.in_weight;
  }

  if (mode == NormMode::training && cfg.use_normalization) {
    for (const auto& bc : cache.blocks) out.batch_stats.push_back(bc.batch);
  }
  return out;
}

GradientResult backward_batch(const EmbeddingNetwork& net, std::span<const LabeledSet> batch, double sigma_d,
                              double lambda, NormMode mode) {
  if (batch.empty()) throw InvalidArgument("backward_batch: empty batch");
  GradientResult acc;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    GradientResult one = backward(net, batch[s].corrs, batch[s].labels, sigma_d, lambda, mode);
    if (s == 0) {
      acc = std::move(one);
      continue;
    }
    acc.loss.spectral += one.loss.spectral;
    acc.loss.classification += one.loss.classification;
    acc.loss.total += one.loss.total;
    auto dst = tensor_list(acc.grad);
    auto src = tensor_list(one.grad);
    for (std::size_t t = 0; t < dst.size(); ++t) *dst[t] += *src[t];
    for (std::size_t b = 0; b < acc.batch_stats.size(); ++b) {
      acc.batch_stats[b].mean += one.batch_stats[b].mean;
      acc.batch_stats[b].var += one.batch_stats[b].var;
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  acc.loss.spectral *= scale;
  acc.loss.classification *= scale;
  acc.loss.total *= scale;
  for (Matrix* t : tensor_list(acc.grad)) *t *= scale;
  for (auto& st : acc.batch_stats) {
    st.mean *= scale;
    st.var *= scale;
  }
  return acc;
}

TrainResult train(EmbeddingNetwork net, std::span<const Scene> scenes, const TrainConfig& cfg) {
  cfg.validate();
  if (scenes.empty()) throw InvalidArgument("train: no scenes");
  TrainResult result{std::move(net), {}};
  EmbeddingNetwork& model = result.net;
  result.loss_trace.reserve(cfg.steps);

  NetworkParams first_moment = model.params().zeros_like();
  NetworkParams second_moment = model.params().zeros_like();
  Rng rng(cfg.seed);
  std::size_t cursor = 0;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<Scene> views;
    std::vector<std::vector<bool>> view_labels;
    views.reserve(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Scene& base = scenes[cursor++ % scenes.size()];
      views.push_back(cfg.augment ? augment_scene(base, rng) : base);
      view_labels.push_back(ground_truth_labels(views.back().corrs, views.back().truth, cfg.tau));
    }
    std::vector<LabeledSet> batch;
    for (std::size_t b = 0; b < views.size(); ++b) batch.push_back({views[b].corrs, view_labels[b]});

    GradientResult gr = backward_batch(model, batch, cfg.sigma_d, cfg.lambda, NormMode::training);
    if (!std::isfinite(gr.loss.total)) throw NonFiniteLoss(step, gr.loss.total);
    result.loss_trace.push_back(gr.loss.total);

    const double t = static_cast<double>(step + 1);
    const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
    const double correction2 = 1.0 - std::pow(kAdamBeta2, t);
    auto params = tensor_list(model.params());
    auto grads = tensor_list(gr.grad);
    auto m1 = tensor_list(first_moment);
    auto m2 = tensor_list(second_moment);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k] == &model.params().log_sigma_f && !model.config().learn_sigma_f) continue;
      *m1[k] = kAdamBeta1 * *m1[k] + (1.0 - kAdamBeta1) * *grads[k];
      *m2[k] = kAdamBeta2 * *m2[k] + (1.0 - kAdamBeta2) * grads[k]->cwiseProduct(*grads[k]);
      const auto m_hat = m1[k]->array() / correction1;
      const auto v_hat = m2[k]->array() / correction2;
      params[k]->array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + kAdamEps);
    }

    if (model.config().use_normalization) {
      for (std::size_t b = 0; b < gr.batch_stats.size(); ++b) {
        NormStats& running = model.running_stats()[b];
        double n = 0.0;
        for (const auto& v : views) n += static_cast<double>(v.corrs.size());
        n /= static_cast<double>(views.size());
        const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
        running.mean = (1.0 - kMomentum) * running.mean + kMomentum * gr.batch_stats[b].mean;
        running.var = (1.0 - kMomentum) * running.var + kMomentum * unbias * gr.batch_stats[b].var;
      }
    }
  }
  return result;
}

}  // namespace dsc

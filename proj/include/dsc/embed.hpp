#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsc/consistency.hpp"
#include "dsc/geom.hpp"
#include "dsc/scene.hpp"

namespace dsc {

struct EmbedConfig {
  int num_blocks = 3;
  int feature_dim = 32;
  bool use_normalization = true;
  double sigma_f_init = 1.0;
  bool learn_sigma_f = true;

  void validate() const;
  bool operator==(const EmbedConfig&) const = default;
};

/// Width of the raw per-correspondence input row (x_i, y_i).
inline constexpr int kInputDim = 6;

/// One spatial-consistency nonlocal block: perceptron -> normalisation -> ReLU
/// -> attention over all correspondences -> perceptron -> ReLU, plus residual.
struct BlockParams {
  Matrix in_weight;   ///< d x d_in
  Matrix in_bias;     ///< 1 x d
  Matrix norm_scale;  ///< 1 x d
  Matrix norm_shift;  ///< 1 x d
  Matrix query;       ///< d x d
  Matrix key;         ///< d x d
  Matrix value;       ///< d x d
  Matrix out_weight;  ///< d x d
  Matrix out_bias;    ///< 1 x d
};

/// Every trainable tensor. Also used as the gradient container.
struct NetworkParams {
  std::vector<BlockParams> blocks;
  Matrix head_weight;   ///< d x d
  Matrix head_bias;     ///< 1 x d
  Matrix logit_weight;  ///< 1 x d
  Matrix logit_bias;    ///< 1 x 1
  Matrix log_sigma_f;   ///< 1 x 1

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  NetworkParams zeros_like() const;
  std::size_t scalar_count() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      auto& blk = self.blocks[b];
      f(p + "in_weight", blk.in_weight);
      f(p + "in_bias", blk.in_bias);
      f(p + "norm_scale", blk.norm_scale);
      f(p + "norm_shift", blk.norm_shift);
      f(p + "query", blk.query);
      f(p + "key", blk.key);
      f(p + "value", blk.value);
      f(p + "out_weight", blk.out_weight);
      f(p + "out_bias", blk.out_bias);
    }
    f(std::string("head.weight"), self.head_weight);
    f(std::string("head.bias"), self.head_bias);
    f(std::string("logit.weight"), self.logit_weight);
    f(std::string("logit.bias"), self.logit_bias);
    f(std::string("log_sigma_f"), self.log_sigma_f);
  }
};

/// Running statistics of one normalisation layer (1 x d each).
struct NormStats {
  Matrix mean;
  Matrix var;
};

class EmbeddingNetwork {
 public:
  /// Random initialisation, deterministic in `seed`.
  EmbeddingNetwork(const EmbedConfig& config, std::uint64_t seed);

  /// Zero-filled parameters of the right shapes (used by the weight reader).
  static EmbeddingNetwork empty(const EmbedConfig& config);

  const EmbedConfig& config() const { return config_; }
  NetworkParams& params() { return params_; }
  const NetworkParams& params() const { return params_; }
  std::vector<NormStats>& running_stats() { return stats_; }
  const std::vector<NormStats>& running_stats() const { return stats_; }

  double sigma_f() const;

 private:
  explicit EmbeddingNetwork(const EmbedConfig& config);

  EmbedConfig config_;
  NetworkParams params_;
  std::vector<NormStats> stats_;
};

enum class NormMode { inference, training };

struct EmbedOutput {
  Matrix feats;                  ///< n x d
  Eigen::VectorXd confidences;   ///< sigmoid of the confidence head
  Matrix attention_last;         ///< row-stochastic attention of the final block
  std::vector<NormStats> batch_stats;  ///< per block, training mode only
};

/// Features and initial confidences for every correspondence.
EmbedOutput forward(const EmbeddingNetwork& net, std::span<const Correspondence> corrs, double sigma_d,
                    NormMode mode = NormMode::inference);

/// Mean binary cross-entropy; confidences clamped to [1e-7, 1 - 1e-7].
double classification_loss(const Eigen::VectorXd& confidences, const std::vector<bool>& labels);

/// (1/n^2) sum_ij (gamma_ij - [both inliers])^2 over all ordered pairs.
double spectral_matching_loss(const Matrix& feats, const std::vector<bool>& labels, double sigma_f);

double total_loss(double l_sm, double l_class, double lambda);

struct LossBreakdown {
  double spectral = 0.0;
  double classification = 0.0;
  double total = 0.0;
};

struct GradientResult {
  LossBreakdown loss;
  NetworkParams grad;
  std::vector<NormStats> batch_stats;
};

/// Loss and analytic gradient of L_sm + lambda * L_class for one
/// correspondence set. Hinge kinks use the zero subgradient.
GradientResult backward(const EmbeddingNetwork& net, std::span<const Correspondence> corrs, const std::vector<bool>& labels,
                        double sigma_d, double lambda, NormMode mode = NormMode::training);

/// One labelled training example.
struct LabeledSet {
  std::span<const Correspondence> corrs;
  std::vector<bool> labels;
};

/// Mean loss and gradient over a batch.
GradientResult backward_batch(const EmbeddingNetwork& net, std::span<const LabeledSet> batch, double sigma_d, double lambda,
                              NormMode mode = NormMode::training);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 2000;
  std::size_t batch = 1;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool augment = true;
  double tau = 0.10;      ///< label threshold
  double sigma_d = 0.10;  ///< spatial sensitivity inside the network

  void validate() const;
};

struct TrainResult {
  EmbeddingNetwork net;
  std::vector<double> loss_trace;  ///< mean L_total of each step, before its update
};

/// Adam (0.9 / 0.999 / 1e-8). Scenes are visited round-robin; augmentation
/// draws from an Rng seeded with cfg.seed. Throws NonFiniteLoss.
TrainResult train(EmbeddingNetwork net, std::span<const Scene> scenes, const TrainConfig& cfg);

}  // namespace dsc

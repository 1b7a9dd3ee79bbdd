#pragma once

#include "keymatch3d/sampling.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace keymatch3d {

struct LossConfig {
  double lambda_c = 1.0;
  double lambda_s = 1.0;
  double margin = 1.0;  // v, in descriptor-distance units
  double gamma = 1.0;

  void validate() const;
};

/// Scores below kScoreClamp are raised to it before the log (and then carry
/// no gradient).
inline constexpr double kScoreClamp = 1e-7;

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Eigen::VectorXd> grad0;  // per keypoint of the first set
  std::vector<Eigen::VectorXd> grad1;
};

/// Positive pairs: |f0 - f1|^2 / (2 N_pos). Negative pairs:
/// max(0, v - |f0 - f1|)^2 / (2 N_neg), N_neg counting negative feature
/// pairs. An empty class contributes 0.
ContrastiveResult contrastive_loss(const PairBatch& batch, std::span<const Eigen::VectorXd> desc0,
                                   std::span<const Eigen::VectorXd> desc1, double margin);

struct ScoreResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// 1/(1+N_pos) - gamma * sum(l_i log s_i) / (1+N_pos). N_pos is a constant.
/// Throws std::domain_error for scores outside (0, 1) or size mismatch.
ScoreResult score_loss(std::span<const double> scores, std::span<const int> labels, int n_pos, double gamma);

struct LossOutput {
  double total = 0.0;
  double contrastive = 0.0;
  double score0 = 0.0;
  double score1 = 0.0;
  std::vector<Eigen::VectorXd> descriptor_grad0;
  std::vector<Eigen::VectorXd> descriptor_grad1;
  std::vector<double> score_grad0;
  std::vector<double> score_grad1;
};

/// lambda_c * L_c + lambda_s * (L_s0 + L_s1), gradients scaled accordingly.
LossOutput multitask_loss(const PairBatch& batch, std::span<const Eigen::VectorXd> desc0,
                          std::span<const Eigen::VectorXd> desc1, std::span<const double> scores0,
                          std::span<const double> scores1, const LossConfig& cfg);

}  // namespace keymatch3d

#include "keymatch3d/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keymatch3d {

void LossConfig::validate() const {
  if (lambda_c < 0 || lambda_s < 0 || gamma < 0) throw std::domain_error("loss: weights must be >= 0");
  if (!(margin > 0)) throw std::domain_error("loss: margin must be > 0");
}

ContrastiveResult contrastive_loss(const PairBatch& batch, std::span<const Eigen::VectorXd> desc0,
                                   std::span<const Eigen::VectorXd> desc1, double margin) {
  if (desc0.size() != batch.labels0.size() || desc1.size() != batch.labels1.size())
    throw std::domain_error("contrastive_loss: descriptor count does not match the batch");
  ContrastiveResult r;
  const auto dim = desc0.empty() ? (desc1.empty() ? 0 : desc1[0].size()) : desc0[0].size();
  r.grad0.assign(desc0.size(), Eigen::VectorXd::Zero(dim));
  r.grad1.assign(desc1.size(), Eigen::VectorXd::Zero(dim));
  const int n_pos = batch.n_pos, n_neg = batch.negative_pairs();

  for (const auto& p : batch.pairs) {
    const Eigen::VectorXd diff = desc0[p.i] - desc1[p.j];
    if (p.label) {
      r.loss += diff.squaredNorm() / (2.0 * n_pos);
      const Eigen::VectorXd g = diff / n_pos;
      r.grad0[p.i] += g;
      r.grad1[p.j] -= g;
    } else {
      const double dist = diff.norm();
      const double gap = margin - dist;
      if (gap <= 0.0) continue;
      r.loss += gap * gap / (2.0 * n_neg);
      if (dist == 0.0) continue;  // direction undefined; subgradient 0
      // d/df0 of gap^2 / (2 N) = -gap / N * diff / dist
      const Eigen::VectorXd g = (-gap / (n_neg * dist)) * diff;
      r.grad0[p.i] += g;
      r.grad1[p.j] -= g;
    }
  }
  return r;
}

ScoreResult score_loss(std::span<const double> scores, std::span<const int> labels, int n_pos, double gamma) {
  if (scores.size() != labels.size()) throw std::domain_error("score_loss: scores and labels differ in length");
  if (n_pos < 0) throw std::domain_error("score_loss: N_pos must be >= 0");
  ScoreResult r;
  r.grad.assign(scores.size(), 0.0);
  const double norm = 1.0 + n_pos;
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s > 0.0 && s < 1.0)) throw std::domain_error("score_loss: score outside (0, 1)");
    if (!labels[i]) continue;
    const double sc = std::max(s, kScoreClamp);
    sum += std::log(sc);
    r.grad[i] = sc == s ? -gamma / (norm * s) : 0.0;
  }
  r.loss = 1.0 / norm - gamma * sum / norm;
  return r;
}

LossOutput multitask_loss(const PairBatch& batch, std::span<const Eigen::VectorXd> desc0,
                          std::span<const Eigen::VectorXd> desc1, std::span<const double> scores0,
                          std::span<const double> scores1, const LossConfig& cfg) {
  cfg.validate();
  LossOutput out;
  auto c = contrastive_loss(batch, desc0, desc1, cfg.margin);
  auto s0 = score_loss(scores0, batch.labels0, batch.n_pos, cfg.gamma);
  auto s1 = score_loss(scores1, batch.labels1, batch.n_pos, cfg.gamma);
  out.contrastive = c.loss;
  out.score0 = s0.loss;
  out.score1 = s1.loss;
  out.total = cfg.lambda_c * c.loss + cfg.lambda_s * (s0.loss + s1.loss);
  for (auto& g : c.grad0) g *= cfg.lambda_c;
  for (auto& g : c.grad1) g *= cfg.lambda_c;
  for (auto& g : s0.grad) g *= cfg.lambda_s;
  for (auto& g : s1.grad) g *= cfg.lambda_s;
  out.descriptor_grad0 = std::move(c.grad0);
  out.descriptor_grad1 = std::move(c.grad1);
  out.score_grad0 = std::move(s0.grad);
  out.score_grad1 = std::move(s1.grad);
  return out;
}

}  // namespace keymatch3d

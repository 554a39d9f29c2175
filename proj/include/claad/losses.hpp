#pragma once

#include <span>

#include <Eigen/Dense>

namespace claad {

struct LossConfig {
  double temperature = 1.0;
  bool normalize_embeddings = true;
  double epsilon = 1e-12;
};

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

// -sum_i sum_c y_ic log(p_ic + eps), summed over the batch. Rows of `probs`
// must sum to one within 1e-6.
double classification_loss(const Eigen::Ref<const Eigen::MatrixXd>& probs, std::span<const int> labels,
                           double epsilon = 1e-12, Eigen::MatrixXd* d_probs = nullptr);

// Softmax followed by classification_loss; d_logits receives the gradient.
double classification_loss_from_logits(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                                       std::span<const int> labels, double epsilon = 1e-12,
                                       Eigen::MatrixXd* d_logits = nullptr);

// Supervised positive-pair loss: -(1/B) sum_i log(sum_j M_ij S_ij / sum_j S_ij)
// with S_ij = exp(p_i . z_j / tau) and M_ij = [y_i == y_j]. `z` is treated
// as a constant, so only d_p is produced.
double positive_pair_loss(const Eigen::Ref<const Eigen::MatrixXd>& p, const Eigen::Ref<const Eigen::MatrixXd>& z,
                          std::span<const int> labels, const LossConfig& cfg = {}, Eigen::MatrixXd* d_p = nullptr);

struct ClaadGradients {
  Eigen::MatrixXd d_p1, d_p2;
  Eigen::MatrixXd d_z1, d_z2;  // always zero: z enters as a stopped target
};

// Symmetric two-path objective: (positive_pair(p1, z2) + positive_pair(p2, z1)) / 2.
double claad_loss(const Eigen::Ref<const Eigen::MatrixXd>& p1, const Eigen::Ref<const Eigen::MatrixXd>& z2,
                  const Eigen::Ref<const Eigen::MatrixXd>& p2, const Eigen::Ref<const Eigen::MatrixXd>& z1,
                  std::span<const int> labels, const LossConfig& cfg = {}, ClaadGradients* grads = nullptr);

}  // namespace claad

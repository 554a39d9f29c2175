#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

#include "claad/sigproc.hpp"

namespace claad {

struct LabeledEpoch {
  Eigen::MatrixXd eeg;  // channels x samples
  int label = 0;        // attended-stream index, 0 or 1
};

// Two-class common spatial patterns. Rows of `filters` are spatial filters
// ordered by descending generalized eigenvalue.
struct CspModel {
  Eigen::MatrixXd filters;      // n_components x n_channels
  Eigen::VectorXd eigenvalues;  // descending, in (0, 1)
  std::array<Eigen::MatrixXd, 2> class_covariances;  // shrunk, trace-normalized
  double shrinkage = 0.0;

  Eigen::Index n_components() const { return filters.rows(); }
  Eigen::Index n_channels() const { return filters.cols(); }

  static CspModel identity(Eigen::Index n_channels);
};

// Trace-normalized covariance of a zero-meaned epoch, regularized as
// (1 - shrinkage) * S + shrinkage * tr(S) / C * I.
Eigen::MatrixXd normalized_covariance(const Eigen::Ref<const Eigen::MatrixXd>& epoch);
Eigen::MatrixXd shrink_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov, double shrinkage);

// Solves cov0 w = mu (cov0 + cov1) w through a Cholesky whitening of the
// pooled covariance. When n_components < C the components with the largest
// |mu - 0.5| are kept.
CspModel csp_fit(std::span<const LabeledEpoch> epochs, int n_components, double shrinkage = 0.05);

Eigen::MatrixXd csp_project(const CspModel& model, const Eigen::Ref<const Eigen::MatrixXd>& eeg);
MultiChannelRecording csp_transform(const CspModel& model, const MultiChannelRecording& rec);

}  // namespace claad

#include "claad/csp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "claad/error.hpp"

namespace claad {

CspModel CspModel::identity(Eigen::Index n_channels) {
  CspModel m;
  m.filters = Eigen::MatrixXd::Identity(n_channels, n_channels);
  m.eigenvalues = Eigen::VectorXd::Constant(n_channels, 0.5);
  m.class_covariances[0] = Eigen::MatrixXd::Identity(n_channels, n_channels) / 2.0;
  m.class_covariances[1] = m.class_covariances[0];
  return m;
}

Eigen::MatrixXd normalized_covariance(const Eigen::Ref<const Eigen::MatrixXd>& epoch) {
  const Eigen::VectorXd mean = epoch.rowwise().mean();
  const Eigen::MatrixXd centered = epoch.colwise() - mean;
  Eigen::MatrixXd cov = centered * centered.transpose();
  const double tr = cov.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) {
    throw IllConditioned("epoch has zero or non-finite total variance");
  }
  return cov / tr;
}

Eigen::MatrixXd shrink_covariance(const Eigen::Ref<const Eigen::MatrixXd>& cov, double shrinkage) {
  const Eigen::Index c = cov.rows();
  const double scale = cov.trace() / static_cast<double>(c);
  Eigen::MatrixXd out = (1.0 - shrinkage) * cov;
  out.diagonal().array() += shrinkage * scale;
  return out;
}

CspModel csp_fit(std::span<const LabeledEpoch> epochs, int n_components, double shrinkage) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw InvalidArgument("shrinkage must lie in [0, 1]");
  if (epochs.empty()) throw InsufficientClasses("CSP needs epochs from both classes, got none");
  const Eigen::Index n_channels = epochs.front().eeg.rows();
  if (n_components < 1 || n_components > n_channels) {
    throw InvalidArgument("n_components must lie in [1, " + std::to_string(n_channels) + "]");
  }

  std::array<Eigen::MatrixXd, 2> sums{Eigen::MatrixXd::Zero(n_channels, n_channels),
                                      Eigen::MatrixXd::Zero(n_channels, n_channels)};
  std::array<int, 2> counts{0, 0};
  for (const LabeledEpoch& e : epochs) {
    if (e.label != 0 && e.label != 1) throw InvalidArgument("CSP labels must be 0 or 1");
    if (e.eeg.rows() != n_channels) throw ShapeError("CSP epochs disagree on channel count");
    sums[e.label] += normalized_covariance(e.eeg);
    ++counts[e.label];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    throw InsufficientClasses("CSP needs epochs from both classes (class 0: " +
                              std::to_string(counts[0]) + ", class 1: " + std::to_string(counts[1]) + ")");
  }

  CspModel model;
  model.shrinkage = shrinkage;
  for (int k = 0; k < 2; ++k) {
    model.class_covariances[k] = shrink_covariance(sums[k] / counts[k], shrinkage);
  }
  const Eigen::MatrixXd pooled = model.class_covariances[0] + model.class_covariances[1];

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pooled_eig(pooled, Eigen::EigenvaluesOnly);
  const double lo = pooled_eig.eigenvalues().minCoeff();
  const double hi = pooled_eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi)) {
    throw IllConditioned("pooled class covariance is singular; use shrinkage > 0");
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(pooled);
  if (llt.info() != Eigen::Success) throw IllConditioned("Cholesky of pooled covariance failed");
  const Eigen::MatrixXd lower = llt.matrixL();

  // M = L^-1 S0 L^-T is symmetric with the same spectrum as the pencil.
  Eigen::MatrixXd tmp = lower.triangularView<Eigen::Lower>().solve(model.class_covariances[0]);
  Eigen::MatrixXd whitened =
      lower.triangularView<Eigen::Lower>().solve(tmp.transpose()).transpose();
  whitened = 0.5 * (whitened + whitened.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(whitened);
  if (eig.info() != Eigen::Success) throw IllConditioned("CSP eigendecomposition did not converge");

  // W = L^-T U, one generalized eigenvector per column.
  const Eigen::MatrixXd vectors =
      lower.transpose().triangularView<Eigen::Upper>().solve(eig.eigenvectors());
  const Eigen::VectorXd& mu = eig.eigenvalues();  // ascending

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_channels));
  std::iota(order.begin(), order.end(), 0);
  if (n_components < n_channels) {
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(mu[a] - 0.5) > std::abs(mu[b] - 0.5);
    });
    order.resize(static_cast<std::size_t>(n_components));
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return mu[a] > mu[b]; });

  model.filters.resize(n_components, n_channels);
  model.eigenvalues.resize(n_components);
  for (Eigen::Index r = 0; r < n_components; ++r) {
    const Eigen::Index col = order[static_cast<std::size_t>(r)];
    model.filters.row(r) = vectors.col(col).transpose();
    model.eigenvalues[r] = mu[col];
  }
  return model;
}

Eigen::MatrixXd csp_project(const CspModel& model, const Eigen::Ref<const Eigen::MatrixXd>& eeg) {
  if (eeg.rows() != model.n_channels()) {
    throw ShapeError("CSP model expects " + std::to_string(model.n_channels()) + " channels, got " +
                     std::to_string(eeg.rows()));
  }
  return model.filters * eeg;
}

MultiChannelRecording csp_transform(const CspModel& model, const MultiChannelRecording& rec) {
  MultiChannelRecording out;
  out.data = csp_project(model, rec.data);
  out.fs = rec.fs;
  out.channel_names.reserve(static_cast<std::size_t>(out.data.rows()));
  for (Eigen::Index i = 0; i < out.data.rows(); ++i) out.channel_names.push_back("csp" + std::to_string(i));
  return out;
}

}  // namespace claad

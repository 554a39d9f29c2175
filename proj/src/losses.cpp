#include "claad/losses.hpp"

#include <cmath>
#include <string>

#include "claad/error.hpp"

namespace claad {

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index n_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(rows));
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw DomainError("label " + std::to_string(y) + " out of range");
  }
}

// Rows scaled to unit length (plus epsilon in the denominator).
Eigen::MatrixXd normalize_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, double eps, Eigen::VectorXd* norms) {
  const Eigen::VectorXd n = x.rowwise().norm();
  if (norms != nullptr) *norms = n;
  return x.array().colwise() / (n.array() + eps);
}

}  // namespace

Eigen::MatrixXd softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  const Eigen::VectorXd mx = logits.rowwise().maxCoeff();
  Eigen::MatrixXd e = (logits.colwise() - mx).array().exp();
  const Eigen::VectorXd sum = e.rowwise().sum();
  e.array().colwise() /= sum.array();
  return e;
}

double classification_loss(const Eigen::Ref<const Eigen::MatrixXd>& probs, std::span<const int> labels,
                           double epsilon, Eigen::MatrixXd* d_probs) {
  check_labels(labels, probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double row_sum = probs.row(i).sum();
    if (!probs.row(i).allFinite() || std::abs(row_sum - 1.0) > 1e-6 || probs.row(i).minCoeff() < 0.0) {
      throw DomainError("row " + std::to_string(i) + " is not a probability distribution");
    }
  }
  double loss = 0.0;
  if (d_probs != nullptr) d_probs->setZero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    loss -= std::log(probs(i, c) + epsilon);
    if (d_probs != nullptr) (*d_probs)(i, c) = -1.0 / (probs(i, c) + epsilon);
  }
  return loss;
}

double classification_loss_from_logits(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                                       std::span<const int> labels, double epsilon, Eigen::MatrixXd* d_logits) {
  const Eigen::MatrixXd probs = softmax_rows(logits);
  Eigen::MatrixXd d_probs;
  const double loss = classification_loss(probs, labels, epsilon, d_logits ? &d_probs : nullptr);
  if (d_logits != nullptr) {
    const Eigen::VectorXd dot = (d_probs.array() * probs.array()).rowwise().sum();
    *d_logits = probs.array() * (d_probs.colwise() - dot).array();
  }
  return loss;
}

double positive_pair_loss(const Eigen::Ref<const Eigen::MatrixXd>& p, const Eigen::Ref<const Eigen::MatrixXd>& z,
                          std::span<const int> labels, const LossConfig& cfg, Eigen::MatrixXd* d_p) {
  if (!(cfg.temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  if (p.rows() != z.rows() || p.cols() != z.cols()) throw ShapeError("p and z must have identical shapes");
  if (static_cast<Eigen::Index>(labels.size()) != p.rows()) throw ShapeError("labels do not match batch size");
  const Eigen::Index batch = p.rows();
  if (d_p != nullptr) d_p->setZero(p.rows(), p.cols());
  if (batch <= 1) return 0.0;

  Eigen::VectorXd p_norm;
  const Eigen::MatrixXd ph = cfg.normalize_embeddings ? normalize_rows(p, cfg.epsilon, &p_norm) : Eigen::MatrixXd(p);
  const Eigen::MatrixXd zh = cfg.normalize_embeddings ? normalize_rows(z, cfg.epsilon, nullptr) : Eigen::MatrixXd(z);
  const Eigen::MatrixXd sim = ph * zh.transpose() / cfg.temperature;

  double loss = 0.0;
  Eigen::MatrixXd d_sim(batch, batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double mx = sim.row(i).maxCoeff();
    double all = 0.0;
    double same = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      const double e = std::exp(sim(i, j) - mx);
      all += e;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) same += e;
    }
    loss += std::log(all) - std::log(same);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const double e = std::exp(sim(i, j) - mx);
      const bool positive = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)];
      d_sim(i, j) = (e / all - (positive ? e / same : 0.0)) / static_cast<double>(batch);
    }
  }
  loss /= static_cast<double>(batch);

  if (d_p != nullptr) {
    const Eigen::MatrixXd d_ph = d_sim * zh / cfg.temperature;
    if (!cfg.normalize_embeddings) {
      *d_p = d_ph;
    } else {
      for (Eigen::Index i = 0; i < batch; ++i) {
        const double n = p_norm[i];
        const double s = n + cfg.epsilon;
        Eigen::RowVectorXd g = d_ph.row(i) / s;
        if (n > 0.0) g -= p.row(i) * (p.row(i).dot(d_ph.row(i)) / (s * s * n));
        d_p->row(i) = g;
      }
    }
  }
  return loss;
}

double claad_loss(const Eigen::Ref<const Eigen::MatrixXd>& p1, const Eigen::Ref<const Eigen::MatrixXd>& z2,
                  const Eigen::Ref<const Eigen::MatrixXd>& p2, const Eigen::Ref<const Eigen::MatrixXd>& z1,
                  std::span<const int> labels, const LossConfig& cfg, ClaadGradients* grads) {
  Eigen::MatrixXd g1, g2;
  const double a = positive_pair_loss(p1, z2, labels, cfg, grads ? &g1 : nullptr);
  const double b = positive_pair_loss(p2, z1, labels, cfg, grads ? &g2 : nullptr);
  if (grads != nullptr) {
    grads->d_p1 = 0.5 * g1;
    grads->d_p2 = 0.5 * g2;
    grads->d_z1 = Eigen::MatrixXd::Zero(z1.rows(), z1.cols());
    grads->d_z2 = Eigen::MatrixXd::Zero(z2.rows(), z2.cols());
  }
  return 0.5 * (a + b);
}

}  // namespace claad

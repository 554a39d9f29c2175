#include <doctest.h>

#include <cmath>
#include <vector>

#include "claad/error.hpp"
#include "claad/losses.hpp"
#include "test_util.hpp"

using namespace claad;

namespace {

// Direct evaluation of the positive-pair loss, one anchor at a time.
double brute_positive_pair(const Eigen::MatrixXd& p, const Eigen::MatrixXd& z, const std::vector<int>& y) {
  const Eigen::Index b = p.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::VectorXd pi = p.row(i).normalized();
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const double s = std::exp(pi.dot(z.row(j).normalized()));
      den += s;
      if (y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)]) num += s;
    }
    total -= std::log(num / den);
  }
  return total / static_cast<double>(b);
}

}  // namespace

TEST_CASE("classification loss closed forms") {
  const std::vector<int> labels4 = {0, 1, 1, 0};
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(4, 2, 0.5);
  CHECK(std::abs(classification_loss(uniform, labels4) - 4.0 * std::log(2.0)) < 1e-9);

  Eigen::MatrixXd probs(2, 2);
  probs << 0.9, 0.1, 0.2, 0.8;
  const std::vector<int> labels = {0, 1};
  CHECK(classification_loss(probs, labels) == doctest::Approx(-(std::log(0.9) + std::log(0.8))).epsilon(1e-9));
  CHECK(classification_loss(probs, labels) == doctest::Approx(0.32850).epsilon(1e-4));

  Eigen::MatrixXd onehot(2, 2);
  onehot << 1, 0, 0, 1;
  CHECK(classification_loss(onehot, labels) <= 2.0 * std::abs(std::log1p(1e-12)) + 1e-15);
}

TEST_CASE("classification loss rejects rows that are not distributions") {
  Eigen::MatrixXd bad(1, 2);
  bad << 0.7, 0.7;
  const std::vector<int> labels = {0};
  CHECK_THROWS_AS(classification_loss(bad, labels), DomainError);
}

TEST_CASE("classification gradient from logits matches finite differences") {
  const Eigen::MatrixXd logits = testutil::randn(3, 2, 4);
  const std::vector<int> labels = {1, 0, 1};
  Eigen::MatrixXd grad;
  classification_loss_from_logits(logits, labels, 1e-12, &grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Eigen::MatrixXd up = logits, dn = logits;
    up.data()[i] += h;
    dn.data()[i] -= h;
    const double fd = (classification_loss_from_logits(up, labels) - classification_loss_from_logits(dn, labels)) / (2 * h);
    CHECK(grad.data()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("orthonormal two-example positive pair loss") {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2, 2);
  const std::vector<int> labels = {0, 1};
  const double r = std::exp(1.0) / (std::exp(1.0) + 1.0);
  CHECK(r == doctest::Approx(0.73106).epsilon(1e-5));
  const double loss = positive_pair_loss(e, e, labels);
  CHECK(std::abs(loss - 0.31326) < 1e-5);
  CHECK(loss == doctest::Approx(-std::log(r)).epsilon(1e-12));
}

TEST_CASE("a single shared label gives zero positive pair loss") {
  const Eigen::MatrixXd p = testutil::randn(5, 4, 1);
  const Eigen::MatrixXd z = testutil::randn(5, 4, 2);
  const std::vector<int> labels(5, 1);
  CHECK(std::abs(positive_pair_loss(p, z, labels)) < 1e-12);
}

TEST_CASE("positive pair loss matches the brute-force oracle and is nonnegative") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::MatrixXd p = testutil::randn(6, 3, 10 + seed);
    const Eigen::MatrixXd z = testutil::randn(6, 3, 20 + seed);
    const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
    const double loss = positive_pair_loss(p, z, labels);
    CHECK(loss >= 0.0);
    CHECK(loss == doctest::Approx(brute_positive_pair(p, z, labels)).epsilon(1e-12));
  }
}

TEST_CASE("losses ignore batch order and positive row scale") {
  const Eigen::MatrixXd p = testutil::randn(4, 3, 5);
  const Eigen::MatrixXd z = testutil::randn(4, 3, 6);
  const std::vector<int> labels = {0, 0, 1, 1};
  const double base = positive_pair_loss(p, z, labels);

  const std::vector<int> perm = {2, 0, 3, 1};
  Eigen::MatrixXd pp(4, 3), zp(4, 3);
  std::vector<int> lp(4);
  for (int i = 0; i < 4; ++i) {
    pp.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
    zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
    lp[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  CHECK(positive_pair_loss(pp, zp, lp) == doctest::Approx(base).epsilon(1e-12));

  Eigen::MatrixXd scaled = p;
  scaled.row(1) *= 7.5;
  CHECK(std::abs(positive_pair_loss(scaled, z, labels) - base) < 1e-9);
}

TEST_CASE("single example batch contributes zero") {
  const Eigen::MatrixXd p = testutil::randn(1, 3, 1);
  const std::vector<int> labels = {1};
  CHECK(positive_pair_loss(p, p, labels) == 0.0);
}

TEST_CASE("claad loss symmetry and reduction") {
  const Eigen::MatrixXd p1 = testutil::randn(4, 5, 1);
  const Eigen::MatrixXd p2 = testutil::randn(4, 5, 2);
  const Eigen::MatrixXd z1 = testutil::randn(4, 5, 3);
  const Eigen::MatrixXd z2 = testutil::randn(4, 5, 4);
  const std::vector<int> labels = {1, 0, 0, 1};

  CHECK(claad_loss(p1, z2, p2, z1, labels) == claad_loss(p2, z1, p1, z2, labels));
  CHECK(claad_loss(p1, z1, p1, z1, labels) == doctest::Approx(positive_pair_loss(p1, z1, labels)).epsilon(1e-15));
  const double oracle = 0.5 * (brute_positive_pair(p1, z2, labels) + brute_positive_pair(p2, z1, labels));
  CHECK(std::abs(claad_loss(p1, z2, p2, z1, labels) - oracle) < 1e-9);
}

TEST_CASE("claad gradient flows to p only") {
  const Eigen::MatrixXd p1 = testutil::randn(4, 3, 7);
  const Eigen::MatrixXd p2 = testutil::randn(4, 3, 8);
  const Eigen::MatrixXd z1 = testutil::randn(4, 3, 9);
  const Eigen::MatrixXd z2 = testutil::randn(4, 3, 10);
  const std::vector<int> labels = {0, 1, 0, 1};
  ClaadGradients g;
  claad_loss(p1, z2, p2, z1, labels, {}, &g);
  CHECK(g.d_z1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_z2.cwiseAbs().maxCoeff() == 0.0);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    Eigen::MatrixXd up = p1, dn = p1;
    up.data()[i] += h;
    dn.data()[i] -= h;
    const double fd = (claad_loss(up, z2, p2, z1, labels) - claad_loss(dn, z2, p2, z1, labels)) / (2 * h);
    CHECK(g.d_p1.data()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("temperature sharpens the similarity") {
  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(2, 2);
  const std::vector<int> labels = {0, 1};
  LossConfig cfg;
  cfg.temperature = 0.5;
  CHECK(positive_pair_loss(e, e, labels, cfg) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
}

#include <doctest.h>

#include <cmath>
#include <string>

#include "claad/error.hpp"
#include "claad/model.hpp"
#include "claad/trainer.hpp"
#include "test_util.hpp"

using namespace claad;

namespace {

ModelConfig mini_config() {
  ModelConfig cfg;
  cfg.in_channels = 3;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.d_repr = 6;
  cfg.probe_hidden = 3;
  cfg.clf_dims = {5, 4, 2};
  cfg.window_len = 4;
  return cfg;
}

ExampleInput<double> random_input(const ModelConfig& cfg, std::uint64_t seed) {
  return {testutil::randn(cfg.window_len, cfg.in_channels, seed),
          testutil::randn(cfg.window_len, 1, seed + 1000).col(0),
          testutil::randn(cfg.window_len, 1, seed + 2000).col(0)};
}

ModelParameters<double> perturbed(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParameters<double> p = init_parameters<double>(cfg, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto& [name, t] : p.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += nd(rng);
  }
  return p;
}

// Max relative error between analytic and central-difference gradients
// over every tensor, for one objective.
double gradient_error(const ModelParameters<double>& p, const TwoViewBatch<double>& batch, LossSelector sel, double h) {
  const GradientResult<double> g = compute_gradients(batch, p, sel);
  const BatchViews<double> targets = forward_views(batch, p);
  auto loss_at = [&](const ModelParameters<double>& q) {
    if (sel == LossSelector::Claad) {
      const BatchViews<double> v = forward_views(batch, q);
      return claad_loss(v.p1, targets.z2, v.p2, targets.z1, batch.labels);
    }
    const BatchViews<double> v = forward_views(batch, q);
    return 0.5 * (classification_loss_from_logits(v.logits1, batch.labels) +
                  classification_loss_from_logits(v.logits2, batch.labels));
  };
  double worst = 0.0;
  const auto pt = p.tensors();
  const auto gt = g.grads.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    Mat<double> num(pt[k].second->rows(), pt[k].second->cols());
    for (Eigen::Index i = 0; i < num.size(); ++i) {
      ModelParameters<double> q = p;
      auto qt = q.tensors();
      qt[k].second->data()[i] += h;
      const double lp = loss_at(q);
      qt[k].second->data()[i] -= 2 * h;
      const double lm = loss_at(q);
      num.data()[i] = (lp - lm) / (2 * h);
    }
    const double den = std::max(num.cwiseAbs().maxCoeff(), gt[k].second->cwiseAbs().maxCoeff());
    if (den > 0) worst = std::max(worst, (num - *gt[k].second).cwiseAbs().maxCoeff() / den);
  }
  return worst;
}

TwoViewBatch<double> mini_batch(const ModelConfig& cfg, std::uint64_t seed) {
  TwoViewBatch<double> b;
  for (int i = 0; i < 3; ++i) {
    b.view1.push_back(random_input(cfg, seed + 10 * i));
    b.view2.push_back(random_input(cfg, seed + 10 * i + 5));
    b.labels.push_back(i % 2);
  }
  return b;
}

}  // namespace

TEST_CASE("positional encoding values") {
  const Mat<double> pe = positional_encoding<double>(5, 6);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe(3, 3) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK(pe(4, 4) == doctest::Approx(std::sin(4.0 / std::pow(10000.0, 4.0 / 6.0))));
  CHECK_THROWS_AS(positional_encoding<double>(4, 5), InvalidArgument);
}

TEST_CASE("attention rows are stochastic") {
  const int d = 8;
  AttentionParams<double> p{testutil::randn(d, d, 1), testutil::randn(d, d, 2), testutil::randn(d, d, 3),
                            testutil::randn(d, d, 4)};
  AttentionCache<double> cache;
  multi_head_attention<double>(testutil::randn(6, d, 5), testutil::randn(9, d, 6), testutil::randn(9, d, 6), p, 4,
                               &cache);
  REQUIRE(cache.probs.size() == 4);
  for (const auto& pr : cache.probs) {
    CHECK(pr.rows() == 6);
    CHECK(pr.cols() == 9);
    CHECK(pr.minCoeff() >= 0.0);
    CHECK((pr.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention over identical keys averages the values") {
  const int d = 4;
  const Mat<double> eye = Mat<double>::Identity(d, d);
  AttentionParams<double> p{eye, eye, eye, eye};
  const Mat<double> k = Mat<double>::Ones(3, d);
  Mat<double> v(3, d);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  const Mat<double> out = multi_head_attention<double>(testutil::randn(2, d, 1), k, v, p, 2);
  for (Eigen::Index r = 0; r < 2; ++r) CHECK((out.row(r) - v.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention shape mismatch is a shape error") {
  const Mat<double> w = Mat<double>::Identity(4, 4);
  AttentionParams<double> p{w, w, w, w};
  CHECK_THROWS_AS(multi_head_attention<double>(Mat<double>::Ones(2, 4), Mat<double>::Ones(3, 4),
                                               Mat<double>::Ones(2, 4), p, 2),
                  ShapeError);
}

TEST_CASE("a block with zero weights and gains returns the positional table") {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  const ModelParameters<double> zero = ModelParameters<double>::zeros(cfg);
  const Mat<double> out =
      cross_attention_block<double>(testutil::randn(10, 16, 1), testutil::randn(10, 16, 2), zero.blocks[0], cfg);
  CHECK(out == positional_encoding<double>(10, 16));
}

TEST_CASE("block output shape at full width") {
  ModelConfig cfg;
  const ModelParameters<double> p = init_parameters<double>(cfg, 1);
  const Mat<double> out = cross_attention_block<double>(testutil::randn(128, 320, 1), testutil::randn(128, 320, 2),
                                                        p.blocks[0], cfg);
  CHECK(out.rows() == 128);
  CHECK(out.cols() == 320);
}

TEST_CASE("every block reads the original audio stream") {
  ModelConfig cfg = mini_config();
  cfg.n_blocks = 3;
  const ModelParameters<double> p = perturbed(cfg, 3);
  ForwardCache<double> cache;
  forward_example(random_input(cfg, 1), p, &cache);
  for (const auto& pairing : cache.pairings) {
    REQUIRE(pairing.blocks.size() == 3);
    for (std::size_t b = 0; b < 3; ++b) {
      const Mat<double> expected = layer_norm(pairing.audio, p.blocks[b].norm_audio, cfg.layer_norm_eps);
      CHECK((pairing.blocks[b].b - expected).cwiseAbs().maxCoeff() == 0.0);
    }
    // The eeg-side input changes from block to block.
    CHECK((pairing.blocks[1].input - pairing.blocks[0].input).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("swapping the envelopes swaps the concatenated halves") {
  const ModelConfig cfg = mini_config();
  const ModelParameters<double> p = perturbed(cfg, 4);
  ExampleInput<double> x = random_input(cfg, 8);
  ForwardCache<double> a, b;
  forward_example(x, p, &a);
  std::swap(x.env_a, x.env_b);
  forward_example(x, p, &b);
  const Eigen::Index d = cfg.d_model;
  CHECK((a.concat.head(d) - b.concat.tail(d)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.concat.tail(d) - b.concat.head(d)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full forward shapes and per-example independence") {
  ModelConfig cfg;
  cfg.in_channels = 64;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_blocks = 2;
  cfg.window_len = 32;
  const ModelParameters<double> p = init_parameters<double>(cfg, 9);
  const ExampleInput<double> x = random_input(cfg, 2);
  const ExampleOutput<double> y1 = forward_example(x, p);
  const ExampleOutput<double> y2 = forward_example(x, p);
  CHECK(y1.z.size() == 50);
  CHECK(y1.p.size() == 50);
  CHECK(y1.logits.size() == 2);
  CHECK(y1.z.allFinite());
  CHECK(y1.p.allFinite());
  CHECK(y1.logits.allFinite());
  CHECK(y1.z == y2.z);
  CHECK(y1.logits == y2.logits);

  ExampleInput<double> bad = x;
  bad.env_b = Vec<double>::Ones(cfg.window_len + 1);
  CHECK_THROWS_AS(forward_example(bad, p), ShapeError);
}

TEST_CASE("both augmentation paths share one parameter store") {
  const ModelConfig cfg = mini_config();
  ModelParameters<double> p = perturbed(cfg, 5);
  const ExampleInput<double> x = random_input(cfg, 3);
  TwoViewBatch<double> batch;
  batch.view1 = {x, x};
  batch.view2 = {x, x};
  batch.labels = {0, 1};
  BatchViews<double> v = forward_views(batch, p);
  CHECK(v.z1 == v.z2);
  OptimizerState<double> opt = OptimizerState<double>::zeros(cfg);
  adam_step(p, compute_gradients(mini_batch(cfg, 3), p, LossSelector::Claad).grads, opt, TrainConfig{});
  v = forward_views(batch, p);
  CHECK(v.z1 == v.z2);
  CHECK(v.logits1 == v.logits2);
}

TEST_CASE("probe heads") {
  ModelConfig cfg;
  const ModelParameters<double> zero = ModelParameters<double>::zeros(cfg);
  const RowVec<double> z = testutil::randn(1, 50, 1).row(0);
  const RowVec<double> p = probe_forward(z, zero);
  CHECK(p.size() == 50);
  CHECK(p.cwiseAbs().maxCoeff() == 0.0);

  // 2 -> 1 -> 2 by hand: h = relu(1*0.5 + 2*(-1) + 2) = 0.5; p = 0.5*[2, -3] + [0.1, 0.2].
  ModelConfig tiny;
  tiny.d_repr = 2;
  tiny.probe_hidden = 1;
  ModelParameters<double> q = ModelParameters<double>::zeros(tiny);
  q.probe1.weight << 0.5, -1.0;
  q.probe1.bias << 2.0;
  q.probe2.weight << 2.0, -3.0;
  q.probe2.bias << 0.1, 0.2;
  RowVec<double> in(2);
  in << 1.0, 2.0;
  const RowVec<double> out = probe_forward(in, q);
  CHECK(out[0] == doctest::Approx(1.1));
  CHECK(out[1] == doctest::Approx(-1.3));
  q.probe1.bias << 1.0;  // hidden pre-activation -0.5 is clipped
  CHECK(probe_forward(in, q)[0] == doctest::Approx(0.1));
}

TEST_CASE("classifier heads") {
  ModelConfig cfg;
  const ModelParameters<double> zero = ModelParameters<double>::zeros(cfg);
  const RowVec<double> logits = classifier_forward(RowVec<double>(testutil::randn(1, 50, 2).row(0)), zero);
  REQUIRE(logits.size() == 2);
  CHECK(logits.cwiseAbs().maxCoeff() == 0.0);
  CHECK(softmax_rows(logits)(0, 0) == doctest::Approx(0.5));

  // 2 -> 3 -> 2 -> 2 by hand.
  ModelConfig tiny;
  tiny.d_repr = 2;
  tiny.clf_dims = {3, 2, 2};
  ModelParameters<double> q = ModelParameters<double>::zeros(tiny);
  q.classifier[0].weight << 1, -1, 0, 2, 1, 1;
  q.classifier[0].bias << 0, 0, -1;
  q.classifier[1].weight << 1, 0, 0, 1, 1, -1;
  q.classifier[1].bias << 0.5, 0;
  q.classifier[2].weight << 1, 2, -1, 1;
  q.classifier[2].bias << 0, 0.25;
  RowVec<double> in(2);
  in << 1.0, 0.5;
  // layer 0: [2, 0, -0.5] -> relu [2, 0, 0]; layer 1: [2.5, 0] -> relu [2.5, 0];
  // layer 2: [2.5, 5.25].
  const RowVec<double> out = classifier_forward(in, q);
  CHECK(out[0] == doctest::Approx(2.5));
  CHECK(out[1] == doctest::Approx(5.25));
}

TEST_CASE("gradient of a loss that ignores a parameter is exactly zero") {
  const ModelConfig cfg = mini_config();
  const ModelParameters<double> p = perturbed(cfg, 6);
  const GradientResult<double> claad = compute_gradients(mini_batch(cfg, 1), p, LossSelector::Claad);
  for (const auto& layer : claad.grads.classifier) {
    CHECK(layer.weight.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
  }
  const GradientResult<double> clf = compute_gradients(mini_batch(cfg, 1), p, LossSelector::Classification);
  CHECK(clf.grads.probe1.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(clf.grads.probe2.bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scaling the loss scales the gradients") {
  const ModelConfig cfg = mini_config();
  const ModelParameters<double> p = perturbed(cfg, 7);
  ForwardCache<double> cache;
  forward_example(random_input(cfg, 4), p, &cache);
  RowVec<double> d_logits(2);
  d_logits << 0.3, -0.7;
  ModelParameters<double> g1 = ModelParameters<double>::zeros(cfg);
  ModelParameters<double> g2 = ModelParameters<double>::zeros(cfg);
  backward_example(cache, p, RowVec<double>(), d_logits, RowVec<double>(), g1);
  backward_example(cache, p, RowVec<double>(), RowVec<double>(2.0 * d_logits), RowVec<double>(), g2);
  const auto t1 = g1.tensors();
  const auto t2 = g2.tensors();
  for (std::size_t k = 0; k < t1.size(); ++k) CHECK((2.0 * *t1[k].second - *t2[k].second).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  const ModelConfig cfg = mini_config();
  // h = 1e-4 on a seed whose perturbations cross no ReLU kink.
  const ModelParameters<double> p = perturbed(cfg, 2);
  const TwoViewBatch<double> batch = mini_batch(cfg, 2);
  CHECK(gradient_error(p, batch, LossSelector::Claad, 1e-4) < 1e-4);
  CHECK(gradient_error(p, batch, LossSelector::Classification, 1e-4) < 1e-4);
  // Smaller steps stay on one side of the kinks for other seeds.
  for (std::uint64_t seed : {1, 7}) {
    const ModelParameters<double> q = perturbed(cfg, seed);
    const TwoViewBatch<double> b = mini_batch(cfg, seed);
    CHECK(gradient_error(q, b, LossSelector::Claad, 1e-6) < 1e-4);
    CHECK(gradient_error(q, b, LossSelector::Classification, 1e-6) < 1e-4);
  }
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.n_heads = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.clf_dims = {10, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(ModelConfig{}.validate());
}

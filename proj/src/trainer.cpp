#include "claad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "claad/binary_io.hpp"
#include "claad/error.hpp"

namespace claad {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be finite and >= 0");
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be > 0");
}

template <typename S>
ExampleInput<S> to_input(const WindowedExample& ex) {
  return {ex.features.transpose().cast<S>(), ex.env_a.cast<S>(), ex.env_b.cast<S>()};
}

namespace {

template <typename S>
void check_batch(const TwoViewBatch<S>& batch) {
  if (batch.view1.size() != batch.size() || batch.view2.size() != batch.size()) {
    throw ShapeError("both views must hold one input per label");
  }
  if (batch.size() == 0) throw ShapeError("empty batch");
}

template <typename S>
void check_finite(const ModelParameters<S>& grads, const char* what) {
  for (const auto& [name, t] : grads.tensors()) {
    if (!t->allFinite()) throw NumericalFailure(name, std::string("non-finite ") + what);
  }
}

WindowedExample swapped(const WindowedExample& ex) {
  WindowedExample out = ex;
  std::swap(out.env_a, out.env_b);
  out.label = 1 - ex.label;
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

template <typename S>
BatchViews<S> forward_views(const TwoViewBatch<S>& batch, const ModelParameters<S>& params) {
  check_batch(batch);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int d = params.config.d_repr;
  const int n_out = params.config.clf_dims.back();
  BatchViews<S> v{Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, n_out), Mat<S>(b, n_out)};
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto o1 = forward_example(batch.view1[static_cast<std::size_t>(i)], params);
    const auto o2 = forward_example(batch.view2[static_cast<std::size_t>(i)], params);
    v.z1.row(i) = o1.z;
    v.p1.row(i) = o1.p;
    v.logits1.row(i) = o1.logits;
    v.z2.row(i) = o2.z;
    v.p2.row(i) = o2.p;
    v.logits2.row(i) = o2.logits;
  }
  return v;
}

template <typename S>
GradientResult<S> compute_gradients(const TwoViewBatch<S>& batch, const ModelParameters<S>& params,
                                    LossSelector selector, const LossConfig& loss_cfg) {
  check_batch(batch);
  GradientResult<S> r;
  r.grads = params.zeros_like();
  ForwardCache<S> cache;
  const RowVec<S> none;

  if (selector == LossSelector::Claad) {
    r.views = forward_views(batch, params);
    ClaadGradients g;
    r.loss = claad_loss(r.views.p1.template cast<double>(), r.views.z2.template cast<double>(),
                        r.views.p2.template cast<double>(), r.views.z1.template cast<double>(), batch.labels,
                        loss_cfg, &g);
    if (!std::isfinite(r.loss)) throw NumericalFailure("claad_loss", "non-finite loss");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      forward_example(batch.view1[i], params, &cache);
      backward_example(cache, params, RowVec<S>(g.d_p1.row(row).cast<S>()), none, none, r.grads);
      forward_example(batch.view2[i], params, &cache);
      backward_example(cache, params, RowVec<S>(g.d_p2.row(row).cast<S>()), none, none, r.grads);
    }
  } else {
    const auto b = static_cast<Eigen::Index>(batch.size());
    const int d = params.config.d_repr;
    const int n_out = params.config.clf_dims.back();
    r.views = {Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, d), Mat<S>(b, n_out), Mat<S>(b, n_out)};
    for (int view = 0; view < 2; ++view) {
      const auto& inputs = view == 0 ? batch.view1 : batch.view2;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const ExampleOutput<S> out = forward_example(inputs[i], params, &cache);
        (view == 0 ? r.views.z1 : r.views.z2).row(row) = out.z;
        (view == 0 ? r.views.p1 : r.views.p2).row(row) = out.p;
        (view == 0 ? r.views.logits1 : r.views.logits2).row(row) = out.logits;
        Eigen::MatrixXd d_logits;
        const int label = batch.labels[i];
        const double li = classification_loss_from_logits(out.logits.template cast<double>(),
                                                          std::span<const int>(&label, 1), loss_cfg.epsilon,
                                                          &d_logits);
        r.loss += 0.5 * li;
        backward_example(cache, params, none, RowVec<S>((0.5 * d_logits).cast<S>()), none, r.grads);
      }
    }
    if (!std::isfinite(r.loss)) throw NumericalFailure("classification_loss", "non-finite loss");
  }
  check_finite(r.grads, "gradient");
  return r;
}

template <typename S>
void adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads, OptimizerState<S>& state,
               const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ShapeError("gradients and optimizer state do not match the parameter store");
  }
  for (const auto& [name, t] : g) {
    if (!t->allFinite()) throw NumericalFailure(name, "non-finite gradient passed to Adam");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const auto b1 = static_cast<S>(cfg.beta1);
  const auto b2 = static_cast<S>(cfg.beta2);
  const auto c1 = static_cast<S>(1.0 - std::pow(cfg.beta1, t));
  const auto c2 = static_cast<S>(1.0 - std::pow(cfg.beta2, t));
  const auto lr = static_cast<S>(cfg.lr);
  const auto eps = static_cast<S>(cfg.eps_adam);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].second->rows() != p[i].second->rows() || g[i].second->cols() != p[i].second->cols()) {
      throw ShapeError("gradient shape mismatch for '" + p[i].first + "'");
    }
    auto gi = g[i].second->array();
    auto mi = m[i].second->array();
    auto vi = v[i].second->array();
    mi = b1 * mi + (S(1) - b1) * gi;
    vi = b2 * vi + (S(1) - b2) * gi.square();
    p[i].second->array() -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
  }
}

template <typename S>
StepMetrics train_step(std::span<const WindowedExample> batch, ModelParameters<S>& params, OptimizerState<S>& opt,
                       const TrainConfig& cfg, const LossConfig& loss_cfg, std::mt19937_64& rng,
                       StepTrace<S>* trace) {
  if (batch.size() < 2) throw ConfigError("a training batch needs at least two examples");
  const AugmentConfig aug{cfg.noise_sigma, true};
  TwoViewBatch<S> views;
  for (const WindowedExample& ex : batch) {
    const std::uint64_t s1 = rng();
    const std::uint64_t s2 = rng();
    views.view1.push_back(to_input<S>(augment_gaussian(ex, aug, s1)));
    views.view2.push_back(to_input<S>(augment_gaussian(ex, aug, s2)));
    views.labels.push_back(ex.label);
  }

  auto clip = [&](ModelParameters<S>& grads) {
    if (cfg.clip_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& [name, t] : grads.tensors()) sq += t->template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) {
      for (auto& [name, t] : grads.tensors()) *t *= static_cast<S>(cfg.clip_norm / norm);
    }
  };

  if (trace != nullptr) {
    trace->before = params;
    trace->contrastive_forward = params;
  }
  StepMetrics metrics;
  GradientResult<S> contrastive = compute_gradients(views, params, LossSelector::Claad, loss_cfg);
  clip(contrastive.grads);
  adam_step(params, contrastive.grads, opt, cfg);
  metrics.claad_loss = contrastive.loss;

  if (trace != nullptr) {
    trace->after_contrastive = params;
    trace->classification_forward = params;
  }
  GradientResult<S> classification = compute_gradients(views, params, LossSelector::Classification, loss_cfg);
  clip(classification.grads);
  adam_step(params, classification.grads, opt, cfg);
  metrics.classification_loss = classification.loss / static_cast<double>(batch.size());

  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (const Mat<S>* logits : {&classification.views.logits1, &classification.views.logits2}) {
      const int pred = (*logits)(row, 1) > (*logits)(row, 0) ? 1 : 0;
      correct += pred == views.labels[i] ? 1 : 0;
    }
  }
  metrics.accuracy = static_cast<double>(correct) / (2.0 * static_cast<double>(batch.size()));
  return metrics;
}

template <typename S>
int predict(const ModelParameters<S>& params, const WindowedExample& ex) {
  const ExampleOutput<S> out = forward_example(to_input<S>(ex), params);
  return out.logits[1] > out.logits[0] ? 1 : 0;
}

double accuracy_on(const ModelParameters<TrainScalar>& params, std::span<const WindowedExample> examples) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (const auto& ex : examples) correct += predict(params, ex) == ex.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

Checkpoint fit(std::span<const WindowedExample> train, std::span<const WindowedExample> validation,
               const ModelConfig& model_cfg, const TrainConfig& train_cfg, const LossConfig& loss_cfg,
               const FitOptions& options) {
  if (train.empty()) throw ConfigError("training split is empty");
  model_cfg.validate();
  train_cfg.validate();
  if (train.size() < 2) throw ConfigError("training split needs at least two examples");

  Checkpoint ck;
  ck.model_config = model_cfg;
  ck.train_config = train_cfg;
  ck.loss_config = loss_cfg;
  ck.params = init_parameters<TrainScalar>(model_cfg, train_cfg.seed);
  ck.optimizer = OptimizerState<TrainScalar>::zeros(model_cfg);

  std::mt19937_64 rng(train_cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(train_cfg.batch_size);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      ranges.emplace_back(start, std::min(order.size(), start + batch_size));
    }
    if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
      ranges[ranges.size() - 2].second = ranges.back().second;
      ranges.pop_back();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    double weight = 0.0;
    for (const auto& [start, stop] : ranges) {
      // Label-balanced batch: alternate target labels, swap streams to match.
      std::vector<int> targets(stop - start);
      for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(i % 2);
      std::shuffle(targets.begin(), targets.end(), rng);
      std::vector<WindowedExample> batch;
      batch.reserve(targets.size());
      for (std::size_t i = start; i < stop; ++i) {
        const WindowedExample& ex = train[order[i]];
        batch.push_back(ex.label == targets[i - start] ? ex : swapped(ex));
      }
      const StepMetrics m = train_step(std::span<const WindowedExample>(batch), ck.params, ck.optimizer,
                                       train_cfg, loss_cfg, rng);
      const auto w = static_cast<double>(batch.size());
      rec.claad_loss += m.claad_loss * w;
      rec.classification_loss += m.classification_loss * w;
      rec.train_accuracy += m.accuracy * w;
      weight += w;
    }
    rec.claad_loss /= weight;
    rec.classification_loss /= weight;
    rec.train_accuracy /= weight;
    rec.val_accuracy = accuracy_on(ck.params, validation);
    ck.history.push_back(rec);
    ck.epoch = epoch + 1;
    if (options.on_epoch) options.on_epoch(rec);
  }
  return ck;
}

std::vector<AccuracyRow> evaluate_accuracy(std::span<const WindowedExample> examples, const Checkpoint& checkpoint) {
  std::map<std::pair<std::string, double>, AccuracyRow> groups;
  const bool standardize = checkpoint.standardization.feature_mean.size() > 0;
  for (const WindowedExample& raw : examples) {
    WindowedExample ex = raw;
    if (standardize) checkpoint.standardization.apply(ex);
    AccuracyRow& row = groups[{ex.subject_id, ex.window_seconds}];
    row.subject_id = ex.subject_id;
    row.window_seconds = ex.window_seconds;
    ++row.n_examples;
    row.n_correct += predict(checkpoint.params, ex) == ex.label ? 1 : 0;
  }
  std::vector<AccuracyRow> out;
  for (auto& [key, row] : groups) {
    row.accuracy = static_cast<double>(row.n_correct) / static_cast<double>(row.n_examples);
    out.push_back(row);
  }
  return out;
}

void round_to_f32(CspModel& csp) {
  csp.filters = csp.filters.cast<float>().cast<double>();
  csp.eigenvalues = csp.eigenvalues.cast<float>().cast<double>();
  for (auto& c : csp.class_covariances) c = c.cast<float>().cast<double>();
}

void round_to_f32(Standardization& s) {
  s.feature_mean = s.feature_mean.cast<float>().cast<double>();
  s.feature_std = s.feature_std.cast<float>().cast<double>();
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr const char* kMetaRecord = "__meta__";

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;  // row-major
};

void write_record(std::ostream& out, const std::string& name, const std::vector<std::uint32_t>& dims,
                  const float* data, std::size_t n) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) write_u32(out, d);
  write_f32_block(out, data, n);
}

template <typename Derived>
void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixBase<Derived>& m) {
  const MatrixXfRowMajor rm = m.template cast<float>();
  write_record(out, name, {static_cast<std::uint32_t>(rm.rows()), static_cast<std::uint32_t>(rm.cols())},
               rm.data(), static_cast<std::size_t>(rm.size()));
}

void write_vector(std::ostream& out, const std::string& name, const Eigen::VectorXd& v) {
  const Eigen::VectorXf f = v.cast<float>();
  write_record(out, name, {static_cast<std::uint32_t>(f.size())}, f.data(), static_cast<std::size_t>(f.size()));
}

Eigen::MatrixXd as_matrix(const RawTensor& t, const std::string& name) {
  if (t.dims.size() != 2) throw CorruptFile("checkpoint tensor '" + name + "' must have rank 2");
  Eigen::Map<const MatrixXfRowMajor> m(t.values.data(), t.dims[0], t.dims[1]);
  return m.cast<double>();
}

Eigen::VectorXd as_vector(const RawTensor& t, const std::string& name) {
  if (t.dims.size() != 1) throw CorruptFile("checkpoint tensor '" + name + "' must have rank 1");
  return Eigen::Map<const Eigen::VectorXf>(t.values.data(), t.dims[0]).cast<double>();
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stoi(tok));
  return out;
}

std::string build_meta(const Checkpoint& ck) {
  std::ostringstream m;
  const ModelConfig& mc = ck.model_config;
  const TrainConfig& tc = ck.train_config;
  m << "format=claad-checkpoint-1\n";
  m << "model.in_channels=" << mc.in_channels << "\n";
  m << "model.d_model=" << mc.d_model << "\n";
  m << "model.n_heads=" << mc.n_heads << "\n";
  m << "model.n_blocks=" << mc.n_blocks << "\n";
  m << "model.d_repr=" << mc.d_repr << "\n";
  m << "model.probe_hidden=" << mc.probe_hidden << "\n";
  m << "model.clf_dims=" << join_ints(mc.clf_dims) << "\n";
  m << "model.window_len=" << mc.window_len << "\n";
  m << "model.layer_norm_eps=" << fmt_double(mc.layer_norm_eps) << "\n";
  m << "model.input_pe=" << (mc.input_pe ? "true" : "false") << "\n";
  m << "train.lr=" << fmt_double(tc.lr) << "\n";
  m << "train.beta1=" << fmt_double(tc.beta1) << "\n";
  m << "train.beta2=" << fmt_double(tc.beta2) << "\n";
  m << "train.eps_adam=" << fmt_double(tc.eps_adam) << "\n";
  m << "train.epochs=" << tc.epochs << "\n";
  m << "train.batch_size=" << tc.batch_size << "\n";
  m << "train.seed=" << tc.seed << "\n";
  m << "train.noise_sigma=" << fmt_double(tc.noise_sigma) << "\n";
  m << "train.clip_norm=" << fmt_double(tc.clip_norm) << "\n";
  m << "loss.temperature=" << fmt_double(ck.loss_config.temperature) << "\n";
  m << "loss.normalize_embeddings=" << (ck.loss_config.normalize_embeddings ? "true" : "false") << "\n";
  m << "loss.epsilon=" << fmt_double(ck.loss_config.epsilon) << "\n";
  m << "adam.t=" << ck.optimizer.t << "\n";
  m << "csp.shrinkage=" << fmt_double(ck.csp.shrinkage) << "\n";
  m << "std.env_mean=" << fmt_double(ck.standardization.env_mean) << "\n";
  m << "std.env_std=" << fmt_double(ck.standardization.env_std) << "\n";
  m << "epoch=" << ck.epoch << "\n";
  m << "history.count=" << ck.history.size() << "\n";
  for (std::size_t i = 0; i < ck.history.size(); ++i) {
    const EpochRecord& r = ck.history[i];
    m << "history." << i << "=" << r.epoch << "," << fmt_double(r.claad_loss) << ","
      << fmt_double(r.classification_loss) << "," << fmt_double(r.train_accuracy) << ","
      << fmt_double(r.val_accuracy) << "\n";
  }
  return m.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFound("cannot open checkpoint '" + path.string() + "' for writing");
  for (const auto& [name, t] : ck.params.tensors()) write_matrix(out, "param/" + name, *t);
  for (const auto& [name, t] : ck.optimizer.m.tensors()) write_matrix(out, "adam.m/" + name, *t);
  for (const auto& [name, t] : ck.optimizer.v.tensors()) write_matrix(out, "adam.v/" + name, *t);
  if (ck.csp.filters.size() > 0) {
    write_matrix(out, "csp.filters", ck.csp.filters);
    write_vector(out, "csp.eigenvalues", ck.csp.eigenvalues);
    write_matrix(out, "csp.cov0", ck.csp.class_covariances[0]);
    write_matrix(out, "csp.cov1", ck.csp.class_covariances[1]);
  }
  if (ck.standardization.feature_mean.size() > 0) {
    write_vector(out, "std.feature_mean", ck.standardization.feature_mean);
    write_vector(out, "std.feature_std", ck.standardization.feature_std);
  }
  const std::string meta = build_meta(ck);
  const std::string name = kMetaRecord;
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw NotFound("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string ctx = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("checkpoint '" + ctx + "' not found");

  std::map<std::string, RawTensor> tensors;
  std::map<std::string, std::string> meta;
  bool have_meta = false;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = read_u32(in, ctx);
    if (name_len > 4096) throw CorruptFile(ctx + ": implausible record name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CorruptFile(ctx + ": truncated record name");
    const std::uint32_t rank = read_u32(in, ctx);
    if (rank > 8) throw CorruptFile(ctx + ": implausible tensor rank");
    RawTensor t;
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(read_u32(in, ctx));
      count *= t.dims.back();
    }
    if (name == kMetaRecord) {
      std::string text(static_cast<std::size_t>(count), '\0');
      if (!in.read(text.data(), static_cast<std::streamsize>(count))) throw CorruptFile(ctx + ": truncated metadata");
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) meta[line.substr(0, eq)] = line.substr(eq + 1);
      }
      have_meta = true;
      if (in.peek() != std::char_traits<char>::eof()) throw CorruptFile(ctx + ": data after metadata record");
      break;
    }
    t.values.resize(static_cast<std::size_t>(count));
    read_f32_block(in, t.values.data(), t.values.size(), ctx + " (" + name + ")");
    tensors.emplace(name, std::move(t));
  }
  if (!have_meta) throw CorruptFile(ctx + ": missing metadata record");

  auto get = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw CorruptFile(ctx + ": metadata key '" + key + "' missing");
    return it->second;
  };
  auto get_d = [&](const std::string& key) { return std::stod(get(key)); };
  auto get_i = [&](const std::string& key) { return std::stoi(get(key)); };

  Checkpoint ck;
  ModelConfig& mc = ck.model_config;
  mc.in_channels = get_i("model.in_channels");
  mc.d_model = get_i("model.d_model");
  mc.n_heads = get_i("model.n_heads");
  mc.n_blocks = get_i("model.n_blocks");
  mc.d_repr = get_i("model.d_repr");
  mc.probe_hidden = get_i("model.probe_hidden");
  mc.clf_dims = split_ints(get("model.clf_dims"));
  mc.window_len = get_i("model.window_len");
  mc.layer_norm_eps = get_d("model.layer_norm_eps");
  mc.input_pe = get("model.input_pe") == "true";
  TrainConfig& tc = ck.train_config;
  tc.lr = get_d("train.lr");
  tc.beta1 = get_d("train.beta1");
  tc.beta2 = get_d("train.beta2");
  tc.eps_adam = get_d("train.eps_adam");
  tc.epochs = get_i("train.epochs");
  tc.batch_size = get_i("train.batch_size");
  tc.seed = std::stoull(get("train.seed"));
  tc.noise_sigma = get_d("train.noise_sigma");
  tc.clip_norm = get_d("train.clip_norm");
  ck.loss_config.temperature = get_d("loss.temperature");
  ck.loss_config.normalize_embeddings = get("loss.normalize_embeddings") == "true";
  ck.loss_config.epsilon = get_d("loss.epsilon");

  ck.params = ModelParameters<TrainScalar>::zeros(mc);
  ck.optimizer = OptimizerState<TrainScalar>::zeros(mc);
  ck.optimizer.t = std::stoll(get("adam.t"));
  auto fill = [&](ModelParameters<TrainScalar>& store, const std::string& prefix) {
    for (auto& [name, t] : store.tensors()) {
      const std::string key = prefix + name;
      auto it = tensors.find(key);
      if (it == tensors.end()) throw CorruptFile(ctx + ": tensor '" + key + "' missing");
      const RawTensor& raw = it->second;
      if (raw.dims.size() != 2 || raw.dims[0] != t->rows() || raw.dims[1] != t->cols()) {
        throw CorruptFile(ctx + ": tensor '" + key + "' has the wrong shape");
      }
      *t = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          raw.values.data(), t->rows(), t->cols());
    }
  };
  fill(ck.params, "param/");
  fill(ck.optimizer.m, "adam.m/");
  fill(ck.optimizer.v, "adam.v/");

  ck.csp.shrinkage = get_d("csp.shrinkage");
  if (tensors.count("csp.filters")) {
    ck.csp.filters = as_matrix(tensors.at("csp.filters"), "csp.filters");
    ck.csp.eigenvalues = as_vector(tensors.at("csp.eigenvalues"), "csp.eigenvalues");
    ck.csp.class_covariances[0] = as_matrix(tensors.at("csp.cov0"), "csp.cov0");
    ck.csp.class_covariances[1] = as_matrix(tensors.at("csp.cov1"), "csp.cov1");
  }
  if (tensors.count("std.feature_mean")) {
    ck.standardization.feature_mean = as_vector(tensors.at("std.feature_mean"), "std.feature_mean");
    ck.standardization.feature_std = as_vector(tensors.at("std.feature_std"), "std.feature_std");
  }
  ck.standardization.env_mean = get_d("std.env_mean");
  ck.standardization.env_std = get_d("std.env_std");
  ck.epoch = get_i("epoch");
  const int n_hist = get_i("history.count");
  for (int i = 0; i < n_hist; ++i) {
    std::stringstream row(get("history." + std::to_string(i)));
    std::vector<std::string> f;
    for (std::string tok; std::getline(row, tok, ',');) f.push_back(tok);
    if (f.size() != 5) throw CorruptFile(ctx + ": malformed history row " + std::to_string(i));
    ck.history.push_back({std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return ck;
}

#define CLAAD_INSTANTIATE_TRAINER(S)                                                                          \
  template ExampleInput<S> to_input<S>(const WindowedExample&);                                               \
  template BatchViews<S> forward_views<S>(const TwoViewBatch<S>&, const ModelParameters<S>&);                 \
  template GradientResult<S> compute_gradients<S>(const TwoViewBatch<S>&, const ModelParameters<S>&,          \
                                                  LossSelector, const LossConfig&);                           \
  template void adam_step<S>(ModelParameters<S>&, const ModelParameters<S>&, OptimizerState<S>&,              \
                             const TrainConfig&);                                                             \
  template StepMetrics train_step<S>(std::span<const WindowedExample>, ModelParameters<S>&,                   \
                                     OptimizerState<S>&, const TrainConfig&, const LossConfig&,               \
                                     std::mt19937_64&, StepTrace<S>*);                                        \
  template int predict<S>(const ModelParameters<S>&, const WindowedExample&);

CLAAD_INSTANTIATE_TRAINER(float)
CLAAD_INSTANTIATE_TRAINER(double)
#undef CLAAD_INSTANTIATE_TRAINER

}  // namespace claad

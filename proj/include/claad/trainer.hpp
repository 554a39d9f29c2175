#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "claad/csp.hpp"
#include "claad/dataset.hpp"
#include "claad/losses.hpp"
#include "claad/model.hpp"

namespace claad {

// Training runs in single precision; double is used by the gradient checks.
using TrainScalar = float;

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps_adam = 1e-8;
  int epochs = 40;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double noise_sigma = 1.0;
  double clip_norm = 0.0;  // global-norm clipping, off when <= 0

  void validate() const;
};

enum class LossSelector { Claad, Classification };

template <typename S>
struct TwoViewBatch {
  std::vector<ExampleInput<S>> view1;
  std::vector<ExampleInput<S>> view2;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

template <typename S>
struct BatchViews {
  Mat<S> z1, z2;            // B x d_repr
  Mat<S> p1, p2;            // B x d_repr
  Mat<S> logits1, logits2;  // B x 2
};

template <typename S>
struct GradientResult {
  ModelParameters<S> grads;
  double loss = 0.0;
  BatchViews<S> views;
};

template <typename S>
ExampleInput<S> to_input(const WindowedExample& ex);

template <typename S>
BatchViews<S> forward_views(const TwoViewBatch<S>& batch, const ModelParameters<S>& params);

// Claad: gradient of the symmetric contrastive loss with z held constant.
// Classification: gradient of the summed cross-entropy averaged over views.
template <typename S>
GradientResult<S> compute_gradients(const TwoViewBatch<S>& batch, const ModelParameters<S>& params,
                                    LossSelector selector, const LossConfig& loss_cfg = {});

template <typename S>
struct OptimizerState {
  ModelParameters<S> m;
  ModelParameters<S> v;
  std::int64_t t = 0;

  static OptimizerState zeros(const ModelConfig& cfg) {
    return {ModelParameters<S>::zeros(cfg), ModelParameters<S>::zeros(cfg), 0};
  }
};

template <typename S>
void adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads, OptimizerState<S>& state,
               const TrainConfig& cfg);

struct StepMetrics {
  double claad_loss = 0.0;
  double classification_loss = 0.0;  // per example, averaged over both views
  double accuracy = 0.0;
};

// Parameter snapshots around each optimizer update; only filled on request.
template <typename S>
struct StepTrace {
  ModelParameters<S> before;
  ModelParameters<S> after_contrastive;
  ModelParameters<S> contrastive_forward;     // parameters the claad forward read
  ModelParameters<S> classification_forward;  // parameters the classifier forward read
};

// One back-to-back step on a standardized batch: contrastive update, then a
// fresh forward and a classification update through the unfrozen encoder.
template <typename S>
StepMetrics train_step(std::span<const WindowedExample> batch, ModelParameters<S>& params, OptimizerState<S>& opt,
                       const TrainConfig& cfg, const LossConfig& loss_cfg, std::mt19937_64& rng,
                       StepTrace<S>* trace = nullptr);

// argmax of the logits, ties resolved to class 0.
template <typename S>
int predict(const ModelParameters<S>& params, const WindowedExample& ex);

struct EpochRecord {
  int epoch = 0;
  double claad_loss = 0.0;
  double classification_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;  // NaN when there is no validation data
};

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  LossConfig loss_config;
  ModelParameters<TrainScalar> params;
  OptimizerState<TrainScalar> optimizer;
  CspModel csp;
  Standardization standardization;
  int epoch = 0;
  std::vector<EpochRecord> history;
};

struct FitOptions {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains from scratch on standardized examples. csp and standardization of
// the returned checkpoint are left for the caller to fill in.
Checkpoint fit(std::span<const WindowedExample> train, std::span<const WindowedExample> validation,
               const ModelConfig& model_cfg, const TrainConfig& train_cfg, const LossConfig& loss_cfg = {},
               const FitOptions& options = {});

double accuracy_on(const ModelParameters<TrainScalar>& params, std::span<const WindowedExample> examples);

struct AccuracyRow {
  std::string subject_id;
  double window_seconds = 0.0;
  std::size_t n_examples = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
};

// Clean-input accuracy grouped by (subject, window length). Examples are
// CSP windows; the checkpoint's standardization is applied here.
std::vector<AccuracyRow> evaluate_accuracy(std::span<const WindowedExample> examples, const Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rounds stored values to float32 so that in-memory and reloaded state agree.
void round_to_f32(CspModel& csp);
void round_to_f32(Standardization& s);

}  // namespace claad

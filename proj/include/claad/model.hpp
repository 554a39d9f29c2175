#pragma once

// Cross-modal attention encoder with probe and classifier heads. Every
// layer has a hand-written backward pass; the forward caches below hold
// exactly what those passes need.
//
// Conventions: activations are time-major [L x d]; a Linear layer computes
// y = x * weight + bias with weight stored [in x out] and bias [1 x out].

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace claad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct ModelConfig {
  int in_channels = 64;
  int d_model = 320;
  int n_heads = 8;
  int n_blocks = 5;
  int d_repr = 50;
  int probe_hidden = 25;
  std::vector<int> clf_dims{100, 50, 2};
  int window_len = 128;
  double layer_norm_eps = 1e-5;
  // Sinusoidal positions also added to both projected inputs before the first block.
  bool input_pe = true;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct Linear {
  Mat<S> weight;  // in x out
  Mat<S> bias;    // 1 x out
};

template <typename S>
struct LayerNormParams {
  Mat<S> gain;  // 1 x d
  Mat<S> bias;  // 1 x d
};

template <typename S>
struct AttentionParams {
  Mat<S> wq, wk, wv, wo;  // d x d, no biases
};

template <typename S>
struct BlockParams {
  LayerNormParams<S> norm_eeg;
  LayerNormParams<S> norm_audio;
  AttentionParams<S> attn;
  LayerNormParams<S> norm_mid;
  Linear<S> fc1;
  Linear<S> fc2;
};

// Named tensor store. The same instance feeds both augmentation paths.
template <typename S>
struct ModelParameters {
  ModelConfig config;
  Linear<S> eeg_in;    // in_channels -> d_model
  Linear<S> audio_in;  // 1 -> d_model
  std::vector<BlockParams<S>> blocks;
  Linear<S> fusion;  // 2 d_model -> d_repr
  Linear<S> probe1;  // d_repr -> probe_hidden
  Linear<S> probe2;  // probe_hidden -> d_repr
  std::vector<Linear<S>> classifier;

  // Zero tensors with the shapes implied by cfg.
  static ModelParameters zeros(const ModelConfig& cfg);
  ModelParameters zeros_like() const { return zeros(config); }

  std::vector<std::pair<std::string, Mat<S>*>> tensors();
  std::vector<std::pair<std::string, const Mat<S>*>> tensors() const;
  std::size_t parameter_count() const;

  template <typename T>
  ModelParameters<T> cast() const;
};

// Glorot-uniform weights, zero biases, unit layer-norm gains.
template <typename S>
ModelParameters<S> init_parameters(const ModelConfig& cfg, std::uint64_t seed);

template <typename S>
struct ExampleInput {
  Mat<S> eeg;    // L x in_channels
  Vec<S> env_a;  // L
  Vec<S> env_b;  // L
};

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> inv_std;
};

template <typename S>
struct AttentionCache {
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // one L x L row-stochastic matrix per head
  Mat<S> context;
};

template <typename S>
struct BlockCache {
  Mat<S> input;  // eeg-side stream entering the block
  LayerNormCache<S> ln_eeg, ln_audio, ln_mid;
  Mat<S> a, b;  // normalized eeg / audio streams
  AttentionCache<S> attn;
  Mat<S> n;   // normalized residual
  Mat<S> f;   // relu(fc1)
  Mat<S> r2;  // f + n
};

template <typename S>
struct PairingCache {
  Mat<S> audio;  // projected envelope, shared input of every block
  std::vector<BlockCache<S>> blocks;
  Mat<S> output;  // last block output
  RowVec<S> pooled;
};

template <typename S>
struct ForwardCache {
  Mat<S> eeg_in;    // input features, L x in_channels
  Vec<S> env[2];
  Mat<S> eeg_proj;  // L x d_model
  std::array<PairingCache<S>, 2> pairings;
  RowVec<S> concat;
  RowVec<S> z;
  RowVec<S> probe_pre;
  RowVec<S> p;
  std::vector<RowVec<S>> clf_pre;  // pre-activation of every classifier layer
  RowVec<S> logits;
};

template <typename S>
struct ExampleOutput {
  RowVec<S> z, p, logits;
};

template <typename S>
Mat<S> positional_encoding(Eigen::Index length, Eigen::Index d);

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const LayerNormParams<S>& params, double eps,
                  LayerNormCache<S>* cache = nullptr);

template <typename S>
Mat<S> multi_head_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v,
                            const AttentionParams<S>& params, int n_heads,
                            AttentionCache<S>* cache = nullptr);

// EEG stream queries the audio stream. `pe` may be passed to skip
// recomputing the positional table.
template <typename S>
Mat<S> cross_attention_block(const Mat<S>& eeg_stream, const Mat<S>& audio_stream,
                             const BlockParams<S>& params, const ModelConfig& cfg,
                             BlockCache<S>* cache = nullptr, const Mat<S>* pe = nullptr);

template <typename S>
RowVec<S> cmaa_encode(const ExampleInput<S>& x, const ModelParameters<S>& params,
                      ForwardCache<S>* cache = nullptr);

template <typename S>
RowVec<S> probe_forward(const RowVec<S>& z, const ModelParameters<S>& params);

template <typename S>
RowVec<S> classifier_forward(const RowVec<S>& z, const ModelParameters<S>& params);

template <typename S>
ExampleOutput<S> forward_example(const ExampleInput<S>& x, const ModelParameters<S>& params,
                                 ForwardCache<S>* cache = nullptr);

// Accumulates parameter gradients into `grads` for upstream gradients on
// p, logits and z (any may be empty, meaning zero).
template <typename S>
void backward_example(const ForwardCache<S>& cache, const ModelParameters<S>& params,
                      const RowVec<S>& d_p, const RowVec<S>& d_logits, const RowVec<S>& d_z,
                      ModelParameters<S>& grads);

}  // namespace claad

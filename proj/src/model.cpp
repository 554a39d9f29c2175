#include "claad/model.hpp"

#include <cmath>
#include <random>

#include "claad/error.hpp"

namespace claad {

void ModelConfig::validate() const {
  if (in_channels < 1 || d_model < 1 || n_heads < 1 || n_blocks < 1 || d_repr < 1 || probe_hidden < 1 ||
      window_len < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for the positional encoding");
  if (clf_dims.empty() || clf_dims.back() != 2) throw ConfigError("classifier dims must end with 2");
  for (int dim : clf_dims) {
    if (dim < 1) throw ConfigError("classifier dims must be >= 1");
  }
}

namespace {

template <typename S>
Linear<S> zero_linear(int in, int out) {
  return {Mat<S>::Zero(in, out), Mat<S>::Zero(1, out)};
}

template <typename S>
LayerNormParams<S> zero_norm(int d) {
  return {Mat<S>::Zero(1, d), Mat<S>::Zero(1, d)};
}

template <typename P, typename Out>
void collect_tensors(P& p, Out& out) {
  auto linear = [&](const std::string& name, auto& l) {
    out.emplace_back(name + ".weight", &l.weight);
    out.emplace_back(name + ".bias", &l.bias);
  };
  auto norm = [&](const std::string& name, auto& l) {
    out.emplace_back(name + ".gain", &l.gain);
    out.emplace_back(name + ".bias", &l.bias);
  };
  linear("eeg_in", p.eeg_in);
  linear("audio_in", p.audio_in);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i);
    auto& b = p.blocks[i];
    norm(pre + ".norm_eeg", b.norm_eeg);
    norm(pre + ".norm_audio", b.norm_audio);
    out.emplace_back(pre + ".attn.wq", &b.attn.wq);
    out.emplace_back(pre + ".attn.wk", &b.attn.wk);
    out.emplace_back(pre + ".attn.wv", &b.attn.wv);
    out.emplace_back(pre + ".attn.wo", &b.attn.wo);
    norm(pre + ".norm_mid", b.norm_mid);
    linear(pre + ".fc1", b.fc1);
    linear(pre + ".fc2", b.fc2);
  }
  linear("fusion", p.fusion);
  linear("probe.0", p.probe1);
  linear("probe.1", p.probe2);
  for (std::size_t i = 0; i < p.classifier.size(); ++i) linear("classifier." + std::to_string(i), p.classifier[i]);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename S>
Mat<S> relu_mask(const Mat<S>& x) {
  return (x.array() > S(0)).template cast<S>().matrix();
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const LayerNormCache<S>& c, const LayerNormParams<S>& p,
                           LayerNormParams<S>& g) {
  const Mat<S> dxhat = (dy.array().rowwise() * p.gain.row(0).array()).matrix();
  g.gain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.bias += dy.colwise().sum();
  const Vec<S> m1 = dxhat.rowwise().mean();
  const Vec<S> m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat<S> dx = dxhat.colwise() - m1;
  dx.array() -= c.xhat.array().colwise() * m2.array();
  dx.array().colwise() *= c.inv_std.array();
  return dx;
}

template <typename S>
void attention_backward(const Mat<S>& d_out, const Mat<S>& q_in, const Mat<S>& k_in, const Mat<S>& v_in,
                        const AttentionCache<S>& c, const AttentionParams<S>& p, AttentionParams<S>& g,
                        int n_heads, Mat<S>& d_q_in, Mat<S>& d_k_in, Mat<S>& d_v_in) {
  const Eigen::Index d = p.wq.cols();
  const Eigen::Index dk = d / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));

  g.wo.noalias() += c.context.transpose() * d_out;
  const Mat<S> d_ctx = d_out * p.wo.transpose();

  Mat<S> dq(c.q.rows(), d), dkm(c.k.rows(), d), dv(c.v.rows(), d);
  Mat<S> dp, ds;
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dk, dk);
    const Mat<S>& probs = c.probs[static_cast<std::size_t>(h)];
    dp.noalias() = d_ctx(Eigen::all, cols) * c.v(Eigen::all, cols).transpose();
    dv(Eigen::all, cols).noalias() = probs.transpose() * d_ctx(Eigen::all, cols);
    const Vec<S> row_dot = (dp.array() * probs.array()).rowwise().sum();
    ds = (probs.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
    dq(Eigen::all, cols).noalias() = ds * c.k(Eigen::all, cols);
    dkm(Eigen::all, cols).noalias() = ds.transpose() * c.q(Eigen::all, cols);
  }
  g.wq.noalias() += q_in.transpose() * dq;
  g.wk.noalias() += k_in.transpose() * dkm;
  g.wv.noalias() += v_in.transpose() * dv;
  d_q_in.noalias() = dq * p.wq.transpose();
  d_k_in.noalias() = dkm * p.wk.transpose();
  d_v_in.noalias() = dv * p.wv.transpose();
}

template <typename S>
Mat<S> block_backward(const Mat<S>& d_out, const BlockCache<S>& c, const BlockParams<S>& p, BlockParams<S>& g,
                      const ModelConfig& cfg, Mat<S>& d_audio) {
  g.fc2.weight.noalias() += c.r2.transpose() * d_out;
  g.fc2.bias += d_out.colwise().sum();
  const Mat<S> dr2 = d_out * p.fc2.weight.transpose();

  const Mat<S> df = dr2.cwiseProduct(relu_mask(c.f));
  g.fc1.weight.noalias() += c.n.transpose() * df;
  g.fc1.bias += df.colwise().sum();
  Mat<S> dn = dr2;
  dn.noalias() += df * p.fc1.weight.transpose();

  const Mat<S> dr1 = layer_norm_backward(dn, c.ln_mid, p.norm_mid, g.norm_mid);

  Mat<S> da, dbk, dbv;
  attention_backward(dr1, c.a, c.b, c.b, c.attn, p.attn, g.attn, cfg.n_heads, da, dbk, dbv);
  Mat<S> d_in = dr1 + layer_norm_backward(da, c.ln_eeg, p.norm_eeg, g.norm_eeg);
  dbk += dbv;
  d_audio += layer_norm_backward(dbk, c.ln_audio, p.norm_audio, g.norm_audio);
  return d_in;
}

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

template <typename S>
ModelParameters<S> ModelParameters<S>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParameters p;
  p.config = cfg;
  const int d = cfg.d_model;
  p.eeg_in = zero_linear<S>(cfg.in_channels, d);
  p.audio_in = zero_linear<S>(1, d);
  p.blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
  for (auto& b : p.blocks) {
    b.norm_eeg = zero_norm<S>(d);
    b.norm_audio = zero_norm<S>(d);
    b.norm_mid = zero_norm<S>(d);
    b.attn.wq = Mat<S>::Zero(d, d);
    b.attn.wk = Mat<S>::Zero(d, d);
    b.attn.wv = Mat<S>::Zero(d, d);
    b.attn.wo = Mat<S>::Zero(d, d);
    b.fc1 = zero_linear<S>(d, d);
    b.fc2 = zero_linear<S>(d, d);
  }
  p.fusion = zero_linear<S>(2 * d, cfg.d_repr);
  p.probe1 = zero_linear<S>(cfg.d_repr, cfg.probe_hidden);
  p.probe2 = zero_linear<S>(cfg.probe_hidden, cfg.d_repr);
  int in = cfg.d_repr;
  for (int out : cfg.clf_dims) {
    p.classifier.push_back(zero_linear<S>(in, out));
    in = out;
  }
  return p;
}

template <typename S>
std::vector<std::pair<std::string, Mat<S>*>> ModelParameters<S>::tensors() {
  std::vector<std::pair<std::string, Mat<S>*>> out;
  collect_tensors(*this, out);
  return out;
}

template <typename S>
std::vector<std::pair<std::string, const Mat<S>*>> ModelParameters<S>::tensors() const {
  std::vector<std::pair<std::string, const Mat<S>*>> out;
  collect_tensors(*this, out);
  return out;
}

template <typename S>
std::size_t ModelParameters<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

template <typename S>
template <typename T>
ModelParameters<T> ModelParameters<S>::cast() const {
  ModelParameters<T> out = ModelParameters<T>::zeros(config);
  auto src = tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<T>();
  return out;
}

template <typename S>
ModelParameters<S> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParameters<S> p = ModelParameters<S>::zeros(cfg);
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : p.tensors()) {
    if (ends_with(name, ".gain")) {
      t->setOnes();
    } else if (ends_with(name, ".bias")) {
      t->setZero();
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
      std::uniform_real_distribution<double> uni(-limit, limit);
      for (Eigen::Index j = 0; j < t->cols(); ++j) {
        for (Eigen::Index i = 0; i < t->rows(); ++i) (*t)(i, j) = static_cast<S>(uni(rng));
      }
    }
  }
  return p;
}

template <typename S>
Mat<S> positional_encoding(Eigen::Index length, Eigen::Index d) {
  if (d % 2 != 0) throw InvalidArgument("positional encoding needs an even width");
  Mat<S> pe(length, d);
  for (Eigen::Index i = 0; i < d / 2; ++i) {
    const double inv_freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    for (Eigen::Index t = 0; t < length; ++t) {
      const double angle = static_cast<double>(t) * inv_freq;
      pe(t, 2 * i) = static_cast<S>(std::sin(angle));
      pe(t, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return pe;
}

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const LayerNormParams<S>& params, double eps, LayerNormCache<S>* cache) {
  const auto d = static_cast<S>(x.cols());
  const Vec<S> mean = x.rowwise().mean();
  Mat<S> xhat = x.colwise() - mean;
  const Vec<S> inv = ((xhat.rowwise().squaredNorm() / d).array() + static_cast<S>(eps)).rsqrt();
  xhat.array().colwise() *= inv.array();
  Mat<S> y = ((xhat.array().rowwise() * params.gain.row(0).array()).rowwise() + params.bias.row(0).array()).matrix();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv;
  }
  return y;
}

template <typename S>
Mat<S> multi_head_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, const AttentionParams<S>& params,
                            int n_heads, AttentionCache<S>* cache) {
  const Eigen::Index d = params.wq.cols();
  check_shape(n_heads >= 1 && d % n_heads == 0, "model width must be divisible by the head count");
  check_shape(q.cols() == params.wq.rows() && k.cols() == params.wk.rows() && v.cols() == params.wv.rows(),
              "attention input width does not match projections");
  check_shape(k.rows() == v.rows(), "keys and values must have the same length");

  const Eigen::Index dk = d / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  Mat<S> qp = q * params.wq;
  Mat<S> kp = k * params.wk;
  Mat<S> vp = v * params.wv;
  Mat<S> ctx(q.rows(), d);
  Mat<S> scores(q.rows(), k.rows());
  if (cache != nullptr) cache->probs.resize(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dk, dk);
    scores.noalias() = qp(Eigen::all, cols) * kp(Eigen::all, cols).transpose();
    scores *= scale;
    const Vec<S> row_max = scores.rowwise().maxCoeff();
    scores = (scores.colwise() - row_max).array().exp().matrix();
    const Vec<S> row_sum = scores.rowwise().sum();
    scores.array().colwise() /= row_sum.array();
    ctx(Eigen::all, cols).noalias() = scores * vp(Eigen::all, cols);
    if (cache != nullptr) cache->probs[static_cast<std::size_t>(h)] = scores;
  }
  Mat<S> out = ctx * params.wo;
  if (cache != nullptr) {
    cache->q = std::move(qp);
    cache->k = std::move(kp);
    cache->v = std::move(vp);
    cache->context = std::move(ctx);
  }
  return out;
}

template <typename S>
Mat<S> cross_attention_block(const Mat<S>& eeg_stream, const Mat<S>& audio_stream, const BlockParams<S>& params,
                             const ModelConfig& cfg, BlockCache<S>* cache, const Mat<S>* pe) {
  check_shape(eeg_stream.rows() == audio_stream.rows(), "EEG and audio streams differ in length");
  check_shape(eeg_stream.cols() == cfg.d_model && audio_stream.cols() == cfg.d_model,
              "stream width does not match d_model");
  const double eps = cfg.layer_norm_eps;
  BlockCache<S>* c = cache;

  Mat<S> a = layer_norm(eeg_stream, params.norm_eeg, eps, c ? &c->ln_eeg : nullptr);
  Mat<S> b = layer_norm(audio_stream, params.norm_audio, eps, c ? &c->ln_audio : nullptr);
  Mat<S> r1 = multi_head_attention(a, b, b, params.attn, cfg.n_heads, c ? &c->attn : nullptr);
  r1 += eeg_stream;
  Mat<S> n = layer_norm(r1, params.norm_mid, eps, c ? &c->ln_mid : nullptr);
  Mat<S> f = n * params.fc1.weight;
  f.rowwise() += params.fc1.bias.row(0);
  f = f.cwiseMax(S(0));
  Mat<S> r2 = f + n;
  Mat<S> out = r2 * params.fc2.weight;
  out.rowwise() += params.fc2.bias.row(0);
  if (pe != nullptr) {
    check_shape(pe->rows() == out.rows() && pe->cols() == out.cols(), "positional table shape mismatch");
    out += *pe;
  } else {
    out += positional_encoding<S>(out.rows(), out.cols());
  }
  if (c != nullptr) {
    c->input = eeg_stream;
    c->a = std::move(a);
    c->b = std::move(b);
    c->n = std::move(n);
    c->f = std::move(f);
    c->r2 = std::move(r2);
  }
  return out;
}

template <typename S>
RowVec<S> cmaa_encode(const ExampleInput<S>& x, const ModelParameters<S>& params, ForwardCache<S>* cache) {
  const ModelConfig& cfg = params.config;
  const Eigen::Index len = x.eeg.rows();
  const Eigen::Index d = cfg.d_model;
  check_shape(len >= 1, "empty input window");
  check_shape(x.eeg.cols() == cfg.in_channels, "EEG features have " + std::to_string(x.eeg.cols()) +
                                                   " channels, model expects " + std::to_string(cfg.in_channels));
  check_shape(x.env_a.size() == len && x.env_b.size() == len, "envelopes must match the EEG window length");

  Mat<S> e0 = x.eeg * params.eeg_in.weight;
  e0.rowwise() += params.eeg_in.bias.row(0);
  const Mat<S> pe = positional_encoding<S>(len, d);
  if (cfg.input_pe) e0 += pe;

  RowVec<S> concat(2 * d);
  for (int s = 0; s < 2; ++s) {
    const Vec<S>& env = s == 0 ? x.env_a : x.env_b;
    Mat<S> audio = env * params.audio_in.weight;
    audio.rowwise() += params.audio_in.bias.row(0);
    if (cfg.input_pe) audio += pe;
    PairingCache<S>* pc = cache ? &cache->pairings[static_cast<std::size_t>(s)] : nullptr;
    if (pc != nullptr) pc->blocks.resize(params.blocks.size());
    Mat<S> h = e0;
    for (std::size_t k = 0; k < params.blocks.size(); ++k) {
      h = cross_attention_block(h, audio, params.blocks[k], cfg, pc ? &pc->blocks[k] : nullptr, &pe);
    }
    const RowVec<S> pooled = h.colwise().mean();
    concat.segment(s * d, d) = pooled;
    if (pc != nullptr) {
      pc->audio = std::move(audio);
      pc->output = std::move(h);
      pc->pooled = pooled;
    }
  }
  RowVec<S> z = concat * params.fusion.weight + params.fusion.bias;
  if (cache != nullptr) {
    cache->eeg_in = x.eeg;
    cache->env[0] = x.env_a;
    cache->env[1] = x.env_b;
    cache->eeg_proj = std::move(e0);
    cache->concat = concat;
    cache->z = z;
  }
  return z;
}

template <typename S>
RowVec<S> probe_forward(const RowVec<S>& z, const ModelParameters<S>& params) {
  const RowVec<S> hidden = (z * params.probe1.weight + params.probe1.bias).cwiseMax(S(0));
  return hidden * params.probe2.weight + params.probe2.bias;
}

template <typename S>
RowVec<S> classifier_forward(const RowVec<S>& z, const ModelParameters<S>& params) {
  RowVec<S> act = z;
  for (std::size_t l = 0; l < params.classifier.size(); ++l) {
    act = act * params.classifier[l].weight + params.classifier[l].bias;
    if (l + 1 < params.classifier.size()) act = act.cwiseMax(S(0));
  }
  return act;
}

template <typename S>
ExampleOutput<S> forward_example(const ExampleInput<S>& x, const ModelParameters<S>& params,
                                 ForwardCache<S>* cache) {
  ExampleOutput<S> out;
  out.z = cmaa_encode(x, params, cache);
  if (cache == nullptr) {
    out.p = probe_forward(out.z, params);
    out.logits = classifier_forward(out.z, params);
    return out;
  }
  cache->probe_pre = out.z * params.probe1.weight + params.probe1.bias;
  out.p = cache->probe_pre.cwiseMax(S(0)) * params.probe2.weight + params.probe2.bias;
  cache->p = out.p;

  cache->clf_pre.clear();
  RowVec<S> act = out.z;
  for (std::size_t l = 0; l < params.classifier.size(); ++l) {
    RowVec<S> pre = act * params.classifier[l].weight + params.classifier[l].bias;
    act = l + 1 < params.classifier.size() ? RowVec<S>(pre.cwiseMax(S(0))) : pre;
    cache->clf_pre.push_back(std::move(pre));
  }
  out.logits = act;
  cache->logits = act;
  return out;
}

template <typename S>
void backward_example(const ForwardCache<S>& cache, const ModelParameters<S>& params, const RowVec<S>& d_p,
                      const RowVec<S>& d_logits, const RowVec<S>& d_z, ModelParameters<S>& grads) {
  const ModelConfig& cfg = params.config;
  RowVec<S> dz = d_z.size() > 0 ? d_z : RowVec<S>(RowVec<S>::Zero(cfg.d_repr));

  if (d_p.size() > 0) {
    const RowVec<S> hidden = cache.probe_pre.cwiseMax(S(0));
    grads.probe2.weight.noalias() += hidden.transpose() * d_p;
    grads.probe2.bias += d_p;
    const RowVec<S> dh =
        (d_p * params.probe2.weight.transpose()).cwiseProduct(RowVec<S>(relu_mask<S>(cache.probe_pre)));
    grads.probe1.weight.noalias() += cache.z.transpose() * dh;
    grads.probe1.bias += dh;
    dz.noalias() += dh * params.probe1.weight.transpose();
  }

  if (d_logits.size() > 0) {
    RowVec<S> d = d_logits;
    for (std::size_t l = params.classifier.size(); l-- > 0;) {
      const RowVec<S> in = l == 0 ? cache.z : RowVec<S>(cache.clf_pre[l - 1].cwiseMax(S(0)));
      grads.classifier[l].weight.noalias() += in.transpose() * d;
      grads.classifier[l].bias += d;
      const RowVec<S> d_in = d * params.classifier[l].weight.transpose();
      if (l > 0) {
        d = d_in.cwiseProduct(RowVec<S>(relu_mask<S>(cache.clf_pre[l - 1])));
      } else {
        dz += d_in;
      }
    }
  }

  if (dz.isZero(0)) return;

  grads.fusion.weight.noalias() += cache.concat.transpose() * dz;
  grads.fusion.bias += dz;
  const RowVec<S> d_concat = dz * params.fusion.weight.transpose();

  const Eigen::Index len = cache.eeg_proj.rows();
  const Eigen::Index d = cfg.d_model;
  Mat<S> d_e0 = Mat<S>::Zero(len, d);
  for (int s = 0; s < 2; ++s) {
    const PairingCache<S>& pc = cache.pairings[static_cast<std::size_t>(s)];
    Mat<S> dh = d_concat.segment(s * d, d).replicate(len, 1) / static_cast<S>(len);
    Mat<S> d_audio = Mat<S>::Zero(len, d);
    for (std::size_t k = params.blocks.size(); k-- > 0;) {
      dh = block_backward(dh, pc.blocks[k], params.blocks[k], grads.blocks[k], cfg, d_audio);
    }
    d_e0 += dh;
    grads.audio_in.weight.noalias() += cache.env[s].transpose() * d_audio;
    grads.audio_in.bias += d_audio.colwise().sum();
  }
  grads.eeg_in.weight.noalias() += cache.eeg_in.transpose() * d_e0;
  grads.eeg_in.bias += d_e0.colwise().sum();
}

#define CLAAD_INSTANTIATE_MODEL(S)                                                                          \
  template struct ModelParameters<S>;                                                                       \
  template ModelParameters<S> init_parameters<S>(const ModelConfig&, std::uint64_t);                        \
  template Mat<S> positional_encoding<S>(Eigen::Index, Eigen::Index);                                       \
  template Mat<S> layer_norm<S>(const Mat<S>&, const LayerNormParams<S>&, double, LayerNormCache<S>*);      \
  template Mat<S> multi_head_attention<S>(const Mat<S>&, const Mat<S>&, const Mat<S>&,                      \
                                          const AttentionParams<S>&, int, AttentionCache<S>*);              \
  template Mat<S> cross_attention_block<S>(const Mat<S>&, const Mat<S>&, const BlockParams<S>&,             \
                                           const ModelConfig&, BlockCache<S>*, const Mat<S>*);              \
  template RowVec<S> cmaa_encode<S>(const ExampleInput<S>&, const ModelParameters<S>&, ForwardCache<S>*);   \
  template RowVec<S> probe_forward<S>(const RowVec<S>&, const ModelParameters<S>&);                         \
  template RowVec<S> classifier_forward<S>(const RowVec<S>&, const ModelParameters<S>&);                    \
  template ExampleOutput<S> forward_example<S>(const ExampleInput<S>&, const ModelParameters<S>&,           \
                                               ForwardCache<S>*);                                           \
  template void backward_example<S>(const ForwardCache<S>&, const ModelParameters<S>&, const RowVec<S>&,    \
                                    const RowVec<S>&, const RowVec<S>&, ModelParameters<S>&);

CLAAD_INSTANTIATE_MODEL(float)
CLAAD_INSTANTIATE_MODEL(double)
#undef CLAAD_INSTANTIATE_MODEL

template ModelParameters<double> ModelParameters<float>::cast<double>() const;
template ModelParameters<float> ModelParameters<double>::cast<float>() const;
template ModelParameters<float> ModelParameters<float>::cast<float>() const;
template ModelParameters<double> ModelParameters<double>::cast<double>() const;

}  // namespace claad

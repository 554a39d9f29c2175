#include "claad/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "claad/error.hpp"

namespace claad {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(kPi * f_hz / fs); }

cplx biquad_response(const Biquad& s, cplx z) {
  const cplx zi = 1.0 / z;
  return (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
}

// Groups digital poles into conjugate pairs, then pairs the leftover reals.
std::vector<std::pair<cplx, cplx>> pair_poles(std::vector<cplx> poles, bool allow_single) {
  std::vector<std::pair<cplx, cplx>> out;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) <= 1e-12 * std::max(1.0, std::abs(p))) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      out.emplace_back(p, std::conj(p));
    }
  }
  std::sort(reals.begin(), reals.end());
  std::size_t i = 0;
  for (; i + 1 < reals.size(); i += 2) out.emplace_back(cplx(reals[i]), cplx(reals[i + 1]));
  if (i < reals.size()) {
    if (!allow_single) throw InvalidSpec("unpaired real pole in band-pass design");
    out.emplace_back(cplx(reals[i]), cplx(0.0, std::numeric_limits<double>::quiet_NaN()));
  }
  return out;
}

Biquad denominator_section(const std::pair<cplx, cplx>& pr) {
  Biquad s;
  if (std::isnan(pr.second.imag())) {
    s.a1 = -pr.first.real();
    s.a2 = 0.0;
  } else {
    s.a1 = -(pr.first + pr.second).real();
    s.a2 = (pr.first * pr.second).real();
  }
  return s;
}

void normalize_section(Biquad& s, cplx z_ref) {
  const double g = std::abs(biquad_response(s, z_ref));
  s.b0 /= g;
  s.b1 /= g;
  s.b2 /= g;
}

void run_cascade(const SosFilter& f, const std::vector<std::array<double, 2>>& zi_unit,
                 Eigen::VectorXd& x) {
  const double x0 = x.size() > 0 ? x[0] : 0.0;
  for (std::size_t k = 0; k < f.sections.size(); ++k) {
    const Biquad& s = f.sections[k];
    double s1 = zi_unit[k][0] * x0;
    double s2 = zi_unit[k][1] * x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x[i];
      const double y = s.b0 * v + s1;
      s1 = s.b1 * v - s.a1 * y + s2;
      s2 = s.b2 * v - s.a2 * y;
      x[i] = y;
    }
  }
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

long long to_millihertz(double fs) { return std::llround(fs * 1000.0); }

// Windowed-sinc low-pass prototype for the polyphase resampler, scaled so
// that its DC gain equals the upsampling factor.
std::vector<double> resample_taps(long long up, long long down, long long& half_len) {
  const long long max_rate = std::max(up, down);
  const double cutoff = 1.0 / static_cast<double>(max_rate);
  half_len = 10 * max_rate;
  const long long n_taps = 2 * half_len + 1;
  constexpr double beta = 5.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<std::size_t>(n_taps));
  double sum = 0.0;
  for (long long j = 0; j < n_taps; ++j) {
    const double m = static_cast<double>(j - half_len);
    const double arg = cutoff * m;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
    const double r = 2.0 * static_cast<double>(j) / static_cast<double>(n_taps - 1) - 1.0;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(j)] = cutoff * sinc * w;
    sum += h[static_cast<std::size_t>(j)];
  }
  const double scale = static_cast<double>(up) / sum;
  for (double& v : h) v *= scale;
  return h;
}

}  // namespace

void Waveform::validate() const {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw InvalidArgument("waveform sample rate must be > 0");
  if (samples.size() < 1) throw InvalidArgument("waveform must hold at least one sample");
  if (!samples.allFinite()) throw InvalidArgument("waveform contains non-finite samples");
}

Eigen::Index MultiChannelRecording::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < channel_names.size(); ++i) {
    if (channel_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

void MultiChannelRecording::validate() const {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw InvalidArgument("recording sample rate must be > 0");
  if (data.rows() < 1) throw InvalidArgument("recording needs at least one channel");
  if (static_cast<Eigen::Index>(channel_names.size()) != data.rows()) {
    throw ShapeError("recording has " + std::to_string(data.rows()) + " rows but " +
                     std::to_string(channel_names.size()) + " channel names");
  }
  std::set<std::string> seen(channel_names.begin(), channel_names.end());
  if (seen.size() != channel_names.size()) throw InvalidArgument("channel names must be unique");
  if (!all_finite(data)) throw InvalidArgument("recording contains non-finite samples");
}

void FilterSpec::validate(double fs) const {
  if (order < 1) throw InvalidSpec("filter order must be >= 1");
  const double nyquist = fs / 2.0;
  if (kind == FilterKind::Bandpass) {
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist)) {
      throw InvalidSpec("band edges must satisfy 0 < low < high < fs/2 (low=" +
                        std::to_string(low_hz) + ", high=" + std::to_string(high_hz) +
                        ", fs=" + std::to_string(fs) + ")");
    }
  } else if (!(high_hz > 0.0 && high_hz < nyquist)) {
    throw InvalidSpec("low-pass cutoff must satisfy 0 < cutoff < fs/2");
  }
}

std::vector<std::array<double, 2>> SosFilter::step_initial_state() const {
  std::vector<std::array<double, 2>> zi;
  zi.reserve(sections.size());
  double gain = 1.0;  // steady-state amplitude entering this section
  for (const Biquad& s : sections) {
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = gain * dc;
    const double z2 = gain * s.b2 - s.a2 * y;
    const double z1 = y - gain * s.b0;
    zi.push_back({z1, z2});
    gain = y;
  }
  return zi;
}

std::complex<double> SosFilter::response(double freq_hz, double fs) const {
  const cplx z = std::polar(1.0, 2.0 * kPi * freq_hz / fs);
  cplx h(1.0, 0.0);
  for (const Biquad& s : sections) h *= biquad_response(s, z);
  return h;
}

SosFilter design_butterworth(const FilterSpec& spec, double fs) {
  spec.validate(fs);
  const int n = spec.order;
  std::vector<cplx> proto;
  proto.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) proto.push_back(std::polar(1.0, kPi * (2.0 * k + n + 1) / (2.0 * n)));

  SosFilter f;
  std::vector<cplx> poles;
  if (spec.kind == FilterKind::Lowpass) {
    const double wc = prewarp(spec.high_hz, fs);
    for (const cplx& p : proto) poles.push_back(bilinear(p * wc, fs));
    for (const auto& pr : pair_poles(poles, true)) {
      Biquad s = denominator_section(pr);
      if (std::isnan(pr.second.imag())) {
        s.b0 = 1.0;
        s.b1 = 1.0;
        s.b2 = 0.0;
      } else {
        s.b0 = 1.0;
        s.b1 = 2.0;
        s.b2 = 1.0;
      }
      normalize_section(s, cplx(1.0, 0.0));
      f.sections.push_back(s);
    }
    f.order = n;
  } else {
    const double w1 = prewarp(spec.low_hz, fs);
    const double w2 = prewarp(spec.high_hz, fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;
    for (const cplx& p : proto) {
      const cplx a = p * bw / 2.0;
      const cplx d = std::sqrt(a * a - w0sq);
      poles.push_back(bilinear(a + d, fs));
      poles.push_back(bilinear(a - d, fs));
    }
    const cplx z_center = std::polar(1.0, 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * fs)));
    for (const auto& pr : pair_poles(poles, false)) {
      Biquad s = denominator_section(pr);
      s.b0 = 1.0;
      s.b1 = 0.0;
      s.b2 = -1.0;
      normalize_section(s, z_center);
      f.sections.push_back(s);
    }
    f.order = 2 * n;
  }
  return f;
}

Eigen::VectorXd filtfilt(const SosFilter& filter, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index n = x.size();
  if (n == 0) return Eigen::VectorXd();
  const Eigen::Index pad = std::min<Eigen::Index>(3 * filter.order, n - 1);

  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(pad, n) = x;

  const auto zi = filter.step_initial_state();
  run_cascade(filter, zi, ext);
  ext.reverseInPlace();
  run_cascade(filter, zi, ext);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

Waveform bandpass_filter(const Waveform& x, const FilterSpec& spec) {
  x.validate();
  const SosFilter f = design_butterworth(spec, x.fs);
  return Waveform{filtfilt(f, x.samples), x.fs};
}

MultiChannelRecording bandpass_filter(const MultiChannelRecording& x, const FilterSpec& spec) {
  x.validate();
  const SosFilter f = design_butterworth(spec, x.fs);
  MultiChannelRecording out{Eigen::MatrixXd(x.data.rows(), x.data.cols()), x.fs, x.channel_names};
  for (Eigen::Index c = 0; c < x.data.rows(); ++c) {
    const Eigen::VectorXd row = x.data.row(c).transpose();
    out.data.row(c) = filtfilt(f, row).transpose();
  }
  return out;
}

Eigen::VectorXd resample_samples(const Eigen::Ref<const Eigen::VectorXd>& x, double fs_in,
                                 double fs_out) {
  if (!(fs_out > 0.0) || !std::isfinite(fs_out)) {
    throw InvalidArgument("output sample rate must be > 0");
  }
  if (!(fs_in > 0.0)) throw InvalidArgument("input sample rate must be > 0");
  const long long in_m = to_millihertz(fs_in);
  const long long out_m = to_millihertz(fs_out);
  if (in_m <= 0 || out_m <= 0) throw InvalidArgument("sample rates below 1 mHz are not supported");
  const long long g = std::gcd(in_m, out_m);
  const long long up = out_m / g;
  const long long down = in_m / g;
  if (up == down) return x;

  const long long n = x.size();
  const long long n_out = (2 * n * up + down) / (2 * down);  // round(n * up / down)
  long long half_len = 0;
  const std::vector<double> h = resample_taps(up, down, half_len);
  const long long n_taps = static_cast<long long>(h.size());

  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_out);
  for (long long m = 0; m < n_out; ++m) {
    const long long t = m * down + half_len;
    long long k_lo = t - (n_taps - 1) > 0 ? (t - (n_taps - 1) + up - 1) / up : 0;
    long long k_hi = std::min(n - 1, t / up);
    double acc = 0.0;
    for (long long k = k_lo; k <= k_hi; ++k) {
      acc += x[k] * h[static_cast<std::size_t>(t - k * up)];
    }
    y[m] = acc;
  }
  return y;
}

Waveform resample(const Waveform& x, double fs_out) {
  x.validate();
  return Waveform{resample_samples(x.samples, x.fs, fs_out), fs_out};
}

MultiChannelRecording resample(const MultiChannelRecording& x, double fs_out) {
  x.validate();
  MultiChannelRecording out;
  out.fs = fs_out;
  out.channel_names = x.channel_names;
  for (Eigen::Index c = 0; c < x.data.rows(); ++c) {
    const Eigen::VectorXd row = x.data.row(c).transpose();
    const Eigen::VectorXd r = resample_samples(row, x.fs, fs_out);
    if (c == 0) out.data.resize(x.data.rows(), r.size());
    out.data.row(c) = r.transpose();
  }
  return out;
}

MultiChannelRecording rereference(const MultiChannelRecording& rec, std::string_view ref_channel) {
  rec.validate();
  const Eigen::Index ref = rec.channel_index(ref_channel);
  if (ref < 0) throw MissingChannel("reference channel '" + std::string(ref_channel) + "' not found");
  MultiChannelRecording out = rec;
  const Eigen::RowVectorXd ref_row = rec.data.row(ref);
  out.data.rowwise() -= ref_row;
  out.data.row(ref).setZero();
  return out;
}

double erb_bandwidth(double freq_hz) { return 24.7 * (4.37 * freq_hz / 1000.0 + 1.0); }

std::vector<double> erb_center_frequencies(double f_lo, double f_hi, int n_bands) {
  if (n_bands < 1) throw InvalidArgument("need at least one gammatone band");
  if (!(f_lo > 0.0 && f_lo < f_hi)) throw InvalidArgument("gammatone range must satisfy 0 < f_lo < f_hi");
  auto to_rate = [](double f) { return 21.4 * std::log10(4.37 * f / 1000.0 + 1.0); };
  auto from_rate = [](double e) { return (std::pow(10.0, e / 21.4) - 1.0) * 1000.0 / 4.37; };
  std::vector<double> centers(static_cast<std::size_t>(n_bands));
  if (n_bands == 1) {
    centers[0] = from_rate(0.5 * (to_rate(f_lo) + to_rate(f_hi)));
    return centers;
  }
  const double lo = to_rate(f_lo);
  const double step = (to_rate(f_hi) - lo) / (n_bands - 1);
  for (int b = 0; b < n_bands; ++b) centers[static_cast<std::size_t>(b)] = from_rate(lo + step * b);
  centers.back() = f_hi;
  centers.front() = f_lo;
  return centers;
}

namespace {

// Fourth-order complex gammatone (cascade of four one-pole resonators).
void gammatone_band(const Eigen::VectorXd& x, double fs, double fc, Eigen::Ref<Eigen::VectorXd> out) {
  const double bw = 1.019 * erb_bandwidth(fc);
  const double lambda = std::exp(-2.0 * kPi * bw / fs);
  const cplx pole = std::polar(lambda, 2.0 * kPi * fc / fs);
  const double gain = 2.0 * std::pow(1.0 - lambda, 4);
  cplx s1(0.0), s2(0.0), s3(0.0), s4(0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    s1 = gain * x[i] + pole * s1;
    s2 = s1 + pole * s2;
    s3 = s2 + pole * s3;
    s4 = s3 + pole * s4;
    out[i] = s4.real();
  }
}

void check_envelope_input(const Waveform& audio, const EnvelopeConfig& cfg) {
  audio.validate();
  if (audio.fs < 2.0 * cfg.f_hi) {
    throw InvalidArgument("audio sample rate " + std::to_string(audio.fs) +
                          " Hz is below twice the top gammatone frequency");
  }
  if (!(cfg.exponent > 0.0)) throw InvalidArgument("power-law exponent must be > 0");
}

}  // namespace

Eigen::MatrixXd gammatone_subbands(const Waveform& audio, const std::vector<double>& centers) {
  audio.validate();
  Eigen::MatrixXd bands(static_cast<Eigen::Index>(centers.size()), audio.size());
  Eigen::VectorXd tmp(audio.size());
  for (std::size_t b = 0; b < centers.size(); ++b) {
    if (!(centers[b] > 0.0 && centers[b] < audio.fs / 2.0)) {
      throw InvalidArgument("gammatone center frequency outside (0, fs/2)");
    }
    gammatone_band(audio.samples, audio.fs, centers[b], tmp);
    bands.row(static_cast<Eigen::Index>(b)) = tmp.transpose();
  }
  return bands;
}

Eigen::VectorXd compressed_subband_sum(const Waveform& audio, const EnvelopeConfig& cfg) {
  check_envelope_input(audio, cfg);
  const auto centers = erb_center_frequencies(cfg.f_lo, cfg.f_hi, cfg.n_bands);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(audio.size());
  Eigen::VectorXd band(audio.size());
  for (double fc : centers) {
    gammatone_band(audio.samples, audio.fs, fc, band);
    acc.array() += band.array().abs().pow(cfg.exponent);
  }
  return acc;
}

Waveform gammatone_envelope(const Waveform& audio, const EnvelopeConfig& cfg) {
  Waveform env{compressed_subband_sum(audio, cfg), audio.fs};
  if (cfg.post_filter) env = bandpass_filter(env, cfg.post_band);
  return resample(env, cfg.out_fs);
}

}  // namespace claad

#pragma once

// EEG and audio preprocessing: zero-phase Butterworth filtering, rational
// polyphase resampling, channel re-referencing and gammatone power-law
// envelope extraction.

#include <array>
#include <complex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace claad {

struct Waveform {
  Eigen::VectorXd samples;
  double fs = 0.0;

  Eigen::Index size() const { return samples.size(); }
  void validate() const;
};

struct MultiChannelRecording {
  Eigen::MatrixXd data;  // channels x samples
  double fs = 0.0;
  std::vector<std::string> channel_names;

  Eigen::Index n_channels() const { return data.rows(); }
  Eigen::Index n_samples() const { return data.cols(); }
  Eigen::Index channel_index(std::string_view name) const;  // -1 if absent
  void validate() const;
};

enum class FilterKind { Bandpass, Lowpass };

struct FilterSpec {
  FilterKind kind = FilterKind::Bandpass;
  double low_hz = 1.0;   // ignored for lowpass
  double high_hz = 9.0;  // cutoff for lowpass
  int order = 4;

  void validate(double fs) const;
};

// Direct-form II transposed biquad, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct SosFilter {
  std::vector<Biquad> sections;
  int order = 0;  // overall polynomial order

  // Steady-state section states for a unit-step input.
  std::vector<std::array<double, 2>> step_initial_state() const;
  std::complex<double> response(double freq_hz, double fs) const;
};

SosFilter design_butterworth(const FilterSpec& spec, double fs);

// Forward-backward filtering with odd reflection padding of 3x the filter
// order and steady-state initial conditions at both ends.
Eigen::VectorXd filtfilt(const SosFilter& filter, const Eigen::Ref<const Eigen::VectorXd>& x);

Waveform bandpass_filter(const Waveform& x, const FilterSpec& spec);
MultiChannelRecording bandpass_filter(const MultiChannelRecording& x, const FilterSpec& spec);

// Output length is round(n * fs_out / fs_in). Anti-aliasing is part of the
// polyphase FIR whenever fs_out < fs_in.
Eigen::VectorXd resample_samples(const Eigen::Ref<const Eigen::VectorXd>& x, double fs_in,
                                 double fs_out);
Waveform resample(const Waveform& x, double fs_out);
MultiChannelRecording resample(const MultiChannelRecording& x, double fs_out);

MultiChannelRecording rereference(const MultiChannelRecording& rec, std::string_view ref_channel);

struct EnvelopeConfig {
  double f_lo = 150.0;
  double f_hi = 4000.0;
  int n_bands = 28;
  double exponent = 0.6;
  double out_fs = 64.0;
  bool post_filter = true;
  FilterSpec post_band{FilterKind::Bandpass, 1.0, 9.0, 4};
};

// Equivalent rectangular bandwidth (Glasberg & Moore) in Hz.
double erb_bandwidth(double freq_hz);

// n centers uniformly spaced on the ERB-rate scale, ascending, endpoints included.
std::vector<double> erb_center_frequencies(double f_lo, double f_hi, int n_bands);

// Real-valued 4th-order gammatone subband signals, bands x samples. Each band
// is a cascade of four complex one-pole resonators normalized to unit gain at
// its center frequency.
Eigen::MatrixXd gammatone_subbands(const Waveform& audio, const std::vector<double>& centers);

// sum_b |subband_b|^exponent at the audio sample rate, before any filtering.
Eigen::VectorXd compressed_subband_sum(const Waveform& audio, const EnvelopeConfig& cfg);

Waveform gammatone_envelope(const Waveform& audio, const EnvelopeConfig& cfg = {});

}  // namespace claad

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "claad/error.hpp"
#include "claad/sigproc.hpp"
#include "test_util.hpp"

using namespace claad;
using testutil::correlation;
using testutil::dft_bin;
using testutil::tone;

namespace {

const FilterSpec kBand{FilterKind::Bandpass, 1.0, 9.0, 4};

// Amplitude of a filtered tone measured by projecting the middle section
// (an integer number of periods) onto the tone frequency.
double passed_amplitude(double freq, double fs) {
  const Eigen::Index n = static_cast<Eigen::Index>(fs * 40);
  const Eigen::VectorXd y = bandpass_filter(Waveform{tone(freq, fs, n), fs}, kBand).samples;
  const Eigen::Index skip = static_cast<Eigen::Index>(fs * 10);
  return std::abs(dft_bin(y.segment(skip, n - 2 * skip), freq, fs));
}

}  // namespace

TEST_CASE("bandpass removes a constant offset") {
  const Waveform dc{Eigen::VectorXd::Ones(64 * 30), 64.0};
  const Eigen::VectorXd y = bandpass_filter(dc, kBand).samples;
  const Eigen::Index trim = 64 * 5;
  CHECK(y.segment(trim, y.size() - 2 * trim).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(design_butterworth(kBand, 64.0).response(0.0, 64.0)) < 1e-2);  // >= 40 dB
}

TEST_CASE("bandpass keeps 5 Hz and rejects 30 Hz at 64 Hz") {
  const double a5 = passed_amplitude(5.0, 64.0);
  const double a30 = passed_amplitude(30.0, 64.0);
  CHECK(a5 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(a30 < 0.05);
}

TEST_CASE("measured tone gain agrees with the squared design response") {
  const SosFilter f = design_butterworth(kBand, 64.0);
  for (double freq : {2.0, 5.0, 8.0, 12.0}) {
    const double expected = std::norm(f.response(freq, 64.0));
    CHECK(passed_amplitude(freq, 64.0) == doctest::Approx(expected).epsilon(1e-3));
  }
}

TEST_CASE("forward-backward filtering is zero phase") {
  Eigen::VectorXd pulse = Eigen::VectorXd::Zero(1001);
  for (int i = -20; i <= 20; ++i) pulse[500 + i] = std::exp(-0.01 * i * i);
  const Eigen::VectorXd y = bandpass_filter(Waveform{pulse, 64.0}, kBand).samples;
  double asym = 0.0;
  for (int i = 1; i <= 400; ++i) asym = std::max(asym, std::abs(y[500 + i] - y[500 - i]));
  CHECK(asym < 1e-6);
}

TEST_CASE("band edges at or past Nyquist are rejected") {
  CHECK_THROWS_AS(design_butterworth({FilterKind::Bandpass, 1.0, 32.0, 4}, 64.0), InvalidSpec);
  CHECK_THROWS_AS(design_butterworth({FilterKind::Bandpass, 9.0, 1.0, 4}, 64.0), InvalidSpec);
  CHECK_THROWS_AS(design_butterworth({FilterKind::Lowpass, 0.0, 40.0, 4}, 64.0), InvalidSpec);
  CHECK_THROWS_AS(design_butterworth({FilterKind::Bandpass, 1.0, 9.0, 0}, 64.0), InvalidSpec);
}

TEST_CASE("resample output length") {
  const Waveform x{Eigen::VectorXd::Random(5120), 512.0};
  const Waveform y = resample(x, 64.0);
  CHECK(y.size() == 640);
  CHECK(y.fs == 64.0);
  CHECK(resample_samples(Eigen::VectorXd::Random(1000), 44100.0, 64.0).size() ==
        static_cast<Eigen::Index>(std::llround(1000 * 64.0 / 44100.0)));
  CHECK(resample_samples(Eigen::VectorXd::Random(77), 64.0, 100.0).size() == std::llround(77 * 100.0 / 64.0));
}

TEST_CASE("resample to the same rate is the identity") {
  const Eigen::VectorXd x = Eigen::VectorXd::Random(300);
  CHECK((resample_samples(x, 64.0, 64.0) - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("resampled 4 Hz tone matches the analytic samples") {
  const Eigen::VectorXd y = resample_samples(tone(4.0, 512.0, 5120), 512.0, 64.0);
  const Eigen::VectorXd ref = tone(4.0, 64.0, 640);
  CHECK(correlation(y.segment(32, 576), ref.segment(32, 576)) > 0.999);
}

TEST_CASE("resample round trip keeps an in-band tone") {
  const Eigen::VectorXd x = tone(3.0, 64.0, 1280);
  const Eigen::VectorXd up = resample_samples(x, 64.0, 512.0);
  const Eigen::VectorXd back = resample_samples(up, 512.0, 64.0);
  REQUIRE(back.size() == x.size());
  CHECK(correlation(back.segment(64, 1152), x.segment(64, 1152)) > 0.999);
}

TEST_CASE("resample rejects non-positive rates") {
  CHECK_THROWS_AS(resample(Waveform{Eigen::VectorXd::Ones(10), 64.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(resample(Waveform{Eigen::VectorXd::Ones(10), 64.0}, -5.0), InvalidArgument);
}

TEST_CASE("rereference two channels") {
  MultiChannelRecording rec;
  rec.data.resize(2, 2);
  rec.data << 1, 2, 3, 4;
  rec.fs = 64;
  rec.channel_names = {"a", "b"};
  const MultiChannelRecording out = rereference(rec, "b");
  Eigen::MatrixXd expected(2, 2);
  expected << -2, -2, 0, 0;
  CHECK(out.data == expected);
  CHECK(rereference(out, "b").data == out.data);
  CHECK_THROWS_AS(rereference(rec, "Cz"), MissingChannel);
}

TEST_CASE("rereference subtracts the reference from every channel") {
  MultiChannelRecording rec;
  rec.data = testutil::randn(64, 50, 3);
  rec.fs = 64;
  for (int c = 0; c < 64; ++c) rec.channel_names.push_back("ch" + std::to_string(c));
  const MultiChannelRecording out = rereference(rec, "ch10");
  CHECK(out.data.row(10).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::RowVectorXd diff = (rec.data - out.data).colwise().sum();
  for (Eigen::Index t = 0; t < 50; ++t) CHECK(diff[t] == doctest::Approx(64.0 * rec.data(10, t)).epsilon(1e-12));
}

TEST_CASE("ERB-spaced centers span the configured range") {
  const auto c = erb_center_frequencies(150.0, 4000.0, 28);
  REQUIRE(c.size() == 28);
  CHECK(c.front() == doctest::Approx(150.0));
  CHECK(c.back() == doctest::Approx(4000.0));
  CHECK(std::is_sorted(c.begin(), c.end()));
  CHECK(erb_bandwidth(1000.0) == doctest::Approx(24.7 * (4.37 + 1.0)));
}

TEST_CASE("envelope of silence is silence") {
  const Waveform silent{Eigen::VectorXd::Zero(8000), 16000.0};
  const Waveform env = gammatone_envelope(silent);
  CHECK(env.fs == 64.0);
  CHECK(env.size() == 32);
  CHECK(env.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("compressed subband sum is homogeneous of degree 0.6") {
  const Waveform x{testutil::randn(4000, 1, 5).col(0), 16000.0};
  const Waveform x3{3.0 * x.samples, 16000.0};
  const EnvelopeConfig cfg;
  const Eigen::VectorXd a = compressed_subband_sum(x, cfg);
  const Eigen::VectorXd b = compressed_subband_sum(x3, cfg);
  CHECK(((b - std::pow(3.0, 0.6) * a).cwiseAbs().array() / a.cwiseAbs().array().max(1e-300)).maxCoeff() < 1e-6);
}

TEST_CASE("a 1 kHz tone peaks in the band the impulse-response oracle predicts") {
  const double fs = 16000.0;
  const auto centers = erb_center_frequencies(150.0, 4000.0, 28);

  // Oracle: magnitude at 1 kHz of each band's impulse response.
  Eigen::VectorXd impulse = Eigen::VectorXd::Zero(8000);
  impulse[0] = 1.0;
  const Eigen::MatrixXd ir = gammatone_subbands(Waveform{impulse, fs}, centers);
  Eigen::Index oracle_band = 0;
  double best = -1.0;
  for (Eigen::Index b = 0; b < ir.rows(); ++b) {
    std::complex<double> h = 0.0;
    for (Eigen::Index i = 0; i < ir.cols(); ++i) h += ir(b, i) * std::polar(1.0, -2.0 * std::numbers::pi * 1000.0 * i / fs);
    if (std::abs(h) > best) {
      best = std::abs(h);
      oracle_band = b;
    }
  }

  const Eigen::MatrixXd sub = gammatone_subbands(Waveform{tone(1000.0, fs, 16000), fs}, centers);
  Eigen::Index peak = 0;
  sub.rightCols(8000).rowwise().squaredNorm().maxCoeff(&peak);
  CHECK(peak == oracle_band);

  Eigen::Index nearest = 0;
  for (std::size_t b = 1; b < centers.size(); ++b) {
    if (std::abs(centers[b] - 1000.0) < std::abs(centers[static_cast<std::size_t>(nearest)] - 1000.0)) {
      nearest = static_cast<Eigen::Index>(b);
    }
  }
  CHECK(peak == nearest);
}

TEST_CASE("compressed subband sum is shift equivariant") {
  const Eigen::VectorXd x = testutil::randn(3000, 1, 9).col(0);
  const int d = 37;
  Eigen::VectorXd xd = Eigen::VectorXd::Zero(3000 + d);
  xd.tail(3000) = x;
  const EnvelopeConfig cfg;
  const Eigen::VectorXd a = compressed_subband_sum(Waveform{x, 16000.0}, cfg);
  const Eigen::VectorXd b = compressed_subband_sum(Waveform{xd, 16000.0}, cfg);
  CHECK((b.tail(3000) - a).cwiseAbs().maxCoeff() < 1e-9 * a.cwiseAbs().maxCoeff());
  CHECK(b.head(d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("envelope extraction needs twice the top band frequency") {
  CHECK_THROWS_AS(gammatone_envelope(Waveform{Eigen::VectorXd::Ones(100), 6000.0}), InvalidArgument);
}

TEST_CASE("envelope follows a slow amplitude modulation") {
  const double fs = 16000.0;
  const Eigen::Index n = 16000 * 8;
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = i / fs;
    x[i] = (1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * 4.0 * t)) * std::sin(2.0 * std::numbers::pi * 700.0 * t);
  }
  const Waveform env = gammatone_envelope(Waveform{x, fs});
  REQUIRE(env.size() == 512);
  const Eigen::VectorXd ref = tone(4.0, 64.0, 512);
  CHECK(correlation(env.samples.segment(64, 384), ref.segment(64, 384)) > 0.95);
}

TEST_CASE("invalid waveforms are rejected") {
  CHECK_THROWS_AS(bandpass_filter(Waveform{Eigen::VectorXd::Ones(100), 0.0}, kBand), InvalidArgument);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(100);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(bandpass_filter(Waveform{bad, 64.0}, kBand), InvalidArgument);
}

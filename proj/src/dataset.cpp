#include "claad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "claad/binary_io.hpp"
#include "claad/error.hpp"

namespace claad {

namespace fs = std::filesystem;

namespace {

constexpr const char* kBiosemi64[] = {
    "Fp1", "AF7", "AF3", "F1",  "F3",  "F5",  "F7",  "FT7", "FC5", "FC3", "FC1", "C1",  "C3",
    "C5",  "T7",  "TP7", "CP5", "CP3", "CP1", "P1",  "P3",  "P5",  "P7",  "P9",  "PO7", "PO3",
    "O1",  "Iz",  "Oz",  "POz", "Pz",  "CPz", "Fpz", "Fp2", "AF8", "AF4", "AFz", "Fz",  "F2",
    "F4",  "F6",  "F8",  "FT8", "FC6", "FC4", "FC2", "FCz", "Cz",  "C2",  "C4",  "C6",  "T8",
    "TP8", "CP6", "CP4", "CP2", "P2",  "P4",  "P6",  "P8",  "P10", "PO8", "PO4", "O2"};
static_assert(std::size(kBiosemi64) == 64);

const char* kManifestHeader = "trial_id\tsubject_id\tcondition\tattended\teeg_file\tenv_a_file\tenv_b_file";

Eigen::VectorXd round_to_f32(const Eigen::VectorXd& v) { return v.cast<float>().cast<double>(); }

// Band-limited, zero-mean, unit-variance process (1-9 Hz at the given rate).
Eigen::VectorXd band_limited_process(Eigen::Index n, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index margin = static_cast<Eigen::Index>(2 * fs);
  Eigen::VectorXd white(n + 2 * margin);
  for (Eigen::Index i = 0; i < white.size(); ++i) white[i] = normal(rng);
  const double hi = std::min(9.0, 0.45 * fs);
  const SosFilter bp = design_butterworth(FilterSpec{FilterKind::Bandpass, 1.0, hi, 4}, fs);
  Eigen::VectorXd x = filtfilt(bp, white).segment(margin, n);
  x.array() -= x.mean();
  const double sd = std::sqrt(x.squaredNorm() / static_cast<double>(n));
  return sd > 0 ? Eigen::VectorXd(x / sd) : x;
}

// Kellet's pink-noise filter, normalized to unit variance.
Eigen::VectorXd pink_noise(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<double, 7> b{};
  Eigen::VectorXd out(n);
  const Eigen::Index burn_in = 256;
  for (Eigen::Index i = -burn_in; i < n; ++i) {
    const double w = normal(rng);
    b[0] = 0.99886 * b[0] + w * 0.0555179;
    b[1] = 0.99332 * b[1] + w * 0.0750759;
    b[2] = 0.96900 * b[2] + w * 0.1538520;
    b[3] = 0.86650 * b[3] + w * 0.3104856;
    b[4] = 0.55000 * b[4] + w * 0.5329522;
    b[5] = -0.7616 * b[5] - w * 0.0168980;
    const double pink = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
    b[6] = w * 0.115926;
    if (i >= 0) out[i] = pink;
  }
  out.array() -= out.mean();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  return out / sd;
}

std::string two_digit(int v) {
  std::ostringstream os;
  os.width(2);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

void TrialRecording::validate() const {
  eeg.validate();
  env_a.validate();
  env_b.validate();
  if (attended != 0 && attended != 1) throw InvalidArgument("trial '" + trial_id + "': attended must be 0 or 1");
  if (env_a.size() != eeg.n_samples() || env_b.size() != eeg.n_samples()) {
    throw ShapeError("trial '" + trial_id + "': EEG and envelopes differ in length");
  }
  if (env_a.fs != eeg.fs || env_b.fs != eeg.fs) {
    throw ShapeError("trial '" + trial_id + "': EEG and envelopes differ in sample rate");
  }
}

std::vector<std::string> default_channel_names(Eigen::Index n) {
  std::vector<std::string> names;
  if (n == 64) return {std::begin(kBiosemi64), std::end(kBiosemi64)};
  for (Eigen::Index i = 0; i < n; ++i) names.push_back("ch" + std::to_string(i));
  return names;
}

std::vector<TrialRecording> load_dataset(const fs::path& root) {
  const fs::path manifest = root / "manifest.tsv";
  std::ifstream in(manifest);
  if (!in) throw NotFound("manifest '" + manifest.string() + "' not found");

  std::vector<TrialRecording> trials;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream row(line);
    std::vector<std::string> cols;
    for (std::string tok; std::getline(row, tok, '\t');) cols.push_back(tok);
    if (cols.size() == 1) {  // tolerate space-separated manifests
      cols.clear();
      std::istringstream ws(line);
      for (std::string tok; ws >> tok;) cols.push_back(tok);
    }
    if (!cols.empty() && cols[0] == "trial_id") continue;
    if (cols.size() != 7) {
      throw CorruptFile(manifest.string() + ":" + std::to_string(line_no) + ": expected 7 columns, got " +
                        std::to_string(cols.size()));
    }
    TrialRecording t;
    t.trial_id = cols[0];
    t.subject_id = cols[1];
    t.condition = cols[2];
    if (cols[3] == "0") {
      t.attended = 0;
    } else if (cols[3] == "1") {
      t.attended = 1;
    } else {
      throw CorruptFile(manifest.string() + ":" + std::to_string(line_no) + ": attended must be 0 or 1");
    }

    const MatrixFile eeg = read_matrix_file(root / cols[4]);
    const MatrixFile ea = read_matrix_file(root / cols[5]);
    const MatrixFile eb = read_matrix_file(root / cols[6]);
    for (const auto* env : {&ea, &eb}) {
      if (env->data.rows() != 1) throw CorruptFile("trial '" + t.trial_id + "': envelope files must have one row");
    }
    if (ea.data.cols() != eeg.data.cols() || eb.data.cols() != eeg.data.cols() ||
        ea.sample_rate_mhz != eeg.sample_rate_mhz || eb.sample_rate_mhz != eeg.sample_rate_mhz) {
      throw CorruptFile("trial '" + t.trial_id + "': EEG and envelope files are not sample-aligned");
    }
    t.eeg.data = eeg.data.cast<double>();
    t.eeg.fs = eeg.sample_rate_hz();
    t.eeg.channel_names = default_channel_names(t.eeg.data.rows());
    t.env_a = Waveform{ea.data.row(0).transpose().cast<double>(), ea.sample_rate_hz()};
    t.env_b = Waveform{eb.data.row(0).transpose().cast<double>(), eb.sample_rate_hz()};
    trials.push_back(std::move(t));
  }
  return trials;
}

void save_dataset(const fs::path& root, std::span<const TrialRecording> trials) {
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw NotFound("cannot write manifest under '" + root.string() + "'");
  manifest << kManifestHeader << '\n';
  for (const TrialRecording& t : trials) {
    const std::string eeg_file = t.trial_id + "_eeg.clad";
    const std::string a_file = t.trial_id + "_env_a.clad";
    const std::string b_file = t.trial_id + "_env_b.clad";
    write_matrix_file(root / eeg_file, t.eeg.data, t.eeg.fs);
    write_matrix_file(root / a_file, t.env_a.samples.transpose(), t.env_a.fs);
    write_matrix_file(root / b_file, t.env_b.samples.transpose(), t.env_b.fs);
    manifest << t.trial_id << '\t' << t.subject_id << '\t' << t.condition << '\t' << t.attended << '\t'
             << eeg_file << '\t' << a_file << '\t' << b_file << '\n';
  }
}

Eigen::Index window_length(double window_seconds, double fs) {
  return static_cast<Eigen::Index>(std::llround(window_seconds * fs));
}

Eigen::Index window_hop(Eigen::Index length, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgument("overlap must lie in [0, 1)");
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(length * (1.0 - overlap))));
}

Eigen::Index window_count(Eigen::Index n_samples, Eigen::Index length, Eigen::Index hop) {
  if (length < 1 || length > n_samples) return 0;
  return (n_samples - length) / hop + 1;
}

std::vector<WindowedExample> make_windows(const TrialRecording& trial, const CspModel& csp,
                                          double window_seconds, double overlap) {
  const Eigen::Index len = window_length(window_seconds, trial.eeg.fs);
  if (len < 1) throw InvalidArgument("window must span at least one sample");
  const Eigen::Index hop = window_hop(len, overlap);
  const Eigen::Index count = window_count(trial.n_samples(), len, hop);
  std::vector<WindowedExample> out;
  if (count == 0) return out;

  const Eigen::MatrixXd projected = csp_project(csp, trial.eeg.data);
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index w = 0; w < count; ++w) {
    const Eigen::Index start = w * hop;
    WindowedExample ex;
    ex.features = projected.middleCols(start, len);
    ex.env_a = trial.env_a.samples.segment(start, len);
    ex.env_b = trial.env_b.samples.segment(start, len);
    ex.label = trial.attended;
    ex.subject_id = trial.subject_id;
    ex.trial_id = trial.trial_id;
    ex.window_index = static_cast<int>(w);
    ex.window_seconds = window_seconds;
    out.push_back(std::move(ex));
  }
  return out;
}

SplitPlan kfold_split(std::span<const WindowedExample> examples, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold split needs k >= 2");
  // subject -> trial -> example indices
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    groups[examples[i].subject_id][examples[i].trial_id].push_back(i);
  }

  SplitPlan plan;
  plan.scheme = SplitScheme::KFoldPerSubject;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));
  std::mt19937_64 rng(seed);
  std::vector<int> fold_of(examples.size(), -1);
  for (auto& [subject, trials] : groups) {
    if (static_cast<int>(trials.size()) < k) {
      throw ConfigError("subject '" + subject + "' has " + std::to_string(trials.size()) +
                        " trials, fewer than k=" + std::to_string(k));
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [trial, idx] : trials) order.push_back(&idx);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < order.size(); ++j) {
      for (std::size_t i : *order[j]) fold_of[i] = static_cast<int>(j % static_cast<std::size_t>(k));
    }
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      auto& fold = plan.folds[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? fold.validation : fold.train).push_back(i);
    }
  }
  return plan;
}

SplitPlan loso_split(std::span<const WindowedExample> examples) {
  std::set<std::string> subjects;
  for (const auto& e : examples) subjects.insert(e.subject_id);
  if (subjects.size() < 2) throw ConfigError("leave-one-subject-out needs at least two subjects");
  SplitPlan plan;
  plan.scheme = SplitScheme::LeaveOneSubjectOut;
  for (const std::string& s : subjects) {
    Fold fold;
    fold.held_out_subject = s;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      (examples[i].subject_id == s ? fold.validation : fold.train).push_back(i);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

Standardization fit_standardization(std::span<const WindowedExample> examples) {
  if (examples.empty()) throw ConfigError("cannot standardize an empty training split");
  const Eigen::Index c = examples.front().features.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(c);
  double n = 0.0;
  double env_sum = 0.0;
  double env_n = 0.0;
  for (const auto& e : examples) {
    sum += e.features.rowwise().sum();
    n += static_cast<double>(e.features.cols());
    env_sum += e.env_a.sum() + e.env_b.sum();
    env_n += static_cast<double>(e.env_a.size() + e.env_b.size());
  }
  Standardization s;
  s.feature_mean = sum / n;
  s.env_mean = env_sum / env_n;
  double env_sq = 0.0;
  for (const auto& e : examples) {
    sq += (e.features.colwise() - s.feature_mean).array().square().matrix().rowwise().sum();
    env_sq += (e.env_a.array() - s.env_mean).square().sum() + (e.env_b.array() - s.env_mean).square().sum();
  }
  s.feature_std = (sq / n).array().sqrt();
  for (Eigen::Index i = 0; i < c; ++i) {
    if (!(s.feature_std[i] > 0.0)) s.feature_std[i] = 1.0;
  }
  s.env_std = std::sqrt(env_sq / env_n);
  if (!(s.env_std > 0.0)) s.env_std = 1.0;
  return s;
}

void Standardization::apply(WindowedExample& ex) const {
  if (ex.features.rows() != feature_mean.size()) throw ShapeError("standardization channel mismatch");
  ex.features = ((ex.features.colwise() - feature_mean).array().colwise() / feature_std.array()).matrix();
  ex.env_a = (ex.env_a.array() - env_mean) / env_std;
  ex.env_b = (ex.env_b.array() - env_mean) / env_std;
}

WindowedExample augment_gaussian(const WindowedExample& example, const AugmentConfig& cfg,
                                 std::uint64_t rng_seed) {
  WindowedExample out = example;
  if (cfg.noise_sigma == 0.0) return out;
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (Eigen::Index i = 0; i < out.features.size(); ++i) out.features.data()[i] += noise(rng);
  for (Eigen::Index i = 0; i < out.env_a.size(); ++i) out.env_a[i] += noise(rng);
  for (Eigen::Index i = 0; i < out.env_b.size(); ++i) out.env_b[i] += noise(rng);
  return out;
}

std::vector<TrialRecording> synth_generate(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1 || cfg.trials_per_subject < 1 || !(cfg.trial_seconds > 0.0) || cfg.n_channels < 1) {
    throw ConfigError("synthetic generator counts must be >= 1");
  }
  if (cfg.lag_min < 0 || cfg.lag_max < cfg.lag_min) throw ConfigError("invalid synthetic lag range");
  const Eigen::Index n = window_length(cfg.trial_seconds, cfg.fs);
  const Eigen::Index margin = cfg.lag_max;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::VectorXd shared_pattern(cfg.n_channels);
  for (Eigen::Index c = 0; c < cfg.n_channels; ++c) shared_pattern[c] = normal(rng);
  shared_pattern.normalize();

  std::vector<TrialRecording> trials;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const std::string subject = "S" + two_digit(s + 1);
    Eigen::VectorXd mixing(cfg.n_channels);
    for (Eigen::Index c = 0; c < cfg.n_channels; ++c) {
      mixing[c] = shared_pattern[c] + cfg.mixing_jitter * normal(rng) / std::sqrt(static_cast<double>(cfg.n_channels));
    }
    mixing.normalize();
    const int lag = std::uniform_int_distribution<int>(cfg.lag_min, cfg.lag_max)(rng);

    std::vector<int> labels(static_cast<std::size_t>(cfg.trials_per_subject));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    if (labels.size() % 2 == 1) labels.back() = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
    std::shuffle(labels.begin(), labels.end(), rng);

    for (int t = 0; t < cfg.trials_per_subject; ++t) {
      std::array<Eigen::VectorXd, 2> streams;
      for (auto& st : streams) st = band_limited_process(n + margin, cfg.fs, rng);
      const int att = labels[static_cast<std::size_t>(t)];

      TrialRecording tr;
      tr.subject_id = subject;
      tr.trial_id = subject + "_T" + two_digit(t + 1);
      tr.condition = "synthetic";
      tr.attended = att;

      // Envelope sample t lives at index t + margin of its stream.
      const Eigen::VectorXd drive = streams[att].segment(margin - lag, n);
      Eigen::MatrixXd signal = mixing * drive.transpose();
      const double signal_power = signal.squaredNorm() / static_cast<double>(signal.size());
      const double noise_scale = std::sqrt(signal_power / std::pow(10.0, cfg.snr_db / 10.0));
      Eigen::MatrixXd eeg = signal;
      for (Eigen::Index c = 0; c < cfg.n_channels; ++c) eeg.row(c) += noise_scale * pink_noise(n, rng).transpose();

      tr.eeg.data = eeg.cast<float>().cast<double>();
      tr.eeg.fs = cfg.fs;
      tr.eeg.channel_names = default_channel_names(cfg.n_channels);
      for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd env = streams[k].segment(margin, n);
        env.array() += 0.1 - env.minCoeff();
        (k == 0 ? tr.env_a : tr.env_b) = Waveform{round_to_f32(env), cfg.fs};
      }
      trials.push_back(std::move(tr));
    }
  }
  return trials;
}

}  // namespace claad

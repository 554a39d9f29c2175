#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "claad/csp.hpp"
#include "claad/sigproc.hpp"

namespace claad {

// One preprocessed trial: EEG and both stream envelopes at a common rate.
struct TrialRecording {
  std::string trial_id;
  std::string subject_id;
  std::string condition;
  int attended = 0;
  MultiChannelRecording eeg;
  Waveform env_a;
  Waveform env_b;

  Eigen::Index n_samples() const { return eeg.n_samples(); }
  void validate() const;
};

struct WindowedExample {
  Eigen::MatrixXd features;  // components x L
  Eigen::VectorXd env_a;     // L
  Eigen::VectorXd env_b;     // L
  int label = 0;
  std::string subject_id;
  std::string trial_id;
  int window_index = 0;
  double window_seconds = 0.0;

  Eigen::Index length() const { return features.cols(); }
};

enum class SplitScheme { KFoldPerSubject, LeaveOneSubjectOut };

struct Fold {
  std::vector<std::size_t> train;       // indices into the example list, ascending
  std::vector<std::size_t> validation;  // ascending
  std::string held_out_subject;         // set for leave-one-subject-out
};

struct SplitPlan {
  SplitScheme scheme = SplitScheme::KFoldPerSubject;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

struct AugmentConfig {
  double noise_sigma = 1.0;
  bool standardize = true;
};

// Per-component feature statistics and pooled envelope statistics of a
// training split. Standard deviations are population (1/N) estimates.
struct Standardization {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;
  double env_mean = 0.0;
  double env_std = 1.0;

  void apply(WindowedExample& ex) const;
};

struct SynthConfig {
  int n_subjects = 6;
  int trials_per_subject = 10;
  double trial_seconds = 20.0;
  double snr_db = 5.0;
  std::uint64_t seed = 0;
  int n_channels = 64;
  double fs = 64.0;
  int lag_min = 3;
  int lag_max = 8;
  // Relative spread of each subject's mixing column around a shared pattern.
  double mixing_jitter = 0.5;
};

// Biosemi 64-channel names when n == 64, otherwise ch0..ch{n-1}.
std::vector<std::string> default_channel_names(Eigen::Index n);

std::vector<TrialRecording> load_dataset(const std::filesystem::path& root);
void save_dataset(const std::filesystem::path& root, std::span<const TrialRecording> trials);

// Window length in samples for a duration at a given rate.
Eigen::Index window_length(double window_seconds, double fs);
Eigen::Index window_hop(Eigen::Index length, double overlap);
Eigen::Index window_count(Eigen::Index n_samples, Eigen::Index length, Eigen::Index hop);

std::vector<WindowedExample> make_windows(const TrialRecording& trial, const CspModel& csp,
                                          double window_seconds, double overlap = 0.5);

SplitPlan kfold_split(std::span<const WindowedExample> examples, int k = 5, std::uint64_t seed = 0);
SplitPlan loso_split(std::span<const WindowedExample> examples);

Standardization fit_standardization(std::span<const WindowedExample> examples);

WindowedExample augment_gaussian(const WindowedExample& example, const AugmentConfig& cfg,
                                 std::uint64_t rng_seed);

std::vector<TrialRecording> synth_generate(const SynthConfig& cfg);

}  // namespace claad

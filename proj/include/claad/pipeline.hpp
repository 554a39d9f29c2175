#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "claad/config.hpp"
#include "claad/dataset.hpp"
#include "claad/report.hpp"
#include "claad/trainer.hpp"

namespace claad {

// Raw-rate trial: EEG at its acquisition rate, both audio streams at theirs.
struct RawTrial {
  std::string trial_id;
  std::string subject_id;
  std::string condition;
  int attended = 0;
  MultiChannelRecording eeg;
  Waveform audio_a;
  Waveform audio_b;
};

// Same manifest layout as a prepared set, but the stream columns name audio
// files and no rate alignment is required.
std::vector<RawTrial> load_raw_dataset(const std::filesystem::path& root);

// Re-reference, band-pass and resample the EEG; gammatone envelopes for the
// audio; all three trimmed to a common length.
TrialRecording preprocess_trial(const RawTrial& raw, const RunConfig& cfg);

// Windows of the raw (channel-space) EEG for every trial.
std::vector<WindowedExample> channel_windows(std::span<const TrialRecording> trials, double window_seconds,
                                             double overlap);

// features <- W * features for every example.
std::vector<WindowedExample> project_windows(std::span<const WindowedExample> examples, const CspModel& csp);

struct FoldResult {
  double window_seconds = 0.0;
  int fold = 0;
  std::string model_subject;  // set when one model is trained per subject
  Checkpoint checkpoint;
  std::vector<std::string> validation_trials;
  std::vector<AccuracyRow> accuracy;
};

struct PipelineHooks {
  std::function<void(const FoldResult&)> on_fold;
  std::function<void(double window_s, int fold, const EpochRecord&)> on_epoch;
};

// CSP, standardization and training for one fold. `train` and `validation`
// hold channel-space windows.
FoldResult run_fold(std::span<const WindowedExample> train, std::span<const WindowedExample> validation,
                    const RunConfig& cfg, double window_seconds, int fold,
                    const std::function<void(const EpochRecord&)>& on_epoch = {});

// Every fold of every window length on the given trials.
std::vector<FoldResult> run_protocol(std::span<const TrialRecording> trials, const RunConfig& cfg,
                                     const PipelineHooks& hooks = {});

SplitPlan make_split(std::span<const WindowedExample> examples, const RunConfig& cfg);

MetricsTable metrics_from(std::span<const FoldResult> results);

}  // namespace claad

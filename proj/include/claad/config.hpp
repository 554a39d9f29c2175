#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "claad/dataset.hpp"
#include "claad/losses.hpp"
#include "claad/model.hpp"
#include "claad/sigproc.hpp"
#include "claad/trainer.hpp"

namespace claad {

// Every tunable of a run. Parsed from `key = value` lines; all keys optional.
struct RunConfig {
  // paths
  std::string data_dir;   // prepared trial set for train / eval; empty means <run>/data
  std::string raw_dir = "raw";  // raw-rate recordings consumed by prep
  std::string checkpoint;  // eval: a train run directory or one checkpoint file; empty means the run itself
  std::vector<std::string> metrics_files;  // report inputs; empty means <run>/metrics.csv

  std::uint64_t seed = 0;

  // preprocessing
  std::string reference = "Cz";  // "none" disables re-referencing
  double target_fs = 64.0;
  FilterSpec eeg_filter{FilterKind::Bandpass, 1.0, 9.0, 4};
  EnvelopeConfig envelope;

  // features and windows
  int csp_components = 64;
  double csp_shrinkage = 0.05;
  std::string csp_scope = "fold";  // "fold": fit on each training split; "none": identity
  std::vector<double> window_seconds{0.5, 2.0, 5.0};
  double overlap = 0.5;

  // evaluation protocol
  SplitScheme split = SplitScheme::KFoldPerSubject;
  int folds = 5;
  bool per_subject_models = true;

  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  AugmentConfig augment;
  SynthConfig synth;

  void validate() const;
  void set_seed(std::uint64_t s);

  // Canonical `key = value` text covering every key, in a fixed order.
  std::string to_text() const;
  // FNV-1a over the canonical text without the seed line, as 16 hex digits.
  std::string hash() const;
};

// Applies `key = value` lines on top of the defaults. Unknown keys, malformed
// lines and unparsable values raise ConfigError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace claad

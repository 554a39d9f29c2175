#include "claad/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "claad/binary_io.hpp"
#include "claad/error.hpp"

namespace claad {

namespace fs = std::filesystem;

std::vector<RawTrial> load_raw_dataset(const fs::path& root) {
  const fs::path manifest = root / "manifest.tsv";
  std::ifstream in(manifest);
  if (!in) throw NotFound("manifest '" + manifest.string() + "' not found");
  std::vector<RawTrial> trials;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::istringstream row(line);
    for (std::string tok; std::getline(row, tok, '\t');) cols.push_back(tok);
    if (!cols.empty() && cols[0] == "trial_id") continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (cols.size() != 7) throw CorruptFile(where + ": expected 7 columns");
    if (cols[3] != "0" && cols[3] != "1") throw CorruptFile(where + ": attended must be 0 or 1");
    RawTrial t;
    t.trial_id = cols[0];
    t.subject_id = cols[1];
    t.condition = cols[2];
    t.attended = cols[3] == "1" ? 1 : 0;
    const MatrixFile eeg = read_matrix_file(root / cols[4]);
    t.eeg.data = eeg.data.cast<double>();
    t.eeg.fs = eeg.sample_rate_hz();
    t.eeg.channel_names = default_channel_names(t.eeg.data.rows());
    Waveform* audio[2] = {&t.audio_a, &t.audio_b};
    for (int s = 0; s < 2; ++s) {
      const MatrixFile f = read_matrix_file(root / cols[5 + s]);
      if (f.data.rows() != 1) throw CorruptFile(where + ": audio files must have one row");
      *audio[s] = Waveform{f.data.row(0).transpose().cast<double>(), f.sample_rate_hz()};
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

TrialRecording preprocess_trial(const RawTrial& raw, const RunConfig& cfg) {
  MultiChannelRecording eeg = raw.eeg;
  if (cfg.reference != "none") eeg = rereference(eeg, cfg.reference);
  eeg = resample(bandpass_filter(eeg, cfg.eeg_filter), cfg.target_fs);
  EnvelopeConfig env_cfg = cfg.envelope;
  env_cfg.out_fs = cfg.target_fs;
  Waveform a = gammatone_envelope(raw.audio_a, env_cfg);
  Waveform b = gammatone_envelope(raw.audio_b, env_cfg);
  const Eigen::Index n = std::min({eeg.n_samples(), a.size(), b.size()});
  TrialRecording t;
  t.trial_id = raw.trial_id;
  t.subject_id = raw.subject_id;
  t.condition = raw.condition;
  t.attended = raw.attended;
  t.eeg = eeg;
  t.eeg.data = eeg.data.leftCols(n);
  t.env_a = Waveform{a.samples.head(n), a.fs};
  t.env_b = Waveform{b.samples.head(n), b.fs};
  t.validate();
  return t;
}

std::vector<WindowedExample> channel_windows(std::span<const TrialRecording> trials, double window_seconds,
                                             double overlap) {
  std::vector<WindowedExample> out;
  for (const TrialRecording& t : trials) {
    const auto w = make_windows(t, CspModel::identity(t.eeg.n_channels()), window_seconds, overlap);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::vector<WindowedExample> project_windows(std::span<const WindowedExample> examples, const CspModel& csp) {
  std::vector<WindowedExample> out(examples.begin(), examples.end());
  for (WindowedExample& ex : out) ex.features = csp_project(csp, ex.features);
  return out;
}

SplitPlan make_split(std::span<const WindowedExample> examples, const RunConfig& cfg) {
  return cfg.split == SplitScheme::KFoldPerSubject ? kfold_split(examples, cfg.folds, cfg.seed)
                                                   : loso_split(examples);
}

FoldResult run_fold(std::span<const WindowedExample> train, std::span<const WindowedExample> validation,
                    const RunConfig& cfg, double window_seconds, int fold,
                    const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw InsufficientClasses("fold " + std::to_string(fold) + " has no training windows");
  FoldResult res;
  res.window_seconds = window_seconds;
  res.fold = fold;

  CspModel csp;
  if (cfg.csp_scope == "fold") {
    std::vector<LabeledEpoch> epochs;
    epochs.reserve(train.size());
    for (const WindowedExample& ex : train) epochs.push_back({ex.features, ex.label});
    csp = csp_fit(epochs, cfg.csp_components, cfg.csp_shrinkage);
  } else {
    csp = CspModel::identity(train.front().features.rows());
  }
  round_to_f32(csp);

  const std::vector<WindowedExample> train_proj = project_windows(train, csp);
  const std::vector<WindowedExample> val_proj = project_windows(validation, csp);
  Standardization st;
  if (cfg.augment.standardize) {
    st = fit_standardization(train_proj);
    round_to_f32(st);
  }
  auto standardized = [&](const std::vector<WindowedExample>& xs) {
    std::vector<WindowedExample> out = xs;
    if (cfg.augment.standardize) {
      for (WindowedExample& ex : out) st.apply(ex);
    }
    return out;
  };

  ModelConfig mcfg = cfg.model;
  mcfg.in_channels = static_cast<int>(train_proj.front().features.rows());
  mcfg.window_len = static_cast<int>(train_proj.front().length());
  TrainConfig tcfg = cfg.train;
  tcfg.noise_sigma = cfg.augment.noise_sigma;
  FitOptions opts;
  opts.on_epoch = on_epoch;
  res.checkpoint = fit(standardized(train_proj), standardized(val_proj), mcfg, tcfg, cfg.loss, opts);
  res.checkpoint.csp = csp;
  res.checkpoint.standardization = st;
  res.accuracy = evaluate_accuracy(val_proj, res.checkpoint);

  std::set<std::string> trials;
  for (const WindowedExample& ex : validation) trials.insert(ex.trial_id);
  res.validation_trials.assign(trials.begin(), trials.end());
  return res;
}

std::vector<FoldResult> run_protocol(std::span<const TrialRecording> trials, const RunConfig& cfg,
                                     const PipelineHooks& hooks) {
  if (trials.empty()) throw InsufficientClasses("no trials to train on");
  std::vector<FoldResult> results;
  for (double ws : cfg.window_seconds) {
    const std::vector<WindowedExample> all = channel_windows(trials, ws, cfg.overlap);
    if (all.empty()) throw ShapeError("no trial is long enough for " + format_number(ws) + " s windows");

    std::vector<std::pair<std::string, std::vector<WindowedExample>>> groups;
    if (cfg.per_subject_models) {
      std::map<std::string, std::vector<WindowedExample>> by_subject;
      for (const WindowedExample& ex : all) by_subject[ex.subject_id].push_back(ex);
      groups.assign(by_subject.begin(), by_subject.end());
    } else {
      groups.emplace_back("", all);
    }

    for (const auto& [subject, examples] : groups) {
      const SplitPlan plan = make_split(examples, cfg);
      for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        std::vector<WindowedExample> train, val;
        for (std::size_t i : plan.folds[f].train) train.push_back(examples[i]);
        for (std::size_t i : plan.folds[f].validation) val.push_back(examples[i]);
        const int fold = static_cast<int>(f);
        std::function<void(const EpochRecord&)> on_epoch;
        if (hooks.on_epoch) on_epoch = [&](const EpochRecord& r) { hooks.on_epoch(ws, fold, r); };
        FoldResult res = run_fold(train, val, cfg, ws, fold, on_epoch);
        res.model_subject = subject;
        if (hooks.on_fold) hooks.on_fold(res);
        results.push_back(std::move(res));
      }
    }
  }
  return results;
}

MetricsTable metrics_from(std::span<const FoldResult> results) {
  MetricsTable table;
  for (const FoldResult& r : results) {
    for (const AccuracyRow& a : r.accuracy) {
      table.add({a.subject_id, a.window_seconds, r.fold, a.n_examples, a.accuracy});
    }
  }
  return table;
}

}  // namespace claad

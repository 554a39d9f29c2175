#include "claad/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "claad/error.hpp"
#include "claad/pipeline.hpp"

namespace claad {

namespace fs = std::filesystem;

namespace {

// Exclusive ownership of a run directory for the lifetime of one invocation.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) throw ConfigError("run directory '" + dir.string() + "' is locked by another invocation");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFound("cannot write '" + path.string() + "'");
  out << text;
}

std::string checkpoint_name(const FoldResult& r) {
  std::string name = "w" + format_number(r.window_seconds) + "-f" + std::to_string(r.fold);
  if (!r.model_subject.empty()) name += "-" + r.model_subject;
  return name + ".ckpt";
}

struct Context {
  RunConfig cfg;
  fs::path run_dir;
  std::ostream& out;

  fs::path data_dir() const { return cfg.data_dir.empty() ? run_dir / "data" : fs::path(cfg.data_dir); }
};

void cmd_synth(const Context& ctx) {
  const auto trials = synth_generate(ctx.cfg.synth);
  save_dataset(ctx.run_dir / "data", trials);
  ctx.out << "wrote " << trials.size() << " trials to " << (ctx.run_dir / "data").string() << "\n";
}

void cmd_prep(const Context& ctx) {
  const auto raw = load_raw_dataset(ctx.cfg.raw_dir);
  std::vector<TrialRecording> trials;
  trials.reserve(raw.size());
  for (const RawTrial& r : raw) trials.push_back(preprocess_trial(r, ctx.cfg));
  save_dataset(ctx.run_dir / "data", trials);
  ctx.out << "prepared " << trials.size() << " trials into " << (ctx.run_dir / "data").string() << "\n";
}

void cmd_train(const Context& ctx) {
  const auto trials = load_dataset(ctx.data_dir());
  const fs::path ckpt_dir = ctx.run_dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  std::string history = "window_s,fold,model_subject,epoch,claad_loss,classification_loss,train_accuracy,val_accuracy\n";
  std::string folds = "window_s\tfold\tmodel_subject\tcheckpoint\tvalidation_trials\n";
  PipelineHooks hooks;
  hooks.on_epoch = [&](double ws, int fold, const EpochRecord& r) {
    ctx.out << "window " << format_number(ws) << " s fold " << fold << " epoch " << r.epoch
            << " claad " << format_number(r.claad_loss) << " clf " << format_number(r.classification_loss)
            << " val " << format_number(r.val_accuracy) << "\n";
  };
  hooks.on_fold = [&](const FoldResult& r) {
    const std::string name = checkpoint_name(r);
    save_checkpoint(ckpt_dir / name, r.checkpoint);
    const std::string subject = r.model_subject.empty() ? "-" : r.model_subject;
    for (const EpochRecord& e : r.checkpoint.history) {
      history += format_number(r.window_seconds) + "," + std::to_string(r.fold) + "," + subject + "," +
                 std::to_string(e.epoch) + "," + format_number(e.claad_loss) + "," +
                 format_number(e.classification_loss) + "," + format_number(e.train_accuracy) + "," +
                 format_number(e.val_accuracy) + "\n";
    }
    std::string val;
    for (std::size_t i = 0; i < r.validation_trials.size(); ++i) val += (i ? "," : "") + r.validation_trials[i];
    folds += format_number(r.window_seconds) + "\t" + std::to_string(r.fold) + "\t" + subject + "\t" +
             "checkpoints/" + name + "\t" + val + "\n";
  };
  const auto results = run_protocol(trials, ctx.cfg, hooks);
  write_metrics(ctx.run_dir / "metrics.csv", metrics_from(results));
  write_file(ctx.run_dir / "history.csv", history);
  write_file(ctx.run_dir / "folds.tsv", folds);
  ctx.out << "trained " << results.size() << " models; metrics in " << (ctx.run_dir / "metrics.csv").string() << "\n";
}

std::vector<WindowedExample> checkpoint_windows(std::span<const TrialRecording> trials, const Checkpoint& ck,
                                                double overlap) {
  const double fs = trials.front().eeg.fs;
  const double ws = ck.model_config.window_len / fs;
  const auto windows = channel_windows(trials, ws, overlap);
  auto projected = ck.csp.filters.size() > 0 ? project_windows(windows, ck.csp) : windows;
  for (WindowedExample& ex : projected) ex.window_seconds = ws;
  return projected;
}

void cmd_eval(const Context& ctx) {
  const auto trials = load_dataset(ctx.data_dir());
  if (trials.empty()) throw InsufficientClasses("no trials to evaluate");
  const fs::path target = ctx.cfg.checkpoint.empty() ? ctx.run_dir : fs::path(ctx.cfg.checkpoint);
  MetricsTable table;

  auto evaluate = [&](const Checkpoint& ck, std::span<const TrialRecording> subset, int fold, double ws) {
    auto examples = checkpoint_windows(subset, ck, ctx.cfg.overlap);
    for (WindowedExample& ex : examples) ex.window_seconds = ws;
    for (const AccuracyRow& a : evaluate_accuracy(examples, ck)) {
      table.add({a.subject_id, a.window_seconds, fold, a.n_examples, a.accuracy});
    }
  };

  if (fs::is_directory(target)) {
    std::ifstream in(target / "folds.tsv");
    if (!in) throw NotFound("'" + (target / "folds.tsv").string() + "' not found; run train first");
    std::string line;
    std::getline(in, line);
    std::map<std::string, const TrialRecording*> by_id;
    for (const TrialRecording& t : trials) by_id[t.trial_id] = &t;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string tok; std::getline(ss, tok, '\t');) cols.push_back(tok);
      if (cols.size() < 4) throw CorruptFile((target / "folds.tsv").string() + ": malformed row");
      const Checkpoint ck = load_checkpoint(target / cols[3]);
      std::vector<TrialRecording> subset;
      if (cols.size() > 4) {
        std::stringstream ids(cols[4]);
        for (std::string id; std::getline(ids, id, ',');) {
          auto it = by_id.find(id);
          if (it == by_id.end()) throw NotFound("validation trial '" + id + "' missing from the dataset");
          subset.push_back(*it->second);
        }
      }
      if (!subset.empty()) evaluate(ck, subset, std::stoi(cols[1]), std::stod(cols[0]));
    }
  } else {
    const Checkpoint ck = load_checkpoint(target);
    evaluate(ck, trials, 0, ck.model_config.window_len / trials.front().eeg.fs);
  }
  const fs::path dir = ctx.run_dir / "eval";
  fs::create_directories(dir);
  write_metrics(dir / "metrics.csv", table);
  ctx.out << "evaluated " << table.rows.size() << " rows; metrics in " << (dir / "metrics.csv").string() << "\n";
}

void cmd_report(const Context& ctx) {
  std::vector<std::string> files = ctx.cfg.metrics_files;
  if (files.empty()) files.push_back((ctx.run_dir / "metrics.csv").string());
  std::vector<MetricsTable> tables;
  for (const std::string& f : files) tables.push_back(read_metrics(f));
  const Report rep = emit_report(tables, ctx.run_dir / "report");
  for (const SummaryRow& r : rep.summary) {
    ctx.out << "window " << format_number(r.window_seconds) << " s: mean accuracy " << format_number(r.mean_accuracy)
            << " over " << r.n_subjects << " subjects\n";
  }
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive auditory attention detection"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "runs";
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prep", "Preprocess raw-rate recordings into 64 Hz trials"},
      {"synth", "Write a synthetic trial set"},
      {"train", "Train every fold and window length"},
      {"eval", "Apply trained checkpoints to a trial set"},
      {"report", "Aggregate metrics tables into summary files"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--out", out_dir, "Parent directory for run directories");
    sub->add_option("--seed", seed, "Overrides the configured seed");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::Config);
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.set_seed(*seed);
    const fs::path run_dir = fs::path(out_dir) / ("run-" + cfg.hash() + "-s" + std::to_string(cfg.seed));
    fs::create_directories(run_dir);
    RunLock lock(run_dir);
    write_file(run_dir / "config.txt", cfg.to_text());
    Context ctx{cfg, run_dir, out};
    if (command == "prep") cmd_prep(ctx);
    if (command == "synth") cmd_synth(ctx);
    if (command == "train") cmd_train(ctx);
    if (command == "eval") cmd_eval(ctx);
    if (command == "report") cmd_report(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::Data);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::Data);
  }
}

int cli_run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_run(args, std::cout, std::cerr);
}

}  // namespace claad

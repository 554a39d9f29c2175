#include "claad/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "claad/error.hpp"
#include "claad/report.hpp"

namespace claad {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) bad_value(key, value, expected);
  return out;
}

double to_double(const std::string& k, const std::string& v) { return parse_number<double>(k, v, "a number"); }
int to_int(const std::string& k, const std::string& v) { return parse_number<int>(k, v, "an integer"); }
std::uint64_t to_u64(const std::string& k, const std::string& v) {
  return parse_number<std::uint64_t>(k, v, "an unsigned integer");
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(k, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

std::string num(double v) { return format_number(v); }
std::string boolean(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CLAAD_DOUBLE(KEY, MEMBER)                                                                 \
  Field {                                                                                         \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); }, \
        [](const RunConfig& c) { return num(c.MEMBER); }                                          \
  }
#define CLAAD_INT(KEY, MEMBER)                                                                    \
  Field {                                                                                         \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_int(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                               \
  }
#define CLAAD_BOOL(KEY, MEMBER)                                                                   \
  Field {                                                                                         \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); }, \
        [](const RunConfig& c) { return boolean(c.MEMBER); }                                      \
  }
#define CLAAD_STRING(KEY, MEMBER)                                                                 \
  Field {                                                                                         \
    KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; },            \
        [](const RunConfig& c) { return c.MEMBER; }                                               \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CLAAD_STRING("data.dir", data_dir),
      CLAAD_STRING("raw.dir", raw_dir),
      CLAAD_STRING("eval.checkpoint", checkpoint),
      Field{"report.metrics",
            [](RunConfig& c, const std::string&, const std::string& v) { c.metrics_files = split_list(v); },
            [](const RunConfig& c) { return join(c.metrics_files, [](const std::string& s) { return s; }); }},
      Field{"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},

      CLAAD_STRING("prep.reference", reference),
      CLAAD_DOUBLE("prep.fs", target_fs),
      CLAAD_DOUBLE("filter.low_hz", eeg_filter.low_hz),
      CLAAD_DOUBLE("filter.high_hz", eeg_filter.high_hz),
      CLAAD_INT("filter.order", eeg_filter.order),
      CLAAD_DOUBLE("envelope.f_lo", envelope.f_lo),
      CLAAD_DOUBLE("envelope.f_hi", envelope.f_hi),
      CLAAD_INT("envelope.n_bands", envelope.n_bands),
      CLAAD_DOUBLE("envelope.exponent", envelope.exponent),
      CLAAD_BOOL("envelope.post_filter", envelope.post_filter),
      CLAAD_DOUBLE("envelope.post_low_hz", envelope.post_band.low_hz),
      CLAAD_DOUBLE("envelope.post_high_hz", envelope.post_band.high_hz),
      CLAAD_INT("envelope.post_order", envelope.post_band.order),

      CLAAD_INT("csp.n_components", csp_components),
      CLAAD_DOUBLE("csp.shrinkage", csp_shrinkage),
      CLAAD_STRING("csp.scope", csp_scope),
      Field{"window.seconds",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.window_seconds.clear();
              for (const auto& tok : split_list(v)) c.window_seconds.push_back(to_double(k, tok));
            },
            [](const RunConfig& c) { return join(c.window_seconds, num); }},
      CLAAD_DOUBLE("window.overlap", overlap),

      Field{"split.scheme",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "kfold") {
                c.split = SplitScheme::KFoldPerSubject;
              } else if (v == "loso") {
                c.split = SplitScheme::LeaveOneSubjectOut;
              } else {
                bad_value(k, v, "'kfold' or 'loso'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.split == SplitScheme::KFoldPerSubject ? "kfold" : "loso");
            }},
      CLAAD_INT("split.folds", folds),
      CLAAD_BOOL("split.per_subject_models", per_subject_models),

      CLAAD_INT("model.d_model", model.d_model),
      CLAAD_INT("model.n_heads", model.n_heads),
      CLAAD_INT("model.n_blocks", model.n_blocks),
      CLAAD_INT("model.d_repr", model.d_repr),
      CLAAD_INT("model.probe_hidden", model.probe_hidden),
      Field{"model.clf_dims",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.model.clf_dims.clear();
              for (const auto& tok : split_list(v)) c.model.clf_dims.push_back(to_int(k, tok));
            },
            [](const RunConfig& c) { return join(c.model.clf_dims, [](int i) { return std::to_string(i); }); }},
      CLAAD_DOUBLE("model.layer_norm_eps", model.layer_norm_eps),
      CLAAD_BOOL("model.input_pe", model.input_pe),

      CLAAD_DOUBLE("train.lr", train.lr),
      CLAAD_DOUBLE("train.beta1", train.beta1),
      CLAAD_DOUBLE("train.beta2", train.beta2),
      CLAAD_DOUBLE("train.eps_adam", train.eps_adam),
      CLAAD_INT("train.epochs", train.epochs),
      CLAAD_INT("train.batch_size", train.batch_size),
      CLAAD_DOUBLE("train.clip_norm", train.clip_norm),

      CLAAD_DOUBLE("loss.temperature", loss.temperature),
      CLAAD_BOOL("loss.normalize_embeddings", loss.normalize_embeddings),
      CLAAD_DOUBLE("loss.epsilon", loss.epsilon),

      CLAAD_DOUBLE("augment.noise_sigma", augment.noise_sigma),
      CLAAD_BOOL("augment.standardize", augment.standardize),

      CLAAD_INT("synth.n_subjects", synth.n_subjects),
      CLAAD_INT("synth.trials_per_subject", synth.trials_per_subject),
      CLAAD_DOUBLE("synth.trial_seconds", synth.trial_seconds),
      CLAAD_DOUBLE("synth.snr_db", synth.snr_db),
      CLAAD_INT("synth.n_channels", synth.n_channels),
      CLAAD_INT("synth.lag_min", synth.lag_min),
      CLAAD_INT("synth.lag_max", synth.lag_max),
      CLAAD_DOUBLE("synth.mixing_jitter", synth.mixing_jitter),
  };
  return table;
}

#undef CLAAD_DOUBLE
#undef CLAAD_INT
#undef CLAAD_BOOL
#undef CLAAD_STRING

}  // namespace

void RunConfig::validate() const {
  if (!(target_fs > 0.0)) throw ConfigError("prep.fs must be > 0");
  if (csp_components < 1) throw ConfigError("csp.n_components must be >= 1");
  if (!(csp_shrinkage >= 0.0 && csp_shrinkage <= 1.0)) throw ConfigError("csp.shrinkage must lie in [0, 1]");
  if (csp_scope != "fold" && csp_scope != "none") throw ConfigError("csp.scope must be 'fold' or 'none'");
  if (window_seconds.empty()) throw ConfigError("window.seconds must list at least one length");
  for (double w : window_seconds) {
    if (!(w > 0.0)) throw ConfigError("window.seconds entries must be > 0");
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("window.overlap must lie in [0, 1)");
  if (split == SplitScheme::KFoldPerSubject && folds < 2) throw ConfigError("split.folds must be >= 2");
  if (per_subject_models && split != SplitScheme::KFoldPerSubject) {
    throw ConfigError("split.per_subject_models requires split.scheme = kfold");
  }
  if (!(loss.temperature > 0.0)) throw ConfigError("loss.temperature must be > 0");
  if (!(augment.noise_sigma >= 0.0)) throw ConfigError("augment.noise_sigma must be >= 0");
  if (synth.n_subjects < 1 || synth.trials_per_subject < 1) throw ConfigError("synth sizes must be >= 1");
  if (synth.lag_min < 0 || synth.lag_max < synth.lag_min) throw ConfigError("synth lags must satisfy 0 <= min <= max");
  ModelConfig m = model;
  m.in_channels = csp_components;
  m.window_len = 2;
  m.validate();
  TrainConfig t = train;
  t.noise_sigma = augment.noise_sigma;
  t.validate();
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  synth.seed = s;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Field& f : fields()) {
    if (std::string(f.key) == "seed") continue;
    for (char c : std::string(f.key) + "=" + f.get(*this) + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* match = nullptr;
    for (const Field& f : fields()) {
      if (key == f.key) match = &f;
    }
    if (match == nullptr) throw ConfigError("unknown config key '" + key + "'");
    match->set(cfg, key, value);
  }
  cfg.set_seed(cfg.seed);
  cfg.train.noise_sigma = cfg.augment.noise_sigma;
  cfg.synth.fs = cfg.target_fs;
  cfg.envelope.out_fs = cfg.target_fs;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path.string() + "' not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace claad

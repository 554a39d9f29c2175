#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "claad/cli.hpp"
#include "claad/config.hpp"
#include "claad/csp.hpp"
#include "claad/dataset.hpp"
#include "claad/error.hpp"
#include "claad/losses.hpp"
#include "claad/model.hpp"
#include "claad/sigproc.hpp"
#include "claad/trainer.hpp"

namespace py = pybind11;
using namespace claad;

namespace {

std::vector<std::string> channel_names(Eigen::Index n, const std::vector<std::string>& given) {
  return given.empty() ? default_channel_names(n) : given;
}

py::dict trial_dict(const TrialRecording& t) {
  py::dict d;
  d["trial_id"] = t.trial_id;
  d["subject_id"] = t.subject_id;
  d["attended"] = t.attended;
  d["fs"] = t.eeg.fs;
  d["eeg"] = t.eeg.data;
  d["env_a"] = t.env_a.samples;
  d["env_b"] = t.env_b.samples;
  return d;
}

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed) : params_(init_parameters<double>(cfg, seed)) {}

  py::tuple forward(const Eigen::MatrixXd& eeg, const Eigen::VectorXd& env_a, const Eigen::VectorXd& env_b) const {
    const ExampleOutput<double> out = forward_example(ExampleInput<double>{eeg, env_a, env_b}, params_);
    return py::make_tuple(Eigen::VectorXd(out.z.transpose()), Eigen::VectorXd(out.p.transpose()),
                          Eigen::VectorXd(out.logits.transpose()));
  }

  std::size_t parameter_count() const { return params_.parameter_count(); }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> names;
    for (const auto& [name, t] : params_.tensors()) names.push_back(name);
    return names;
  }

 private:
  ModelParameters<double> params_;
};

}  // namespace

PYBIND11_MODULE(_claad, m) {
  m.doc() = "Contrastive auditory attention detection core";

  // Error classes surface as Python exceptions carrying the CLI exit code.
  static py::handle error_type = py::exception<Error>(m, "ClaadError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("exit_code") = e.exit_code();
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "bandpass",
      [](const Eigen::VectorXd& x, double fs, double low_hz, double high_hz, int order) {
        return bandpass_filter(Waveform{x, fs}, FilterSpec{FilterKind::Bandpass, low_hz, high_hz, order}).samples;
      },
      py::arg("x"), py::arg("fs"), py::arg("low_hz") = 1.0, py::arg("high_hz") = 9.0, py::arg("order") = 4,
      "Zero-phase Butterworth band-pass of a 1-D signal.");

  m.def(
      "resample", [](const Eigen::VectorXd& x, double fs_in, double fs_out) {
        return resample_samples(x, fs_in, fs_out);
      },
      py::arg("x"), py::arg("fs_in"), py::arg("fs_out"));

  m.def(
      "rereference",
      [](const Eigen::MatrixXd& data, const std::string& reference, const std::vector<std::string>& names) {
        MultiChannelRecording rec{data, 1.0, channel_names(data.rows(), names)};
        return rereference(rec, reference).data;
      },
      py::arg("data"), py::arg("reference"), py::arg("channel_names") = std::vector<std::string>{});

  m.def(
      "gammatone_envelope",
      [](const Eigen::VectorXd& audio, double fs, double out_fs) {
        EnvelopeConfig cfg;
        cfg.out_fs = out_fs;
        return gammatone_envelope(Waveform{audio, fs}, cfg).samples;
      },
      py::arg("audio"), py::arg("fs"), py::arg("out_fs") = 64.0);

  m.def("erb_center_frequencies", &erb_center_frequencies, py::arg("f_lo") = 150.0, py::arg("f_hi") = 4000.0,
        py::arg("n_bands") = 28);

  m.def(
      "csp_fit",
      [](const std::vector<Eigen::MatrixXd>& epochs, const std::vector<int>& labels, int n_components,
         double shrinkage) {
        if (epochs.size() != labels.size()) throw ShapeError("one label per epoch is required");
        std::vector<LabeledEpoch> data;
        for (std::size_t i = 0; i < epochs.size(); ++i) data.push_back({epochs[i], labels[i]});
        const CspModel model = csp_fit(data, n_components, shrinkage);
        py::dict d;
        d["filters"] = model.filters;
        d["eigenvalues"] = model.eigenvalues;
        return d;
      },
      py::arg("epochs"), py::arg("labels"), py::arg("n_components"), py::arg("shrinkage") = 0.05);

  m.def(
      "synth_generate",
      [](int n_subjects, int trials_per_subject, double trial_seconds, double snr_db, std::uint64_t seed,
         int n_channels) {
        SynthConfig cfg;
        cfg.n_subjects = n_subjects;
        cfg.trials_per_subject = trials_per_subject;
        cfg.trial_seconds = trial_seconds;
        cfg.snr_db = snr_db;
        cfg.seed = seed;
        cfg.n_channels = n_channels;
        py::list out;
        for (const TrialRecording& t : synth_generate(cfg)) out.append(trial_dict(t));
        return out;
      },
      py::arg("n_subjects") = 6, py::arg("trials_per_subject") = 10, py::arg("trial_seconds") = 20.0,
      py::arg("snr_db") = 5.0, py::arg("seed") = 0, py::arg("n_channels") = 64);

  m.def(
      "load_dataset",
      [](const std::string& root) {
        py::list out;
        for (const TrialRecording& t : load_dataset(root)) out.append(trial_dict(t));
        return out;
      },
      py::arg("root"));

  m.def("window_count", &window_count, py::arg("n_samples"), py::arg("length"), py::arg("hop"));

  m.def(
      "classification_loss",
      [](const Eigen::MatrixXd& probs, const std::vector<int>& labels) { return classification_loss(probs, labels); },
      py::arg("probs"), py::arg("labels"));

  m.def(
      "positive_pair_loss",
      [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& z, const std::vector<int>& labels, double temperature) {
        LossConfig cfg;
        cfg.temperature = temperature;
        return positive_pair_loss(p, z, labels, cfg);
      },
      py::arg("p"), py::arg("z"), py::arg("labels"), py::arg("temperature") = 1.0);

  m.def(
      "claad_loss",
      [](const Eigen::MatrixXd& p1, const Eigen::MatrixXd& z2, const Eigen::MatrixXd& p2, const Eigen::MatrixXd& z1,
         const std::vector<int>& labels) { return claad_loss(p1, z2, p2, z1, labels); },
      py::arg("p1"), py::arg("z2"), py::arg("p2"), py::arg("z1"), py::arg("labels"));

  m.def("positional_encoding", &positional_encoding<double>, py::arg("length"), py::arg("d"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("in_channels", &ModelConfig::in_channels)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("n_blocks", &ModelConfig::n_blocks)
      .def_readwrite("d_repr", &ModelConfig::d_repr)
      .def_readwrite("probe_hidden", &ModelConfig::probe_hidden)
      .def_readwrite("clf_dims", &ModelConfig::clf_dims)
      .def_readwrite("window_len", &ModelConfig::window_len)
      .def_readwrite("input_pe", &ModelConfig::input_pe)
      .def("validate", &ModelConfig::validate);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def("forward", &Model::forward, py::arg("eeg"), py::arg("env_a"), py::arg("env_b"),
           "eeg is [L x in_channels]; returns (z, p, logits).")
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("tensor_names", &Model::tensor_names);

  m.def(
      "parse_config", [](const std::string& text) { return parse_config(text).to_text(); }, py::arg("text"),
      "Canonical text of the effective configuration.");
  m.def(
      "config_hash", [](const std::string& text) { return parse_config(text).hash(); }, py::arg("text"));

  m.def(
      "checkpoint_info",
      [](const std::string& path) {
        const Checkpoint ck = load_checkpoint(path);
        py::dict d;
        d["epoch"] = ck.epoch;
        d["d_model"] = ck.model_config.d_model;
        d["window_len"] = ck.model_config.window_len;
        py::list history;
        for (const EpochRecord& r : ck.history) {
          history.append(py::make_tuple(r.epoch, r.claad_loss, r.classification_loss, r.train_accuracy,
                                        r.val_accuracy));
        }
        d["history"] = history;
        return d;
      },
      py::arg("path"));

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli_run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line entry point; returns (exit_code, stdout, stderr).");
}

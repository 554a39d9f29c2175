import math

import numpy as np
import pytest

import claad


def test_bandpass_keeps_passband_and_removes_drift():
    fs = 64.0
    t = np.arange(640) / fs
    tone = np.sin(2 * np.pi * 5.0 * t)
    y = claad.bandpass(tone + 3.0, fs, 1.0, 9.0, 4)
    assert y.shape == (640,)
    mid = slice(128, 512)
    assert np.max(np.abs(y[mid] - tone[mid])) < 0.05


def test_resample_length():
    x = np.random.default_rng(0).standard_normal(1000)
    assert claad.resample(x, 1000.0, 64.0).shape == (64,)


def test_rereference_subtracts_channel():
    data = np.arange(12, dtype=float).reshape(3, 4)
    out = claad.rereference(data, "ch1")
    np.testing.assert_allclose(out[0], data[0] - data[1])


def test_gammatone_envelope_rate():
    fs = 8000.0
    t = np.arange(int(fs)) / fs
    audio = np.sin(2 * np.pi * 500 * t) * (1 + 0.5 * np.sin(2 * np.pi * 4 * t))
    env = claad.gammatone_envelope(audio, fs)
    assert env.shape == (64,)
    assert np.all(np.isfinite(env))
    assert len(claad.erb_center_frequencies()) == 28


def test_csp_eigenvalues_in_unit_interval():
    rng = np.random.default_rng(1)
    epochs = [rng.standard_normal((4, 100)) * (1 + 2 * (i % 2) * np.array([[1], [0], [0], [0]])) for i in range(8)]
    labels = [i % 2 for i in range(8)]
    csp = claad.csp_fit(epochs, labels, 4)
    assert csp["filters"].shape == (4, 4)
    assert np.all((csp["eigenvalues"] > 0) & (csp["eigenvalues"] < 1))


def test_losses():
    probs = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert claad.classification_loss(probs, [0, 1]) == pytest.approx(-(math.log(0.9) + math.log(0.8)), rel=1e-9)
    e = np.eye(2)
    assert claad.positive_pair_loss(e, e, [0, 1]) == pytest.approx(0.31326, abs=1e-5)
    assert claad.claad_loss(e, e, e, e, [0, 1]) == pytest.approx(0.31326, abs=1e-5)


def test_synth_and_window_count():
    trials = claad.synth_generate(n_subjects=1, trials_per_subject=2, trial_seconds=4.0, n_channels=4, seed=3)
    assert len(trials) == 2
    assert trials[0]["eeg"].shape == (4, 256)
    assert trials[0]["env_a"].shape == (256,)
    assert claad.window_count(640, 128, 64) == 9


def test_model_forward_shapes():
    cfg = claad.ModelConfig()
    cfg.in_channels = 4
    cfg.d_model = 8
    cfg.n_heads = 2
    cfg.n_blocks = 1
    cfg.d_repr = 6
    cfg.probe_hidden = 3
    cfg.clf_dims = [5, 4, 2]
    cfg.window_len = 16
    model = claad.Model(cfg, seed=1)
    rng = np.random.default_rng(2)
    z, p, logits = model.forward(rng.standard_normal((16, 4)), rng.standard_normal(16), rng.standard_normal(16))
    assert z.shape == (6,) and p.shape == (6,) and logits.shape == (2,)
    assert model.parameter_count > 0
    pe = claad.positional_encoding(16, 8)
    assert pe.shape == (16, 8)
    assert pe[0, 1] == pytest.approx(1.0)


def test_config_and_errors():
    text = claad.parse_config("model.d_model = 32\n")
    assert "model.d_model = 32" in text
    assert claad.config_hash("seed = 1\n") == claad.config_hash("seed = 2\n")
    with pytest.raises(claad.ClaadError) as info:
        claad.parse_config("model.d_modle = 3\n")
    assert info.value.exit_code == 1
    assert "model.d_modle" in str(info.value)
    with pytest.raises(claad.ClaadError):
        claad.positive_pair_loss(np.eye(2), np.eye(3), [0, 1])


def test_cli_exit_codes(tmp_path):
    code, _, err = claad.cli(["frobnicate"])
    assert code == 1
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.widht = 4\n")
    code, _, err = claad.cli(["train", "--config", str(cfg), "--out", str(tmp_path / "runs")])
    assert code == 1
    assert "model.widht" in err

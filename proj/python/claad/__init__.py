"""Contrastive auditory attention detection: signal processing, CSP, model and CLI."""

from ._claad import (
    ClaadError,
    Model,
    ModelConfig,
    bandpass,
    checkpoint_info,
    claad_loss,
    classification_loss,
    cli,
    config_hash,
    csp_fit,
    erb_center_frequencies,
    gammatone_envelope,
    load_dataset,
    parse_config,
    positional_encoding,
    positive_pair_loss,
    rereference,
    resample,
    synth_generate,
    window_count,
)

__all__ = [
    "ClaadError",
    "Model",
    "ModelConfig",
    "bandpass",
    "checkpoint_info",
    "claad_loss",
    "classification_loss",
    "cli",
    "config_hash",
    "csp_fit",
    "erb_center_frequencies",
    "gammatone_envelope",
    "load_dataset",
    "parse_config",
    "positional_encoding",
    "positive_pair_loss",
    "rereference",
    "resample",
    "synth_generate",
    "window_count",
]

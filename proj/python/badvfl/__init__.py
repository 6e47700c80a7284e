"""Vertical federated learning sandbox: training, backdoor attacks, defenses."""

from ._core import (
    AlignmentError,
    ConfigError,
    FormatError,
    InputError,
    ProtocolError,
    apply_trigger,
    compress_top_k,
    cosine_similarity,
    defaults,
    even_ranges,
    fingerprint,
    gaussian_noise,
    load_idx,
    make_blobs,
    run_experiment,
    softmax_cross_entropy,
    split_columns,
)

__all__ = [
    "AlignmentError",
    "ConfigError",
    "FormatError",
    "InputError",
    "ProtocolError",
    "apply_trigger",
    "compress_top_k",
    "cosine_similarity",
    "defaults",
    "even_ranges",
    "fingerprint",
    "gaussian_noise",
    "load_idx",
    "make_blobs",
    "run_experiment",
    "softmax_cross_entropy",
    "split_columns",
]

__version__ = "0.1.0"

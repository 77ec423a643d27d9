"""Python access to the tmnn C++ core."""

import json

from ._core import (
    FRAME_RATE,
    N_BINS,
    SAMPLE_RATE,
    AudioError,
    ConfigError,
    DataError,
    FormatError,
    Model,
    NumericalError,
    hamming_window,
    hann_window,
    load_wav,
    modulate,
    modulation_spectrum,
    pr_auc,
    resample,
    roc_auc,
    sinc_kernel,
    stft_power,
    version,
    write_synthetic,
    write_wav,
)
from ._core import read_tensor_file as _read_tensor_file


def read_tensor_file(path):
    """Return (tensors, meta) where meta is the decoded JSON header."""
    tensors, meta = _read_tensor_file(path)
    return tensors, json.loads(meta)


__all__ = [
    "FRAME_RATE",
    "N_BINS",
    "SAMPLE_RATE",
    "AudioError",
    "ConfigError",
    "DataError",
    "FormatError",
    "Model",
    "NumericalError",
    "hamming_window",
    "hann_window",
    "load_wav",
    "modulate",
    "modulation_spectrum",
    "pr_auc",
    "read_tensor_file",
    "resample",
    "roc_auc",
    "sinc_kernel",
    "stft_power",
    "version",
    "write_synthetic",
    "write_wav",
]

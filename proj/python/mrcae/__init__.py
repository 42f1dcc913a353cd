# Copyright 2026 The mrcae Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Multi-resolution convolutional auto-encoder for audio source separation."""

from ._core import (
    ConfigError,
    FormatError,
    NumericError,
    bss_eval,
    conv1d,
    conv_transpose1d,
    gradcheck,
    overlap_add,
    read_wav,
    segment,
    separate,
    synth,
    write_wav,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericError",
    "bss_eval",
    "conv1d",
    "conv_transpose1d",
    "gradcheck",
    "overlap_add",
    "read_wav",
    "segment",
    "separate",
    "synth",
    "write_wav",
]
__version__ = "0.1.0"

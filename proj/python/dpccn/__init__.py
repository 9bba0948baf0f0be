# Copyright 2026 The DPCCN Authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Speech separation and target speech extraction with DPCCN."""

from ._core import (
    DataError,
    Model,
    istft,
    mixture_remix,
    read_manifest,
    read_wav,
    sisnr,
    sisnri,
    snr_scale_factor,
    st_gap,
    stft,
    upit_loss,
    write_wav,
)

__all__ = [
    "DataError",
    "Model",
    "istft",
    "mixture_remix",
    "read_manifest",
    "read_wav",
    "sisnr",
    "sisnri",
    "snr_scale_factor",
    "st_gap",
    "stft",
    "upit_loss",
    "write_wav",
]

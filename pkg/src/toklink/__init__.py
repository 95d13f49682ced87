"""toklink: a link-level simulator for token-based wireless image transmission.

Discrete image tokens are framed into packages, protected by a CRC-aided
polar code, sent as 4-QAM over AWGN, list-decoded, and CRC failures are
masked and handed to a pluggable restorer.  The sweep harness reproduces
TER/BLER/PSNR-versus-SNR curves end to end.
"""

from .crc import crc11_attach, crc11_check
from .framing import (FramingConfig, package_span, packages_to_tokens,
                      tokens_to_packages)
from .metrics import TrialRecord, psnr, token_error_rate
from .modem import ChannelConfig, awgn, bandwidth_ratio, llr_demap, qam4_modulate
from .polar import (DecodeVerdict, PolarConfig, decode_package, encode_package,
                    scl_decode, select_frozen_set)
from .restore import MaskSet, RestorerSpec, apply_mask, build_mask, restore
from .sweep import RunConfig, run_modality_grid, run_sweep
from .tokenizer import toy_detokenize, toy_tokenize

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "DecodeVerdict", "FramingConfig", "MaskSet", "PolarConfig",
    "RestorerSpec", "RunConfig", "TrialRecord", "apply_mask", "awgn",
    "bandwidth_ratio", "build_mask", "crc11_attach", "crc11_check",
    "decode_package", "encode_package", "llr_demap", "package_span",
    "packages_to_tokens", "psnr", "qam4_modulate", "restore", "run_modality_grid",
    "run_sweep", "scl_decode", "select_frozen_set", "token_error_rate",
    "tokens_to_packages", "toy_detokenize", "toy_tokenize",
]

"""Token framing: fixed-width bit packing of token indices into packages.

A token sequence (default 128 indices over an 8192-entry codebook) is split
into contiguous packages of 8 tokens.  Each token expands to a big-endian
13-bit field, giving 104 info bits per package and 16 packages per image
under the defaults.

Serialization formats (used by the CLI and the bridge):

* text: one decimal token index per line, ``\\n``-terminated;
* binary: consecutive unsigned 16-bit little-endian values, one per token
  (the top 3 bits are zero under the default 8192-entry codebook).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FramingConfig:
    codebook_size: int = 8192
    tokens_per_image: int = 128
    tokens_per_package: int = 8

    def __post_init__(self):
        if self.codebook_size < 2 or self.codebook_size & (self.codebook_size - 1):
            raise ValueError(f"codebook_size must be a power of two, got {self.codebook_size}")
        if self.tokens_per_package < 1 or self.tokens_per_image < 1:
            raise ValueError("token counts must be positive")
        if self.tokens_per_image % self.tokens_per_package:
            raise ValueError(
                f"tokens_per_image ({self.tokens_per_image}) not divisible by "
                f"tokens_per_package ({self.tokens_per_package})"
            )

    @property
    def bits_per_token(self) -> int:
        return self.codebook_size.bit_length() - 1

    @property
    def num_packages(self) -> int:
        return self.tokens_per_image // self.tokens_per_package

    @property
    def info_bits_per_package(self) -> int:
        return self.tokens_per_package * self.bits_per_token

    @property
    def total_info_bits(self) -> int:
        return self.tokens_per_image * self.bits_per_token


def validate_tokens(tokens, cfg: FramingConfig) -> np.ndarray:
    """Return ``tokens`` as an int array after range/length validation."""
    arr = np.asarray(tokens)
    if arr.ndim != 1 or arr.shape[0] != cfg.tokens_per_image:
        raise ValueError(f"expected {cfg.tokens_per_image} tokens, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise ValueError("token indices must be integers")
        arr = arr.astype(np.int64)
    if arr.min(initial=0) < 0 or arr.max(initial=0) >= cfg.codebook_size:
        bad = arr[(arr < 0) | (arr >= cfg.codebook_size)][0]
        raise ValueError(f"token index {bad} outside [0, {cfg.codebook_size})")
    return arr.astype(np.int64)


def tokens_to_packages(tokens, cfg: FramingConfig) -> np.ndarray:
    """Pack a token sequence into per-package info-bit blocks, shape (P, A).

    Token p*8+t occupies bits [t*13, (t+1)*13) of block p, most significant
    bit first.
    """
    arr = validate_tokens(tokens, cfg)
    shifts = np.arange(cfg.bits_per_token - 1, -1, -1)
    bits = ((arr[:, None] >> shifts) & 1).astype(np.uint8)
    return bits.reshape(cfg.num_packages, cfg.info_bits_per_package)


def packages_to_tokens(blocks, cfg: FramingConfig) -> np.ndarray:
    """Inverse of :func:`tokens_to_packages`; rejects malformed block arrays."""
    arr = np.asarray(blocks)
    expected = (cfg.num_packages, cfg.info_bits_per_package)
    if arr.shape != expected:
        raise ValueError(f"expected blocks of shape {expected}, got {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("blocks must contain only bits")
    bits = arr.reshape(cfg.tokens_per_image, cfg.bits_per_token).astype(np.int64)
    weights = 1 << np.arange(cfg.bits_per_token - 1, -1, -1)
    return bits @ weights


def package_span(package_index: int, cfg: FramingConfig) -> range:
    """Token positions carried by one package."""
    if not 0 <= package_index < cfg.num_packages:
        raise ValueError(f"package index {package_index} outside [0, {cfg.num_packages})")
    start = package_index * cfg.tokens_per_package
    return range(start, start + cfg.tokens_per_package)


def write_tokens_text(path, tokens, cfg: FramingConfig | None = None) -> None:
    arr = np.asarray(tokens, dtype=np.int64)
    if cfg is not None:
        arr = validate_tokens(arr, cfg)
    Path(path).write_text("".join(f"{t}\n" for t in arr))


def read_tokens_text(path, cfg: FramingConfig | None = None) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().split() if ln]
    arr = np.array([int(ln) for ln in lines], dtype=np.int64)
    return validate_tokens(arr, cfg) if cfg is not None else arr


def write_tokens_u16(path, tokens, cfg: FramingConfig | None = None) -> None:
    arr = np.asarray(tokens, dtype=np.int64)
    if cfg is not None:
        arr = validate_tokens(arr, cfg)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 0xFFFF:
        raise ValueError("token indices do not fit in 16 bits")
    Path(path).write_bytes(arr.astype("<u2").tobytes())


def read_tokens_u16(path, cfg: FramingConfig | None = None) -> np.ndarray:
    arr = np.frombuffer(Path(path).read_bytes(), dtype="<u2").astype(np.int64)
    return validate_tokens(arr, cfg) if cfg is not None else arr

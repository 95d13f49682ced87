"""4-QAM modem, AWGN channel, soft demapper, and bandwidth accounting.

SNR is defined as Es/N0 per complex symbol with unit symbol energy, so the
complex noise variance is sigma^2 = 10^(-snr_db/10), split evenly between
the real and imaginary dimensions.  With 4-QAM this sits 3 dB above Eb/N0;
:func:`esn0_to_ebn0_db` converts between the two conventions.

Noise comes from numpy's counter-based Philox generator keyed with an
explicit 64-bit seed, so identical seeds give bit-identical noise
regardless of call order elsewhere.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

RNG_ALGORITHM = "philox4x64"
NOISELESS_LLR = 40.0
_AMPLITUDE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float = 0.0
    rng_seed: int = 0

    @property
    def noise_variance(self) -> float:
        """Complex-symbol noise power; equals 1 at 0 dB, 0 in the noiseless limit."""
        return 10.0 ** (-self.snr_db / 10.0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))


def qam4_modulate(bits) -> np.ndarray:
    """Gray-map bit pairs (b0, b1) to ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2)."""
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("bit count must be even for 4-QAM")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("modulator input must contain only bits")
    pairs = bits.reshape(bits.shape[:-1] + (-1, 2)).astype(np.float64)
    return (_AMPLITUDE * (1.0 - 2.0 * pairs[..., 0])
            + 1j * _AMPLITUDE * (1.0 - 2.0 * pairs[..., 1]))


def awgn(symbols: np.ndarray, cfg: ChannelConfig,
         rng: np.random.Generator | None = None) -> np.ndarray:
    """y = x + n with circular complex Gaussian noise of power sigma^2."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    if not np.isfinite(symbols).all():
        raise ValueError("non-finite symbols")
    var = cfg.noise_variance
    if var == 0.0:
        return symbols.copy()
    if rng is None:
        rng = make_rng(cfg.rng_seed)
    scale = math.sqrt(var / 2.0)
    noise = rng.normal(0.0, scale, symbols.shape) + 1j * rng.normal(0.0, scale, symbols.shape)
    return symbols + noise


def llr_demap(received: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    """Per-bit LLRs for Gray 4-QAM, two per symbol, positive favouring bit 0.

    The noiseless limit (sigma = 0) degenerates to hard decisions expressed
    as clamped +/-``NOISELESS_LLR`` values rather than a division by zero.
    """
    received = np.asarray(received, dtype=np.complex128)
    var = cfg.noise_variance
    parts = np.stack([received.real, received.imag], axis=-1)
    if var == 0.0:
        llr_pairs = np.sign(parts) * NOISELESS_LLR
    else:
        llr_pairs = (2.0 * math.sqrt(2.0) / var) * parts
    return llr_pairs.reshape(received.shape[:-1] + (-1,))


def hard_bits(llrs: np.ndarray) -> np.ndarray:
    """Sign decision under the positive-means-zero convention (ties go to 0)."""
    return (np.asarray(llrs) < 0).astype(np.uint8)


def bandwidth_ratio(num_symbols: int, height: int, width: int, channels: int) -> Fraction:
    """Exact transmitted-symbols-per-source-pixel ratio."""
    if height <= 0 or width <= 0 or channels <= 0:
        raise ValueError("image dimensions must be positive")
    if num_symbols < 0:
        raise ValueError("symbol count must be non-negative")
    return Fraction(num_symbols, height * width * channels)


def write_symbol_csv(path, symbols: np.ndarray) -> None:
    """Debug dump of complex symbols; columns: index, re, im."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    with open(path, "w") as fh:
        fh.write("index,re,im\n")
        for i, s in enumerate(symbols):
            fh.write(f"{i},{s.real:.10g},{s.imag:.10g}\n")


def read_symbol_csv(path) -> np.ndarray:
    rows = [line.split(",") for line in open(path).read().splitlines()[1:] if line]
    return np.array([complex(float(r[1]), float(r[2])) for r in rows])


def esn0_to_ebn0_db(esn0_db: float, bits_per_symbol: int = 2, code_rate: float = 1.0) -> float:
    return esn0_db - 10.0 * math.log10(bits_per_symbol * code_rate)


def ebn0_to_esn0_db(ebn0_db: float, bits_per_symbol: int = 2, code_rate: float = 1.0) -> float:
    return ebn0_db + 10.0 * math.log10(bits_per_symbol * code_rate)

"""11-bit CRC used as the per-package error detector.

Generator polynomial: g(D) = D^11 + D^10 + D^9 + D^5 + 1, shift register
initialised to zero, no final XOR.  Attachment appends the remainder of
info(D) * D^11 modulo g(D), so a valid payload polynomial is divisible
by g(D).

Computation goes through precomputed GF(2) remainder matrices (one matrix
per message length, cached), which keeps per-package cost at one small
matrix multiply and makes batch operation over leading axes free.
"""

from functools import lru_cache

import numpy as np

CRC_LEN = 11

# Coefficients of g(D) below the leading D^11 term, highest degree first.
_POLY_TAIL = np.array([1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1], dtype=np.uint8)


@lru_cache(maxsize=None)
def _power_remainders(count: int) -> np.ndarray:
    """Remainders of D^0 .. D^(count-1) modulo g(D), shape (count, 11)."""
    out = np.zeros((count, CRC_LEN), dtype=np.uint8)
    rem = np.zeros(CRC_LEN, dtype=np.uint8)
    rem[-1] = 1  # D^0
    for e in range(count):
        out[e] = rem
        carry = rem[0]
        rem = np.roll(rem, -1)
        rem[-1] = 0
        if carry:
            rem ^= _POLY_TAIL
    return out


@lru_cache(maxsize=None)
def _parity_matrix(info_len: int) -> np.ndarray:
    """Matrix P with parity = P @ info (mod 2); column j is D^(info_len-1-j+11) mod g."""
    powers = _power_remainders(info_len + CRC_LEN)
    cols = [powers[CRC_LEN + info_len - 1 - j] for j in range(info_len)]
    return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def _syndrome_matrix(payload_len: int) -> np.ndarray:
    """Matrix S with syndrome = S @ payload (mod 2); zero syndrome means divisible."""
    powers = _power_remainders(payload_len)
    cols = [powers[payload_len - 1 - j] for j in range(payload_len)]
    return np.stack(cols, axis=1)


def crc11_attach(info: np.ndarray) -> np.ndarray:
    """Append 11 parity bits to ``info`` (last axis); batches over leading axes."""
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] == 0:
        raise ValueError("empty info block")
    parity = (info @ _parity_matrix(info.shape[-1]).T) % 2
    return np.concatenate([info, parity.astype(np.uint8)], axis=-1)


def crc11_check(payload: np.ndarray) -> np.ndarray | bool:
    """True where the payload polynomial is divisible by g(D).

    Returns a scalar bool for a 1-D payload, a boolean array for batches.
    """
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape[-1] <= CRC_LEN:
        raise ValueError(f"payload must be longer than {CRC_LEN} bits")
    syndrome = (payload.astype(np.int64) @ _syndrome_matrix(payload.shape[-1]).T) % 2
    ok = ~syndrome.any(axis=-1)
    return bool(ok) if ok.ndim == 0 else ok

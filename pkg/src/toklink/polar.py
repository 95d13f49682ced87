"""CRC-aided polar package codec following the 5G NR downlink-style chain.

One package travels through four stages::

    info bits --crc11_attach--> payload --polar_encode--> codeword
              --subblock_interleave--> circular buffer --rate_match--> E bits
              --channel_interleave--> transmitted bits

and back through the mirror stages into the list decoder.  The optional
input-bit interleaver and parity-check bits of the full standard chain are
intentionally absent: the 11-bit CRC alone carries the per-package verdict.

LLR sign convention, fixed package-wide: **positive LLR means bit 0 is the
more likely value**.  All decoder inputs must be finite; "known zero" bits
re-inserted by rate recovery use the large finite surrogate
``SHORTENED_LLR`` instead of infinity.
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import crc
from .nr_tables import MAX_MOTHER_CODE_LEN, RELIABILITY_SEQUENCE, SUBBLOCK_PATTERN

MIN_MOTHER_CODE_LEN = 32
MAX_RATE_MATCHED_LEN = 8192  # triangular interleaver domain
SHORTENED_LLR = 1e4


@dataclass(frozen=True)
class PolarConfig:
    """Code parameters for one package; hashable so derived tables can cache."""

    info_len: int = 104
    crc_len: int = 11
    mother_code_len: int = 256
    rate_matched_len: int = 256
    list_size: int = 8
    exact_f: bool = False  # min-sum check-node update unless set

    def __post_init__(self):
        n, e = self.mother_code_len, self.rate_matched_len
        if self.crc_len != crc.CRC_LEN:
            raise ValueError(f"crc_len is fixed at {crc.CRC_LEN}")
        if self.info_len < 1:
            raise ValueError("info_len must be positive")
        if n & (n - 1) or not MIN_MOTHER_CODE_LEN <= n <= MAX_MOTHER_CODE_LEN:
            raise ValueError(
                f"mother_code_len must be a power of two in "
                f"[{MIN_MOTHER_CODE_LEN}, {MAX_MOTHER_CODE_LEN}], got {n}"
            )
        if self.payload_len > n:
            raise ValueError(f"payload length {self.payload_len} exceeds mother code length {n}")
        if self.payload_len > e:
            raise ValueError(f"payload length {self.payload_len} exceeds rate-matched length {e}")
        if e > MAX_RATE_MATCHED_LEN:
            raise ValueError(f"rate_matched_len above {MAX_RATE_MATCHED_LEN} is unsupported")
        if self.list_size < 1:
            raise ValueError("list_size must be positive")

    @property
    def payload_len(self) -> int:
        return self.info_len + self.crc_len


@dataclass
class DecodeVerdict:
    """Outcome of one package decode: best surviving path plus its CRC status."""

    info_bits: np.ndarray
    crc_ok: bool
    path_metric: float


# ---------------------------------------------------------------------------
# code construction
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _subblock_perm(n: int) -> np.ndarray:
    i = np.arange(n)
    return (SUBBLOCK_PATTERN[(32 * i) // n] * (n // 32) + i % (n // 32)).astype(np.int64)


def _rate_match_mode(payload_len: int, n: int, e: int) -> str:
    if e >= n:
        return "repeat"
    return "puncture" if 16 * payload_len <= 7 * e else "shorten"


def frozen_index_set(mother_code_len: int, payload_len: int,
                     rate_matched_len: int | None = None) -> frozenset:
    """Frozen input positions for an (N, K) code transmitted over E bits.

    The K most reliable usable channels carry the payload; everything else
    is frozen.  When E < N the circular buffer makes some channels unusable
    (punctured ones are unobserved, shortened ones must encode to zero), so
    those are removed from the usable pool first.
    """
    n, k = mother_code_len, payload_len
    e = n if rate_matched_len is None else rate_matched_len
    if n & (n - 1) or not MIN_MOTHER_CODE_LEN <= n <= MAX_MOTHER_CODE_LEN:
        raise ValueError(f"unsupported mother code length {n}")
    if not 0 <= k <= n:
        raise ValueError(f"payload length {k} outside [0, {n}]")
    seq = RELIABILITY_SEQUENCE[RELIABILITY_SEQUENCE < n]
    blocked: set[int] = set()
    if e < n:
        perm = _subblock_perm(n)
        if _rate_match_mode(k, n, e) == "puncture":
            blocked.update(perm[: n - e].tolist())
            if 4 * e >= 3 * n:
                blocked.update(range(-(-(3 * n - 2 * e) // 4)))
            else:
                blocked.update(range(-(-(9 * n - 4 * e) // 16)))
        else:
            blocked.update(perm[e:].tolist())
    usable = [int(i) for i in seq if int(i) not in blocked]
    if len(usable) < k:
        raise ValueError(
            f"unsupported E/N combination: only {len(usable)} usable channels "
            f"for payload length {k} (N={n}, E={e})"
        )
    info = set(usable[len(usable) - k:])
    return frozenset(i for i in range(n) if i not in info)


def select_frozen_set(cfg: PolarConfig) -> frozenset:
    """Frozen set implied by a config (N - K positions)."""
    return frozen_index_set(cfg.mother_code_len, cfg.payload_len, cfg.rate_matched_len)


@lru_cache(maxsize=None)
def _tables(cfg: PolarConfig):
    """Read-only per-config tables shared by encoder and decoder."""
    n = cfg.mother_code_len
    frozen = select_frozen_set(cfg)
    frozen_mask = np.zeros(n, dtype=bool)
    frozen_mask[list(frozen)] = True
    info_positions = np.flatnonzero(~frozen_mask)
    return frozen_mask, info_positions


# ---------------------------------------------------------------------------
# encoder-side stages
# ---------------------------------------------------------------------------

def polar_transform(u: np.ndarray) -> np.ndarray:
    """Apply the binary Kronecker-power transform along the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    if n & (n - 1) or n < 1:
        raise ValueError(f"transform length must be a power of two, got {n}")
    h = 1
    while h < n:
        v = x.reshape(x.shape[:-1] + (n // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def polar_encode(payload: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    """Place payload bits on the unfrozen positions (ascending) and transform."""
    payload = _check_bits(payload, cfg.payload_len, "payload")
    _, info_positions = _tables(cfg)
    u = np.zeros(payload.shape[:-1] + (cfg.mother_code_len,), dtype=np.uint8)
    u[..., info_positions] = payload
    return polar_transform(u)


def subblock_interleave(bits: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    bits = np.asarray(bits)
    _check_len(bits, cfg.mother_code_len, "codeword")
    return bits[..., _subblock_perm(cfg.mother_code_len)]


def subblock_deinterleave(values: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    values = np.asarray(values)
    _check_len(values, cfg.mother_code_len, "block")
    out = np.empty_like(values)
    out[..., _subblock_perm(cfg.mother_code_len)] = values
    return out


def rate_match(buffer_bits: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    """Circular-buffer bit selection from the sub-block-interleaved codeword."""
    buf = np.asarray(buffer_bits)
    n, e = cfg.mother_code_len, cfg.rate_matched_len
    _check_len(buf, n, "circular buffer")
    mode = _rate_match_mode(cfg.payload_len, n, e)
    if mode == "repeat":
        return buf[..., np.arange(e) % n]
    if mode == "puncture":
        return buf[..., n - e:]
    return buf[..., :e]


def rate_recover(llrs: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    """Map E received LLRs back onto the N-bit circular buffer.

    Repeated positions accumulate their LLRs, punctured positions come back
    as erasures (LLR 0), shortened positions as known zeros (large positive
    LLR surrogate).
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    n, e = cfg.mother_code_len, cfg.rate_matched_len
    _check_len(llrs, e, "rate-matched LLR block")
    mode = _rate_match_mode(cfg.payload_len, n, e)
    lead = llrs.shape[:-1]
    if mode == "repeat":
        pad = (-e) % n
        padded = np.concatenate([llrs, np.zeros(lead + (pad,))], axis=-1)
        return padded.reshape(lead + (-1, n)).sum(axis=-2)
    if mode == "puncture":
        return np.concatenate([np.zeros(lead + (n - e,)), llrs], axis=-1)
    return np.concatenate([llrs, np.full(lead + (n - e,), SHORTENED_LLR)], axis=-1)


@lru_cache(maxsize=None)
def _triangle_perm(e: int) -> np.ndarray:
    """Read order of the row-written isosceles triangle holding e entries."""
    t = 1
    while t * (t + 1) < 2 * e:
        t += 1
    row_start = [i * t - i * (i - 1) // 2 for i in range(t)]
    order = []
    for col in range(t):
        for row in range(t - col):
            k = row_start[row] + col
            if k < e:
                order.append(k)
    return np.array(order, dtype=np.int64)


def channel_interleave(bits: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    bits = np.asarray(bits)
    _check_len(bits, cfg.rate_matched_len, "rate-matched block")
    return bits[..., _triangle_perm(cfg.rate_matched_len)]


def channel_deinterleave(values: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    values = np.asarray(values)
    _check_len(values, cfg.rate_matched_len, "rate-matched block")
    out = np.empty_like(values)
    out[..., _triangle_perm(cfg.rate_matched_len)] = values
    return out


def encode_package(info: np.ndarray, cfg: PolarConfig) -> np.ndarray:
    """Full forward chain: CRC, transform, sub-block permute, select, permute."""
    info = _check_bits(info, cfg.info_len, "info block")
    payload = crc.crc11_attach(info)
    codeword = polar_encode(payload, cfg)
    matched = rate_match(subblock_interleave(codeword, cfg), cfg)
    return channel_interleave(matched, cfg)


def decode_package(llrs: np.ndarray, cfg: PolarConfig) -> DecodeVerdict:
    """Full reverse chain from E received LLRs to a decode verdict."""
    recovered = rate_recover(channel_deinterleave(llrs, cfg), cfg)
    return scl_decode(subblock_deinterleave(recovered, cfg), cfg)


def decode_package_batch(llrs: np.ndarray, cfg: PolarConfig):
    recovered = rate_recover(channel_deinterleave(llrs, cfg), cfg)
    return scl_decode_batch(subblock_deinterleave(recovered, cfg), cfg)


# ---------------------------------------------------------------------------
# successive cancellation list decoder
# ---------------------------------------------------------------------------

def _f_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def _f_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    return (np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))
            - np.maximum(a, b) - np.log1p(np.exp(-np.abs(a - b))))


class _ListDecoder:
    """One batched list-decoding pass; no state survives between calls.

    All candidate bookkeeping is vectorised over a leading batch axis, so a
    whole trial's worth of packages decodes in one sweep of the recursion.
    Candidates are pruned with a stable sort, making tie-breaks deterministic
    by path index.
    """

    def __init__(self, frozen_mask: np.ndarray, list_size: int, exact_f: bool):
        self.frozen_mask = frozen_mask
        self.list_size = list_size
        self.f = _f_exact if exact_f else _f_minsum

    def decode(self, llrs: np.ndarray):
        """Return (payloads, costs) sorted best-first along the list axis."""
        batch = llrs.shape[0]
        self.costs = np.zeros((batch, 1))
        self.payloads = np.zeros((batch, 1, 0), dtype=np.uint8)
        self.idx = np.zeros((batch, 1), dtype=np.int64)
        self._node(llrs[:, None, :], 0)
        order = np.argsort(self.costs, axis=1, kind="stable")
        costs = np.take_along_axis(self.costs, order, axis=1)
        payloads = np.take_along_axis(self.payloads, order[:, :, None], axis=1)
        return payloads, costs

    def _node(self, llrs: np.ndarray, pos: int) -> np.ndarray:
        # llrs rows are aligned with the current candidates on entry.
        n = llrs.shape[-1]
        if n == 1:
            return self._leaf(llrs[:, :, 0], pos)
        half = n // 2
        a, b = llrs[..., :half], llrs[..., half:]
        x_left = self._node(self.f(a, b), pos)
        left_map = self.idx
        a_g = np.take_along_axis(a, left_map[:, :, None], axis=1)
        b_g = np.take_along_axis(b, left_map[:, :, None], axis=1)
        x_right = self._node((1 - 2 * x_left.astype(np.float64)) * a_g + b_g, pos + half)
        x_left = np.take_along_axis(x_left, self.idx[:, :, None], axis=1)
        self.idx = np.take_along_axis(left_map, self.idx, axis=1)
        return np.concatenate([x_left ^ x_right, x_right], axis=2)

    def _leaf(self, lam: np.ndarray, pos: int) -> np.ndarray:
        batch, count = lam.shape
        if self.frozen_mask[pos]:
            self.costs = self.costs + np.maximum(0.0, -lam)
            self.idx = np.broadcast_to(np.arange(count), (batch, count)).copy()
            return np.zeros((batch, count, 1), dtype=np.uint8)
        both = np.concatenate(
            [self.costs + np.maximum(0.0, -lam), self.costs + np.maximum(0.0, lam)], axis=1)
        keep = min(self.list_size, 2 * count)
        order = np.argsort(both, axis=1, kind="stable")[:, :keep]
        self.costs = np.take_along_axis(both, order, axis=1)
        bits = (order >= count).astype(np.uint8)
        src = order % count
        kept = np.take_along_axis(self.payloads, src[:, :, None], axis=1)
        self.payloads = np.concatenate([kept, bits[:, :, None]], axis=2)
        self.idx = src
        return bits[:, :, None]


def scl_decode_batch(llrs: np.ndarray, cfg: PolarConfig):
    """List-decode a (batch, N) LLR array.

    Returns ``(info_bits, crc_ok, path_metric)`` with shapes (batch, A),
    (batch,), (batch,).  Per package, the best-metric CRC-passing path wins;
    with no passing path the overall best path is reported with
    ``crc_ok`` false.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.ndim != 2 or llrs.shape[1] != cfg.mother_code_len:
        raise ValueError(f"expected (batch, {cfg.mother_code_len}) LLRs, got {llrs.shape}")
    if not np.isfinite(llrs).all():
        raise ValueError("non-finite LLR input")
    frozen_mask, _ = _tables(cfg)
    payloads, costs = _ListDecoder(frozen_mask, cfg.list_size, cfg.exact_f).decode(llrs)
    batch, count, _ = payloads.shape
    ok = crc.crc11_check(payloads.reshape(batch * count, -1)).reshape(batch, count)
    first_ok = np.where(ok.any(axis=1), ok.argmax(axis=1), 0)
    rows = np.arange(batch)
    chosen = payloads[rows, first_ok]
    return (chosen[:, : cfg.info_len],
            ok.any(axis=1),
            costs[rows, first_ok])


def scl_decode(llrs: np.ndarray, cfg: PolarConfig) -> DecodeVerdict:
    """Decode one package worth of mother-code LLRs."""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.ndim != 1:
        raise ValueError("scl_decode expects a 1-D LLR block")
    info, ok, metric = scl_decode_batch(llrs[None, :], cfg)
    return DecodeVerdict(info_bits=info[0], crc_ok=bool(ok[0]), path_metric=float(metric[0]))


# ---------------------------------------------------------------------------
# golden-vector fixtures
# ---------------------------------------------------------------------------

STAGE_NAMES = ("info", "payload", "codeword", "subblock", "rate_matched", "transmitted")


def pipeline_stages(info: np.ndarray, cfg: PolarConfig) -> dict[str, np.ndarray]:
    """Every intermediate bit block of the forward chain, keyed by stage."""
    info = _check_bits(info, cfg.info_len, "info block")
    payload = crc.crc11_attach(info)
    codeword = polar_encode(payload, cfg)
    sub = subblock_interleave(codeword, cfg)
    matched = rate_match(sub, cfg)
    tx = channel_interleave(matched, cfg)
    return {"info": info, "payload": payload, "codeword": codeword,
            "subblock": sub, "rate_matched": matched, "transmitted": tx}


def bits_to_hex(bits: np.ndarray) -> str:
    """Bits to hex, first bit most significant; bit count prefix keeps it exact."""
    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.concatenate([bits, np.zeros((-len(bits)) % 4, dtype=np.uint8)])
    digits = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1])
    return f"{len(bits)}:" + "".join(f"{d:x}" for d in digits)


def hex_to_bits(text: str) -> np.ndarray:
    length, _, digits = text.strip().partition(":")
    bits = np.array([(int(d, 16) >> s) & 1 for d in digits for s in (3, 2, 1, 0)],
                    dtype=np.uint8)
    return bits[: int(length)]


def write_golden_vector(path, info: np.ndarray, cfg: PolarConfig) -> None:
    """One ``stage hex`` line per pipeline stage (format documented in README)."""
    stages = pipeline_stages(info, cfg)
    lines = [f"{name} {bits_to_hex(stages[name])}" for name in STAGE_NAMES]
    Path(path).write_text("".join(f"{ln}\n" for ln in lines))


def read_golden_vector(path) -> dict[str, np.ndarray]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        name, hexpart = line.split()
        out[name] = hex_to_bits(hexpart)
    return out


def check_golden_vector(path, cfg: PolarConfig) -> list[str]:
    """Names of stages whose recomputed bits differ from the fixture (empty = pass)."""
    recorded = read_golden_vector(path)
    live = pipeline_stages(recorded["info"], cfg)
    return [name for name in STAGE_NAMES if not np.array_equal(recorded[name], live[name])]


# ---------------------------------------------------------------------------
# small shared validators
# ---------------------------------------------------------------------------

def _check_len(arr: np.ndarray, expected: int, label: str) -> None:
    if arr.shape[-1] != expected:
        raise ValueError(f"{label} must have {expected} entries, got {arr.shape[-1]}")


def _check_bits(arr, expected: int, label: str) -> np.ndarray:
    arr = np.asarray(arr)
    _check_len(arr, expected, label)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{label} must contain only bits")
    return arr.astype(np.uint8)

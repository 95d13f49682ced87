"""Mask construction from CRC verdicts and pluggable token restoration.

Positions covered by CRC-failing packages form the mask set; masking
replaces those tokens with the ``MASK`` sentinel (-1) while remembering the
decoder's untrusted best guess as a baseline.  A restorer then fills every
masked slot; built-in restorers need no models, the ``external`` kind
forwards to a model bridge over the wire protocol below.

Wire protocol (v1), shared with the bridge server
-------------------------------------------------
Messages are length-prefixed JSON over a stream socket (TCP) or pipe: a
4-byte big-endian unsigned payload length, then that many bytes of UTF-8
JSON.  Every message carries ``"v": 1`` and a correlation ``"id"`` echoed
by the response.  Requests used here::

    {"v": 1, "id": 7, "op": "restore", "tokens": [...128 ints, -1 = MASK],
     "text": "optional prompt"}
        -> {"v": 1, "id": 7, "tokens": [...128 ints]}
    {"v": 1, "id": 8, "op": "lpips", "image": "<b64 png>", "image_ref": "<b64 png>"}
        -> {"v": 1, "id": 8, "value": 0.12}
    {"v": 1, "id": 9, "op": "clip_similarity", "image": ..., "image_ref": ...}
        -> {"v": 1, "id": 9, "value": 0.98}

Errors come back as ``{"v": 1, "id": n, "err": "code"}``.
"""

import base64
import json
import socket
import struct
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .framing import FramingConfig, package_span, validate_tokens

MASK = -1
PROTOCOL_VERSION = 1
BUILTIN_KINDS = ("passthrough", "constant_fill", "marginal_fill", "oracle", "external")


class BridgeError(RuntimeError):
    """External restorer endpoint unreachable, timed out, or misbehaving."""


@dataclass(frozen=True)
class MaskSet:
    """Token positions flagged as potentially corrupted."""

    positions: frozenset

    def __len__(self) -> int:
        return len(self.positions)

    def to_array(self, length: int) -> np.ndarray:
        mask = np.zeros(length, dtype=bool)
        mask[list(self.positions)] = True
        return mask


@dataclass
class MaskedTokenSequence:
    """Per-position token or MASK, plus the pre-mask decode as baseline."""

    entries: np.ndarray   # int array, MASK (-1) at masked positions
    baseline: np.ndarray  # the decoder's full best-guess sequence

    @property
    def mask_positions(self) -> np.ndarray:
        return np.flatnonzero(self.entries == MASK)


def build_mask(verdicts, cfg: FramingConfig) -> MaskSet:
    """Union of spans of CRC-failing packages."""
    verdicts = list(verdicts)
    if len(verdicts) != cfg.num_packages:
        raise ValueError(f"expected {cfg.num_packages} verdicts, got {len(verdicts)}")
    positions: set[int] = set()
    for p, verdict in enumerate(verdicts):
        ok = verdict.crc_ok if hasattr(verdict, "crc_ok") else bool(verdict)
        if not ok:
            positions.update(package_span(p, cfg))
    return MaskSet(frozenset(positions))


def apply_mask(decoded, mask: MaskSet) -> MaskedTokenSequence:
    decoded = np.asarray(decoded, dtype=np.int64)
    if decoded.ndim != 1:
        raise ValueError("decoded token sequence must be 1-D")
    entries = decoded.copy()
    for pos in mask.positions:
        if not 0 <= pos < decoded.size:
            raise ValueError(f"mask position {pos} outside [0, {decoded.size})")
        entries[pos] = MASK
    return MaskedTokenSequence(entries=entries, baseline=decoded)


@dataclass(frozen=True)
class RestorerSpec:
    """Which restorer fills masked slots, plus its parameters.

    ``oracle`` carries the ground-truth sequence and is meant for harness and
    test use only (it cannot exist at a real receiver).  ``external`` points
    at a bridge endpoint ``host:port`` and names a builtin to fall back to
    when the bridge is unreachable (None disables the fallback).
    """

    kind: str
    fill_token: int = 0
    ground_truth: Optional[tuple] = None
    endpoint: Optional[str] = None
    text_prompt: Optional[str] = None
    fallback: Optional[str] = "passthrough"
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.kind not in BUILTIN_KINDS:
            raise ValueError(f"unknown restorer kind {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external restorer needs an endpoint")

    @classmethod
    def passthrough(cls) -> "RestorerSpec":
        return cls(kind="passthrough")

    @classmethod
    def constant(cls, token: int) -> "RestorerSpec":
        return cls(kind="constant_fill", fill_token=token)

    @classmethod
    def marginal(cls) -> "RestorerSpec":
        return cls(kind="marginal_fill")

    @classmethod
    def oracle(cls, ground_truth) -> "RestorerSpec":
        return cls(kind="oracle", ground_truth=tuple(int(t) for t in ground_truth))

    @classmethod
    def external(cls, endpoint: str, text_prompt: str | None = None,
                 fallback: str | None = "passthrough") -> "RestorerSpec":
        return cls(kind="external", endpoint=endpoint, text_prompt=text_prompt,
                   fallback=fallback)

    def with_ground_truth(self, tokens) -> "RestorerSpec":
        return replace(self, ground_truth=tuple(int(t) for t in tokens))


def parse_restorer_arg(arg: str) -> RestorerSpec:
    """CLI grammar: passthrough | constant:K | marginal | oracle | external:HOST:PORT."""
    name, _, param = arg.partition(":")
    if name == "passthrough":
        return RestorerSpec.passthrough()
    if name == "constant":
        if not param:
            raise ValueError("constant restorer needs a token value, e.g. constant:0")
        return RestorerSpec.constant(int(param))
    if name == "marginal":
        return RestorerSpec.marginal()
    if name == "oracle":
        return RestorerSpec(kind="oracle")  # ground truth injected per trial
    if name == "external":
        if not param:
            raise ValueError("external restorer needs an endpoint, e.g. external:localhost:9700")
        return RestorerSpec.external(param)
    raise ValueError(f"unknown restorer {arg!r}")


def _marginal_fill_value(masked: MaskedTokenSequence) -> int:
    unmasked = masked.entries[masked.entries != MASK]
    if unmasked.size == 0:
        return 0
    counts = Counter(unmasked.tolist())
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return int(best[0])


def _restore_builtin(masked: MaskedTokenSequence, spec: RestorerSpec) -> np.ndarray:
    out = masked.entries.copy()
    holes = masked.mask_positions
    if spec.kind == "passthrough":
        out[holes] = masked.baseline[holes]
    elif spec.kind == "constant_fill":
        out[holes] = spec.fill_token
    elif spec.kind == "marginal_fill":
        out[holes] = _marginal_fill_value(masked)
    elif spec.kind == "oracle":
        if spec.ground_truth is None:
            raise ValueError("oracle restorer has no ground truth attached")
        truth = np.asarray(spec.ground_truth, dtype=np.int64)
        if truth.shape != masked.entries.shape:
            raise ValueError("oracle ground truth length mismatch")
        out[holes] = truth[holes]
    else:
        raise ValueError(f"not a builtin restorer: {spec.kind}")
    return out


def restore(masked: MaskedTokenSequence, spec: RestorerSpec,
            client: "BridgeClient | None" = None,
            events: list | None = None) -> np.ndarray:
    """Fill every masked slot; unmasked positions are never altered.

    ``client`` supplies a live bridge connection for the external kind;
    ``events`` (if given) collects fallback notices for run metadata.
    """
    if spec.kind == "external":
        try:
            if client is None:
                raise BridgeError("no bridge connection")
            filled = client.restore(masked.entries, spec.text_prompt)
            out = np.asarray(filled, dtype=np.int64)
            if out.shape != masked.entries.shape:
                raise BridgeError("bridge returned wrong token count")
        except BridgeError:
            if spec.fallback is None:
                raise
            if events is not None:
                events.append({"event": "bridge_fallback", "to": spec.fallback})
            out = _restore_builtin(masked, parse_restorer_arg(spec.fallback))
    else:
        out = _restore_builtin(masked, spec)
    keep = masked.entries != MASK
    if not np.array_equal(out[keep], masked.entries[keep]):
        # hard contract: clamp and note it rather than propagate a bad fill
        if events is not None:
            events.append({"event": "restorer_touched_unmasked", "kind": spec.kind})
        out[keep] = masked.entries[keep]
    if (out == MASK).any():
        raise ValueError("restorer left MASK entries unfilled")
    return out


def restored_sequence(decoded, verdicts, spec: RestorerSpec, cfg: FramingConfig,
                      client: "BridgeClient | None" = None,
                      events: list | None = None) -> tuple[np.ndarray, MaskSet]:
    """Convenience: build mask, apply it, restore; returns (tokens, mask)."""
    mask = build_mask(verdicts, cfg)
    masked = apply_mask(validate_tokens(decoded, cfg), mask)
    return restore(masked, spec, client=client, events=events), mask


# ---------------------------------------------------------------------------
# bridge wire client
# ---------------------------------------------------------------------------

def send_message(sock: socket.socket, payload: dict) -> None:
    body = json.dumps(payload, separators=(",", ":")).encode()
    sock.sendall(struct.pack(">I", len(body)) + body)


def recv_message(sock: socket.socket) -> dict:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    return json.loads(_recv_exact(sock, length).decode())


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    while count:
        chunk = sock.recv(count)
        if not chunk:
            raise BridgeError("bridge connection closed mid-message")
        chunks.append(chunk)
        count -= len(chunk)
    return b"".join(chunks)


class BridgeClient:
    """Serial request/response client for the model bridge protocol."""

    def __init__(self, endpoint: str, timeout_s: float = 10.0):
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout_s)
        except OSError as exc:
            raise BridgeError(f"cannot reach bridge at {endpoint}: {exc}") from exc
        self._next_id = 0

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, payload: dict) -> dict:
        self._next_id += 1
        payload = {"v": PROTOCOL_VERSION, "id": self._next_id, **payload}
        try:
            send_message(self._sock, payload)
            reply = recv_message(self._sock)
        except (OSError, json.JSONDecodeError) as exc:
            raise BridgeError(f"bridge call failed: {exc}") from exc
        if reply.get("v") != PROTOCOL_VERSION:
            raise BridgeError(f"bad protocol version in reply: {reply.get('v')}")
        if reply.get("id") != payload["id"]:
            raise BridgeError("bridge reply correlation id mismatch")
        if "err" in reply:
            raise BridgeError(f"bridge error: {reply['err']}")
        return reply

    def restore(self, tokens, text: str | None = None) -> list:
        req = {"op": "restore", "tokens": [int(t) for t in tokens]}
        if text is not None:
            req["text"] = text
        reply = self._call(req)
        if "tokens" not in reply:
            raise BridgeError("restore reply missing tokens")
        return reply["tokens"]

    def lpips(self, image_png: bytes, ref_png: bytes) -> float:
        reply = self._call({
            "op": "lpips",
            "image": base64.b64encode(image_png).decode(),
            "image_ref": base64.b64encode(ref_png).decode(),
        })
        return float(reply["value"])

    def clip_similarity(self, image_png: bytes, ref_png: bytes) -> float:
        reply = self._call({
            "op": "clip_similarity",
            "image": base64.b64encode(image_png).decode(),
            "image_ref": base64.b64encode(ref_png).decode(),
        })
        return float(reply["value"])

import json
import socket
import struct
import threading
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toklink.polar import DecodeVerdict
from toklink.restore import (MASK, BridgeClient, BridgeError, MaskSet,
                             RestorerSpec, apply_mask, build_mask,
                             parse_restorer_arg, restore, restored_sequence)


def verdicts(ok_flags):
    return [DecodeVerdict(info_bits=np.zeros(104, dtype=np.uint8), crc_ok=ok,
                          path_metric=0.0) for ok in ok_flags]


# ---------------------------------------------------------------------------
# mask construction and application
# ---------------------------------------------------------------------------

def test_all_ok_gives_empty_mask(framing_cfg):
    assert len(build_mask(verdicts([True] * 16), framing_cfg)) == 0


def test_failing_packages_map_to_spans(framing_cfg):
    flags = [True] * 16
    flags[2] = flags[5] = False
    mask = build_mask(verdicts(flags), framing_cfg)
    assert mask.positions == frozenset(range(16, 24)) | frozenset(range(40, 48))


def test_all_fail_masks_everything(framing_cfg):
    mask = build_mask(verdicts([False] * 16), framing_cfg)
    assert mask.positions == frozenset(range(128))


def test_wrong_verdict_count_rejected(framing_cfg):
    with pytest.raises(ValueError):
        build_mask(verdicts([True] * 15), framing_cfg)


def test_adding_failure_never_shrinks_mask(framing_cfg, rng):
    flags = rng.random(16) < 0.5
    base = build_mask(verdicts(flags.tolist()), framing_cfg)
    for p in range(16):
        worse = flags.copy()
        worse[p] = False
        grown = build_mask(verdicts(worse.tolist()), framing_cfg)
        assert base.positions - frozenset(range(p * 8, p * 8 + 8)) <= grown.positions


def test_apply_mask_examples(rng):
    tokens = np.array([7, 9, 3, 1])
    out = apply_mask(tokens, MaskSet(frozenset({0})))
    assert out.entries.tolist() == [MASK, 9, 3, 1]
    assert out.baseline.tolist() == [7, 9, 3, 1]
    assert apply_mask(tokens, MaskSet(frozenset())).entries.tolist() == [7, 9, 3, 1]
    assert (apply_mask(tokens, MaskSet(frozenset(range(4)))).entries == MASK).all()
    with pytest.raises(ValueError):
        apply_mask(tokens, MaskSet(frozenset({4})))


# ---------------------------------------------------------------------------
# builtin restorers
# ---------------------------------------------------------------------------

def test_empty_mask_is_noop_for_every_kind(rng):
    tokens = rng.integers(0, 8192, 128)
    masked = apply_mask(tokens, MaskSet(frozenset()))
    for spec in (RestorerSpec.passthrough(), RestorerSpec.constant(5),
                 RestorerSpec.marginal(), RestorerSpec.oracle(np.zeros(128, int))):
        assert np.array_equal(restore(masked, spec), tokens)


def test_passthrough_keeps_decoder_guess(rng):
    tokens = rng.integers(0, 8192, 128)
    masked = apply_mask(tokens, MaskSet(frozenset(range(8))))
    assert np.array_equal(restore(masked, RestorerSpec.passthrough()), tokens)


def test_constant_fill(rng):
    tokens = rng.integers(0, 8192, 128)
    out = restore(apply_mask(tokens, MaskSet(frozenset({1, 2}))), RestorerSpec.constant(77))
    assert out[1] == out[2] == 77
    assert np.array_equal(out[3:], tokens[3:])


def test_marginal_fill_matches_histogram_oracle(rng):
    tokens = rng.integers(0, 16, 128)  # small alphabet forces repeats
    mask = MaskSet(frozenset(range(40, 48)))
    out = restore(apply_mask(tokens, mask), RestorerSpec.marginal())
    unmasked = [int(t) for i, t in enumerate(tokens) if i not in mask.positions]
    counts = Counter(unmasked)
    top = max(counts.values())
    expected = min(t for t, c in counts.items() if c == top)
    assert (out[40:48] == expected).all()


def test_marginal_fill_with_everything_masked(rng):
    tokens = rng.integers(0, 8192, 128)
    out = restore(apply_mask(tokens, MaskSet(frozenset(range(128)))), RestorerSpec.marginal())
    assert (out == 0).all()


def test_oracle_restores_ground_truth(rng):
    truth = rng.integers(0, 8192, 128)
    decoded = truth.copy()
    decoded[16:24] = 0
    mask = MaskSet(frozenset(range(16, 24)))
    out = restore(apply_mask(decoded, mask), RestorerSpec.oracle(truth))
    assert np.array_equal(out, truth)


def test_oracle_without_truth_rejected(rng):
    masked = apply_mask(rng.integers(0, 8192, 128), MaskSet(frozenset({0})))
    with pytest.raises(ValueError, match="ground truth"):
        restore(masked, RestorerSpec(kind="oracle"))


@settings(max_examples=30)
@given(st.sets(st.integers(0, 127), max_size=128),
       st.sampled_from(["passthrough", "constant", "marginal", "oracle"]))
def test_restorers_never_touch_unmasked_positions(positions, kind):
    rng = np.random.default_rng(5)
    tokens = rng.integers(0, 8192, 128)
    spec = {
        "passthrough": RestorerSpec.passthrough(),
        "constant": RestorerSpec.constant(123),
        "marginal": RestorerSpec.marginal(),
        "oracle": RestorerSpec.oracle(rng.integers(0, 8192, 128)),
    }[kind]
    mask = MaskSet(frozenset(positions))
    out = restore(apply_mask(tokens, mask), spec)
    keep = np.ones(128, dtype=bool)
    keep[list(positions)] = False
    assert np.array_equal(out[keep], tokens[keep])
    assert not (out == MASK).any()
    assert out.min() >= 0 and out.max() < 8192


def test_restored_sequence_composition(framing_cfg, rng):
    tokens = rng.integers(0, 8192, 128)
    flags = [True] * 16
    flags[7] = False
    out, mask = restored_sequence(tokens, verdicts(flags), RestorerSpec.constant(1),
                                  framing_cfg)
    assert mask.positions == frozenset(range(56, 64))
    assert (out[56:64] == 1).all()


def test_parse_restorer_arg():
    assert parse_restorer_arg("passthrough").kind == "passthrough"
    assert parse_restorer_arg("constant:9").fill_token == 9
    assert parse_restorer_arg("marginal").kind == "marginal_fill"
    assert parse_restorer_arg("oracle").kind == "oracle"
    spec = parse_restorer_arg("external:localhost:9000")
    assert spec.kind == "external" and spec.endpoint == "localhost:9000"
    with pytest.raises(ValueError):
        parse_restorer_arg("nope")
    with pytest.raises(ValueError):
        parse_restorer_arg("constant")


def test_undetected_error_floor_tracks_crc_false_accept():
    # Deep in the cliff every decode is garbage, so packages that still pass
    # CRC (and thus stay unmasked with wrong tokens) appear at roughly the
    # list-wide CRC false-accept rate, about 8 * 2^-11 per package.
    import numpy as np

    from toklink import modem, polar
    from toklink.polar import PolarConfig

    cfg = PolarConfig()
    rng = np.random.default_rng(8)
    packages = 6000
    infos = rng.integers(0, 2, (packages, 104)).astype(np.uint8)
    tx = polar.encode_package(infos, cfg)
    ch = modem.ChannelConfig(snr_db=-5.0, rng_seed=88)
    llrs = modem.llr_demap(modem.awgn(modem.qam4_modulate(tx.reshape(packages, -1)), ch), ch)
    info_hat, crc_ok, _ = polar.decode_package_batch(llrs, cfg)
    undetected = int((crc_ok & (info_hat != infos).any(axis=1)).sum())
    per_path = 2.0 ** -11
    upper = 8 * per_path
    sigma = np.sqrt(packages * upper * (1 - upper))
    assert undetected <= packages * upper + 3 * sigma, undetected
    assert undetected >= 1, "expected at least one CRC false accept at this scale"


# ---------------------------------------------------------------------------
# wire protocol client against an in-process server
# ---------------------------------------------------------------------------

class EchoBridgeServer(threading.Thread):
    """Minimal protocol responder: restore fills MASK slots with 42."""

    def __init__(self):
        super().__init__(daemon=True)
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.port = self.sock.getsockname()[1]
        self.seen = []

    def run(self):
        conn, _ = self.sock.accept()
        try:
            while True:
                header = self._recv(conn, 4)
                if header is None:
                    return
                (length,) = struct.unpack(">I", header)
                req = json.loads(self._recv(conn, length).decode())
                self.seen.append(req)
                reply = {"v": 1, "id": req["id"]}
                if req["op"] == "restore":
                    reply["tokens"] = [42 if t == MASK else t for t in req["tokens"]]
                elif req["op"] in ("lpips", "clip_similarity"):
                    reply["value"] = 0.5
                else:
                    reply["err"] = "bad_op"
                body = json.dumps(reply).encode()
                conn.sendall(struct.pack(">I", len(body)) + body)
        finally:
            conn.close()

    @staticmethod
    def _recv(conn, count):
        data = b""
        while len(data) < count:
            chunk = conn.recv(count - len(data))
            if not chunk:
                return None
            data += chunk
        return data


def test_external_restorer_round_trip(rng):
    server = EchoBridgeServer()
    server.start()
    tokens = rng.integers(0, 8192, 128)
    masked = apply_mask(tokens, MaskSet(frozenset(range(8))))
    spec = RestorerSpec.external(f"127.0.0.1:{server.port}", text_prompt="a red fox")
    with BridgeClient(spec.endpoint, timeout_s=5.0) as client:
        out = restore(masked, spec, client=client)
    assert (out[:8] == 42).all()
    assert np.array_equal(out[8:], tokens[8:])
    assert server.seen[0]["v"] == 1
    assert server.seen[0]["text"] == "a red fox"
    assert server.seen[0]["tokens"][:8] == [MASK] * 8


def test_external_fallback_when_unreachable(rng):
    tokens = rng.integers(0, 8192, 128)
    masked = apply_mask(tokens, MaskSet(frozenset({3})))
    spec = RestorerSpec.external("127.0.0.1:1", fallback="constant:7")
    events = []
    out = restore(masked, spec, client=None, events=events)
    assert out[3] == 7
    assert events and events[0]["event"] == "bridge_fallback"


def test_external_no_fallback_raises(rng):
    tokens = rng.integers(0, 8192, 128)
    masked = apply_mask(tokens, MaskSet(frozenset({3})))
    spec = RestorerSpec.external("127.0.0.1:1", fallback=None)
    with pytest.raises(BridgeError):
        restore(masked, spec, client=None)


def test_client_rejects_unreachable_endpoint():
    with pytest.raises(BridgeError):
        BridgeClient("127.0.0.1:1", timeout_s=0.2)

import numpy as np
import pytest

from oracles import crc_divisible_longdiv, crc_lfsr, crc_remainder_longdiv
from toklink.crc import crc11_attach, crc11_check


def test_zero_info_gives_zero_parity():
    payload = crc11_attach(np.zeros(104, dtype=np.uint8))
    assert payload.shape == (115,)
    assert not payload.any()


def test_trailing_one_parity_matches_longdiv_oracle():
    # info(D) = 1 (a single 1 in the last position) => parity = D^11 mod g(D)
    info = np.zeros(104, dtype=np.uint8)
    info[-1] = 1
    payload = crc11_attach(info)
    assert payload[-11:].tolist() == crc_remainder_longdiv(info.tolist())
    assert payload[-11:].tolist() == [1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1]


def test_oracle_agreement_random_messages(rng):
    for _ in range(200):
        info = rng.integers(0, 2, 104)
        payload = crc11_attach(info)
        assert payload[-11:].tolist() == crc_remainder_longdiv(info.tolist())
        assert payload[-11:].tolist() == crc_lfsr(info.tolist())


def test_attach_then_check_holds(rng):
    for _ in range(50):
        payload = crc11_attach(rng.integers(0, 2, 104))
        assert crc11_check(payload)
        assert crc_divisible_longdiv(payload.tolist())


def test_single_bit_flip_detected(rng):
    payload = crc11_attach(rng.integers(0, 2, 104))
    for i in range(payload.size):
        bad = payload.copy()
        bad[i] ^= 1
        assert not crc11_check(bad)


def test_zero_payload_checks_true():
    assert crc11_check(np.zeros(115, dtype=np.uint8))


def test_check_rejects_too_short_payload():
    with pytest.raises(ValueError):
        crc11_check(np.zeros(11, dtype=np.uint8))


def test_attach_rejects_empty():
    with pytest.raises(ValueError):
        crc11_attach(np.zeros(0, dtype=np.uint8))


def test_batch_shapes(rng):
    infos = rng.integers(0, 2, (20, 104))
    payloads = crc11_attach(infos)
    assert payloads.shape == (20, 115)
    ok = crc11_check(payloads)
    assert ok.shape == (20,) and ok.all()


def test_false_accept_rate_near_two_to_minus_eleven(rng):
    # random payloads pass the check with probability 2^-11
    n = 200_000
    payloads = rng.integers(0, 2, (n, 115))
    hits = int(crc11_check(payloads).sum())
    expected = n * 2.0 ** -11
    sigma = np.sqrt(expected * (1 - 2.0 ** -11))
    assert abs(hits - expected) <= 3 * sigma, (hits, expected)


def test_different_lengths_supported(rng):
    info = rng.integers(0, 2, 40)
    payload = crc11_attach(info)
    assert payload.shape == (51,)
    assert crc11_check(payload)
    assert crc_divisible_longdiv(payload.tolist())

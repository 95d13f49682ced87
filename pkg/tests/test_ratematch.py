import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reference_triangle_interleave
from toklink.polar import (PolarConfig, SHORTENED_LLR, channel_deinterleave,
                           channel_interleave, rate_match, rate_recover,
                           subblock_deinterleave, subblock_interleave)


def test_interleave_deinterleave_identity(polar_cfg, rng):
    bits = rng.integers(0, 2, 256).astype(np.uint8)
    assert np.array_equal(
        channel_deinterleave(channel_interleave(bits, polar_cfg), polar_cfg), bits)
    assert np.array_equal(
        subblock_deinterleave(subblock_interleave(bits, polar_cfg), polar_cfg), bits)


@settings(max_examples=30)
@given(st.integers(2, 400))
def test_channel_interleaver_matches_reference(e):
    # the reference check needs only the permutation, so drive it directly
    from toklink.polar import _triangle_perm

    values = list(range(e))
    assert [values[i] for i in _triangle_perm(e)] == reference_triangle_interleave(values)


def test_triangle_of_three_hand_trace():
    from toklink.polar import _triangle_perm

    assert _triangle_perm(3).tolist() == [0, 2, 1]


def test_constant_block_unchanged_content(polar_cfg):
    ones = np.ones(256, dtype=np.uint8)
    assert channel_interleave(ones, polar_cfg).all()


def test_identity_length_rate_match_preserves_content(polar_cfg, rng):
    bits = rng.integers(0, 2, 256).astype(np.uint8)
    matched = rate_match(bits, polar_cfg)
    assert np.array_equal(matched, bits)  # E == N: straight read of the buffer
    recovered = rate_recover(matched.astype(np.float64), polar_cfg)
    assert np.array_equal(recovered, bits.astype(np.float64))


def test_repetition_emits_every_bit_twice(rng):
    cfg = PolarConfig(info_len=104, mother_code_len=256, rate_matched_len=512)
    bits = rng.integers(0, 2, 256).astype(np.uint8)
    matched = rate_match(bits, cfg)
    assert np.array_equal(matched[:256], bits)
    assert np.array_equal(matched[256:], bits)
    llrs = rng.normal(0, 1, 512)
    recovered = rate_recover(llrs, cfg)
    assert np.allclose(recovered, llrs[:256] + llrs[256:])


def test_puncturing_drops_buffer_front(rng):
    # A=90 keeps K/E below 7/16 so the E = N - 8 case really punctures
    cfg = PolarConfig(info_len=90, mother_code_len=256, rate_matched_len=248)
    bits = rng.integers(0, 2, 256).astype(np.uint8)
    matched = rate_match(bits, cfg)
    assert np.array_equal(matched, bits[8:])
    recovered = rate_recover(np.ones(248), cfg)
    assert np.array_equal(recovered[:8], np.zeros(8))
    assert np.array_equal(recovered[8:], np.ones(248))


def test_shortening_drops_buffer_tail(rng):
    cfg = PolarConfig(info_len=104, mother_code_len=256, rate_matched_len=248)
    bits = rng.integers(0, 2, 256).astype(np.uint8)
    matched = rate_match(bits, cfg)
    assert np.array_equal(matched, bits[:248])
    recovered = rate_recover(np.ones(248), cfg)
    assert np.array_equal(recovered[248:], np.full(8, SHORTENED_LLR))


def test_rate_recover_then_match_consistency(rng):
    # every surviving LLR lands back on the buffer position it came from
    for cfg in (PolarConfig(),
                PolarConfig(info_len=90, mother_code_len=256, rate_matched_len=248),
                PolarConfig(info_len=104, mother_code_len=256, rate_matched_len=248),
                PolarConfig(info_len=104, mother_code_len=256, rate_matched_len=512)):
        llrs = rng.normal(0, 1, cfg.rate_matched_len)
        recovered = rate_recover(llrs, cfg)
        reselected = rate_match((recovered != 0).astype(np.uint8), cfg)
        # positions that carried information must be nonzero markers
        if cfg.rate_matched_len <= cfg.mother_code_len:
            assert reselected.all() or (llrs == 0).any()


def test_unsupported_combination_rejected():
    with pytest.raises(ValueError, match="unsupported"):
        PolarConfig(info_len=104, rate_matched_len=8200)
    with pytest.raises(ValueError):
        rate_match(np.zeros(255, dtype=np.uint8), PolarConfig())


def test_batched_stage_application(polar_cfg, rng):
    bits = rng.integers(0, 2, (5, 256)).astype(np.uint8)
    a = channel_interleave(bits, polar_cfg)
    for row in range(5):
        assert np.array_equal(a[row], channel_interleave(bits[row], polar_cfg))

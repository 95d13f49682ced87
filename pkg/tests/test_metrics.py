import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import psnr_scalar_sum
from toklink.metrics import (CSV_COLUMNS, SweepReport, TrialRecord, aggregate,
                             mean_ci95, psnr, token_error_rate, write_csv,
                             write_series_json)


def test_psnr_identical_images_is_inf(rng):
    img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    assert psnr(img, img) == math.inf


def test_psnr_full_scale_difference_is_zero_db():
    a = np.zeros((4, 4, 3), dtype=np.uint8)
    b = np.full((4, 4, 3), 255, dtype=np.uint8)
    assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)


def test_psnr_matches_scalar_summation_oracle(rng):
    a = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
    b = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8)
    assert psnr(a, b) == pytest.approx(psnr_scalar_sum(a, b), abs=1e-9)


def test_psnr_symmetry_and_shape_check(rng):
    a = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    b = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, b[:4])


def test_token_error_rate_examples():
    a = np.arange(128)
    assert token_error_rate(a, a) == 0.0
    b = a.copy()
    b[17] += 1
    assert token_error_rate(a, b) == pytest.approx(1 / 128)
    assert token_error_rate(a, a + 1) == 1.0
    with pytest.raises(ValueError):
        token_error_rate(a, a[:64])


@settings(max_examples=40)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=64),
       st.lists(st.integers(0, 50), min_size=1, max_size=64))
def test_token_error_rate_is_a_metric(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    assert token_error_rate(a, a) == 0.0
    assert token_error_rate(a, b) == token_error_rate(b, a)
    assert 0.0 <= token_error_rate(a, b) <= 1.0


def test_wrong_token_vs_wrong_bit_counts(rng):
    # a wrong token implies at least one wrong bit and at most 13
    from toklink.framing import FramingConfig, tokens_to_packages

    cfg = FramingConfig()
    sent = rng.integers(0, 8192, 128)
    recv = sent.copy()
    flips = rng.choice(128, size=20, replace=False)
    recv[flips] = (recv[flips] + rng.integers(1, 8192, size=20)) % 8192
    wrong_tokens = int(np.count_nonzero(sent != recv))
    wrong_bits = int((tokens_to_packages(sent, cfg) != tokens_to_packages(recv, cfg)).sum())
    assert wrong_tokens <= wrong_bits <= 13 * wrong_tokens


def _record(snr, ter=0.0, psnr_db=30.0, **kw):
    base = dict(snr_db=snr, ter=ter, bler=0.0, ber=0.0, psnr_db=psnr_db,
                masked_fraction=0.0, restorer="passthrough", seed=0)
    base.update(kw)
    return TrialRecord(**base)


def test_record_validation():
    with pytest.raises(ValueError):
        _record(0.0, ter=1.5)


def test_aggregate_single_record_degenerate():
    rows = aggregate([_record(1.0, ter=0.25)])
    assert rows[0].ter_mean == 0.25
    assert rows[0].ter_ci95 == 0.0
    assert rows[0].degenerate_ci


def test_aggregate_symmetric_pair_midpoint():
    rows = aggregate([_record(0.0, ter=0.2), _record(0.0, ter=0.4)])
    assert rows[0].ter_mean == pytest.approx(0.3)


def test_aggregate_ci_matches_textbook_formula(rng):
    values = rng.random(40)
    records = [_record(2.0, ter=float(v)) for v in values]
    rows = aggregate(records)
    expected = 1.96 * values.std(ddof=1) / math.sqrt(len(values))
    assert rows[0].ter_ci95 == pytest.approx(expected, rel=1e-12)
    assert rows[0].ter_mean == pytest.approx(values.mean(), rel=1e-12)


def test_aggregate_excludes_inf_psnr_and_counts_it():
    records = [_record(0.0, psnr_db=math.inf), _record(0.0, psnr_db=30.0),
               _record(0.0, psnr_db=40.0)]
    row = aggregate(records)[0]
    assert row.psnr_mean_db == pytest.approx(35.0)
    assert row.psnr_inf_count == 1


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_mean_ci95_empty_rejected():
    with pytest.raises(ValueError):
        mean_ci95(np.array([]))


def test_csv_schema_and_empty_model_columns(tmp_path):
    report = SweepReport(rows=aggregate([_record(0.0), _record(1.0)]),
                         seed_base=7, git_rev="abc123")
    path = tmp_path / "out.csv"
    write_csv(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "0"
    assert first[CSV_COLUMNS.index("lpips_mean")] == ""
    assert first[CSV_COLUMNS.index("clip_mean")] == ""
    assert first[-2:] == ["7", "abc123"]


def test_csv_populates_model_columns_when_present(tmp_path):
    records = [_record(0.0, lpips=0.25, clip_sim=0.75) for _ in range(3)]
    report = SweepReport(rows=aggregate(records), seed_base=0, git_rev="x")
    path = tmp_path / "out.csv"
    write_csv(report, path)
    first = path.read_text().splitlines()[1].split(",")
    assert first[CSV_COLUMNS.index("lpips_mean")] == "0.25"
    assert first[CSV_COLUMNS.index("clip_mean")] == "0.75"


def test_series_json_structure(tmp_path):
    import json

    report = SweepReport(rows=aggregate([_record(0.0), _record(2.0)]),
                         seed_base=3, git_rev="r", meta={"rng": "philox4x64"})
    path = tmp_path / "out.series.json"
    write_series_json(report, path)
    data = json.loads(path.read_text())
    assert data["meta"]["seed_base"] == 3
    assert data["meta"]["rng"] == "philox4x64"
    (series,) = data["series"]
    assert series["snr_db"] == [0.0, 2.0]
    assert len(series["ter"]) == 2

"""Quantitative evaluation: PSNR, token/bit/package error rates, aggregation.

PSNR uses the 8-bit peak (255); identical images report ``math.inf``, which
aggregation excludes from means and counts separately.  The CSV schema is
stable and documented here::

    snr_db, restorer, trials, ter_mean, ter_ci95, bler_mean, ber_mean,
    psnr_mean_db, psnr_inf_count, masked_fraction_mean, lpips_mean,
    clip_mean, seed_base, git_rev

``lpips_mean`` and ``clip_mean`` stay empty unless an external model bridge
supplied per-trial values.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PSNR_PEAK = 255.0
CSV_COLUMNS = (
    "snr_db", "restorer", "trials", "ter_mean", "ter_ci95", "bler_mean",
    "ber_mean", "psnr_mean_db", "psnr_inf_count", "masked_fraction_mean",
    "lpips_mean", "clip_mean", "seed_base", "git_rev",
)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all pixels and channels."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PSNR_PEAK * PSNR_PEAK / mse)


def token_error_rate(sent, received) -> float:
    """Fraction of token positions whose value changed in transit."""
    sent = np.asarray(sent)
    received = np.asarray(received)
    if sent.shape != received.shape:
        raise ValueError(f"sequence lengths differ: {sent.shape} vs {received.shape}")
    if sent.size == 0:
        raise ValueError("empty sequences")
    return float(np.count_nonzero(sent != received) / sent.size)


@dataclass
class TrialRecord:
    """Metrics of one Monte Carlo trial (one image's worth of packages)."""

    snr_db: float
    ter: float
    bler: float
    ber: float
    psnr_db: float
    masked_fraction: float
    restorer: str
    seed: int
    lpips: float | None = None
    clip_sim: float | None = None

    def __post_init__(self):
        for name in ("ter", "bler", "ber", "masked_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class SweepRow:
    """Aggregated statistics for one SNR point."""

    snr_db: float
    restorer: str
    trials: int
    ter_mean: float
    ter_ci95: float
    bler_mean: float
    ber_mean: float
    psnr_mean_db: float
    psnr_inf_count: int
    masked_fraction_mean: float
    lpips_mean: float | None = None
    clip_mean: float | None = None
    degenerate_ci: bool = False


@dataclass
class SweepReport:
    rows: list[SweepRow]
    seed_base: int
    git_rev: str
    meta: dict = field(default_factory=dict)


def mean_ci95(values: np.ndarray) -> tuple[float, float, bool]:
    """Normal-approximation mean and 95% half-width; flags single-sample rows."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no values to aggregate")
    if values.size == 1:
        return float(values[0]), 0.0, True
    half = 1.96 * values.std(ddof=1) / math.sqrt(values.size)
    return float(values.mean()), float(half), False


def aggregate(records: list[TrialRecord]) -> list[SweepRow]:
    """Collapse per-trial records into one row per (snr_db, restorer) point."""
    if not records:
        raise ValueError("no trial records to aggregate")
    keys = sorted({(r.snr_db, r.restorer) for r in records})
    rows = []
    for snr_db, restorer in keys:
        group = [r for r in records if r.snr_db == snr_db and r.restorer == restorer]
        ter_mean, ter_ci, degenerate = mean_ci95(np.array([r.ter for r in group]))
        psnr_vals = np.array([r.psnr_db for r in group])
        finite = psnr_vals[np.isfinite(psnr_vals)]
        lpips_vals = [r.lpips for r in group if r.lpips is not None]
        clip_vals = [r.clip_sim for r in group if r.clip_sim is not None]
        rows.append(SweepRow(
            snr_db=snr_db,
            restorer=restorer,
            trials=len(group),
            ter_mean=ter_mean,
            ter_ci95=ter_ci,
            bler_mean=float(np.mean([r.bler for r in group])),
            ber_mean=float(np.mean([r.ber for r in group])),
            psnr_mean_db=float(finite.mean()) if finite.size else math.nan,
            psnr_inf_count=int(np.sum(np.isinf(psnr_vals))),
            masked_fraction_mean=float(np.mean([r.masked_fraction for r in group])),
            lpips_mean=float(np.mean(lpips_vals)) if lpips_vals else None,
            clip_mean=float(np.mean(clip_vals)) if clip_vals else None,
            degenerate_ci=degenerate,
        ))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.10g}"
    return str(value)


def write_csv(report: SweepReport, path) -> None:
    """Emit the documented CSV schema with stable formatting (byte-reproducible)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([
                _fmt(row.snr_db), row.restorer, row.trials,
                _fmt(row.ter_mean), _fmt(row.ter_ci95), _fmt(row.bler_mean),
                _fmt(row.ber_mean), _fmt(row.psnr_mean_db), row.psnr_inf_count,
                _fmt(row.masked_fraction_mean), _fmt(row.lpips_mean),
                _fmt(row.clip_mean), report.seed_base, report.git_rev,
            ])


def write_series_json(report: SweepReport, path) -> None:
    """Plot-ready companion file: per-restorer series over the SNR axis."""
    import json

    def clean(v):
        if v is None or (isinstance(v, float) and not math.isfinite(v)):
            return None
        return v

    restorers = sorted({row.restorer for row in report.rows})
    series = []
    for name in restorers:
        rows = [r for r in report.rows if r.restorer == name]
        series.append({
            "restorer": name,
            "snr_db": [r.snr_db for r in rows],
            "ter": [r.ter_mean for r in rows],
            "ter_ci95": [r.ter_ci95 for r in rows],
            "bler": [r.bler_mean for r in rows],
            "ber": [r.ber_mean for r in rows],
            "psnr_db": [clean(r.psnr_mean_db) for r in rows],
            "psnr_inf_count": [r.psnr_inf_count for r in rows],
            "masked_fraction": [r.masked_fraction_mean for r in rows],
            "lpips": [clean(r.lpips_mean) for r in rows],
            "clip": [clean(r.clip_mean) for r in rows],
        })
    payload = {
        "meta": {"seed_base": report.seed_base, "git_rev": report.git_rev, **report.meta},
        "series": series,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

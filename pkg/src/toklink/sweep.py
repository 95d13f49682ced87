"""Monte Carlo sweep driver: tokens through the full link, per-SNR metrics.

Each trial is an image-equivalent: obtain tokens, frame, encode, modulate,
pass through AWGN, demap, list-decode, mask CRC failures, restore, deframe,
and score.  Trials are independent work items seeded as
``seed_base + blake2s(snr_index, trial_index)``, which makes every record a
pure function of the config and so results identical across worker counts
and scheduling orders.
"""

import hashlib
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics, polar, tokenizer
from .framing import (FramingConfig, packages_to_tokens, read_tokens_text,
                      read_tokens_u16, tokens_to_packages)
from .images import png_bytes, read_image
from .metrics import SweepReport, TrialRecord, aggregate, mean_ci95
from .modem import RNG_ALGORITHM, ChannelConfig, awgn, llr_demap, make_rng, qam4_modulate
from .polar import PolarConfig
from .restore import (BridgeClient, BridgeError, MaskSet, RestorerSpec,
                      apply_mask, build_mask, restore)

SOURCE_KINDS = ("toy_synthetic", "image_directory", "token_file")
_CHUNK_TRIALS = 64  # fixed batching unit; independent of worker count


@dataclass(frozen=True)
class RunConfig:
    snr_points: tuple = (-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    trials_per_point: int = 200
    restorer: RestorerSpec = field(default_factory=RestorerSpec.passthrough)
    framing: FramingConfig = field(default_factory=FramingConfig)
    polar: PolarConfig = field(default_factory=PolarConfig)
    image_source: str = "toy_synthetic"
    source_path: Optional[str] = None
    seed_base: int = 0
    output_path: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if not self.snr_points:
            raise ValueError("snr_points must be non-empty")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if self.image_source not in SOURCE_KINDS:
            raise ValueError(f"image_source must be one of {SOURCE_KINDS}")
        if self.image_source != "toy_synthetic" and not self.source_path:
            raise ValueError(f"image_source {self.image_source!r} needs source_path")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.polar.info_len != self.framing.info_bits_per_package:
            raise ValueError(
                f"polar info_len ({self.polar.info_len}) must equal framing info bits "
                f"per package ({self.framing.info_bits_per_package})"
            )


def trial_seed(seed_base: int, snr_index: int, trial_index: int) -> int:
    """Stable per-trial seed; independent of platform hash randomisation."""
    digest = hashlib.blake2s(f"{snr_index}:{trial_index}".encode(), digest_size=8).digest()
    return (seed_base + int.from_bytes(digest, "big")) % (1 << 64)


def restorer_label(spec: RestorerSpec) -> str:
    if spec.kind == "constant_fill":
        return f"constant:{spec.fill_token}"
    if spec.kind == "marginal_fill":
        return "marginal"
    if spec.kind == "external":
        return f"external:{spec.endpoint}"
    return spec.kind


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


# ---------------------------------------------------------------------------
# token sources
# ---------------------------------------------------------------------------

def _source_items(cfg: RunConfig) -> Optional[list]:
    if cfg.image_source == "toy_synthetic":
        return None
    path = Path(cfg.source_path)
    if cfg.image_source == "image_directory":
        items = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".ppm", ".jpg", ".jpeg"))
        if not items:
            raise ValueError(f"no images found in {path}")
        return items
    if path.is_dir():
        items = sorted(p for p in path.iterdir() if p.suffix.lower() in (".txt", ".tok16"))
        if not items:
            raise ValueError(f"no token files found in {path}")
        return items
    return [path]


def _load_tokens_file(path: Path, cfg: FramingConfig) -> np.ndarray:
    if path.suffix.lower() == ".tok16":
        return read_tokens_u16(path, cfg)
    return read_tokens_text(path, cfg)


def _fit_image(img: np.ndarray) -> np.ndarray:
    if img.shape == (tokenizer.IMAGE_HEIGHT, tokenizer.IMAGE_WIDTH, 3):
        return img
    from PIL import Image

    resized = Image.fromarray(img).resize(
        (tokenizer.IMAGE_WIDTH, tokenizer.IMAGE_HEIGHT), Image.BILINEAR)
    return np.asarray(resized)


def _trial_tokens(cfg: RunConfig, items, trial_index: int, rng) -> tuple:
    """Returns (tokens, reference image or None)."""
    if cfg.image_source == "toy_synthetic":
        tokens = rng.integers(0, cfg.framing.codebook_size,
                              size=cfg.framing.tokens_per_image, dtype=np.int64)
        return tokens, None
    item = items[trial_index % len(items)]
    if cfg.image_source == "image_directory":
        img = _fit_image(read_image(item))
        return tokenizer.toy_tokenize(img), img
    return _load_tokens_file(item, cfg.framing), None


def _toy_geometry(cfg: FramingConfig) -> bool:
    return (cfg.tokens_per_image == tokenizer.NUM_TOKENS
            and cfg.codebook_size == tokenizer.CODEBOOK_SIZE)


# ---------------------------------------------------------------------------
# trial engine
# ---------------------------------------------------------------------------

def _run_chunk(cfg: RunConfig, snr_index: int, trial_indices: tuple) -> tuple:
    """Run a batch of trials at one SNR point; returns (records, events)."""
    snr_db = cfg.snr_points[snr_index]
    fr, pc = cfg.framing, cfg.polar
    items = _source_items(cfg)
    events: list = []
    label = restorer_label(cfg.restorer)

    sent_tokens = []
    sent_blocks = []
    ref_images = []
    llr_rows = []
    for trial_index in trial_indices:
        seed = trial_seed(cfg.seed_base, snr_index, trial_index)
        rng = make_rng(seed)
        tokens, ref = _trial_tokens(cfg, items, trial_index, rng)
        blocks = tokens_to_packages(tokens, fr)
        tx_bits = polar.encode_package(blocks, pc)
        channel = ChannelConfig(snr_db=snr_db, rng_seed=seed)
        received = awgn(qam4_modulate(tx_bits.reshape(-1)), channel, rng=rng)
        llr_rows.append(llr_demap(received, channel).reshape(fr.num_packages, -1))
        sent_tokens.append(tokens)
        sent_blocks.append(blocks)
        ref_images.append(ref)

    info, crc_ok, _metric = polar.decode_package_batch(np.concatenate(llr_rows), pc)
    info = info.reshape(len(trial_indices), fr.num_packages, pc.info_len)
    crc_ok = crc_ok.reshape(len(trial_indices), fr.num_packages)

    client = None
    if cfg.restorer.kind == "external":
        try:
            client = BridgeClient(cfg.restorer.endpoint, cfg.restorer.timeout_s)
        except BridgeError:
            if cfg.restorer.fallback is None:
                raise
            events.append({"event": "bridge_fallback", "to": cfg.restorer.fallback})

    records = []
    try:
        for row, trial_index in enumerate(trial_indices):
            seed = trial_seed(cfg.seed_base, snr_index, trial_index)
            verdict_ok = crc_ok[row]
            decoded_tokens = packages_to_tokens(info[row], fr)
            mask = build_mask(verdict_ok.tolist(), fr)
            _assert_mask_consistent(mask, verdict_ok, fr)
            spec = cfg.restorer
            if spec.kind == "oracle":
                spec = spec.with_ground_truth(sent_tokens[row])
            masked = apply_mask(decoded_tokens, mask)
            restored = restore(masked, spec, client=client, events=events)

            ber = float(np.mean(info[row] != sent_blocks[row]))
            block_err = (~verdict_ok) | (info[row] != sent_blocks[row]).any(axis=1)
            record = TrialRecord(
                snr_db=snr_db,
                ter=metrics.token_error_rate(sent_tokens[row], restored),
                bler=float(np.mean(block_err)),
                ber=ber,
                psnr_db=math.nan,
                masked_fraction=len(mask) / fr.tokens_per_image,
                restorer=label,
                seed=seed,
            )
            if _toy_geometry(fr):
                ref = ref_images[row]
                if ref is None:
                    ref = tokenizer.toy_detokenize(sent_tokens[row])
                rx_img = tokenizer.toy_detokenize(restored)
                record.psnr_db = metrics.psnr(ref, rx_img)
                if client is not None:
                    try:
                        ref_png, rx_png = png_bytes(ref), png_bytes(rx_img)
                        record.lpips = client.lpips(rx_png, ref_png)
                        record.clip_sim = client.clip_similarity(rx_png, ref_png)
                    except BridgeError:
                        if cfg.restorer.fallback is None:
                            raise
                        events.append({"event": "bridge_metrics_lost"})
                        client.close()
                        client = None
            records.append(record)
    finally:
        if client is not None:
            client.close()
    return records, events


def _assert_mask_consistent(mask: MaskSet, verdict_ok: np.ndarray, fr: FramingConfig) -> None:
    per_position = np.repeat(~verdict_ok, fr.tokens_per_package)
    if not np.array_equal(mask.to_array(fr.tokens_per_image), per_position):
        raise RuntimeError("mask does not equal the union of CRC-failing package spans")


def _chunks(cfg: RunConfig):
    for snr_index in range(len(cfg.snr_points)):
        for start in range(0, cfg.trials_per_point, _CHUNK_TRIALS):
            stop = min(start + _CHUNK_TRIALS, cfg.trials_per_point)
            yield snr_index, tuple(range(start, stop))


def _chunk_task(args):
    return _run_chunk(*args)


def run_sweep(cfg: RunConfig) -> SweepReport:
    """Execute the full sweep and aggregate per-SNR rows."""
    tasks = [(cfg, snr_index, trials) for snr_index, trials in _chunks(cfg)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_chunk_task, tasks))
    else:
        outcomes = [_chunk_task(t) for t in tasks]

    records: list[TrialRecord] = []
    events: list = []
    for recs, evts in outcomes:
        records.extend(recs)
        events.extend(evts)
    records.sort(key=lambda r: (r.snr_db, r.seed))

    report = SweepReport(
        rows=aggregate(records),
        seed_base=cfg.seed_base,
        git_rev=git_revision(),
        meta={
            "rng": RNG_ALGORITHM,
            "restorer": restorer_label(cfg.restorer),
            "trials_per_point": cfg.trials_per_point,
            "image_source": cfg.image_source,
            "snr_points": list(cfg.snr_points),
            "bridge_events": events,
        },
    )
    report.meta["records"] = records  # kept in-process for paired comparisons
    return report


def sweep_records(report: SweepReport) -> list:
    return report.meta["records"]


def write_outputs(report: SweepReport, out_path) -> None:
    """CSV plus the plot-ready JSON series file alongside it."""
    out_path = Path(out_path)
    meta = {k: v for k, v in report.meta.items() if k != "records"}
    slim = SweepReport(rows=report.rows, seed_base=report.seed_base,
                       git_rev=report.git_rev, meta=meta)
    metrics.write_csv(slim, out_path)
    metrics.write_series_json(slim, out_path.with_suffix(".series.json"))


# ---------------------------------------------------------------------------
# modality grid (controlled corruption of both modalities)
# ---------------------------------------------------------------------------

@dataclass
class GridRow:
    image_ter: float
    text_corruption: float
    restorer: str
    trials: int
    ter_mean: float
    ter_ci95: float
    psnr_mean_db: float
    psnr_inf_count: int
    masked_fraction_mean: float
    lpips_mean: float | None
    clip_mean: float | None
    text_axis_inert: bool


GRID_CSV_COLUMNS = (
    "image_ter", "text_corruption", "restorer", "trials", "ter_mean", "ter_ci95",
    "psnr_mean_db", "psnr_inf_count", "masked_fraction_mean", "lpips_mean",
    "clip_mean", "text_axis_inert", "seed_base", "git_rev",
)

_PRINTABLE = [chr(c) for c in range(32, 127)]


def corrupt_text(text: str, rate: float, rng) -> str:
    """Replace a ``rate`` fraction of characters with random printable ones."""
    if not text or rate <= 0.0:
        return text
    chars = list(text)
    count = min(len(chars), round(rate * len(chars)))
    for pos in rng.choice(len(chars), size=count, replace=False):
        chars[pos] = _PRINTABLE[rng.integers(0, len(_PRINTABLE))]
    return "".join(chars)


def grid_trial_seed(seed_base: int, ti_index: int, tc_index: int, trial_index: int) -> int:
    digest = hashlib.blake2s(f"grid:{ti_index}:{tc_index}:{trial_index}".encode(),
                             digest_size=8).digest()
    return (seed_base + int.from_bytes(digest, "big")) % (1 << 64)


def run_modality_grid(cfg: RunConfig, image_ter_levels, text_corruption_levels) -> SweepReport:
    """Inject controlled token corruption and text corruption; no channel.

    Corrupted token positions are known by construction, so they double as
    the mask handed to the restorer.  The text axis does nothing for builtin
    restorers; rows are flagged accordingly.
    """
    fr = cfg.framing
    items = _source_items(cfg)
    inert = cfg.restorer.kind != "external"
    events: list = []
    client = None
    if cfg.restorer.kind == "external":
        try:
            client = BridgeClient(cfg.restorer.endpoint, cfg.restorer.timeout_s)
        except BridgeError:
            if cfg.restorer.fallback is None:
                raise
            events.append({"event": "bridge_fallback", "to": cfg.restorer.fallback})

    rows = []
    try:
        for ti_index, image_ter in enumerate(image_ter_levels):
            for tc_index, text_rate in enumerate(text_corruption_levels):
                ters, psnrs, fractions, lpips_vals, clip_vals = [], [], [], [], []
                for trial_index in range(cfg.trials_per_point):
                    seed = grid_trial_seed(cfg.seed_base, ti_index, tc_index, trial_index)
                    rng = make_rng(seed)
                    tokens, ref = _trial_tokens(cfg, items, trial_index, rng)
                    count = min(fr.tokens_per_image, round(image_ter * fr.tokens_per_image))
                    positions = rng.choice(fr.tokens_per_image, size=count, replace=False)
                    corrupted = tokens.copy()
                    if count:
                        offsets = rng.integers(1, fr.codebook_size, size=count)
                        corrupted[positions] = (tokens[positions] + offsets) % fr.codebook_size
                    mask = MaskSet(frozenset(int(p) for p in positions))
                    spec = cfg.restorer
                    if spec.kind == "oracle":
                        spec = spec.with_ground_truth(tokens)
                    if spec.kind == "external" and spec.text_prompt:
                        spec = replace(spec, text_prompt=corrupt_text(
                            spec.text_prompt, text_rate, rng))
                    restored = restore(apply_mask(corrupted, mask), spec,
                                       client=client, events=events)
                    ters.append(metrics.token_error_rate(tokens, restored))
                    fractions.append(len(mask) / fr.tokens_per_image)
                    if _toy_geometry(fr):
                        if ref is None:
                            ref = tokenizer.toy_detokenize(tokens)
                        rx_img = tokenizer.toy_detokenize(restored)
                        psnrs.append(metrics.psnr(ref, rx_img))
                        if client is not None:
                            ref_png, rx_png = png_bytes(ref), png_bytes(rx_img)
                            lpips_vals.append(client.lpips(rx_png, ref_png))
                            clip_vals.append(client.clip_similarity(rx_png, ref_png))
                ter_mean, ter_ci, _ = mean_ci95(np.array(ters))
                psnr_arr = np.array(psnrs) if psnrs else np.array([math.nan])
                finite = psnr_arr[np.isfinite(psnr_arr)]
                rows.append(GridRow(
                    image_ter=float(image_ter),
                    text_corruption=float(text_rate),
                    restorer=restorer_label(cfg.restorer),
                    trials=cfg.trials_per_point,
                    ter_mean=ter_mean,
                    ter_ci95=ter_ci,
                    psnr_mean_db=float(finite.mean()) if finite.size else math.nan,
                    psnr_inf_count=int(np.sum(np.isinf(psnr_arr))),
                    masked_fraction_mean=float(np.mean(fractions)),
                    lpips_mean=float(np.mean(lpips_vals)) if lpips_vals else None,
                    clip_mean=float(np.mean(clip_vals)) if clip_vals else None,
                    text_axis_inert=inert,
                ))
    finally:
        if client is not None:
            client.close()

    report = SweepReport(rows=rows, seed_base=cfg.seed_base, git_rev=git_revision(),
                         meta={"rng": RNG_ALGORITHM, "mode": "grid",
                               "bridge_events": events, "text_axis_inert": inert})
    return report


def write_grid_csv(report: SweepReport, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([
                metrics._fmt(row.image_ter), metrics._fmt(row.text_corruption),
                row.restorer, row.trials, metrics._fmt(row.ter_mean),
                metrics._fmt(row.ter_ci95), metrics._fmt(row.psnr_mean_db),
                row.psnr_inf_count, metrics._fmt(row.masked_fraction_mean),
                metrics._fmt(row.lpips_mean), metrics._fmt(row.clip_mean),
                int(row.text_axis_inert), report.seed_base, report.git_rev,
            ])

#!/usr/bin/env python3
"""Regenerate the committed conformance fixtures.

Writes the frozen-set table for the default code and two golden vectors
(all-zero info and a fixed pseudorandom info block) with every pipeline
stage, into src/toklink/fixtures/.  Run from the repo root after any
deliberate change to the coding chain, then re-run the test suite.
"""

from pathlib import Path

import numpy as np

from toklink import polar
from toklink.polar import PolarConfig

FIXTURE_DIR = Path(__file__).parent.parent / "src" / "toklink" / "fixtures"


def main() -> None:
    FIXTURE_DIR.mkdir(exist_ok=True)
    cfg = PolarConfig()

    frozen = sorted(polar.select_frozen_set(cfg))
    (FIXTURE_DIR / "frozen_set_n256_k115.txt").write_text(
        "".join(f"{i}\n" for i in frozen))
    print(f"frozen set: {len(frozen)} indices, first {frozen[:5]}, last {frozen[-5:]}")

    polar.write_golden_vector(FIXTURE_DIR / "golden_zero.vec",
                              np.zeros(cfg.info_len, dtype=np.uint8), cfg)

    rng = np.random.default_rng(20240601)
    info = rng.integers(0, 2, cfg.info_len).astype(np.uint8)
    polar.write_golden_vector(FIXTURE_DIR / "golden_sample.vec", info, cfg)
    print(f"golden vectors written to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()

"""Deterministic patch-mean tokenizer: 256x256 RGB image <-> 128 tokens.

A stand-in with the interface shape of a learned tokenizer, built so the
whole link runs and PSNR is measurable with zero model weights.  The image
is cut into a 16x8 grid of 16x32-pixel patches (row-major order, one token
per patch); each patch's mean colour is quantised to 5/4/4 bits (R/G/B) and
packed into a 13-bit token.  Detokenising paints each patch with its bin
centre, so one corrupted token perturbs exactly one patch.
"""

import numpy as np

IMAGE_HEIGHT = 256
IMAGE_WIDTH = 256
GRID_ROWS = 16
GRID_COLS = 8
PATCH_HEIGHT = IMAGE_HEIGHT // GRID_ROWS
PATCH_WIDTH = IMAGE_WIDTH // GRID_COLS
NUM_TOKENS = GRID_ROWS * GRID_COLS
CHANNEL_BITS = (5, 4, 4)
CODEBOOK_SIZE = 1 << sum(CHANNEL_BITS)

_BINS = np.array([1 << b for b in CHANNEL_BITS])          # 32, 16, 16
_BIN_WIDTH = 256.0 / _BINS                                 # 8, 16, 16
_SHIFTS = (CHANNEL_BITS[1] + CHANNEL_BITS[2], CHANNEL_BITS[2], 0)


def _check_image(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.shape != (IMAGE_HEIGHT, IMAGE_WIDTH, 3):
        raise ValueError(f"expected a {IMAGE_HEIGHT}x{IMAGE_WIDTH}x3 image, got {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
            raise ValueError("channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def toy_tokenize(img) -> np.ndarray:
    """Quantise per-patch mean colours into 128 tokens, row-major patches."""
    arr = _check_image(img).astype(np.float64)
    means = arr.reshape(GRID_ROWS, PATCH_HEIGHT, GRID_COLS, PATCH_WIDTH, 3).mean(axis=(1, 3))
    bins = np.minimum((means * _BINS / 256.0).astype(np.int64), _BINS - 1)
    tokens = sum(bins[..., c] << _SHIFTS[c] for c in range(3))
    return tokens.reshape(NUM_TOKENS)


def toy_detokenize(tokens) -> np.ndarray:
    """Paint each patch with its token's bin-centre colour."""
    arr = np.asarray(tokens)
    if arr.shape != (NUM_TOKENS,):
        raise ValueError(f"expected {NUM_TOKENS} tokens, got shape {arr.shape}")
    if arr.min(initial=0) < 0 or arr.max(initial=0) >= CODEBOOK_SIZE:
        raise ValueError(f"token outside [0, {CODEBOOK_SIZE})")
    bins = np.stack([(arr >> _SHIFTS[c]) & (_BINS[c] - 1) for c in range(3)], axis=-1)
    centers = ((bins + 0.5) * _BIN_WIDTH).astype(np.uint8)
    patches = centers.reshape(GRID_ROWS, 1, GRID_COLS, 1, 3)
    return np.broadcast_to(
        patches, (GRID_ROWS, PATCH_HEIGHT, GRID_COLS, PATCH_WIDTH, 3)
    ).reshape(IMAGE_HEIGHT, IMAGE_WIDTH, 3).copy()

"""Complementary checkerboard masks with time-scaled soft variants.

The two binary masks partition the pixel grid (m1[i,j] = (i+j) mod 2,
m2 = 1 - m1).  Before application they are softened by an affine rescale
m*(1-s) + s with s = t/T, so masking weakens as the step index grows.
Recombination of the two inpainted branches uses the *binary* masks:
each output pixel is taken from the branch in which it was masked out,
which keeps recombine(y, y) == y exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["MaskPair", "make_mask_pair", "apply_masks", "recombine"]


@dataclass(frozen=True)
class MaskPair:
    m1: np.ndarray
    m2: np.ndarray
    m1_scaled: np.ndarray
    m2_scaled: np.ndarray
    s: float


@lru_cache(maxsize=None)
def _binary_masks(height: int, width: int):
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    m1 = ((ii + jj) % 2).astype(np.float64)
    m2 = 1.0 - m1
    m1.setflags(write=False)
    m2.setflags(write=False)
    return m1, m2


@lru_cache(maxsize=None)
def make_mask_pair(height: int, width: int, t: int, T: int) -> MaskPair:
    """Checkerboard pair for an image of the given size at step t of T."""
    if height < 1 or width < 1:
        raise ValueError(f"mask size must be positive, got {height}x{width}")
    if T < 1:
        raise ValueError(f"mask schedule needs T >= 1, got {T}")
    if not 0 <= t <= T:
        raise ValueError(f"mask step t={t} outside [0, {T}]")
    m1, m2 = _binary_masks(height, width)
    s = t / T
    m1s = m1 * (1.0 - s) + s
    m2s = m2 * (1.0 - s) + s
    m1s.setflags(write=False)
    m2s.setflags(write=False)
    return MaskPair(m1=m1, m2=m2, m1_scaled=m1s, m2_scaled=m2s, s=s)


def _check_spatial(x: np.ndarray, pair: MaskPair, op: str) -> None:
    if x.shape[-2:] != pair.m1.shape:
        raise ValueError(
            f"{op}: image spatial shape {x.shape[-2:]} != mask shape {pair.m1.shape}"
        )


def apply_masks(x_t: np.ndarray, pair: MaskPair):
    """Attenuate a noised image with both soft masks: (x * m1s, x * m2s)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_spatial(x_t, pair, "apply_masks")
    return x_t * pair.m1_scaled, x_t * pair.m2_scaled


def recombine(y1: np.ndarray, y2: np.ndarray, pair: MaskPair) -> np.ndarray:
    """Stitch the two inpainted branches: y1 * m2 + y2 * m1 (binary masks)."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape:
        raise ValueError(f"recombine: branch shapes differ, {y1.shape} vs {y2.shape}")
    _check_spatial(y1, pair, "recombine")
    return y1 * pair.m2 + y2 * pair.m1

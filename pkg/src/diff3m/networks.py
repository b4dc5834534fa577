"""Conditional UNet denoisers for noise prediction and masked-pixel generation.

Both networks share one template: a two-level UNet (full and half
resolution) with silu activations.  The conditioning vector, already the
sum of the timestamp embedding and the projected record embedding, is
pushed into every block through a per-block affine map added per
channel.  The two networks never share parameters.

Full-resolution blocks use a single convolution and the skip connection
is additive (half-resolution features are projected back to the skip
width with a 1x1 kernel); both choices keep the cost of the 32x32 level,
which dominates the pure-numpy runtime, in check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv, Dense, Module
from .tensor import Tensor, add_channel, avg_pool2d, silu, upsample_nearest

__all__ = ["UNetConfig", "CondBlock", "UNet"]


@dataclass(frozen=True)
class UNetConfig:
    image_size: int = 32
    widths: tuple = (16, 32)
    cond_dim: int = 64
    kernel: int = 3


class CondBlock(Module):
    """n_convs x (conv -> +cond -> silu); conditioning enters every conv."""

    def __init__(self, c_in: int, c_out: int, cond_dim: int, k: int, n_convs: int, rng):
        convs, projs = [], []
        c = c_in
        for _ in range(n_convs):
            convs.append(Conv(c, c_out, k, rng))
            projs.append(Dense(cond_dim, c_out, rng))
            c = c_out
        self.convs = convs
        self.projs = projs

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        h = x
        for conv, proj in zip(self.convs, self.projs):
            h = silu(add_channel(conv(h), proj(cond)))
        return h


class UNet(Module):
    """Two-level conditional UNet mapping (N,H,W,1) -> (N,H,W,1)."""

    def __init__(self, cfg: UNetConfig, rng: np.random.Generator):
        if cfg.image_size % 2 != 0:
            raise ValueError(f"image size must be even, got {cfg.image_size}")
        if len(cfg.widths) != 2:
            raise ValueError(f"expected two channel widths, got {cfg.widths}")
        w0, w1 = cfg.widths
        k, cd = cfg.kernel, cfg.cond_dim
        self.cfg = cfg
        self.head = Conv(1, w0, k, rng)
        self.enc0 = CondBlock(w0, w0, cd, k, 1, rng)
        self.enc1 = CondBlock(w0, w1, cd, k, 2, rng)
        self.mid = CondBlock(w1, w1, cd, k, 2, rng)
        self.up_proj = Conv(w1, w0, 1, rng)
        self.dec0 = CondBlock(w0, w0, cd, k, 1, rng)
        self.out = Conv(w0, 1, 1, rng)

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        s = self.cfg.image_size
        if x.shape[1] != s or x.shape[2] != s or x.shape[3] != 1:
            raise ValueError(f"unet expects (N,{s},{s},1), got {x.shape}")
        if cond.shape != (x.shape[0], self.cfg.cond_dim):
            raise ValueError(
                f"cond shape {cond.shape} != ({x.shape[0]}, {self.cfg.cond_dim})"
            )
        h0 = self.enc0(self.head(x), cond)
        h1 = self.enc1(avg_pool2d(h0, 2), cond)
        hm = self.mid(h1, cond)
        up = self.up_proj(upsample_nearest(hm, 2))
        d0 = self.dec0(up + h0, cond)
        return self.out(d0)

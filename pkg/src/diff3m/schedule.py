"""Noise schedules, closed-form forward noising, and deterministic DDIM steps.

Indexing convention: schedules are 0-based.  ``alpha_bar[i]`` is the
cumulative product ``prod_{s<=i}(1 - beta[s])``, so index ``i`` carries
the signal fraction of the (i+1)-th noising step.  A clean image sits at
index 0 of the encode/decode ladder; no step ever uses an exact
signal fraction of 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "forward_noise",
    "ddim_encode_step",
    "ddim_decode_step",
    "ddim_jump",
]

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def abar(self, i: int) -> float:
        if not 0 <= i < self.T:
            raise ValueError(f"step index {i} outside [0, {self.T})")
        return float(self.alpha_bar[i])


def make_schedule(
    T: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta ramp with precomputed cumulative signal fractions."""
    if T < 1:
        raise ValueError(f"schedule needs T >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"beta range must satisfy 0 < start <= end < 1, got "
            f"({beta_start}, {beta_end})"
        )
    if T == 1:
        beta = np.array([beta_start])
    else:
        beta = np.linspace(beta_start, beta_end, T)
    alpha_bar = np.cumprod(1.0 - beta)
    sched = NoiseSchedule(beta=beta, alpha_bar=alpha_bar)
    beta.setflags(write=False)
    alpha_bar.setflags(write=False)
    return sched


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noise a clean image straight to step index t: sqrt(a)x0 + sqrt(1-a)eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValueError(f"forward_noise: eps shape {eps.shape} != x0 shape {x0.shape}")
    if not 0 <= t < sched.T:
        raise ValueError(f"forward_noise: t={t} outside [0, {sched.T})")
    a = sched.abar(t)
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def ddim_jump(
    x: np.ndarray, eps_pred: np.ndarray, t_from: int, t_to: int, sched: NoiseSchedule
) -> np.ndarray:
    """Deterministic DDIM move between two step indices (either direction).

    Reparameterizes through the implied clean image:
        x0_hat = (x - sqrt(1-a_from) eps) / sqrt(a_from)
        x_to   = sqrt(a_to) x0_hat + sqrt(1-a_to) eps
    The forward (encode) direction is the exact algebraic inverse of the
    backward (decode) direction under a shared eps_pred.
    """
    x = np.asarray(x, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if eps_pred.shape != x.shape:
        raise ValueError(f"ddim_jump: eps shape {eps_pred.shape} != x shape {x.shape}")
    a_from = sched.abar(t_from)
    a_to = sched.abar(t_to)
    x0_hat = (x - np.sqrt(1.0 - a_from) * eps_pred) / np.sqrt(a_from)
    return np.sqrt(a_to) * x0_hat + np.sqrt(1.0 - a_to) * eps_pred


def ddim_encode_step(
    x_t: np.ndarray, eps_pred: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    """One deterministic noising step, index t -> t+1."""
    if t + 1 >= sched.T:
        raise ValueError(f"ddim_encode_step: t={t} is the final step (T={sched.T})")
    if t < 0:
        raise ValueError(f"ddim_encode_step: negative step index {t}")
    return ddim_jump(x_t, eps_pred, t, t + 1, sched)


def ddim_decode_step(
    x_src: np.ndarray, eps_pred: np.ndarray, t: int, sched: NoiseSchedule
) -> np.ndarray:
    """One deterministic denoising step, index t -> t-1.

    ``x_src`` is the inpainted image during detection, or the plain noised
    image in ablation mode; either way the same closed form applies.
    """
    if t == 0:
        raise ValueError("ddim_decode_step: cannot decode below step index 0")
    if t >= sched.T:
        raise ValueError(f"ddim_decode_step: t={t} outside [1, {sched.T})")
    return ddim_jump(x_src, eps_pred, t, t - 1, sched)

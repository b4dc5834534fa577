"""Reconstruction-based anomaly detection.

The input is deterministically DDIM-encoded up to a chosen noise level,
then decoded back; during decoding each step's image is first rebuilt
from the two masked-branch reconstructions before the deterministic
denoising move.  The residual between input and final reconstruction is
the anomaly signal, scored as mean-square or peak absolute difference.

The whole pipeline is noise-free given a checkpoint: repeated calls on
identical inputs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import PatientRecord, ieca, tokenize_record
from .masking import make_mask_pair
from .model import Diff3MModel
from .schedule import NoiseSchedule, ddim_jump
from .tensor import Tensor, no_grad
from .training import batch_condition, to_internal

__all__ = [
    "AnomalyResult",
    "anomaly_map",
    "anomaly_score",
    "detect",
    "detect_batch",
    "scores_tsv",
    "normalize_map",
]

SCORE_KINDS = ("mse", "maxabs")


@dataclass(frozen=True)
class AnomalyResult:
    x0_hat: np.ndarray  # reconstruction, [0,1] pixel scale
    anomaly_map: np.ndarray  # |x - x0_hat|
    score_mse: float
    score_maxabs: float
    t_prime: int


def anomaly_map(x: np.ndarray, x0_hat: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if x.shape != x0_hat.shape:
        raise ValueError(f"anomaly_map: shapes differ, {x.shape} vs {x0_hat.shape}")
    return np.abs(x - x0_hat)


def anomaly_score(x: np.ndarray, x0_hat: np.ndarray, kind: str) -> float:
    if kind not in SCORE_KINDS:
        raise ValueError(f"unknown score kind {kind!r}, expected one of {SCORE_KINDS}")
    amap = anomaly_map(x, x0_hat)
    if kind == "mse":
        return float((amap * amap).mean())
    return float(amap.max())


def _step_sequence(t_prime: int, stride: int):
    """Encode/decode visiting order: 0, stride, ..., t_prime."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    ts = list(range(0, t_prime + 1, stride))
    if ts[-1] != t_prime:
        ts.append(t_prime)
    return ts


def detect_batch(
    images,
    records,
    model: Diff3MModel,
    sched: NoiseSchedule,
    t_prime: int,
    stride: int = 1,
):
    """Run detection on a stack of samples sharing one step sequence."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"detect_batch expects (n,H,W) images, got {images.shape}")
    n, h, w = images.shape
    if len(records) != n:
        raise ValueError(f"{n} images vs {len(records)} records")
    if not 0 <= t_prime < sched.T:
        raise ValueError(f"t_prime={t_prime} must satisfy 0 <= t_prime < T={sched.T}")
    if h != model.cfg.image_size or w != model.cfg.image_size:
        raise ValueError(
            f"images are {h}x{w}, checkpoint expects {model.cfg.image_size}"
        )
    if model.tokenizer is not None:
        for rec in records:
            if rec.schema != model.cfg.schema:
                raise ValueError(
                    f"record schema {rec.schema} does not match checkpoint schema {model.cfg.schema}"
                )

    if t_prime == 0:
        return [
            AnomalyResult(
                x0_hat=images[i].copy(),
                anomaly_map=np.zeros((h, w)),
                score_mse=0.0,
                score_maxabs=0.0,
                t_prime=0,
            )
            for i in range(n)
        ]

    ts = _step_sequence(t_prime, stride)
    with no_grad():
        x = to_internal(images)[..., None]  # (n,H,W,1)
        base_cond = batch_condition(model, Tensor(x), records)

        def cond_at(t: int) -> Tensor:
            row = model.time_proj(model.t_embedding(t)).data
            t_emb = Tensor(np.repeat(row, n, axis=0))
            return t_emb if base_cond is None else t_emb + base_cond

        # encode: clean index 0 up to index t_prime
        for i in range(len(ts) - 1):
            eps = model.np_forward_batch(Tensor(x), cond_at(ts[i])).data
            x = ddim_jump(x, eps, ts[i], ts[i + 1], sched)

        # decode back, inpainting first at each visited level
        for i in range(len(ts) - 1, 0, -1):
            t = ts[i]
            cond = cond_at(t)
            eps = model.np_forward_batch(Tensor(x), cond).data
            if model.mpg_net is not None:
                pair = make_mask_pair(h, w, t, sched.T)
                y1 = model.mpg_forward_batch(Tensor(x * pair.m1_scaled[..., None]), cond).data
                y2 = model.mpg_forward_batch(Tensor(x * pair.m2_scaled[..., None]), cond).data
                x_src = y1 * pair.m2[..., None] + y2 * pair.m1[..., None]
            else:
                x_src = x
            x = ddim_jump(x_src, eps, t, ts[i - 1], sched)

    x0_hat = (x[..., 0] + 1.0) / 2.0
    results = []
    for i in range(n):
        amap = anomaly_map(images[i], x0_hat[i])
        results.append(
            AnomalyResult(
                x0_hat=x0_hat[i],
                anomaly_map=amap,
                score_mse=float((amap * amap).mean()),
                score_maxabs=float(amap.max()),
                t_prime=t_prime,
            )
        )
    return results


def detect(
    image,
    record: PatientRecord,
    model: Diff3MModel,
    sched: NoiseSchedule,
    t_prime: int,
    stride: int = 1,
) -> AnomalyResult:
    """Single-sample detection; see detect_batch."""
    image = np.asarray(image, dtype=np.float64)
    return detect_batch(image[None], [record], model, sched, t_prime, stride)[0]


def normalize_map(amap: np.ndarray) -> np.ndarray:
    """Min-max normalize onto [0,1] for 8-bit visualization files."""
    lo, hi = float(amap.min()), float(amap.max())
    if hi - lo < 1e-12:
        return np.zeros_like(amap)
    return (amap - lo) / (hi - lo)


def scores_tsv(ids, results, labels=None) -> str:
    """Per-sample scores table: id, score_mse, score_maxabs[, label]."""
    lines = []
    for i, (sid, res) in enumerate(zip(ids, results)):
        line = f"{sid}\t{res.score_mse:.8g}\t{res.score_maxabs:.8g}"
        if labels is not None:
            line += f"\t{labels[i]}"
        lines.append(line)
    return "\n".join(lines) + "\n"

"""Joint training of the noise-prediction and masked-pixel networks.

Each step draws a per-sample timestep and noise, noises the clean image
in closed form, conditions on the record embedding, and minimizes the
weighted two-head objective

    lam * mse(eps_pred, eps) + (1 - lam) * mse(x_tilde, x_t)

where x_tilde stitches the two masked-branch reconstructions.  Images
live in [0, 1] on disk and are mapped to [-1, 1] for the diffusion
internals.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .formats import save_checkpoint, load_checkpoint
from .masking import make_mask_pair
from .model import Diff3MModel, ModelConfig, VARIANTS
from .optim import AdamState, adam_step
from .schedule import NoiseSchedule, forward_noise, make_schedule
from .synthdata import load_split
from .tensor import Tensor, concat, gradients, matmul, mse

__all__ = [
    "TrainConfig",
    "TrainingDataError",
    "diff3m_loss",
    "train_step",
    "train",
    "batch_condition",
]


class TrainingDataError(ValueError):
    """Training data violates the normals-only contract."""


@dataclass(frozen=True)
class TrainConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    lam: float = 0.5
    lr: float = 1e-4
    batch_size: int = 8
    iters: int = 2000
    seed: int = 0
    image_size: int = 32
    d_embed: int = 64
    widths: tuple = (16, 32)
    variant: str = "full"
    phase: str = "joint"  # "pretrain" trains the noise head alone (lam -> 1)

    def validate(self) -> "TrainConfig":
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lambda must lie strictly inside (0,1), got {self.lam}")
        for key in ("T", "batch_size", "image_size", "d_embed"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.iters < 0:
            raise ValueError(f"iters must be nonnegative, got {self.iters}")
        if self.lr < 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.phase not in ("pretrain", "joint"):
            raise ValueError(f"phase must be pretrain or joint, got {self.phase!r}")
        return self

    def model_config(self, schema) -> ModelConfig:
        return ModelConfig(
            schema=tuple(schema),
            image_size=self.image_size,
            d_embed=self.d_embed,
            widths=tuple(self.widths),
            variant=self.variant,
        )


def diff3m_loss(eps_pred: Tensor, eps: Tensor, x_tilde: Tensor, x_t: Tensor, lam: float) -> Tensor:
    """Weighted sum of the noise-head and reconstruction-head MSEs."""
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must lie strictly inside (0,1), got {lam}")
    return lam * mse(eps_pred, eps) + (1.0 - lam) * mse(x_tilde, x_t)


def to_internal(images: np.ndarray) -> np.ndarray:
    """[0,1] pixel range to the [-1,1] range the diffusion runs in."""
    return 2.0 * np.asarray(images, dtype=np.float64) - 1.0


def batch_condition(model: Diff3MModel, x0: Tensor, records) -> Tensor | None:
    """Stacked record-conditioning rows (N, d); None for unconditioned variants.

    Rows of the batched image embedding are selected with one-hot matmuls
    so one encoder pass serves every sample's cross attention.
    """
    if model.tokenizer is None:
        return None
    from .conditioning import ieca

    n = x0.shape[0]
    e_all = model.encoder(x0)
    c_rows = []
    for i, rec in enumerate(records):
        selector = np.zeros((1, n))
        selector[0, i] = 1.0
        e_i = matmul(Tensor(selector), e_all)
        ce = ieca(model.tokens_for(rec), e_i)
        c_rows.append(ce.c_r)
    stacked = c_rows[0] if n == 1 else concat(c_rows, axis=0)
    return model.cond_proj(stacked)


def train_step(images, records, labels, model, opt_state, sched, cfg, rng):
    """One optimization step over a batch of normal-labeled samples.

    Returns (metrics dict); parameters and optimizer state mutate in place.
    """
    bad = [i for i, lab in enumerate(labels) if lab != "normal"]
    if bad:
        raise TrainingDataError(
            f"anomalous-labeled samples at batch positions {bad}; training data must be normal-only"
        )
    n = len(images)
    size = cfg.image_size
    x0 = to_internal(np.asarray(images)).reshape(n, size, size, 1)

    ts = rng.integers(0, cfg.T, size=n)
    eps = rng.standard_normal((n, size, size, 1))
    x_t = np.stack([forward_noise(x0[i], int(ts[i]), eps[i], sched) for i in range(n)])

    x_t_tensor = Tensor(x_t)
    eps_tensor = Tensor(eps)

    cond_rows = batch_condition(model, Tensor(x0), records)
    t_emb = Tensor(np.concatenate([model.t_embedding(int(t)).data for t in ts], axis=0))
    cond = model.time_proj(t_emb) if cond_rows is None else model.time_proj(t_emb) + cond_rows

    eps_pred = model.np_forward_batch(x_t_tensor, cond)
    noise_loss = mse(eps_pred, eps_tensor)

    joint = model.mpg_net is not None and cfg.phase == "joint"
    if joint:
        pairs = [make_mask_pair(size, size, int(t), cfg.T) for t in ts]
        m1s = Tensor(np.stack([p.m1_scaled for p in pairs])[..., None])
        m2s = Tensor(np.stack([p.m2_scaled for p in pairs])[..., None])
        m1b = Tensor(np.stack([p.m1 for p in pairs])[..., None])
        m2b = Tensor(np.stack([p.m2 for p in pairs])[..., None])
        y1 = model.mpg_forward_batch(x_t_tensor * m1s, cond)
        y2 = model.mpg_forward_batch(x_t_tensor * m2s, cond)
        x_tilde = y1 * m2b + y2 * m1b
        loss = diff3m_loss(eps_pred, eps_tensor, x_tilde, x_t_tensor, cfg.lam)
        rec_mse = mse(x_tilde, x_t_tensor).item()
    else:
        loss = noise_loss
        rec_mse = 0.0

    params = model.parameters()
    grads = gradients(loss, params)
    adam_step(params, grads, opt_state)
    return {
        "total": loss.item(),
        "noise_mse": noise_loss.item(),
        "rec_mse": rec_mse,
    }


def checkpoint_metadata(cfg: TrainConfig, schema, total_iters: int, model=None) -> dict:
    meta = {
        "schedule": {"T": cfg.T, "beta_start": cfg.beta_start, "beta_end": cfg.beta_end},
        "lambda": cfg.lam,
        "image_size": cfg.image_size,
        "d_embed": cfg.d_embed,
        "schema": list(schema),
        "iters": total_iters,
        "seed": cfg.seed,
        "widths": list(cfg.widths),
        "variant": cfg.variant,
    }
    if model is not None and model.tokenizer is not None:
        meta["feature_mu"] = list(model.feature_mu)
        meta["feature_sigma"] = list(model.feature_sigma)
    return meta


def train(cfg: TrainConfig, data_dir, out_ckpt, log_path=None, resume=None):
    """Full training run over a dataset's train split; writes a checkpoint.

    ``resume`` loads parameters from an earlier checkpoint before training
    (the optimizer restarts; with iters=0 the checkpoint round-trips).
    Returns the list of per-step metric dicts.
    """
    cfg = cfg.validate()
    images, records, labels = load_split(data_dir, "train")
    anomalous = sum(1 for lab in labels if lab != "normal")
    if anomalous:
        raise TrainingDataError(
            f"train split contains {anomalous} anomalous-labeled samples"
        )
    schema = records[0].schema
    if images.shape[1] != cfg.image_size:
        raise ValueError(
            f"dataset images are {images.shape[1]}x{images.shape[2]}, "
            f"config expects {cfg.image_size}"
        )

    rng = np.random.default_rng(cfg.seed)
    model = Diff3MModel(cfg.model_config(schema), rng)
    if cfg.variant == "full":
        vals = np.stack([r.values for r in records])
        model.set_feature_stats(vals.mean(axis=0), np.maximum(vals.std(axis=0), 1e-6))

    prior_iters = 0
    if resume is not None:
        meta, arrays = load_checkpoint(resume)
        if tuple(meta["schema"]) != schema:
            raise ValueError("resume checkpoint schema does not match dataset")
        model.load_parameters(arrays)
        prior_iters = int(meta.get("iters", 0))

    sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    opt_state = AdamState(lr=cfg.lr)
    n = len(images)

    log_fh = open(log_path, "w") if log_path else None
    metrics = []
    try:
        for step in range(cfg.iters):
            idx = rng.integers(0, n, size=cfg.batch_size)
            m = train_step(
                images[idx],
                [records[i] for i in idx],
                [labels[i] for i in idx],
                model,
                opt_state,
                sched,
                cfg,
                rng,
            )
            metrics.append(m)
            if log_fh:
                log_fh.write(
                    f"{step}\t{m['total']:.6f}\t{m['noise_mse']:.6f}\t{m['rec_mse']:.6f}\n"
                )
    finally:
        if log_fh:
            log_fh.close()

    meta = checkpoint_metadata(cfg, schema, prior_iters + cfg.iters, model)
    save_checkpoint(out_ckpt, meta, {k: p.data for k, p in model.parameters().items()})
    return metrics

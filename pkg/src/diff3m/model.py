"""The full conditional model: tokenizer, encoder, and the two denoisers.

Variants cover the ablation ladder:

* ``ddpm``      noise-prediction network only, timestamp conditioning.
* ``ddpm_pcm``  adds the masked-pixel network and checkerboard inpainting.
* ``full``      adds record conditioning through cross attention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditioning import (
    ConditionEmbedding,
    FeatureTokenizer,
    ImageEncoder,
    PatientRecord,
    ieca,
    timestamp_embedding,
    tokenize_record,
)
from .layers import Dense, Module
from .networks import UNet, UNetConfig
from .tensor import Tensor

__all__ = ["ModelConfig", "Diff3MModel", "VARIANTS"]

VARIANTS = ("ddpm", "ddpm_pcm", "full")


@dataclass(frozen=True)
class ModelConfig:
    schema: tuple
    image_size: int = 32
    d_embed: int = 64
    widths: tuple = (16, 32)
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.d_embed % 2 != 0:
            raise ValueError(f"d_embed must be even, got {self.d_embed}")


class Diff3MModel(Module):
    """Owns every trainable parameter plus the conditioning plumbing.

    Records are z-scored against training-split statistics before
    tokenization (the cited tokenizer design expects normalized numeric
    inputs; raw cm/mmHg magnitudes would otherwise dominate the
    attention).  The constants ride along in the checkpoint.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        unet_cfg = UNetConfig(
            image_size=cfg.image_size, widths=tuple(cfg.widths), cond_dim=cfg.d_embed
        )
        if cfg.variant == "full":
            self.tokenizer = FeatureTokenizer(cfg.schema, cfg.d_embed, rng)
            self.encoder = ImageEncoder(cfg.image_size, cfg.d_embed, rng)
            self.cond_proj = Dense(cfg.d_embed, cfg.d_embed, rng)
            # zero-init adapter: the record pathway starts exactly neutral
            # and engages only as its gradient proves it useful, so the
            # conditioned model cannot trail its unconditioned core
            self.cond_proj.w.data = np.zeros_like(self.cond_proj.w.data)
        else:
            self.tokenizer = None
            self.encoder = None
            self.cond_proj = None
        self.feature_mu = np.zeros(len(cfg.schema))
        self.feature_sigma = np.ones(len(cfg.schema))
        # learned map over the raw sinusoidal embedding; with it the time
        # and record components reach the blocks at comparable amplitude
        self.time_proj = Dense(cfg.d_embed, cfg.d_embed, rng)
        self.np_net = UNet(unet_cfg, rng)
        self.mpg_net = UNet(unet_cfg, rng) if cfg.variant != "ddpm" else None

    # -- conditioning ------------------------------------------------------

    def set_feature_stats(self, mu, sigma) -> None:
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        f = len(self.cfg.schema)
        if mu.shape != (f,) or sigma.shape != (f,) or np.any(sigma <= 0):
            raise ValueError("feature stats must be positive-sigma vectors of schema length")
        self.feature_mu = mu
        self.feature_sigma = sigma

    def standardize(self, record: PatientRecord) -> PatientRecord:
        if record.schema != self.cfg.schema:
            raise ValueError(
                f"record schema {record.schema} does not match model schema {self.cfg.schema}"
            )
        values = (record.values - self.feature_mu) / self.feature_sigma
        return PatientRecord(values=values, schema=record.schema)

    def tokens_for(self, record: PatientRecord) -> Tensor:
        return tokenize_record(self.standardize(record), self.tokenizer)

    def condition(self, x: Tensor, record: PatientRecord) -> ConditionEmbedding | None:
        """Cross-attention embedding of one (image, record) pair; None when
        the variant carries no record conditioning."""
        if self.tokenizer is None:
            return None
        F = self.tokens_for(record)
        e = self.encoder(x)
        return ieca(F, e)

    def cond_vector(self, c_r: ConditionEmbedding | None, t_emb: Tensor) -> Tensor:
        """Per-sample conditioning row: projected t_emb plus the projected c_r."""
        base = self.time_proj(t_emb)
        if c_r is None:
            return base
        return base + self.cond_proj(c_r.c_r)

    def t_embedding(self, t: int) -> Tensor:
        return timestamp_embedding(t, self.cfg.d_embed)

    # -- denoiser entry points ----------------------------------------------

    def np_forward(self, x_t: Tensor, c_r: ConditionEmbedding | None, t_emb: Tensor) -> Tensor:
        return self.np_net(x_t, self.cond_vector(c_r, t_emb))

    def mpg_forward(self, x_masked: Tensor, c_r: ConditionEmbedding | None, t_emb: Tensor) -> Tensor:
        if self.mpg_net is None:
            raise ValueError(f"variant {self.cfg.variant!r} has no masked-pixel network")
        return self.mpg_net(x_masked, self.cond_vector(c_r, t_emb))

    # batched variants used by training and detection; cond is (N, d)

    def np_forward_batch(self, x_t: Tensor, cond: Tensor) -> Tensor:
        return self.np_net(x_t, cond)

    def mpg_forward_batch(self, x_masked: Tensor, cond: Tensor) -> Tensor:
        if self.mpg_net is None:
            raise ValueError(f"variant {self.cfg.variant!r} has no masked-pixel network")
        return self.mpg_net(x_masked, cond)

    def parameters(self) -> dict[str, Tensor]:
        return self.named_parameters()


def load_model(ckpt_path):
    """Rebuild a model (and its schedule settings) from a checkpoint file.

    Returns (model, metadata).  Initialization randomness is irrelevant
    because every parameter is overwritten from the file.
    """
    from .formats import load_checkpoint

    metadata, arrays = load_checkpoint(ckpt_path)
    cfg = ModelConfig(
        schema=tuple(metadata["schema"]),
        image_size=int(metadata["image_size"]),
        d_embed=int(metadata["d_embed"]),
        widths=tuple(metadata["widths"]),
        variant=metadata["variant"],
    )
    model = Diff3MModel(cfg, np.random.default_rng(0))
    model.load_parameters(arrays)
    if "feature_mu" in metadata:
        model.set_feature_stats(metadata["feature_mu"], metadata["feature_sigma"])
    return model, metadata

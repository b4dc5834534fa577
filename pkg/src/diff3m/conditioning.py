"""Record tokenization, image embedding, and cross-attention conditioning.

A tabular record becomes one token per feature via a learned per-feature
affine map.  A small convolutional encoder embeds the image.  The
attention step weights tokens by scaled dot-product similarity with the
image embedding and emits their convex combination as the conditional
embedding, plus sinusoidal timestamp embeddings for the step index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Conv, Dense, Module
from .tensor import (
    Tensor,
    avg_pool2d,
    global_avg_pool,
    matmul,
    silu,
    softmax,
)

__all__ = [
    "PatientRecord",
    "FeatureTokenizer",
    "ImageEncoder",
    "ConditionEmbedding",
    "tokenize_record",
    "ieca",
    "timestamp_embedding",
]


@dataclass(frozen=True)
class PatientRecord:
    """One row of numeric clinical features with a fixed column order."""

    values: np.ndarray
    schema: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "schema", tuple(self.schema))
        if vals.ndim != 1 or len(vals) != len(self.schema):
            raise ValueError(
                f"record has {vals.size} values for {len(self.schema)} schema columns"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("record values must be finite")


class FeatureTokenizer(Module):
    """Per-feature affine tokenizer: token_j = value_j * W_j + b_j.

    Expects standardized feature values; raw cm/mmHg magnitudes would let
    the largest-unit feature dominate the attention by sheer logit
    mobility (the model layer z-scores records before tokenizing).
    """

    def __init__(self, schema, d: int, rng: np.random.Generator):
        self.schema = tuple(schema)
        f = len(self.schema)
        bound = 1.0 / np.sqrt(d)
        # biases start at zero: their early gradients are common-mode across
        # features, which the attention softmax ignores, so per-feature
        # weight differences come from the value-similarity channel alone
        self.w = Tensor(rng.uniform(-bound, bound, size=(f, d)), requires_grad=True)
        self.b = Tensor(np.zeros((f, d)), requires_grad=True)

    @property
    def n_tokens(self) -> int:
        return len(self.schema)

    @property
    def d(self) -> int:
        return self.w.shape[1]


def tokenize_record(record: PatientRecord, tok: FeatureTokenizer) -> Tensor:
    """Token matrix (f, d) for one record."""
    if record.schema != tok.schema:
        raise ValueError(
            f"record schema {record.schema} does not match tokenizer schema {tok.schema}"
        )
    f, d = tok.w.shape
    vals = Tensor(np.repeat(record.values[:, None], d, axis=1))
    return vals * tok.w + tok.b


class ImageEncoder(Module):
    """Three conv+pool stages, global average pool, affine map to width d."""

    def __init__(self, image_size: int, d: int, rng: np.random.Generator,
                 channels=(8, 16, 32)):
        if image_size % 8 != 0:
            raise ValueError(f"encoder needs image size divisible by 8, got {image_size}")
        self.image_size = image_size
        c_prev = 1
        convs = []
        for c in channels:
            convs.append(Conv(c_prev, c, 3, rng))
            c_prev = c
        self.convs = convs
        self.proj = Dense(c_prev, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.image_size or x.shape[2] != self.image_size or x.shape[3] != 1:
            raise ValueError(
                f"encoder expects (N,{self.image_size},{self.image_size},1), got {x.shape}"
            )
        h = x
        for conv in self.convs:
            h = avg_pool2d(silu(conv(h)), 2)
        return self.proj(global_avg_pool(h))


def encode_image(x: Tensor, encoder: ImageEncoder) -> Tensor:
    return encoder(x)


@dataclass
class ConditionEmbedding:
    """Conditional embedding c_r with its attention weights and image embedding."""

    c_r: Tensor  # (1, d)
    w_r: Tensor  # (f, 1), nonnegative, sums to 1
    e: Tensor  # (1, d)

    def weights(self) -> np.ndarray:
        return self.w_r.data.reshape(-1)


def ieca(F: Tensor, e: Tensor) -> ConditionEmbedding:
    """Similarity-weighted token pooling.

    w = softmax(F e^T / sqrt(d)) over the f tokens, c_r = w^T F.
    """
    if F.shape[1] != e.shape[1] or e.shape[0] != 1:
        raise ValueError(f"ieca: token width {F.shape} incompatible with e {e.shape}")
    d = F.shape[1]
    logits = matmul(F, e.t()) * (1.0 / np.sqrt(d))
    w = softmax(logits, axis=0)
    c_r = matmul(w.t(), F)
    return ConditionEmbedding(c_r=c_r, w_r=w, e=e)


def timestamp_embedding(t: int, d: int) -> Tensor:
    """Sinusoidal step embedding of even width d, shape (1, d).

    Element 2k is sin(t / 10000^(2k/d)) and element 2k+1 the matching cos,
    so t = 0 yields the alternating pattern [0, 1, 0, 1, ...].
    """
    if d % 2 != 0:
        raise ValueError(f"timestamp embedding width must be even, got {d}")
    k = np.arange(d // 2)
    freq = 1.0 / np.power(10000.0, 2.0 * k / d)
    emb = np.empty((1, d))
    emb[0, 0::2] = np.sin(t * freq)
    emb[0, 1::2] = np.cos(t * freq)
    return Tensor(emb)

"""Parameter containers shared by the denoisers and the conditioning stack."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, conv2d, matmul

__all__ = ["Module", "Conv", "Dense"]


class Module:
    """Base for anything owning named parameter tensors.

    Parameters are discovered by walking instance attributes (tensors,
    nested modules, and lists of modules), so names are stable across
    runs as long as attribute insertion order is stable.
    """

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, val in vars(self).items():
            key = f"{prefix}.{name}" if prefix else name
            if isinstance(val, Tensor) and val.requires_grad:
                out[key] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(key))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}"))
        return out

    def load_parameters(self, arrays: dict, prefix: str = "") -> None:
        """Overwrite parameter payloads from a name -> ndarray mapping."""
        for name, p in self.named_parameters(prefix).items():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r} in checkpoint")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != "
                    f"model shape {p.data.shape}"
                )
            p.data = arr


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv(Module):
    """Same-size convolution with per-channel bias; kernel layout (kh,kw,C,F)."""

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator):
        self.w = Tensor(_uniform(rng, (k, k, c_in, c_out), c_in * k * k), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b)


class Dense(Module):
    """Affine map applied row-wise: (N, d_in) -> (N, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = Tensor(_uniform(rng, (d_in, d_out), d_in), requires_grad=True)
        self.b = Tensor(np.zeros((1, d_out)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w)
        n = y.shape[0]
        if n == 1:
            return y + self.b
        # replicate the bias row without general broadcasting
        bias = concat_rows(self.b, n)
        return y + bias


def concat_rows(row: Tensor, n: int) -> Tensor:
    from .tensor import concat

    return concat([row] * n, axis=0)

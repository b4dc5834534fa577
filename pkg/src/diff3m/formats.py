"""On-disk formats: graymap images, record tables, manifests, run configs,
and the binary checkpoint container.

Everything here is deliberately plain: binary PGM (P5) for images and
maps, comma-separated records with the label column last, ``key=value``
text for manifests and run configuration, and a little-endian binary
checkpoint with 32-bit float payloads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

__all__ = [
    "read_pgm",
    "write_pgm",
    "write_records_csv",
    "read_records_csv",
    "write_manifest",
    "read_manifest",
    "RunConfig",
    "parse_run_config",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

CHECKPOINT_MAGIC = b"D3M1"
CHECKPOINT_VERSION = 1


# -- portable graymap ---------------------------------------------------------


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM from floats in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"pgm image must be 2-D, got shape {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Float image in [0, 1] from an 8-bit binary PGM."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary graymap (P5)")
    # header: magic, width, height, maxval, single whitespace, then pixels
    parts = []
    i = 2
    while len(parts) < 3:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        parts.append(int(raw[i:j]))
        i = j
    i += 1
    width, height, maxval = parts
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=i)
    return pixels.reshape(height, width).astype(np.float64) / 255.0


# -- record tables --------------------------------------------------------------


def write_records_csv(path, records, labels) -> None:
    """One row per sample: schema columns then the label column, last."""
    if len(records) != len(labels):
        raise ValueError(f"{len(records)} records vs {len(labels)} labels")
    schema = records[0].schema
    lines = [",".join(schema) + ",label"]
    for rec, label in zip(records, labels):
        if rec.schema != schema:
            raise ValueError("records with mixed schemas in one split")
        vals = ",".join(repr(float(v)) for v in rec.values)
        lines.append(f"{vals},{label}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_records_csv(path):
    """Returns (schema tuple, values array (n, f), labels list of str)."""
    from .conditioning import PatientRecord  # local to avoid import cycle

    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty records file")
    header = lines[0].split(",")
    if header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label', got {header[-1]!r}")
    schema = tuple(header[:-1])
    values, labels = [], []
    for ln, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{ln}: expected {len(header)} cells, got {len(cells)}")
        values.append([float(c) for c in cells[:-1]])
        labels.append(cells[-1])
    records = [PatientRecord(values=v, schema=schema) for v in values]
    return schema, records, labels


# -- key=value files --------------------------------------------------------------


def _write_kv(path, mapping: dict) -> None:
    lines = [f"{k}={v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_kv(path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


write_manifest = _write_kv
read_manifest = _read_kv


# -- run configuration --------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Flat pipeline configuration; field names double as the file keys
    (the file key for the loss weight is spelled ``lambda``)."""

    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    image_size: int = 32
    d_embed: int = 64
    lam: float = 0.5
    lr: float = 1e-4
    batch_size: int = 8
    iters: int = 2000
    seed: int = 0
    ddim_stride: int = 1
    t_prime: int = 400
    score_kind: str = "mse"

    def validate(self) -> "RunConfig":
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lambda must lie strictly inside (0,1), got {self.lam}")
        for key in ("T", "image_size", "d_embed", "batch_size", "ddim_stride"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")
        if self.iters < 0 or self.t_prime < 0:
            raise ValueError("iters and t_prime must be nonnegative")
        if self.t_prime >= self.T:
            raise ValueError(f"t_prime={self.t_prime} must be < T={self.T}")
        if self.score_kind not in ("mse", "maxabs"):
            raise ValueError(f"score_kind must be mse or maxabs, got {self.score_kind!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        return self


_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def parse_run_config(path_or_text, from_text: bool = False) -> RunConfig:
    text = path_or_text if from_text else Path(path_or_text).read_text()
    kv = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        kv[key] = val

    by_field = {f.name: f for f in fields(RunConfig)}
    valid_keys = {_FIELD_TO_KEY.get(name, name) for name in by_field}
    out = {}
    for key, val in kv.items():
        if key not in valid_keys:
            raise ValueError(f"unknown config key {key!r}")
        fname = _KEY_TO_FIELD.get(key, key)
        ftype = by_field[fname].type
        if ftype in ("int", int):
            out[fname] = int(val)
        elif ftype in ("float", float):
            out[fname] = float(val)
        else:
            out[fname] = val
    return RunConfig(**out).validate()


def run_config_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        key = _FIELD_TO_KEY.get(f.name, f.name)
        lines.append(f"{key}={getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


# -- checkpoint container --------------------------------------------------------------


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, metadata: dict, params: dict) -> None:
    """Binary container: magic, version, JSON metadata, then each named
    tensor as (name, rank, dims, little-endian float32 payload), sorted by
    name so identical parameters give identical bytes."""
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f4")
            nbytes = name.encode()
            fh.write(struct.pack("<I", len(nbytes)))
            fh.write(nbytes)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (metadata dict, name -> float64 ndarray)."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    metadata = json.loads(raw[off : off + meta_len].decode())
    off += meta_len
    (n_params,) = struct.unpack_from("<I", raw, off)
    off += 4
    params = {}
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + name_len].decode()
        off += name_len
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += 4 * count
        params[name] = arr.reshape(dims).astype(np.float64)
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return metadata, params

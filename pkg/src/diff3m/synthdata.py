"""Procedural phantom chest images paired with tabular records.

Each sample couples a small grayscale "torso" rendering with a clinical
record; the torso and lung widths are an affine function of the record's
BMI, so the record genuinely predicts anatomy.  Anomalous samples add a
single bright Gaussian blob inside one lung.  Everything is a pure
function of (seed, config), which keeps datasets byte-reproducible.

The confounded mode widens the normal BMI range so anatomy varies far
more than in the default mode; an image-only detector then confuses rare
anatomy with pathology while a record-conditioned one need not.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conditioning import PatientRecord
from .formats import read_manifest, read_pgm, read_records_csv, write_manifest, write_pgm, write_records_csv

__all__ = [
    "SCHEMA",
    "FEATURE_UNITS",
    "GenConfig",
    "PhantomSample",
    "generate_sample",
    "generate_dataset",
    "load_split",
    "render_phantom",
    "torso_half_width",
    "lung_soft_masks",
    "blob_oracle_score",
]

DATASET_FORMAT_VERSION = 1

SCHEMA = ("bmi", "bp_sys", "bp_dia", "height", "weight", "age", "sex", "view")

FEATURE_UNITS = {
    "bmi": "kg/m2",
    "bp_sys": "mmHg",
    "bp_dia": "mmHg",
    "height": "cm",
    "weight": "kg",
    "age": "years",
    "sex": "flag",
    "view": "flag",
}


@dataclass(frozen=True)
class GenConfig:
    """Generator knobs; every geometry and intensity range is explicit."""

    image_size: int = 32
    seed: int = 0
    n_train_normal: int = 2000
    n_test_normal: int = 200
    n_test_anomaly: int = 200
    confounded: bool = False
    # record ranges
    bmi_range: tuple = (23.0, 31.0)
    bmi_range_confounded: tuple = (18.0, 42.0)
    height_range: tuple = (152.0, 192.0)
    bp_sys_range: tuple = (100.0, 150.0)
    bp_dia_range: tuple = (60.0, 95.0)
    age_range: tuple = (20.0, 85.0)
    weight_noise: float = 0.10
    # anatomy: torso half-width in unit coords, affine in BMI
    torso_width_base: float = 0.20
    torso_width_per_bmi: float = 0.0065
    torso_height: float = 0.42
    torso_level: float = 0.55
    lung_level: float = 0.22
    # confounded mode only: lung brightness and a checkerboard-phase lung
    # texture both drift with BMI.  The texture's masked parity carries no
    # information about the amplitude, and the brightness of a heavily
    # noised lung is equally record-bound, so image-only reconstruction
    # regresses extreme-but-normal anatomy toward the population mode
    # while a record-conditioned model can pin both.
    lung_level_per_bmi_confounded: float = 0.006
    parity_amp_per_bmi_confounded: float = 0.015
    background_level: float = 0.06
    rib_amplitude: float = 0.10
    rib_freq_range: tuple = (3.0, 3.6)
    edge_sharpness: float = 18.0
    noise_sigma: float = 0.008
    # anomaly blob, unit coordinates
    blob_sigma_range: tuple = (0.045, 0.08)
    blob_intensity_range: tuple = (0.35, 0.60)

    def active_bmi_range(self):
        return self.bmi_range_confounded if self.confounded else self.bmi_range


@dataclass(frozen=True)
class PhantomSample:
    image: np.ndarray  # (H, W) float in [0, 1]
    record: PatientRecord
    label: str  # "normal" | "anomalous"
    anomaly_geometry: tuple | None  # (cy, cx, sigma, intensity) in unit coords


def torso_half_width(bmi: float, cfg: GenConfig) -> float:
    return cfg.torso_width_base + cfg.torso_width_per_bmi * (bmi - 18.0)


def _soft_ellipse(yy, xx, cy, cx, ry, rx, sharpness):
    """Indicator of an ellipse with a thin linear anti-alias ramp at the rim:
    exactly 1 inside, exactly 0 outside, continuous in the radii."""
    q = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    return np.clip(0.5 + sharpness * (1.0 - q), 0.0, 1.0)


def _grid(n):
    c = (np.arange(n) + 0.5) / n
    return np.meshgrid(c, c, indexing="ij")


def _lung_geometry(bmi: float, cfg: GenConfig):
    ax = torso_half_width(bmi, cfg)
    lung_rx = 0.34 * ax
    lung_ry = 0.62 * cfg.torso_height
    offset = 0.48 * ax
    return [
        (0.50, 0.5 - offset, lung_ry, lung_rx),
        (0.50, 0.5 + offset, lung_ry, lung_rx),
    ]


def lung_soft_masks(bmi: float, cfg: GenConfig):
    yy, xx = _grid(cfg.image_size)
    masks = []
    for cy, cx, ry, rx in _lung_geometry(bmi, cfg):
        masks.append(_soft_ellipse(yy, xx, cy, cx, ry, rx, cfg.edge_sharpness))
    return masks


def anatomy_masks(bmi: float, cfg: GenConfig):
    """Torso mask plus the two lung masks, as rendered."""
    yy, xx = _grid(cfg.image_size)
    torso = _soft_ellipse(yy, xx, 0.52, 0.5, cfg.torso_height, torso_half_width(bmi, cfg), cfg.edge_sharpness)
    return [torso] + lung_soft_masks(bmi, cfg)


def render_phantom(
    bmi: float,
    rib_freq: float,
    rib_phase: float,
    noise: np.ndarray,
    cfg: GenConfig,
    blob: tuple | None = None,
) -> np.ndarray:
    """Pure renderer: anatomy from BMI plus per-sample texture jitter."""
    n = cfg.image_size
    yy, xx = _grid(n)

    torso, *lungs = anatomy_masks(bmi, cfg)
    img = cfg.background_level + (cfg.torso_level - cfg.background_level) * torso

    lung_level = cfg.lung_level
    if cfg.confounded:
        lung_level = float(np.clip(lung_level + cfg.lung_level_per_bmi_confounded * (bmi - 27.0), 0.05, 0.45))

    ribs = 0.5 + 0.5 * np.sin(2.0 * np.pi * (rib_freq * yy + rib_phase))
    for lung in lungs:
        img += lung * (lung_level - cfg.torso_level)
        img += lung * cfg.rib_amplitude * ribs

    if cfg.confounded:
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        parity = 1.0 - 2.0 * ((ii + jj) % 2)
        amp = cfg.parity_amp_per_bmi_confounded * (bmi - 18.0)
        img += np.maximum(lungs[0], lungs[1]) * amp * parity

    img = img + noise
    if blob is not None:
        cy, cx, sigma, intensity = blob
        rho2 = (yy - cy) ** 2 + (xx - cx) ** 2
        bump = intensity * np.exp(-rho2 / (2.0 * sigma**2))
        bump[rho2 > (3.0 * sigma) ** 2] = 0.0  # compact support
        img = img + bump
    return np.clip(img, 0.0, 1.0)


def _draw_record(rng: np.random.Generator, cfg: GenConfig) -> PatientRecord:
    bmi = rng.uniform(*cfg.active_bmi_range())
    height = rng.uniform(*cfg.height_range)
    weight = bmi * (height / 100.0) ** 2 * (1.0 + cfg.weight_noise * rng.standard_normal())
    values = np.array(
        [
            bmi,
            rng.uniform(*cfg.bp_sys_range),
            rng.uniform(*cfg.bp_dia_range),
            height,
            weight,
            float(rng.integers(cfg.age_range[0], cfg.age_range[1] + 1)),
            float(rng.integers(0, 2)),
            float(rng.integers(0, 2)),
        ]
    )
    return PatientRecord(values=values, schema=SCHEMA)


def _draw_blob(rng: np.random.Generator, bmi: float, cfg: GenConfig) -> tuple:
    side = int(rng.integers(0, 2))
    cy0, cx0, ry, rx = _lung_geometry(bmi, cfg)[side]
    r = np.sqrt(rng.uniform(0.0, 1.0)) * 0.55
    theta = rng.uniform(0.0, 2.0 * np.pi)
    cy = cy0 + r * ry * np.sin(theta)
    cx = cx0 + r * rx * np.cos(theta)
    sigma = rng.uniform(*cfg.blob_sigma_range)
    intensity = rng.uniform(*cfg.blob_intensity_range)
    return (float(cy), float(cx), float(sigma), float(intensity))


def generate_sample(seed, want_anomaly: bool, cfg: GenConfig) -> PhantomSample:
    """Deterministic sample; the anomalous/normal pair for one seed differs
    only inside the blob support because blob parameters are drawn either way."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    record = _draw_record(rng, cfg)
    rib_freq = rng.uniform(*cfg.rib_freq_range)
    rib_phase = rng.uniform(0.0, 1.0)
    noise = cfg.noise_sigma * rng.standard_normal((cfg.image_size, cfg.image_size))
    blob = _draw_blob(rng, record.values[0], cfg)
    image = render_phantom(
        record.values[0], rib_freq, rib_phase, noise, cfg, blob if want_anomaly else None
    )
    return PhantomSample(
        image=image,
        record=record,
        label="anomalous" if want_anomaly else "normal",
        anomaly_geometry=blob if want_anomaly else None,
    )


def _split_plan(cfg: GenConfig):
    return {
        "train": [False] * cfg.n_train_normal,
        "test": [False] * cfg.n_test_normal + [True] * cfg.n_test_anomaly,
    }


def generate_dataset(cfg: GenConfig, out_dir) -> dict:
    """Write train/test splits plus a manifest; returns the manifest mapping.

    The manifest is written last, so its presence marks a complete
    dataset; loaders refuse directories without one.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, plan in _split_plan(cfg).items():
        split_dir = out / split
        split_dir.mkdir(exist_ok=True)
        records, labels = [], []
        for idx, want_anomaly in enumerate(plan):
            sample = generate_sample((cfg.seed, 0 if split == "train" else 1, idx), want_anomaly, cfg)
            write_pgm(split_dir / f"{idx:05d}.pgm", sample.image)
            records.append(sample.record)
            labels.append(sample.label)
        if records:
            write_records_csv(split_dir / "records.csv", records, labels)

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "generator_seed": cfg.seed,
        "image_size": cfg.image_size,
        "confounded": int(cfg.confounded),
        "schema": ",".join(SCHEMA),
        "schema_units": ",".join(FEATURE_UNITS[f] for f in SCHEMA),
        "n_train_normal": cfg.n_train_normal,
        "n_test_normal": cfg.n_test_normal,
        "n_test_anomaly": cfg.n_test_anomaly,
    }
    write_manifest(out / "manifest.txt", manifest)
    return manifest


def load_split(data_dir, split: str):
    """Images (n,H,W) in [0,1], records, and str labels for one split."""
    root = Path(data_dir)
    manifest_path = root / "manifest.txt"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{root}: no manifest.txt (incomplete or missing dataset)")
    manifest = read_manifest(manifest_path)
    split_dir = root / split
    if not split_dir.is_dir():
        raise FileNotFoundError(f"{root}: missing split directory {split!r}")
    schema, records, labels = read_records_csv(split_dir / "records.csv")
    if schema != tuple(manifest["schema"].split(",")):
        raise ValueError(f"{split_dir}: records schema does not match manifest")
    expected = {
        "train": int(manifest["n_train_normal"]),
        "test": int(manifest["n_test_normal"]) + int(manifest["n_test_anomaly"]),
    }[split]
    if len(records) != expected:
        raise ValueError(f"{split_dir}: manifest promises {expected} samples, found {len(records)}")
    size = int(manifest["image_size"])
    images = np.empty((len(records), size, size))
    for idx in range(len(records)):
        img = read_pgm(split_dir / f"{idx:05d}.pgm")
        if img.shape != (size, size):
            raise ValueError(f"{split_dir}/{idx:05d}.pgm: wrong image shape {img.shape}")
        images[idx] = img
    return images, records, labels


def blob_oracle_score(image: np.ndarray, record: PatientRecord, cfg: GenConfig) -> float:
    """Separability-ceiling oracle: peak 3x3 box-mean brightness inside the
    lungs implied by the record.  Thresholding this should nearly max out
    ranking metrics on generated data; it validates the task, not the model."""
    n = cfg.image_size
    box = np.ones((3, 3)) / 9.0
    padded = np.pad(image, 1, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    local_mean = (win * box).sum(axis=(2, 3))
    lung = np.maximum(*lung_soft_masks(record.values[0], cfg))
    interior = lung > 0.9
    if not interior.any():
        return float(local_mean.max())
    return float(local_mean[interior].max())

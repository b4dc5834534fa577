#!/usr/bin/env python3
"""Miniature end-to-end run: train briefly, reconstruct, score, report.

Uses a reduced schedule and a small split so it finishes in about two
minutes; the acceptance suite runs the full-scale version.

Run:  python demos/06_end_to_end_detection.py
"""

import tempfile
import time
from pathlib import Path

import numpy as np

from diff3m.detection import detect_batch
from diff3m.metrics import auprc, auroc
from diff3m.model import load_model
from diff3m.schedule import make_schedule
from diff3m.synthdata import GenConfig, generate_dataset, load_split
from diff3m.training import TrainConfig, train

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    data = root / "data"
    generate_dataset(GenConfig(n_train_normal=200, n_test_normal=40, n_test_anomaly=40, seed=2), data)

    cfg = TrainConfig(iters=150, seed=0)
    print("training 150 steps (batch 8, 32x32)...")
    start = time.perf_counter()
    metrics = train(cfg, data, root / "model.ckpt", log_path=root / "train.log")
    totals = [m["total"] for m in metrics]
    print(f"  {time.perf_counter() - start:.0f}s; loss {np.mean(totals[:20]):.3f} -> {np.mean(totals[-20:]):.3f}")

    model, meta = load_model(root / "model.ckpt")
    sched = make_schedule(meta["schedule"]["T"], meta["schedule"]["beta_start"],
                          meta["schedule"]["beta_end"])
    images, records, labels = load_split(data, "test")
    y = np.array([1 if lab == "anomalous" else 0 for lab in labels])

    print("reconstructing the test split (t' = 400, stride 50)...")
    results = []
    for lo in range(0, len(images), 16):
        results.extend(detect_batch(images[lo:lo + 16], records[lo:lo + 16],
                                    model, sched, t_prime=400, stride=50))

    for kind in ("mse", "maxabs"):
        scores = np.array([getattr(r, f"score_{kind}") for r in results])
        print(f"  {kind:6s}: AUROC {auroc(scores, y):.3f}  AUPRC {auprc(scores, y):.3f}")

    worst = max(results, key=lambda r: r.score_mse)
    print("highest-scoring sample's anomaly map peak:", f"{worst.anomaly_map.max():.3f}")

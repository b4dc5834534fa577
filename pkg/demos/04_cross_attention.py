#!/usr/bin/env python3
"""Record tokenization and image-similarity attention, stand-alone.

Run:  python demos/04_cross_attention.py
"""

import numpy as np

from diff3m.conditioning import (
    FeatureTokenizer,
    ImageEncoder,
    PatientRecord,
    ieca,
    timestamp_embedding,
    tokenize_record,
)
from diff3m.tensor import Tensor

rng = np.random.default_rng(3)
schema = ("bmi", "bp_sys", "bp_dia", "height", "weight", "age", "sex", "view")

tok = FeatureTokenizer(schema, d=16, rng=rng)
# fresh tokenizers have zero biases; give this demo a trained-looking map
tok.w.data = rng.standard_normal(tok.w.shape) * 0.4
tok.b.data = rng.standard_normal(tok.b.shape) * 0.2

record = PatientRecord(
    values=[0.8, -0.3, 0.1, -1.2, 0.5, 0.0, 1.0, -1.0],  # standardized units
    schema=schema,
)
F = tokenize_record(record, tok)
print("token matrix:", F.shape)

encoder = ImageEncoder(32, 16, rng)
image = Tensor(rng.uniform(size=(1, 32, 32, 1)))
e = encoder(image)
print("image embedding:", e.shape)

ce = ieca(F, e)
print("\nattention weights (sum = %.6f):" % ce.weights().sum())
for name, w in sorted(zip(schema, ce.weights()), key=lambda kv: -kv[1]):
    print(f"  {name:8s} {w:.4f}")
print("conditional embedding c_r:", ce.c_r.shape)

# sinusoidal step embeddings distinguish timesteps
e0 = timestamp_embedding(0, 8).data[0]
e1 = timestamp_embedding(1, 8).data[0]
print("\nt_emb(0) =", np.round(e0, 3))
print("t_emb(1) =", np.round(e1, 3))

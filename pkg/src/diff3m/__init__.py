"""Conditional diffusion anomaly detection on phantom chest images paired
with tabular records: a small, self-contained numpy implementation.

Train on normal image/record pairs, reconstruct test inputs through the
deterministic encode/decode ladder with checkerboard inpainting, and
score the residual.
"""

from .conditioning import (
    ConditionEmbedding,
    FeatureTokenizer,
    ImageEncoder,
    PatientRecord,
    ieca,
    timestamp_embedding,
    tokenize_record,
)
from .detection import AnomalyResult, anomaly_map, anomaly_score, detect, detect_batch
from .masking import MaskPair, apply_masks, make_mask_pair, recombine
from .metrics import AttentionReport, MetricReport, attention_report, auprc, auroc
from .model import Diff3MModel, ModelConfig, load_model
from .networks import UNet, UNetConfig
from .optim import AdamState, adam_step
from .schedule import (
    NoiseSchedule,
    ddim_decode_step,
    ddim_encode_step,
    forward_noise,
    make_schedule,
)
from .synthdata import GenConfig, PhantomSample, generate_dataset, generate_sample, load_split
from .tensor import Tensor, gradients, no_grad
from .training import TrainConfig, diff3m_loss, train, train_step

__version__ = "0.1.0"

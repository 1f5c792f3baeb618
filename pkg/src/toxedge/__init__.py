"""toxedge: CPU-first inference engine and compression toolkit for
speech toxicity classifiers with a shared-encoder multitask design."""

__version__ = "0.1.0"

from .audio import LabeledUtterance, Waveform, normalize, read_wav, synth_dataset
from .checkpoint import (
    Checkpoint,
    QuantParams,
    TensorEntry,
    checkpoint_checksum,
    load,
    model_size_bytes,
    save,
)
from .compress import make_student, prune_magnitude, quantize_model, quantize_tensor
from .config import ModelConfig, expected_tensors, param_count, preset
from .ctc import brute_force_ctc, collapse, ctc_grad, ctc_loss, greedy_decode
from .losses import DistillHyper, LossBreakdown, MtlWeights, cross_entropy, kd_loss, kl_div, mtl_loss
from .metrics import Metrics, classification_metrics, roc_auc
from .model import classify, ctc_logits, encode, feature_extract, forward, init_checkpoint
from .train import (
    TrainProtocol,
    adam_init,
    adam_step,
    distill,
    lambda_grid_search,
    split_dataset,
    train_heads,
)
from .bench import BenchResult, bench_suite, measure_latency, rtf
from .memtrack import peak_memory

__all__ = [
    "__version__",
    "BenchResult",
    "Checkpoint",
    "DistillHyper",
    "LabeledUtterance",
    "LossBreakdown",
    "Metrics",
    "ModelConfig",
    "MtlWeights",
    "QuantParams",
    "TensorEntry",
    "TrainProtocol",
    "Waveform",
    "adam_init",
    "adam_step",
    "bench_suite",
    "brute_force_ctc",
    "checkpoint_checksum",
    "classification_metrics",
    "classify",
    "collapse",
    "cross_entropy",
    "ctc_grad",
    "ctc_logits",
    "ctc_loss",
    "distill",
    "encode",
    "expected_tensors",
    "feature_extract",
    "forward",
    "greedy_decode",
    "init_checkpoint",
    "kd_loss",
    "kl_div",
    "lambda_grid_search",
    "load",
    "make_student",
    "measure_latency",
    "model_size_bytes",
    "mtl_loss",
    "normalize",
    "param_count",
    "peak_memory",
    "preset",
    "prune_magnitude",
    "quantize_model",
    "quantize_tensor",
    "read_wav",
    "roc_auc",
    "rtf",
    "save",
    "split_dataset",
    "synth_dataset",
    "train_heads",
]

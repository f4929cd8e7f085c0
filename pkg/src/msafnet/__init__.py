"""MSAFNet driver-attention prediction with its data, metric and analysis tooling."""
from .analysis import ADFRecord, ADFSummary, average_attention_map, compute_adf, summarize_adf, temporal_stats
from .checkpoint import load_model, save_model
from .data import (
    AccidentAnnotation,
    ClipDataset,
    SplitCatalog,
    VideoRecord,
    load_catalog,
    make_splits,
    parse_annotation,
    sample_clip,
    serialize_annotation,
)
from .evaluation import MetricReport, evaluate_run
from .losses import cc_loss, kl_loss, total_loss
from .metrics import (
    FixationSet,
    extract_fixations,
    metric_auc_judd,
    metric_auc_shuffled,
    metric_cc,
    metric_kldiv,
    metric_nss,
    metric_sim,
)
from .model import ModelConfig, MSAFNetModel, forward, output_shapes, saf_early, saf_late
from .synth import SynthConfig, synth_generate
from .tensor import Tensor, no_grad
from .train import AdamState, TrainConfig, adam_step, train

__all__ = [
    "ADFRecord", "ADFSummary", "AccidentAnnotation", "AdamState", "ClipDataset", "FixationSet",
    "MSAFNetModel", "MetricReport", "ModelConfig", "SplitCatalog", "SynthConfig", "Tensor", "TrainConfig",
    "VideoRecord", "adam_step", "average_attention_map", "cc_loss", "compute_adf", "evaluate_run",
    "extract_fixations", "forward", "kl_loss", "load_catalog", "load_model", "make_splits", "metric_auc_judd",
    "metric_auc_shuffled", "metric_cc", "metric_kldiv", "metric_nss", "metric_sim", "no_grad", "output_shapes",
    "parse_annotation", "saf_early", "saf_late", "sample_clip", "save_model", "serialize_annotation",
    "summarize_adf", "synth_generate", "temporal_stats", "total_loss", "train",
]

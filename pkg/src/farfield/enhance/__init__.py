"""Mask estimation, application, multi-array selection and training."""

from .estimator import MaskEstimator, estimate_mask, load_checkpoint, save_checkpoint
from .masks import MASK_BOUND, ComplexMask, apply_mask, ideal_crm
from .pipeline import StreamingEnhancer, enhance_clip, enhance_ideal, enhance_with_mask, offline_causal
from .selection import Candidate, estimated_snr, select_array
from .training import LrHalving, TrainConfig, train

__all__ = [
    "MASK_BOUND", "Candidate", "ComplexMask", "LrHalving", "MaskEstimator", "StreamingEnhancer", "TrainConfig",
    "apply_mask", "enhance_clip", "enhance_ideal", "enhance_with_mask", "estimate_mask", "estimated_snr",
    "ideal_crm", "load_checkpoint", "offline_causal", "save_checkpoint", "select_array", "train",
]

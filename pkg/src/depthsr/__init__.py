"""Blind depth super-resolution with learned degradation representations,
routed multi-scale degradation kernels, and degradation-oriented RGB-D
fusion, plus a synthetic harness with known degradation operators."""

from .data import (DEPTH_MAX_M, DegradationSpec, DepthMap, RgbImage,
                   SceneSample, ValidMask, delta_kernel, gaussian_kernel)
from .degradation import (RouterDecision, effective_kernel, filter_and_sum,
                          normalized_cross_correlation, topk_softmax)
from .fusion import DepthSRNet, ModelConfig, count_params, deform_conv
from .losses import (contrastive_loss, degradation_loss, extract_features,
                     reconstruction_loss, total_loss)
from .resize import bicubic_resize
from .synth import add_eval_noise, fill_holes, synth_scene
from .training import TrainConfig, grad_check, load_checkpoint, save_checkpoint, train_loop

__all__ = [
    "DEPTH_MAX_M", "DegradationSpec", "DepthMap", "RgbImage", "SceneSample",
    "ValidMask", "delta_kernel", "gaussian_kernel", "RouterDecision",
    "effective_kernel", "filter_and_sum", "normalized_cross_correlation",
    "topk_softmax", "DepthSRNet", "ModelConfig", "count_params", "deform_conv",
    "contrastive_loss", "degradation_loss", "extract_features",
    "reconstruction_loss", "total_loss", "bicubic_resize", "add_eval_noise",
    "fill_holes", "synth_scene", "TrainConfig", "grad_check",
    "load_checkpoint", "save_checkpoint", "train_loop",
]

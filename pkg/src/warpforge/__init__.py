"""Synthetic face-warp forensics: flow-field math, dataset synthesis, losses and metrics."""

from .flow import (ConsistencyConfig, consistency_mask, discretize_flow, flow_gradient,
                   flow_magnitude, gaussian_blur, invert_flow, sample_bilinear, undiscretize,
                   warp_flow, warp_image)
from .losses import LossConfig, LossValue, epe_loss, multiscale_loss, reconstruction_loss, total_loss
from .metrics import (MetricConfig, ScoredSample, accuracy, average_precision, delta_psnr,
                      epe_metric, iou_at_threshold, psnr, psnr_scale_sweep, two_afc)
from .synth import (FalParams, LandmarkMesh, SynthConfig, make_noise_image, params_to_flow,
                    random_smooth_warp, sample_fal_params, synthesize_example)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyConfig", "consistency_mask", "discretize_flow", "flow_gradient",
    "flow_magnitude", "gaussian_blur", "invert_flow", "sample_bilinear", "undiscretize",
    "warp_flow", "warp_image",
    "LossConfig", "LossValue", "epe_loss", "multiscale_loss", "reconstruction_loss", "total_loss",
    "MetricConfig", "ScoredSample", "accuracy", "average_precision", "delta_psnr",
    "epe_metric", "iou_at_threshold", "psnr", "psnr_scale_sweep", "two_afc",
    "FalParams", "LandmarkMesh", "SynthConfig", "make_noise_image", "params_to_flow",
    "random_smooth_warp", "sample_fal_params", "synthesize_example",
]

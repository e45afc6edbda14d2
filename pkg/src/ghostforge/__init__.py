"""Turbulence-degraded computational ghost imaging and adversarial restoration."""

from .imaging import BucketSeries, Image, MetricReport, PatternStack, load_image, psnr, save_image, ssim
from .optics import (
    DatasetManifest,
    SimConfig,
    TurbulenceParams,
    degrade,
    generate_dataset,
    make_patterns,
    make_phase_screen,
    measure,
)
from .recon import CGIReconstructor, ReconConfig, reconstruct, reconstruct_pair

__version__ = "0.1.0"

__all__ = [
    "BucketSeries", "CGIReconstructor", "DatasetManifest", "Image", "MetricReport",
    "PatternStack", "ReconConfig", "SimConfig", "TurbulenceParams", "degrade",
    "generate_dataset", "load_image", "make_patterns", "make_phase_screen", "measure",
    "psnr", "reconstruct", "reconstruct_pair", "save_image", "ssim",
]

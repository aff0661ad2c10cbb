"""Differentiable Gaussian splatting for nighttime glow scenes.

The package trains a 3D Gaussian scene from a handful of posed views and
regularizes renders at perturbed, ground-truth-free poses against a bank of
patch-level appearance features built from verified candidate views.
"""

from glowgs.errors import (
    DataFormatError,
    InvalidInputError,
    NumericalError,
)
from glowgs.gaussians import (
    Camera,
    Gaussian2D,
    Gaussian3D,
    build_covariance,
    eval_gaussian2d,
    project_gaussian,
    quat_to_rotation,
    sh_color,
)
from glowgs.scene import GaussianScene
from glowgs.rasterizer import RenderOutput, SceneGrads, rasterize, rasterize_backward
from glowgs.featbank import (
    FeatureBank,
    FeatureSet,
    VerificationReport,
    build_bank,
    retrieve,
    semantic_term,
    verify,
    view_distance,
)
from glowgs.descriptor import describe
from glowgs.metrics import EvalReport, masked_eval, psnr, ssim
from glowgs.estimator import GlowGSReconstructor

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "DataFormatError",
    "EvalReport",
    "FeatureBank",
    "FeatureSet",
    "Gaussian2D",
    "Gaussian3D",
    "GaussianScene",
    "GlowGSReconstructor",
    "InvalidInputError",
    "NumericalError",
    "RenderOutput",
    "SceneGrads",
    "VerificationReport",
    "build_bank",
    "build_covariance",
    "describe",
    "eval_gaussian2d",
    "masked_eval",
    "project_gaussian",
    "psnr",
    "quat_to_rotation",
    "rasterize",
    "rasterize_backward",
    "retrieve",
    "semantic_term",
    "sh_color",
    "ssim",
    "verify",
    "view_distance",
]

"""Noise-averaged Taylor attributions for small numpy networks, with
perturbation and smoothness metrics and per-input noise-scale search."""

__version__ = "0.1.0"

from ._accel import BACKEND
from .adaptive import AdaptiveConfig, AdaptiveTrace, adaptive_noise_search, compute_auc
from .attribution import (
    AttributionMap,
    IGConfig,
    NoiseConfig,
    generate_roots,
    integrated_gradients,
    integrated_gradients_noise_avg,
    raw_gradient,
    smooth_grad,
    smooth_taylor,
    verify_smoothgrad_equivalence,
)
from .integrate import simpson_auc
from .model import Model, ScoreTarget, finite_diff_gradient, forward, gradient, load_model, save_model
from .perturbation import PerturbEvalConfig, PerturbationCurve, aupc, order_regions, perturbation_game
from .saliency import SaliencyMap, TVCurve, autvc, average_total_variation, gaussian_pyramid, multiscale_tv_curve, to_saliency
from .tensor import NonFiniteError, load_tensor, save_tensor

__all__ = [
    "BACKEND", "AdaptiveConfig", "AdaptiveTrace", "adaptive_noise_search", "compute_auc",
    "AttributionMap", "IGConfig", "NoiseConfig", "generate_roots", "integrated_gradients",
    "integrated_gradients_noise_avg", "raw_gradient", "smooth_grad", "smooth_taylor",
    "verify_smoothgrad_equivalence", "simpson_auc", "Model", "ScoreTarget", "finite_diff_gradient",
    "forward", "gradient", "load_model", "save_model", "PerturbEvalConfig", "PerturbationCurve",
    "aupc", "order_regions", "perturbation_game", "SaliencyMap", "TVCurve", "autvc",
    "average_total_variation", "gaussian_pyramid", "multiscale_tv_curve", "to_saliency",
    "NonFiniteError", "load_tensor", "save_tensor",
]

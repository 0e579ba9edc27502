"""Per-input line search over the SmoothTaylor noise scale."""

from dataclasses import dataclass, field

import numpy as np

from .attribution import NoiseConfig, smooth_taylor
from .perturbation import PerturbEvalConfig, aupc, perturbation_game
from .saliency import autvc, multiscale_tv_curve, to_saliency

OBJECTIVES = ("aupc", "autvc")
MIN_SIGMA = 1e-8


@dataclass(frozen=True)
class AdaptiveConfig:
    max_iterations: int = 20
    learning_rate: float = 0.1
    learning_decay: float = 0.9
    max_stop_count: int = 3
    objective: str = "autvc"
    roots: int = 150
    seed: int = 0
    # count a probe that merely ties the current AUC as a failure
    ties_worsen: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.learning_decay < 1:
            raise ValueError("learning_decay must be in (0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_stop_count < 0:
            raise ValueError("max_stop_count must be >= 0")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.roots < 1:
            raise ValueError("roots must be >= 1")


@dataclass
class AdaptiveTrace:
    initial_sigma: float
    initial_auc: float
    best_sigma: float
    best_auc: float
    iterations: list = field(default_factory=list)

    def rows(self):
        """``(iteration, sigma, auc, alpha, stop_count)`` per iteration."""
        return list(self.iterations)


def compute_auc(x, R, model, sigma, objective, seed, target, perturb_cfg=None, tv_opts=None):
    """Objective value of the SmoothTaylor map at noise scale ``sigma``.

    The same ``seed`` drives the roots and, for ``"aupc"``, the
    perturbation game, so repeated calls are reproducible.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    attr = smooth_taylor(model, x, target, NoiseConfig(float(sigma), int(R), seed))
    if objective == "autvc":
        return autvc(multiscale_tv_curve(to_saliency(attr), **(tv_opts or {})))
    if objective == "aupc":
        cfg = perturb_cfg or PerturbEvalConfig(seed=seed)
        if cfg.seed != seed:
            cfg = PerturbEvalConfig(cfg.kernel, cfg.steps, cfg.samples, seed, cfg.value_range)
        return aupc(perturbation_game(model, x, attr, target, cfg))
    raise ValueError(f"unknown objective {objective!r}")


def _positive(sigma):
    return max(abs(sigma), MIN_SIGMA)


def adaptive_noise_search(x, model, target, cfg, auc_fn=None, perturb_cfg=None, tv_opts=None):
    """Search the noise scale that minimizes the configured objective.

    Starts from the mean absolute input value.  Each iteration probes
    ``sigma + alpha``; if that is worse than the last accepted value it
    moves to ``|sigma - alpha|`` instead.  When the move still ends up
    worse, ``alpha`` decays and the stop counter rises; once the counter
    has passed ``max_stop_count`` the next failure ends the search.  Any
    non-worsening move resets the counter.  The best seen ``(sigma, auc)``
    is returned in the trace.

    ``auc_fn(sigma)`` replaces :func:`compute_auc` when given.
    """
    if auc_fn is None:
        def auc_fn(sigma):
            return compute_auc(x, cfg.roots, model, sigma, cfg.objective, cfg.seed, target,
                               perturb_cfg, tv_opts)

    def worse(a, b):
        return a >= b if cfg.ties_worsen else a > b

    sigma = _positive(float(np.mean(np.abs(np.asarray(x, dtype=np.float64)))))
    auc = float(auc_fn(sigma))
    alpha = cfg.learning_rate
    stops = 0
    trace = AdaptiveTrace(sigma, auc, sigma, auc)
    for i in range(1, cfg.max_iterations + 1):
        auc_s = float(auc_fn(_positive(sigma + alpha)))
        if worse(auc_s, auc):
            sigma = _positive(sigma - alpha)
            auc_s = float(auc_fn(sigma))
        else:
            sigma = _positive(sigma + alpha)
        # compared against the AUC accepted last iteration, not the probe
        if worse(auc_s, auc):
            if stops <= cfg.max_stop_count:
                alpha *= cfg.learning_decay
                stops += 1
            else:
                trace.iterations.append((i, sigma, auc_s, alpha, stops))
                break
        else:
            stops = 0
            if auc_s < trace.best_auc:
                trace.best_auc, trace.best_sigma = auc_s, sigma
        trace.iterations.append((i, sigma, auc_s, alpha, stops))
        auc = auc_s
    return trace

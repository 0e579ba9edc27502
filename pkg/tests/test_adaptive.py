import numpy as np
import pytest

from smoothtaylor.adaptive import AdaptiveConfig, adaptive_noise_search, compute_auc
from smoothtaylor.model import ScoreTarget, predicted_class
from smoothtaylor.perturbation import PerturbEvalConfig
from smoothtaylor.toy import random_conv_net


def test_quadratic_mock_converges():
    x = np.full(10, 0.2)
    trace = adaptive_noise_search(x, None, None, AdaptiveConfig(max_iterations=20), auc_fn=lambda s: (s - 1.0) ** 2)
    assert trace.initial_sigma == pytest.approx(0.2)
    assert abs(trace.best_sigma - 1.0) <= 0.1
    assert trace.best_auc <= trace.initial_auc


def test_constant_mock_stops_early_when_ties_count_as_worse():
    cfg = AdaptiveConfig(max_iterations=20, max_stop_count=3, ties_worsen=True)
    trace = adaptive_noise_search(np.ones(4), None, None, cfg, auc_fn=lambda s: 5.0)
    assert len(trace.iterations) == 5
    assert trace.best_sigma == trace.initial_sigma
    # strict comparison never stops on a flat objective
    loose = adaptive_noise_search(np.ones(4), None, None, AdaptiveConfig(max_iterations=20), auc_fn=lambda s: 5.0)
    assert len(loose.iterations) == 20


def test_trace_rows_bounded_and_best_monotone():
    gen = np.random.default_rng(0)
    noise = {}

    def bumpy(s):
        return noise.setdefault(round(s, 9), (s - 0.7) ** 2 + 0.05 * gen.random())

    cfg = AdaptiveConfig(max_iterations=12, learning_rate=0.2)
    trace = adaptive_noise_search(np.full(3, 0.1), None, None, cfg, auc_fn=bumpy)
    assert len(trace.rows()) <= 12
    assert trace.best_auc == min([trace.initial_auc] + [r[2] for r in trace.rows()])


def test_sigma_stays_positive():
    trace = adaptive_noise_search(np.full(3, 0.05), None, None, AdaptiveConfig(max_iterations=6, learning_rate=0.5),
                                  auc_fn=lambda s: s)
    assert all(row[1] > 0 for row in trace.rows())


def test_config_validation():
    for bad in ({"learning_decay": 1.0}, {"learning_rate": 0}, {"objective": "x"}, {"max_iterations": 0}):
        with pytest.raises(ValueError):
            AdaptiveConfig(**bad)


@pytest.mark.parametrize("objective", ["autvc", "aupc"])
def test_real_run_best_never_exceeds_initial(objective):
    model = random_conv_net(1, (1, 48, 48), channels=(3,), outputs=3)
    x = np.random.default_rng(1).normal(size=(1, 48, 48)).astype(np.float32)
    t = ScoreTarget(predicted_class(model, x), "logit")
    cfg = AdaptiveConfig(max_iterations=4, roots=10, objective=objective, seed=2)
    pcfg = PerturbEvalConfig(kernel=4, steps=4, samples=5)
    trace = adaptive_noise_search(x, model, t, cfg, perturb_cfg=pcfg)
    assert trace.best_auc <= trace.initial_auc
    assert compute_auc(x, 10, model, trace.best_sigma, objective, 2, t, pcfg) == pytest.approx(trace.best_auc)


def test_spec_mock_example():
    cfg = AdaptiveConfig(max_iterations=20, learning_rate=0.1, learning_decay=0.9)
    trace = adaptive_noise_search(np.full(4, 0.5), None, None, cfg, auc_fn=lambda s: (s - 1.0) ** 2)
    assert abs(trace.best_sigma - 1.0) <= 0.1
    best = trace.initial_auc
    for row in trace.rows():
        best = min(best, row[2])
    assert best == trace.best_auc


def test_single_iteration_and_stop_bound():
    one = adaptive_noise_search(np.ones(3), None, None, AdaptiveConfig(max_iterations=1), auc_fn=lambda s: s)
    assert len(one.rows()) == 1
    cfg = AdaptiveConfig(max_iterations=50, max_stop_count=2, ties_worsen=True)
    flat = adaptive_noise_search(np.ones(3), None, None, cfg, auc_fn=lambda s: 1.0)
    assert flat.rows()[-1][4] == cfg.max_stop_count + 1


def test_constant_model_autvc_is_zero():
    from smoothtaylor.toy import constant_model

    model = constant_model((1, 48, 48), 1.0)
    x = np.random.default_rng(0).random((1, 48, 48)).astype(np.float32)
    assert compute_auc(x, 5, model, 0.3, "autvc", 0, ScoreTarget(0)) == 0.0


def test_compute_auc_deterministic():
    model = random_conv_net(1, (1, 48, 48), channels=(2,), outputs=3)
    x = np.random.default_rng(1).random((1, 48, 48)).astype(np.float32)
    t = ScoreTarget(predicted_class(model, x), "logit")
    a = compute_auc(x, 5, model, 0.3, "autvc", 7, t)
    assert a == compute_auc(x, 5, model, 0.3, "autvc", 7, t)
    with pytest.raises(ValueError):
        compute_auc(x, 5, model, 0.0, "autvc", 7, t)


def test_compute_auc_sigma_direction_on_planted_model():
    from smoothtaylor.perturbation import aupc, perturbation_game
    from smoothtaylor.toy import place_regions, planted_input, planted_region_model

    model, mask = planted_region_model(96, place_regions(0, 96, 4, 30), 4)
    x = planted_input(0, mask)
    t = ScoreTarget(0, "logit")
    pcfg = PerturbEvalConfig(kernel=4, steps=30, samples=20, value_range=(0.0, 1.0))
    rand = aupc(perturbation_game(model, x, np.random.default_rng(1000).random(x.shape), t, pcfg))
    tiny = compute_auc(x, 50, model, 1e-6, "aupc", 0, t, pcfg)
    good = compute_auc(x, 50, model, 0.3, "aupc", 0, t, pcfg)
    assert abs(tiny - rand) <= 0.02 * rand
    assert good < tiny

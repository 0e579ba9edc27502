import numpy as np
import pytest

from smoothtaylor.attribution import (
    FunctionOracle,
    IGConfig,
    NoiseConfig,
    generate_roots,
    integrated_gradients,
    integrated_gradients_noise_avg,
    raw_gradient,
    smooth_grad,
    smooth_taylor,
    uniform_baselines,
    verify_smoothgrad_equivalence,
)
from smoothtaylor.model import ScoreTarget, score
from smoothtaylor.toy import linear_model, random_dense_net, two_layer_linear_model

T = ScoreTarget(0, "logit")


def quadratic_oracle():
    # f(x) = sum x^2, grad 2x
    return FunctionOracle(lambda x: float((x ** 2).sum()), lambda x: 2 * x)


def test_ig_linear_is_exact_for_any_steps():
    w = np.array([1.0, -2.0, 0.5], np.float32)
    x, z = np.array([1.0, 2.0, 3.0], np.float32), np.array([0.5, 0.0, -1.0], np.float32)
    for m in (1, 7):
        got = integrated_gradients(linear_model(w), x, z, T, m).values
        np.testing.assert_allclose(got, (x - z) * w, atol=1e-6)


def test_ig_completeness_on_quadratic():
    x = np.array([1.0, -2.0, 3.0])
    z = np.zeros(3)
    attr = integrated_gradients(quadratic_oracle(), x, z, steps=2000).values
    assert abs(attr.sum() - 14.0) / 14.0 < 1e-3


def test_ig_right_endpoint_rule():
    # one step evaluates the gradient at x itself
    attr = integrated_gradients(quadratic_oracle(), np.array([3.0]), np.array([1.0]), steps=1).values
    np.testing.assert_allclose(attr, [2.0 * 3.0 * 2.0])


def test_implementation_invariance():
    w = np.random.default_rng(0).normal(size=5).astype(np.float32)
    x = np.random.default_rng(1).normal(size=5).astype(np.float32)
    a = integrated_gradients(linear_model(w), x, np.zeros(5, np.float32), T, 20).values
    b = integrated_gradients(two_layer_linear_model(w), x, np.zeros(5, np.float32), T, 20).values
    np.testing.assert_allclose(a, b, atol=1e-4)


def test_ig_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        integrated_gradients(linear_model(np.ones(3)), np.zeros(3), np.zeros(4), T)


def test_noise_baselines_in_range_and_deterministic():
    x = np.zeros((2, 3, 3), np.float32)
    b = uniform_baselines(x, 4, seed=7, value_range=(-1.0, 2.0))
    assert b.shape == (4, 2, 3, 3) and b.min() >= -1.0 and b.max() <= 2.0
    np.testing.assert_array_equal(b, uniform_baselines(x, 4, seed=7, value_range=(-1.0, 2.0)))
    assert not np.array_equal(b, uniform_baselines(x, 4, seed=8, value_range=(-1.0, 2.0)))


def test_noise_ig_averages_completeness():
    model = random_dense_net(1, in_dim=4, hidden=(5,))
    x = np.random.default_rng(0).normal(size=4).astype(np.float32)
    cfg = IGConfig(steps=300, baseline_count=3, seed=2)
    attr = integrated_gradients_noise_avg(model, x, T, cfg, value_range=(-1, 1))
    zs = uniform_baselines(x, 3, 2, (-1, 1))
    want = score(model, x, T) - np.mean([score(model, z, T) for z in zs])
    assert abs(attr.values.sum() - want) <= 0.01 * abs(want) + 1e-4


def test_roots_seeded_and_shaped():
    x = np.ones((2, 4), np.float32)
    cfg = NoiseConfig(0.5, 10, seed=3)
    r = generate_roots(x, cfg)
    assert r.shape == (10, 2, 4) and r.dtype == np.float32
    np.testing.assert_array_equal(r, generate_roots(x, cfg))
    big = generate_roots(np.zeros(20000, np.float32), NoiseConfig(0.5, 1, 0))
    assert abs(big.std() - 0.5) < 0.01


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(0.0, 5)
    with pytest.raises(ValueError):
        NoiseConfig(0.1, 0)


def test_smooth_taylor_quadratic_closed_form():
    # (x - z) * 2z with z = x + e averages to -2 e^2 -> -2 sigma^2 per element
    x = np.zeros(4000)
    st = smooth_taylor(quadratic_oracle(), x, cfg=NoiseConfig(0.3, 200, 0)).values
    assert abs(st.mean() + 2 * 0.09) < 0.005


def test_smoothgrad_default_base_is_gradient():
    model = random_dense_net(4, in_dim=3, hidden=(4,))
    x = np.ones(3, np.float32)
    sg = smooth_grad(model, x, T, cfg=NoiseConfig(1e-7, 3, 0)).values
    np.testing.assert_allclose(sg, raw_gradient(model, x, T).values, rtol=1e-3, atol=1e-6)


def test_smoothgrad_wraps_custom_base():
    x = np.zeros(3)
    sg = smooth_grad(quadratic_oracle(), x, base_method=lambda xn: np.ones_like(xn), cfg=NoiseConfig(0.2, 4, 0))
    np.testing.assert_allclose(sg.values, 1.0)


@pytest.mark.parametrize("seed", range(3))
def test_smoothgrad_bridge_identity(seed):
    model = random_dense_net(seed, in_dim=5, hidden=(6,))
    x = np.random.default_rng(seed).normal(size=5).astype(np.float32)
    assert verify_smoothgrad_equivalence(model, x, T, NoiseConfig(0.4, 20, seed)) < 1e-6


def test_bridge_detects_different_noise():
    model = random_dense_net(0, in_dim=5, hidden=(6,))
    x = np.ones(5, np.float32)
    assert verify_smoothgrad_equivalence(model, x, T, NoiseConfig(0.4, 20, 0), smoothgrad_seed=1) > 1e-4


def test_attribution_map_metadata():
    a = smooth_taylor(linear_model(np.ones(2)), np.ones(2, np.float32), T, NoiseConfig(0.1, 3, 9))
    assert a.method_tag == "smoothtaylor" and a.params["roots"] == 3 and a.target == T
    assert a.values.dtype == np.float32


def test_ig_riemann_error_is_first_order():
    # right-endpoint sums: ten times the steps, a tenth of the completeness gap
    model = random_dense_net(3, in_dim=8, hidden=(10, 10), outputs=2, scale=2.0)
    x, z = np.random.default_rng(3).normal(size=(2, 8)).astype(np.float32)
    diff = score(model, x, T, np.float64) - score(model, z, T, np.float64)
    gaps = [integrated_gradients(model, x, z, T, m).values.astype(np.float64).sum() - diff for m in (300, 3000)]
    assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=0.05)


def test_ig_examples():
    lin = linear_model(np.array([2.0, 3.0]))
    np.testing.assert_array_equal(integrated_gradients(lin, np.ones(2), np.zeros(2), T, 1).values, [2.0, 3.0])
    x = np.random.default_rng(0).normal(size=3).astype(np.float32)
    assert not integrated_gradients(random_dense_net(0, in_dim=3), x, x, T, 9).values.any()
    q = quadratic_oracle()
    assert integrated_gradients(q, np.array([2.0]), np.array([0.0]), steps=2).values[0] == pytest.approx(6.0)
    assert integrated_gradients(q, np.array([2.0]), np.array([0.0]), steps=200).values[0] == pytest.approx(4.0, abs=0.05)


def test_zero_maps_for_constant_model():
    from smoothtaylor.toy import constant_model

    model = constant_model((4,), 2.0)
    x = np.ones(4, np.float32)
    assert not integrated_gradients_noise_avg(model, x, T, IGConfig(10, baseline_count=3)).values.any()
    assert not smooth_grad(model, x, T, cfg=NoiseConfig(0.3, 5)).values.any()
    assert not smooth_taylor(model, x, T, cfg=NoiseConfig(0.3, 5)).values.any()


def test_noise_ig_matches_reference():
    from smoothtaylor import rng as rngmod
    from smoothtaylor.model import gradient

    model = random_dense_net(6, in_dim=5, hidden=(6,))
    x = np.random.default_rng(6).normal(size=5).astype(np.float32)
    cfg = IGConfig(50, "uniform_noise", 5, seed=4)
    got = integrated_gradients_noise_avg(model, x, T, cfg, value_range=(-2.0, 2.0)).values
    gen = rngmod.stream(4, rngmod.BASELINES)
    zs = (-2.0 + 4.0 * gen.random((5, 5))).astype(np.float32)
    want = np.zeros(5)
    for z in zs:
        path = [gradient(model, (z + m / 50 * (x - z)).astype(np.float32), T, np.float64) for m in range(1, 51)]
        want += (x - z) * np.mean(path, axis=0)
    np.testing.assert_allclose(got, want / 5, atol=1e-5)
    one = integrated_gradients_noise_avg(model, x, T, IGConfig(50, baseline_count=1, seed=4), (-2.0, 2.0)).values
    np.testing.assert_allclose(one, integrated_gradients(model, x, zs[0], T, 50).values, atol=1e-6)


def test_smooth_taylor_matches_reference():
    from smoothtaylor.model import gradient

    model = random_dense_net(7, in_dim=6, hidden=(8,))
    x = np.random.default_rng(7).normal(size=6).astype(np.float32)
    cfg = NoiseConfig(0.5, 100, seed=2)
    roots = generate_roots(x, cfg)
    want = np.mean([(x - z) * gradient(model, z, T, np.float64) for z in roots], axis=0)
    np.testing.assert_allclose(smooth_taylor(model, x, T, cfg).values, want, atol=1e-5)


def test_smoothgrad_limits():
    model = random_dense_net(8, in_dim=4, hidden=(6,))
    x = np.random.default_rng(8).normal(size=4).astype(np.float32)
    sg = smooth_grad(model, x, T, cfg=NoiseConfig(1e-12, 1, 0)).values
    np.testing.assert_allclose(sg, raw_gradient(model, x, T).values, atol=1e-4)
    w = np.array([1.5, -0.5, 2.0, 0.0], np.float32)
    lin = smooth_grad(linear_model(w), x, T, cfg=NoiseConfig(3.0, 7, 1)).values
    np.testing.assert_array_equal(lin, w)


def test_roots_examples():
    x = np.random.default_rng(0).normal(size=6).astype(np.float32)
    np.testing.assert_allclose(generate_roots(x, NoiseConfig(1e-12, 3, 0)), np.broadcast_to(x, (3, 6)), atol=1e-10)
    sigma = 0.7
    roots = generate_roots(np.zeros(4, np.float32), NoiseConfig(sigma, 10000, 5)).astype(np.float64)
    assert np.all(np.abs(roots.mean(axis=0)) <= 4 * sigma / 100)


def test_smooth_taylor_linear_completeness_and_limit():
    w = np.random.default_rng(1).normal(size=6)
    model = linear_model(w)
    x = np.random.default_rng(2).normal(size=6).astype(np.float32)
    cfg = NoiseConfig(0.4, 30, 3)
    st = smooth_taylor(model, x, T, cfg).values.astype(np.float64)
    roots = generate_roots(x, cfg).astype(np.float64)
    want = np.mean([(x - z) @ w for z in roots])
    assert st.sum() == pytest.approx(want, abs=1e-5)
    tiny = smooth_taylor(model, x, T, NoiseConfig(1e-12, 10, 0)).values
    assert np.abs(tiny).max() < 1e-8 * np.abs(w).max()


def _completeness_gap(seed, frac):
    model = random_dense_net(seed, in_dim=6, hidden=(8, 8))
    x = np.random.default_rng(seed).normal(size=6).astype(np.float32)
    cfg = NoiseConfig(frac * float(np.abs(x).max()), 50, 1)
    st = smooth_taylor(model, x, T, cfg).values.astype(np.float64).sum()
    fx = score(model, x, T, np.float64)
    diffs = np.array([fx - score(model, z, T, np.float64) for z in generate_roots(x, cfg)])
    return abs(st - diffs.mean()), 0.02 * np.abs(diffs).mean() + 1e-4


@pytest.mark.xfail(strict=True, reason=(
    "the Taylor residual has mean sigma^2 tr(H) / 2, so the 2% bound needs small curvature or small sigma"))
def test_smooth_taylor_loose_completeness_at_tenth_of_max():
    assert all(gap <= bound for gap, bound in (_completeness_gap(s, 0.1) for s in range(20)))


def test_smooth_taylor_loose_completeness_small_sigma():
    assert all(gap <= bound for gap, bound in (_completeness_gap(s, 0.01) for s in range(20)))


def test_smooth_taylor_completeness_gap_shrinks_with_sigma():
    # second-order residual: gap relative to mean |f(x) - f(z)| is linear in sigma
    ratios = []
    for frac in (0.04, 0.02):
        gap, bound = _completeness_gap(3, frac)
        ratios.append(gap / ((bound - 1e-4) / 0.02))
    assert ratios[0] / ratios[1] == pytest.approx(2.0, rel=0.25)


def test_sigma_scaling_in_linear_zone():
    # relu net far from its kinks is linear in a wide ball
    from smoothtaylor.model import Model, ReLU
    from smoothtaylor.model import Dense as D

    w = np.random.default_rng(0).normal(size=(1, 5))
    model = Model((5,), [D("a", 5, 5), ReLU("r"), D("b", 5, 1)],
                  {"a.weight": np.eye(5), "a.bias": np.zeros(5), "b.weight": w, "b.bias": np.zeros(1)})
    x = np.full(5, 10.0, np.float32)
    norms = [np.linalg.norm(smooth_taylor(model, x, T, NoiseConfig(s, 10000, 0)).values) for s in (0.2, 0.1)]
    assert 1.8 <= norms[0] / norms[1] <= 2.2


def test_bridge_opposite_sign_residual():
    from smoothtaylor.attribution import smoothgrad_bridge

    model = random_dense_net(1, in_dim=4, hidden=(5,))
    x = np.ones(4, np.float32)
    cfg = NoiseConfig(0.3, 10, 0)
    st = smooth_taylor(model, x, T, cfg).values
    flipped = smoothgrad_bridge(model, x, T, cfg, sign=-1.0).values
    np.testing.assert_allclose(flipped, -st, atol=1e-7)
    lin = linear_model(np.arange(4.0))
    assert verify_smoothgrad_equivalence(lin, x, T, cfg) < 1e-7


def test_methods_are_bitwise_reproducible():
    model = random_dense_net(2, in_dim=4, hidden=(5,))
    x = np.ones(4, np.float32)
    for fn in (lambda: smooth_taylor(model, x, T, NoiseConfig(0.3, 10, 1)),
               lambda: smooth_grad(model, x, T, cfg=NoiseConfig(0.3, 10, 1)),
               lambda: integrated_gradients_noise_avg(model, x, T, IGConfig(10, baseline_count=2, seed=1))):
        assert fn().values.tobytes() == fn().values.tobytes()


@pytest.mark.parametrize("method", ["gradient", "smoothgrad", "smoothtaylor", "ig-noise"])
def test_implementation_invariance_all_methods(method):
    w = np.random.default_rng(0).normal(size=5).astype(np.float32)
    x = np.random.default_rng(1).normal(size=5).astype(np.float32)
    out = []
    for model in (linear_model(w), two_layer_linear_model(w)):
        if method == "gradient":
            out.append(raw_gradient(model, x, T).values)
        elif method == "smoothgrad":
            out.append(smooth_grad(model, x, T, cfg=NoiseConfig(0.5, 10, 0)).values)
        elif method == "smoothtaylor":
            out.append(smooth_taylor(model, x, T, NoiseConfig(0.5, 10, 0)).values)
        else:
            out.append(integrated_gradients_noise_avg(model, x, T, IGConfig(10, baseline_count=2), (-1, 1)).values)
    np.testing.assert_allclose(out[0], out[1], atol=1e-5)

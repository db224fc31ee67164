import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import privcusum as pc


def test_laplace_inverse_cdf_knots():
    assert pc.laplace_from_uniform(0.5, 1.0) == 0.0
    assert pc.laplace_from_uniform(0.75, 1.0) == pytest.approx(math.log(2.0), abs=1e-12)
    assert pc.laplace_from_uniform(0.25, 1.0) == pytest.approx(-math.log(2.0), abs=1e-12)


@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.01, 50.0))
@settings(max_examples=200, deadline=None)
def test_laplace_inverse_cdf_is_monotone_odd(u, scale):
    v = pc.laplace_from_uniform(u, scale)
    assert np.isfinite(v)
    # symmetry of the density around the median
    assert pc.laplace_from_uniform(1.0 - u, scale) == pytest.approx(-v, rel=1e-9, abs=1e-9)


def test_sample_laplace_moments(rng):
    draws = pc.sample_laplace(rng, 2.0, size=1_000_000)
    assert abs(draws.mean()) < 0.02
    assert draws.var() == pytest.approx(8.0, abs=0.1)


def test_sample_laplace_rejects_bad_scale(rng):
    with pytest.raises(ValueError):
        pc.sample_laplace(rng, 0.0)
    with pytest.raises(ValueError):
        pc.sample_laplace(rng, -1.0)


def test_privacy_params_scales_and_validation():
    p = pc.PrivacyParams(alpha=0.5, truncation_m=3.0)
    assert p.noise_scale_w == 8.0
    assert p.noise_scale_z == 24.0
    with pytest.raises(ValueError):
        pc.PrivacyParams(alpha=0.0, truncation_m=1.0)
    with pytest.raises(ValueError):
        pc.PrivacyParams(alpha=1.5, truncation_m=1.0)
    with pytest.raises(ValueError):
        pc.PrivacyParams(alpha=0.5, truncation_m=0.0)


def test_clamp_response():
    assert pc.clamp_response(0.3, 1.0) == 0.3
    assert pc.clamp_response(5.0, 1.0) == 1.0
    assert pc.clamp_response(-5.0, 1.0) == -1.0


@given(st.floats(-100, 100), st.floats(0.01, 20))
@settings(max_examples=200, deadline=None)
def test_clamp_response_range(y, m):
    out = pc.clamp_response(y, m)
    assert -m <= out <= m
    if abs(y) <= m:
        assert out == y


def test_privatize_regression_zero_noise():
    part = pc.build_partition([0.0], [1.0], 0.25)
    obs = pc.RawObservation(x=np.array([0.6]), y=0.7, time_index=1)
    out = pc.privatize_regression(obs, part, pc.PrivacyParams(1.0, 1.0),
                                  pc.zero_noise_source())
    np.testing.assert_array_equal(out.w, [0, 0, 1, 0])
    np.testing.assert_array_equal(out.z, [0, 0, 0.7, 0])
    # truncation then encoding
    obs2 = pc.RawObservation(x=np.array([0.1]), y=2.5, time_index=1)
    out2 = pc.privatize_regression(obs2, part, pc.PrivacyParams(1.0, 1.0),
                                   pc.zero_noise_source())
    assert out2.z[0] == 1.0


def test_privatize_regression_rejects_outside_domain():
    part = pc.build_partition([0.0], [1.0], 0.25)
    obs = pc.RawObservation(x=np.array([1.6]), y=0.0, time_index=1)
    with pytest.raises(ValueError):
        pc.privatize_regression(obs, part, pc.PrivacyParams(1.0, 1.0),
                                pc.zero_noise_source())


def test_privatize_regression_unbiased(rng):
    # per-coordinate means converge to the noiseless encodings (4 s.e.)
    part = pc.build_partition([0.0], [1.0], 0.25)
    params = pc.PrivacyParams(alpha=1.0, truncation_m=1.0)
    n = 100_000
    xs = rng.uniform(0, 1, size=(n, 1))
    ys = np.full(n, 0.5)
    w, z = pc.privatize_regression_batch(xs, ys, part, params, rng)
    for mat, target in ((w, 0.25), (z, 0.125)):
        means = mat.mean(axis=0)
        ses = mat.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(means - target) <= 4.0 * ses)


def test_privatize_regression_noise_independence(rng):
    part = pc.build_partition([0.0], [1.0], 0.25)
    params = pc.PrivacyParams(alpha=1.0, truncation_m=1.0)
    n = 40_000
    xs = np.full((n, 1), 0.1)  # fixed input: all variation is channel noise
    ys = np.zeros(n)
    w, z = pc.privatize_regression_batch(xs, ys, part, params, rng)
    cols = np.column_stack([w[:, 0], w[:, 2], z[:, 1], z[:, 3]])
    corr = np.corrcoef(cols, rowvar=False)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) <= 4.0 / math.sqrt(n))


def test_privatize_univariate_zero_noise_and_moments(rng):
    assert pc.privatize_univariate(0.4, 1.0, pc.zero_noise_source()) == 0.4
    zs = pc.privatize_univariate_batch(np.ones(100_000), 0.5, rng)
    assert zs.mean() == pytest.approx(1.0, abs=0.02)
    assert zs.var() == pytest.approx(8.0, abs=0.2)


def test_audit_identical_inputs_zero(rng):
    part = pc.build_partition([0.0], [1.0], 0.25)
    chan = pc.RegressionChannel(part, pc.PrivacyParams(0.5, 2.0))
    out = (rng.normal(size=4), rng.normal(size=4))
    a = (np.array([0.3]), 1.1)
    assert pc.audit_privacy_loss(chan, a, a, out) == 0.0
    uchan = pc.UnivariateChannel(alpha=0.5)
    assert pc.audit_privacy_loss(uchan, 0.7, 0.7, 12.3) == 0.0


def test_audit_antisymmetry(rng):
    part = pc.build_partition([0.0], [1.0], 0.25)
    chan = pc.RegressionChannel(part, pc.PrivacyParams(0.5, 2.0))
    for _ in range(50):
        a = (rng.uniform(0, 1, 1), rng.normal())
        b = (rng.uniform(0, 1, 1), rng.normal())
        out = (rng.normal(size=4), rng.normal(size=4))
        lab = pc.audit_privacy_loss(chan, a, b, out)
        lba = pc.audit_privacy_loss(chan, b, a, out)
        assert lab == pytest.approx(-lba, abs=1e-12)


def test_audit_univariate_bound(rng):
    chan = pc.UnivariateChannel(alpha=1.0, interval_length=1.0)
    # |log-ratio| <= alpha |x_a - x_b|
    for _ in range(200):
        xa, xb = rng.uniform(0, 1, size=2)
        out = rng.normal(0, 3)
        loss = pc.audit_privacy_loss(chan, xa, xb, out)
        assert abs(loss) <= 1.0 * abs(xa - xb) + 1e-12
    # endpoints of the unit interval: bound exactly alpha
    assert abs(pc.audit_privacy_loss(chan, 0.0, 1.0, 5.0)) <= 1.0 + 1e-12


def test_audit_regression_bound_randomized(rng):
    part = pc.build_partition([0.0, 0.0], [1.0, 1.0], 0.5)
    for alpha in (0.25, 1.0):
        params = pc.PrivacyParams(alpha=alpha, truncation_m=2.0)
        chan = pc.RegressionChannel(part, params)
        n = 2000
        xa = rng.uniform(0, 1, size=(n, 2))
        xb = rng.uniform(0, 1, size=(n, 2))
        ya = rng.normal(0, 4, size=n)
        yb = rng.normal(0, 4, size=n)
        outs = (rng.normal(0, 10, size=(n, 4)), rng.normal(0, 10, size=(n, 4)))
        losses = pc.audit_privacy_loss_batch(chan, (xa, ya), (xb, yb), outs)
        assert np.max(np.abs(losses)) <= alpha + 1e-12


def test_audit_dimension_mismatch():
    part = pc.build_partition([0.0], [1.0], 0.25)
    chan = pc.RegressionChannel(part, pc.PrivacyParams(1.0, 1.0))
    with pytest.raises(ValueError):
        pc.audit_privacy_loss(chan, (np.array([0.1]), 0.0),
                              (np.array([0.2]), 0.0),
                              (np.zeros(3), np.zeros(4)))
    with pytest.raises(TypeError):
        pc.audit_privacy_loss(object(), 0.0, 1.0, 0.5)


def test_laplace_tail_bound_values():
    assert pc.laplace_mean_tail_bound(100, 1.0) == pytest.approx(
        2.4399411245812464e-19, rel=1e-12)
    # limit x -> 0+ tends to 1
    assert pc.laplace_mean_tail_bound(1, 1e-9) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        pc.laplace_mean_tail_bound(0, 0.5)
    with pytest.raises(ValueError):
        pc.laplace_mean_tail_bound(10, 0.0)


def test_zero_noise_source_shapes():
    src = pc.zero_noise_source()
    assert src.random() == 0.5
    assert np.all(src.random((3, 2)) == 0.5)
    assert pc.sample_laplace(src, 5.0) == 0.0

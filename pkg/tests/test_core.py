import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sddcontrol import (NonCommensurateDelay, PathEnsemble, RankDeficientBasis, RegressionBasis,
                        ShapeMismatch, make_grid, regress_conditional, sample_brownian)
from sddcontrol.regression import Projector, StepRegressor


def test_grid_exact_division():
    g = make_grid(1.0, 0.25, 8)
    assert g.dt == 0.125 and g.delay_steps == 2


def test_grid_non_commensurate():
    with pytest.raises(NonCommensurateDelay):
        make_grid(1.0, 0.3, 8)


def test_grid_index_range():
    g = make_grid(2.0, 1.0, 40)
    assert g.dt == 0.05 and g.delay_steps == 20
    assert (g.first_index, g.last_index) == (-20, 60)


@pytest.mark.parametrize("args", [(0.0, 0.1, 10), (1.0, 0.0, 10), (1.0, 0.1, 0), (1.0, 0.1, 2.5)])
def test_grid_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        make_grid(*args)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 50), st.integers(1, 8), st.floats(0.1, 10.0))
def test_grid_commensurate_property(m, k, T):
    N = m * k
    g = make_grid(T, T * m / N, N)
    assert g.delay_steps == m
    assert g.time(g.n_steps) == pytest.approx(T)


def test_brownian_deterministic():
    g = make_grid(1.0, 0.25, 8)
    a = sample_brownian(g, 50, 2, 7)
    b = sample_brownian(g, 50, 2, 7)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, sample_brownian(g, 50, 2, 8).increments)


def test_brownian_variance_band():
    g = make_grid(1.0, 0.25, 100)
    d = sample_brownian(g, 100_000, 1, 11)
    var = d.increments[:, :, 0].var(axis=0)
    assert np.all((var >= 0.0094) & (var <= 0.0106))
    mean = d.increments[:, :, 0].mean(axis=0)
    assert np.all(np.abs(mean) <= 4 * np.sqrt(0.01 / 100_000))


def test_brownian_cross_correlation():
    g = make_grid(1.0, 0.25, 20)
    d = sample_brownian(g, 100_000, 2, 3)
    for i in range(g.n_steps):
        c = np.corrcoef(d.increments[:, i, 0], d.increments[:, i, 1])[0, 1]
        assert abs(c) <= 0.013


def test_brownian_path_starts_at_zero():
    g = make_grid(1.0, 0.5, 4)
    d = sample_brownian(g, 3, 1, 0)
    assert np.all(d.W(0) == 0) and np.all(d.W(-2) == 0)
    assert np.allclose(d.W(4), d.increments.sum(axis=1))


def test_path_ensemble_shape_checked():
    with pytest.raises(ShapeMismatch):
        PathEnsemble(np.zeros((3, 4, 1)), 0, 4)
    ens = PathEnsemble(np.arange(10.0).reshape(2, 5), -2, 2)
    assert np.array_equal(ens.at(-2), [0.0, 5.0])
    with pytest.raises(IndexError):
        ens.at(3)


def test_regression_constant_target():
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((500, 2))
    fit = regress_conditional(feats, np.full((500, 1), 3.7))
    assert np.allclose(fit, 3.7, atol=1e-12)


def test_regression_slope():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10_000, 1))
    y = 3.0 * x + 0.01 * rng.standard_normal((10_000, 1))
    fit = regress_conditional(x, y, RegressionBasis(degree=1))
    slope = np.polyfit(x[:, 0], fit[:, 0], 1)[0]
    assert slope == pytest.approx(3.0, abs=0.01)


def test_regression_independent_noise_shrinks():
    rng = np.random.default_rng(2)
    devs = []
    for P in (1_000, 100_000):
        x = rng.standard_normal((P, 2))
        y = rng.standard_normal((P, 1))
        devs.append(np.sqrt(np.mean((regress_conditional(x, y) - y.mean()) ** 2)))
    assert devs[1] < devs[0] / 5


def test_regression_reproduces_span():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2_000, 2))
    y = 1.0 - 2.0 * x[:, :1] + 0.5 * x[:, :1] * x[:, 1:] + 0.25 * x[:, 1:] ** 2
    fit = regress_conditional(x, y)
    assert np.max(np.abs(fit - y)) <= 1e-10 * np.max(np.abs(y))


def test_regression_rank_zero():
    with pytest.raises(RankDeficientBasis):
        Projector.from_design(np.zeros((10, 2)))


def test_regression_ill_posed_warning():
    rng = np.random.default_rng(4)
    with pytest.warns(RuntimeWarning):
        regress_conditional(rng.standard_normal((30, 3)), rng.standard_normal((30, 1)))


def test_regression_degenerate_feature_dropped():
    # W(t - delta) is identically zero on the first delay block
    g = make_grid(1.0, 0.25, 8)
    d = sample_brownian(g, 200, 1, 0)
    reg = StepRegressor(d)
    y = d.W(1) * 2.0
    assert np.allclose(reg.project(1, y), y, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 3))
def test_projection_idempotent(seed, degree):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((300, 2))
    y = rng.standard_normal((300, 1))
    proj = Projector(x, RegressionBasis(degree=degree))
    once = proj.project(y)
    assert np.allclose(proj.project(once), once, atol=1e-10)

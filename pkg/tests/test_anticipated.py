import numpy as np
import pytest

from sddcontrol import (InitialSegment, LqParams, PicardDivergence, TerminalControl,
                        contraction_diagnostic, linearize, lq_model, make_grid, sample_brownian,
                        solve_adjoint, solve_anticipated_sde, solve_state)


def _zero_diffusion(t, x, A):
    return np.zeros(x.shape + (1,))


def test_frozen_dynamics():
    g = make_grid(1.0, 0.25, 20)
    d = sample_brownian(g, 50, 1, 0)
    sol = solve_anticipated_sde(lambda t, x, A: 0.0 * x, _zero_diffusion, [0.7], d)
    assert np.all(sol.m.window(0, 20) == 0.7)
    assert np.all(sol.m.window(21, 25) == 0.0)


def test_hand_fixed_point():
    g = make_grid(1.0, 0.5, 100)
    d = sample_brownian(g, 200, 1, 1)
    sol = solve_anticipated_sde(lambda t, x, A: A, _zero_diffusion, [1.0], d)
    assert sol.terminal.mean() == pytest.approx(2.0, abs=2e-2)
    t = g.times(0, 50)
    assert np.allclose(sol.m.window(0, 50)[0, :, 0], 1 + 2 * t, atol=2e-2)
    assert np.allclose(sol.m.window(50, 100)[0, :, 0], 2.0, atol=2e-2)
    assert all(b == 0.0 for b in sol.block_gaps)


def test_lq_first_moment():
    p = LqParams(A1=0.1, A3=0.3, B3=1.0)
    g = make_grid(1.0, 0.25, 100)
    d = sample_brownian(g, 10_000, 1, 2)
    st = solve_state(lq_model(p), TerminalControl(1.0 + 0.3 * d.W(100)),
                     InitialSegment.constant(g, 1.0), d)
    adj = solve_adjoint(linearize(lq_model(p), st), st, d, h0=0.0, h1=[1.0])
    mT = adj.terminal[:, 0]
    assert abs(mT.mean() - np.exp(p.Ab1)) <= 3 * mT.std(ddof=1) / np.sqrt(mT.size)


def test_boundary_values_bitwise():
    g = make_grid(1.0, 0.25, 40)
    d = sample_brownian(g, 300, 1, 3)
    sol = solve_anticipated_sde(lambda t, x, A: -0.5 * x + 0.8 * A,
                                lambda t, x, A: 0.3 * x[..., None], [1.3], d)
    assert np.all(sol.m.at(0) == 1.3)
    assert np.all(sol.m.window(41, 50) == 0.0)
    assert sol.picard_residual <= 1e-10


def test_terminal_segment_feeds_final_block():
    g = make_grid(1.0, 0.5, 20)
    d = sample_brownian(g, 100, 1, 4)
    lam = np.full((100, 10, 1), 3.0)
    sol = solve_anticipated_sde(lambda t, x, A: A, _zero_diffusion, [0.0], d, terminal_segment=lam)
    # on [0.5, 1] the drift is lambda = 3; on [0, 0.5] it is m(t + 0.5)
    assert np.allclose(sol.m.window(21, 30), 3.0)
    assert all(b == 0.0 for b in sol.block_gaps)
    assert sol.terminal.mean() > sol.m.at(10).mean()


def test_linearity_in_initial_value():
    p = LqParams(A1=0.1, A2=0.5, A3=0.3, B3=1.0)
    g = make_grid(1.0, 0.25, 40)
    d = sample_brownian(g, 2000, 1, 5)
    model = lq_model(p)
    st = solve_state(model, TerminalControl(1.0 + 0.3 * d.W(40)), InitialSegment.constant(g, 1.0), d)
    paths = linearize(model, st)
    m1 = solve_adjoint(paths, st, d, h0=0.0, h1=[0.6]).m.values
    m2 = solve_adjoint(paths, st, d, h0=0.0, h1=[1.2]).m.values
    assert np.max(np.abs(m2 - 2 * m1)) <= 1e-8 * np.max(np.abs(m2))


def test_kernel_path_matches_generic_callbacks():
    g = make_grid(1.0, 0.25, 40)
    d = sample_brownian(g, 500, 1, 6)
    P, N = 500, 40
    a = np.full((P, N), -0.2)
    e = np.full((P, N), 0.4)
    zero = np.zeros((P, N))
    fast = solve_anticipated_sde(None, None, [1.0], d, linear=(a, zero, e, zero))
    slow = solve_anticipated_sde(lambda t, x, A: -0.2 * x + A, lambda t, x, A: 0.4 * x[..., None],
                                 [1.0], d)
    assert np.allclose(fast.m.values, slow.m.values, rtol=1e-12, atol=1e-12)


def test_contraction_diagnostic_examples():
    good = contraction_diagnostic([1.0, 0.1, 0.01])
    assert good.rate == pytest.approx(0.1) and good.converged
    bad = contraction_diagnostic([1.0, 1.5, 2.3])
    assert bad.rate > 1 and not bad.converged
    with pytest.raises(ValueError):
        contraction_diagnostic([1.0, 0.5])


def test_large_delay_coupling_diverges():
    g = make_grid(1.8, 0.9, 100)
    d = sample_brownian(g, 100, 1, 1)
    with pytest.raises(PicardDivergence) as err:
        solve_anticipated_sde(lambda t, x, A: 3 * A, _zero_diffusion, [1.0], d)
    assert not contraction_diagnostic(err.value.gaps).converged

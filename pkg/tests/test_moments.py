"""Tests for the triangular moment ODE system and its stationary limits."""

import numpy as np
import pytest

from gossipfield.kernels import EnvBump, env_moment
from gossipfield.moments import (MomentError, MomentParams, f_k, gamma_k,
                                 integrate_moments, limit_moments)


def params(alpha=0.5, omega=0.5, upsilon=0.5, K=4, env=None, init=None):
    if env is None:
        env = tuple(env_moment(EnvBump(), k) for k in range(1, K + 1))
    if init is None:
        init = tuple(5.0 ** k for k in range(1, K + 1))  # delta at 5
    return MomentParams(alpha=alpha, omega=omega, upsilon=upsilon,
                        env_moments=tuple(env), initial_moments=tuple(init),
                        K=K)


# ---------------------------------------------------------------------------
# parameter validation


def test_params_validation():
    with pytest.raises(MomentError):
        params(alpha=1.2)
    with pytest.raises(MomentError):
        MomentParams(0.5, 0.5, 0.5, (1.0,), (1.0, 2.0), K=2)
    with pytest.raises(MomentError):
        MomentParams(1.0, 0.5, 0.5, (), (1.0,), K=0)


# ---------------------------------------------------------------------------
# gamma_k and f_k


def test_gamma_examples():
    assert gamma_k(params(alpha=1.0), 2) == pytest.approx(0.5)
    p = params(alpha=0.3, omega=0.2, upsilon=0.7)
    # order 1 always reduces to (1-alpha) * upsilon
    assert gamma_k(p, 1) == pytest.approx(0.7 * 0.7)
    assert gamma_k(params(alpha=0.0, upsilon=1.0), 5) == pytest.approx(1.0)


def test_f2_internal_only():
    p = params(alpha=1.0, omega=0.5)
    a = 3.0
    assert f_k(p, 2, [a]) == pytest.approx(a * a / 2.0)


def test_f2_external_only():
    p = params(alpha=0.0, upsilon=0.5, env=(2.0, 4.0, 8.0, 16.0))
    a = 3.0
    assert f_k(p, 2, [a]) == pytest.approx(a * 2.0 / 2.0)


def test_f_k_requires_order_two():
    with pytest.raises(MomentError, match="below order 2"):
        f_k(params(), 1, [])


# ---------------------------------------------------------------------------
# trajectory integration


def test_first_moment_constant_when_alpha_one():
    p = params(alpha=1.0, K=2)
    traj = integrate_moments(p, 5.0)
    np.testing.assert_allclose(traj.row(1), p.initial_moments[0], atol=1e-12)


def test_first_moment_closed_form():
    p = params()  # alpha = omega = upsilon = 1/2, so rate 1/4
    traj = integrate_moments(p, 10.0)
    n1 = p.env_moments[0]
    expect = np.exp(-0.25 * traj.times) * 5.0 \
        + (1 - np.exp(-0.25 * traj.times)) * n1
    np.testing.assert_allclose(traj.row(1), expect, atol=1e-10)


def test_second_moment_closed_form_pure_averaging():
    # with alpha = 1 and constant omega the order-2 equation is scalar
    # linear: dm2/dt = -gamma2 m2 + 2 w(1-w) m1^2 with m1 frozen
    p = params(alpha=1.0, omega=0.3, K=2,
               init=(2.0, 5.0), env=(0.0, 0.0))
    g2 = gamma_k(p, 2)
    c = 2 * 0.3 * 0.7 * 4.0 / g2
    traj = integrate_moments(p, 8.0)
    expect = c + (5.0 - c) * np.exp(-g2 * traj.times)
    np.testing.assert_allclose(traj.row(2), expect, atol=1e-9)


def test_jensen_invariant_along_trajectory():
    traj = integrate_moments(params(K=4), 10.0)
    assert traj.jensen_violation() <= 1e-10


def test_triangularity():
    p_full = params(K=6)
    p_head = params(K=3)
    t_full = integrate_moments(p_full, 3.0)
    t_head = integrate_moments(p_head, 3.0)
    np.testing.assert_array_equal(t_full.values[:3], t_head.values)


def test_a_priori_moment_bound():
    p = params(K=5)
    M = p.moment_scale()
    traj = integrate_moments(p, 10.0)
    for k in range(1, 6):
        assert np.max(np.abs(traj.row(k))) <= M ** k * (1 + 1e-9)


def test_dt_guard():
    with pytest.raises(MomentError, match="dt"):
        integrate_moments(params(), 1.0, dt=0.5)


def test_moment_scale_bound():
    p = MomentParams(0.5, 0.5, 0.5, (2.0, 4.0), (3.0, 9.0), K=2)
    # largest k-th-root over initial and environment moments
    assert p.moment_scale() == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# stationary limits


def test_limit_first_moment_is_environment_mean():
    p = params()
    lim = limit_moments(p)
    assert lim[0] == p.env_moments[0]


def test_limit_requires_alpha_below_one():
    with pytest.raises(MomentError, match="alpha < 1"):
        limit_moments(params(alpha=1.0))


def test_limit_point_mass_environment_recovers_powers():
    # environment concentrated at c forces the stationary law delta_c,
    # whose k-th moment is c^k; this pins down the recursion exactly
    c = 1.7
    K = 8
    p = params(env=tuple(c ** k for k in range(1, K + 1)), K=K)
    lim = limit_moments(p)
    for k in range(1, K + 1):
        assert lim[k - 1] == pytest.approx(c ** k, abs=1e-10 * c ** k)


def test_limit_independent_of_initial_moments():
    K = 5
    env = tuple(env_moment(EnvBump(), k) for k in range(1, K + 1))
    a = limit_moments(params(env=env, init=tuple([1.0] * K), K=K))
    b = limit_moments(params(env=env, init=tuple(9.0 ** k
                                                 for k in range(1, K + 1)),
                             K=K))
    assert a == b


def test_limit_matches_long_horizon_integration():
    p = params(K=3)
    lim = limit_moments(p)
    traj = integrate_moments(p, 200.0)
    for k in range(1, 4):
        assert traj.row(k)[-1] == pytest.approx(lim[k - 1], abs=1e-6)

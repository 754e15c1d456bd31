import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson, solve_bvp

from conic_yamabe.bubble_core import bubble_derivative, dilation_generator, linearized_residual, radial_sources
from conic_yamabe.errors import DomainError
from conic_yamabe.quadrature import RadialRule, integrate_radial
from conic_yamabe.radial_solver import (
    ModeProblem,
    beta,
    beta_curve,
    bump_trial,
    dilation_trial,
    indicial_exponent,
    log_lambda_grid,
    psi1_radial,
    psi1_radial_derivative,
    psi_hat,
    smallest_singular_value,
    solve_mode,
    weighted_poincare_check,
)

from .conftest import round_ctx


def collocation_beta(ctx, lam, L=-16.0, R=22.0):
    """β(λ) from scipy's collocation BVP solver on the untransformed ψ in x = ln r.

    Left: ψ - A r ∝ r^μ (particular + regular homogeneous part); right: ψ ∝ r^{3-n}.
    """
    n, a, c = ctx.n, ctx.a, ctx.bubble_scale
    mu = indicial_exponent(n, lam)
    A = lam * n * c / (a * (lam - n + 1))

    def q2(r):
        return c * (1 + r * r) ** (-n / 2) * (n / r - (n - 2) * r)

    def rhs(x, y):
        r = np.exp(x)
        return np.vstack([y[1], -(n - 2) * y[1] + lam * y[0] - n * (n + 2) * r * r / (1 + r * r) ** 2 * y[0] - lam / a * r * r * q2(r)])

    def bc(ya, yb):
        r = np.exp(L)
        return np.array([ya[1] - A * r - mu * (ya[0] - A * r), yb[1] - (3 - n) * yb[0]])

    x = np.linspace(L, R, 8000)
    sol = solve_bvp(rhs, bc, x, np.zeros((2, x.size)), tol=1e-9, max_nodes=500000)
    assert sol.status == 0
    xs = np.linspace(L, R, 200001)
    return simpson(sol.sol(xs)[0] * q2(np.exp(xs)) * np.exp(n * xs), x=xs)


def test_indicial_exponent():
    # μ² + (n-2)μ - λ = 0
    for n, lam in [(5, 4.0), (6, 13.0), (7, 30.0)]:
        mu = indicial_exponent(n, lam)
        assert mu * mu + (n - 2) * mu - lam == pytest.approx(0.0, abs=1e-12)
        assert mu > 0


@pytest.mark.parametrize("n", [5, 6, 7])
def test_anchor_value(n):
    ctx = round_ctx(n)
    assert abs(beta(ctx, n - 1) / ctx.omega - (n - 2) / 4) <= 1e-6


@pytest.mark.parametrize("n,lam", [(5, 10.0), (5, 18.0), (6, 14.0), (7, 50.0)])
def test_beta_against_collocation_oracle(n, lam):
    ctx = round_ctx(n)
    assert beta(ctx, lam) == pytest.approx(collocation_beta(ctx, lam), rel=1e-6)


def test_frozen_beta_value(ctx5):
    # β(2n)/ω for n = 5; Numerov at two step sizes and collocation agree to 1e-9
    assert beta(ctx5, 10.0) / ctx5.omega == pytest.approx(0.8419938053, rel=1e-8)


@pytest.mark.parametrize("n", [5, 6, 7])
def test_beta_monotone_and_resolution(n):
    ctx = round_ctx(n)
    lams = log_lambda_grid(n, 40)
    t0 = time.perf_counter()
    b = np.array(beta_curve(ctx, lams))
    b2 = np.array(beta_curve(ctx, lams, step=0.005))
    assert time.perf_counter() - t0 < 10.0
    assert np.all(np.diff(b) > 0)
    assert np.max(np.abs(b2 - b) / np.abs(b2)) < 1e-6


@settings(max_examples=8, deadline=None)
@given(st.floats(4.0, 60.0), st.floats(1.01, 3.0))
def test_beta_increasing_property(lam, factor):
    ctx = round_ctx(5)
    assert beta(ctx, lam * factor) > beta(ctx, lam)


def test_solution_satisfies_mode_equation(ctx5):
    lam = 10.0
    sol = solve_mode(ModeProblem(ctx5, lam))
    r = np.geomspace(0.05, 50, 40)
    h = 1e-4 * r
    psi = sol.evaluate(r)
    d1 = sol.evaluate(r, 1)
    d2 = (sol.evaluate(r + h, 1) - sol.evaluate(r - h, 1)) / (2 * h)
    res = linearized_residual(ctx5, r, psi, d1, d2, lam)
    q2 = radial_sources(ctx5, r)[1]
    assert np.max(np.abs(res - lam * q2)) / np.max(np.abs(lam * q2)) < 1e-5
    assert sol.discrete_residual < 1e-8


@pytest.mark.parametrize("n", [5, 6, 7])
def test_constrained_solution_is_projected_closed_form(n):
    ctx = round_ctx(n)
    sol = solve_mode(ModeProblem(ctx, n - 1))
    assert sol.constrained
    assert sol.orthogonality_residual < 1e-8
    rule = RadialRule.gauss(2000)
    dU = lambda r: bubble_derivative(ctx, r)
    uu = integrate_radial(lambda r: dU(r) ** 2, rule, n - 3)
    coef = integrate_radial(lambda r: psi_hat(ctx, r) * dU(r), rule, n - 3) / uu
    ref = lambda r: psi_hat(ctx, r) - coef * dU(r)
    d = integrate_radial(lambda r: (sol(r) - ref(r)) ** 2, rule, n - 3)
    nrm = integrate_radial(lambda r: ref(r) ** 2, rule, n - 3)
    assert np.sqrt(d / nrm) < 1e-6


def test_unconstrained_solution_is_orthogonal(ctx5):
    sol = solve_mode(ModeProblem(ctx5, 10.0))
    assert not sol.constrained
    assert sol.orthogonality_residual < 1e-6


def test_boundary_behaviour(ctx5):
    sol = solve_mode(ModeProblem(ctx5, 10.0))
    mu, decay = sol.boundary_exponents
    assert decay == 3 - 5
    r = np.array([1e-6, 2e-6])
    p = sol(r)
    assert np.log(p[1] / p[0]) / np.log(2) == pytest.approx(1.0, abs=1e-3)  # particular part A r dominates r^μ, μ = 2
    R = np.array([1e6, 2e6])
    P = sol(R)
    assert np.log(P[1] / P[0]) / np.log(2) == pytest.approx(decay, abs=1e-3)


def test_conditioning_probe(ctx5):
    assert smallest_singular_value(ctx5, 10.0) > 1.0


def test_n4_rejected(ctx4):
    with pytest.raises(DomainError):
        solve_mode(ModeProblem(ctx4, 8.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-2, 1e2))
def test_psi1_radial_is_half_bubble_slope(r):
    ctx = round_ctx(6)
    rr = np.array([r])
    assert psi1_radial(ctx, rr)[0] == pytest.approx(0.5 * bubble_derivative(ctx, rr)[0], rel=1e-13)
    h = 1e-5 * r
    fd = (psi1_radial(ctx, rr + h) - psi1_radial(ctx, rr - h)) / (2 * h)
    assert psi1_radial_derivative(ctx, rr)[0] == pytest.approx(fd[0], rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("n", [5, 6])
def test_weighted_poincare(n):
    ctx = round_ctx(n)
    trials = [bump_trial(c, w, p) for c, w, p in [(0.5, 0.4, 0), (1.0, 0.9, 1), (2.0, 1.5, 2), (0.3, 0.25, 1), (3.0, 2.5, 0),
                                                  (1.5, 1.4, 3), (0.8, 0.7, 2), (5.0, 4.0, 1), (0.2, 0.19, 0), (1.2, 1.1, 0)]]
    rep = weighted_poincare_check(ctx, trials)
    assert len(rep.ratios) == 10
    assert rep.ok(1e-8)
    eq = weighted_poincare_check(ctx, [dilation_trial(ctx)])
    assert eq.ratios[0] == pytest.approx(1.0, abs=1e-8)

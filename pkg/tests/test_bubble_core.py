import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conic_yamabe.bubble_core import (
    bubble,
    bubble_derivative,
    bubble_second_derivative,
    dilation_generator,
    dilation_generator_derivative,
    linearized_residual,
    make_context,
    omega_closed_form,
    radial_sources,
    sphere_volume,
    sphere_yamabe_constant,
    verify_radial_identities,
    yamabe_residual,
)
from conic_yamabe.errors import DivergentConstantError, DomainError, InvalidDimensionError

from .conftest import round_ctx


def test_sphere_volumes():
    assert sphere_volume(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_volume(2) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_volume(3) == pytest.approx(2 * math.pi**2, rel=1e-15)
    assert sphere_volume(4) == pytest.approx(8 * math.pi**2 / 3, rel=1e-15)


def test_sphere_yamabe_constant_n3():
    # 𝒴(S³) = 6 (2π²)^{2/3}
    assert sphere_yamabe_constant(3) == pytest.approx(6 * (2 * math.pi**2) ** (2 / 3), rel=1e-14)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_round_link_gives_sphere_constant(n):
    ctx = round_ctx(n)
    assert ctx.yamabe_constant == pytest.approx(sphere_yamabe_constant(n), rel=1e-14)
    assert ctx.a == pytest.approx(4 * (n - 1) / (n - 2))


@pytest.mark.parametrize("n", [4, 5, 6])
def test_bubble_scale_normalizes_equation(n):
    # -aΔU = 𝒴_P U^{(n+2)/(n-2)} exactly: residual at scattered radii
    ctx = round_ctx(n)
    r = np.geomspace(1e-3, 1e2, 50)
    # the flat Laplacian of the tail cancels to O(r^{-2}) relative: allow that roundoff
    for eps in (1.0, 0.05):
        res = yamabe_residual(ctx, r, eps=eps)
        assert np.all(np.abs(res) <= 1e-14 * (1 + (r / eps) ** 2))


@pytest.mark.parametrize("k", [2.0, 3.0, 7.0])
def test_orbifold_scaling_of_local_constant(k):
    for n in (4, 5, 6):
        assert round_ctx(n, k).yamabe_constant == pytest.approx(k ** (-2 / n) * sphere_yamabe_constant(n), rel=1e-14)


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_omega_against_mpmath(n):
    ctx = round_ctx(n)
    mp.mp.dps = 30
    c = mp.mpf(ctx.bubble_scale)
    ref = mp.quad(lambda r: c**2 * (1 + r * r) ** (-(n - 2)) * r ** (n - 1), [0, 1, mp.inf])
    assert ctx.omega == pytest.approx(float(ref), rel=1e-13)


def test_omega_diverges_for_n4():
    with pytest.raises(DivergentConstantError):
        omega_closed_form(4, 1.0)
    ctx = round_ctx(4)
    assert ctx.omega is None
    with pytest.raises(DivergentConstantError):
        ctx.require_omega()
    with pytest.raises(DivergentConstantError):
        verify_radial_identities(ctx)


def test_invalid_contexts():
    with pytest.raises(InvalidDimensionError):
        make_context(3, 1.0)
    with pytest.raises(DomainError):
        make_context(5, -1.0)


def test_sources_reject_origin(ctx5):
    with pytest.raises(DomainError):
        radial_sources(ctx5, np.array([0.0, 1.0]))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-2, 50.0))
def test_dilation_generator_is_in_kernel(r):
    # 𝓛̃(rU' + (n-2)/2 U) = 0: differentiate the bubble family in the scale
    ctx = round_ctx(5)
    h = 1e-4 * r
    v = lambda s: dilation_generator(ctx, s)
    dv = lambda s: dilation_generator_derivative(ctx, s)
    rr = np.array([r])
    d1 = dv(rr)
    d2 = (dv(rr + h) - dv(rr - h)) / (2 * h)
    res = linearized_residual(ctx, rr, v(rr), d1, d2)
    terms = ctx.a * (np.abs(d2) + 4 * np.abs(d1) / rr) + ctx.a * 35 / (1 + rr * rr) ** 2 * np.abs(v(rr))
    assert abs(res[0]) <= 1e-7 * terms[0]


@settings(max_examples=40, deadline=None)
@given(st.floats(5e-2, 1e3))
def test_bubble_derivatives_consistent(r):
    ctx = round_ctx(6)
    h = 1e-4 * r
    rr = np.array([r])
    fd = (bubble(ctx, rr + h) - bubble(ctx, rr - h)) / (2 * h)
    assert fd[0] == pytest.approx(bubble_derivative(ctx, rr)[0], rel=1e-6)
    fd2 = (bubble_derivative(ctx, rr + h) - bubble_derivative(ctx, rr - h)) / (2 * h)
    assert fd2[0] == pytest.approx(bubble_second_derivative(ctx, rr)[0], rel=1e-6, abs=1e-9 * abs(bubble(ctx, rr)[0]) / r**2)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-2, 1e2))
def test_source_relations(r):
    # q₁ = U'/(n-2) + U/r and Ψ₁ radial factor -(n-2)/2 q₁ r² = U'/2 + (n-2)rU/2
    ctx = round_ctx(5)
    rr = np.array([r])
    q1, _ = radial_sources(ctx, rr)
    U, dU = bubble(ctx, rr), bubble_derivative(ctx, rr)
    assert q1[0] == pytest.approx((dU / 3 + U / r)[0], rel=1e-12)


@pytest.mark.parametrize("n", [5, 6, 7, 8])
def test_identities(n):
    res = verify_radial_identities(round_ctx(n))
    assert len(res) == 6
    for r in res:
        assert r.ok(1e-10), (r.name, r.error)

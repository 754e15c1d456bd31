import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conic_yamabe.bubble_core import sphere_volume
from conic_yamabe.errors import DomainError, IncompleteInputError, InvalidDimensionError
from conic_yamabe.stability_form import (
    LinkSpectrum,
    RoundSphereWarning,
    SolverBetaProvider,
    XiDecomposition,
    J_value,
    coefficient_n4,
    conformal_defect,
    expansion_coefficient,
    gradient_energy,
    helmholtz_amplitudes,
    normalize_gauge,
    round_sphere_link,
    second_variation_EH,
    xi_condition,
)

from .conftest import round_ctx

FLAGSHIP = -0.04152698278809  # n = 5, round S⁴, ℓ = 2 zonal amplitude 0.1 (K = 2·0.1·‖Z₂‖)


def _generic_link(n, lams, volume=3.0):
    return LinkSpectrum(n, volume, tuple((lam, f"m{i}") for i, lam in enumerate(lams)))


def _table(ctx, lams):
    # anything monotone works for the algebraic checks; use β shaped like the true curve
    w = ctx.omega
    return {lam: w * ((ctx.n - 2) / 4 + 0.1 * (1 - (ctx.n - 1) / lam)) for lam in lams}


def test_link_validation():
    with pytest.raises(DomainError):
        LinkSpectrum(5, 1.0, ((4.0, "a"),))  # λ must exceed n-1 off the round sphere
    with pytest.raises(DomainError):
        LinkSpectrum(5, 1.0, ((6.0, "a"), (7.0, "a")))
    with pytest.raises(DomainError):
        LinkSpectrum(5, -1.0, ())
    with pytest.raises(InvalidDimensionError):
        LinkSpectrum(3, 1.0, ())
    link = round_sphere_link(5, ((4.0, "l1"), (10.0, "l2")))
    assert link.is_first_harmonic("l1") and not link.is_first_harmonic("l2")
    with pytest.raises(IncompleteInputError):
        link.eigenvalue("nope")


def test_xi_validation():
    with pytest.raises(DomainError):
        XiDecomposition(lie_norm_sq=-1.0)
    with pytest.raises(DomainError):
        XiDecomposition(tt_norm_sq=1.0)
    xi = XiDecomposition({"a": 1.0}, {"a": 0.25}, f_mean=0.3)
    assert xi.K("a") == 0.75
    assert normalize_gauge(xi).f_mean == 0.0


def test_missing_beta_and_labels(ctx5):
    link = _generic_link(5, [6.0])
    with pytest.raises(IncompleteInputError):
        expansion_coefficient(ctx5, link, XiDecomposition({"m0": 1.0}), {})
    with pytest.raises(IncompleteInputError):
        expansion_coefficient(ctx5, link, XiDecomposition({"zz": 1.0}), {6.0: 0.1})
    with pytest.raises(InvalidDimensionError):
        expansion_coefficient(round_ctx(4), round_sphere_link(4, ((8.0, "l2"),)), XiDecomposition(), {})


def test_flagship_value(ctx5):
    ell_norm = math.sqrt(sphere_volume(4) / 14)
    link = round_sphere_link(5, ((10.0, "l2"),))
    rep = expansion_coefficient(ctx5, link, XiDecomposition({"l2": 0.2 * ell_norm}), SolverBetaProvider(ctx5))
    assert rep.coefficient == pytest.approx(FLAGSHIP, rel=1e-9)
    assert rep.raw_coefficient == pytest.approx(rep.coefficient, rel=1e-12)
    assert rep.verdict == "negative" and rep.xi_condition


@pytest.mark.parametrize("n", [5, 6, 7])
def test_gauge_directions_vanish(n):
    ctx = round_ctx(n)
    lams = [n + 0.5, 2.0 * n, 5.0 * n]
    link = _generic_link(n, lams)
    phi = {"m0": 0.3, "m1": -1.2, "m2": 0.05}
    rep = expansion_coefficient(ctx, link, XiDecomposition(phi, phi), _table(ctx, lams))
    assert abs(rep.coefficient) <= 1e-10
    assert abs(rep.raw_coefficient) <= 1e-10
    assert rep.verdict == "zero" and not rep.xi_condition


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    st.floats(0, 1),
    st.floats(0, 1),
    st.floats(-3, -1e-3),
)
def test_raw_equals_reduced(f, G, lie, tt, sv):
    ctx = round_ctx(6)
    lams = [5.5, 12.0, 30.0]
    link = _generic_link(6, lams)
    tt_sv = sv if tt > 0 else 0.0
    xi = XiDecomposition(dict(zip(["m0", "m1", "m2"], f)), dict(zip(["m0", "m1", "m2"], G)), lie, tt, tt_sv)
    rep = expansion_coefficient(ctx, link, xi, _table(ctx, lams))  # raises on disagreement
    # size of the individual raw terms, which cancel against each other
    scale = ctx.omega * (sum((l + 1) * (a * a + b * b) for l, a, b in zip(lams, f, G)) + lie + tt + abs(tt_sv))
    assert abs(rep.raw_coefficient - rep.coefficient) <= 1e-10 * max(scale, 1e-300)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_gauge_shift_invariance(f, phi):
    ctx = round_ctx(5)
    lams = [6.0, 15.0]
    link = _generic_link(5, lams)
    beta = _table(ctx, lams)
    labels = ["m0", "m1"]
    xi = XiDecomposition(dict(zip(labels, f)), {"m0": 0.1})
    shifted = XiDecomposition(
        {lab: v + p for lab, v, p in zip(labels, f, phi)}, {lab: (0.1 if lab == "m0" else 0.0) + p for lab, p in zip(labels, phi)}
    )
    a = expansion_coefficient(ctx, link, xi, beta)
    b = expansion_coefficient(ctx, link, shifted, beta)
    scale = sum(abs(v) for v in a.contributions.values()) + 1e-12
    assert abs(a.coefficient - b.coefficient) <= 1e-10 * scale
    # the conformal-defect term does move under the shift
    if any(abs(p) > 1e-3 for p in phi):
        assert conformal_defect(link, xi) != pytest.approx(conformal_defect(link, shifted), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2), st.floats(1e-3, 2), st.floats(-2, -1e-3), st.floats(1e-3, 0.5))
def test_monotone_penalties(lie, tt, sv, d):
    ctx = round_ctx(5)
    link = _generic_link(5, [7.0])
    beta = _table(ctx, [7.0])
    base = dict(f_coeffs={"m0": 0.5}, lie_norm_sq=lie, tt_norm_sq=tt, tt_second_variation=sv)
    c0 = expansion_coefficient(ctx, link, XiDecomposition(**base), beta).coefficient
    c_lie = expansion_coefficient(ctx, link, XiDecomposition(**{**base, "lie_norm_sq": lie + d}), beta).coefficient
    c_tt = expansion_coefficient(ctx, link, XiDecomposition(**{**base, "tt_norm_sq": tt + d}), beta).coefficient
    c_sv = expansion_coefficient(ctx, link, XiDecomposition(**{**base, "tt_second_variation": sv + d}), beta).coefficient
    assert c_lie < c0 and c_tt < c0 and c_sv > c0


def test_negative_definite_for_strictly_stable_data():
    ctx = round_ctx(6)
    rng = np.random.default_rng(7)
    lams = [5.5, 9.0, 20.0, 41.0]
    link = _generic_link(6, lams)
    prov = SolverBetaProvider(ctx)
    for _ in range(5):
        f, G = rng.normal(size=4), rng.normal(size=4)
        xi = XiDecomposition({f"m{i}": v for i, v in enumerate(f)}, {f"m{i}": v for i, v in enumerate(G)}, 0.2, 0.1, -0.3)
        assert expansion_coefficient(ctx, link, xi, prov).coefficient < 0


def test_round_sphere_first_harmonic_gives_zero(ctx5):
    link = round_sphere_link(5, ((4.0, "l1"),))
    xi = XiDecomposition({"l1": 0.7})
    rep = expansion_coefficient(ctx5, link, xi, SolverBetaProvider(ctx5))
    assert abs(rep.coefficient) <= 1e-8 * ctx5.omega * rep.B
    assert rep.verdict == "zero"
    assert any("outside theorem hypotheses" in f for f in rep.flags)
    exact = expansion_coefficient(ctx5, link, xi, {4.0: 0.75 * ctx5.omega})
    assert abs(exact.coefficient) <= 1e-15
    with pytest.warns(RoundSphereWarning):
        second_variation_EH(link, xi)


def test_xi_condition():
    assert not xi_condition(XiDecomposition({"a": 1.0}, {"a": 1.0}))
    assert xi_condition(XiDecomposition({"a": 1.0}, {"a": 0.5}))
    assert xi_condition(XiDecomposition(lie_norm_sq=0.1))


# n = 4


def test_J_single_mode_substitution():
    # λ = 8 on S³: J = λK²(1/2 - (4/a)·λ/(1+λ)) with a = 6 → -20/27 K²
    link = round_sphere_link(4, ((8.0, "l2"),))
    for K in (1.0, 0.3, -2.0):
        assert J_value(link, XiDecomposition({"l2": K})) == pytest.approx(-20 / 27 * K * K, rel=1e-12)


def test_J_quotient_link_scaling():
    link = LinkSpectrum(4, sphere_volume(3) / 2, ((8.0, "l2"),))
    assert J_value(link, XiDecomposition({"l2": 1.0})) == pytest.approx(-0.7407407407, rel=1e-9)
    rep = coefficient_n4(link, XiDecomposition({"l2": 1.0}))
    assert rep.verdict == "negative"
    assert rep.coefficient == pytest.approx(round_ctx(4, 2.0).bubble_scale ** 2 * -20 / 27, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(3.01, 500.0), st.floats(0.01, 5.0))
def test_J_negative_above_first_eigenvalue(lam, K):
    link = LinkSpectrum(4, 10.0, ((lam, "a"),))
    assert J_value(link, XiDecomposition({"a": K})) < 0


def test_helmholtz_amplitudes_solve_equation():
    link = round_sphere_link(4, ((8.0, "a"), (15.0, "b")))
    xi = XiDecomposition({"a": 0.4, "b": -0.2}, {"a": 0.1})
    d = helmholtz_amplitudes(link, xi, 6.0)
    # (-Δ + 1)H = 2a^{-1}ΔK mode by mode: (λ+1)d = -2a^{-1}λK
    for lab in ("a", "b"):
        lam = link.eigenvalue(lab)
        assert (lam + 1) * d[lab] == pytest.approx(-2 / 6 * lam * xi.K(lab), rel=1e-14)


def test_n4_gauge_and_raw(ctx4):
    link = round_sphere_link(4, ((8.0, "a"), (15.0, "b")))
    rep = coefficient_n4(link, XiDecomposition({"a": 0.4, "b": 0.2}, {"a": 0.4, "b": 0.2}))
    assert rep.coefficient == 0.0 and rep.verdict == "zero"
    rep = coefficient_n4(link, XiDecomposition({"a": 0.4, "b": -0.2}, {"a": 0.1}, 0.05, 0.02, -0.01))
    assert rep.raw_coefficient == pytest.approx(rep.coefficient, rel=1e-12)


def test_tabulated_provider_matches_solver(ctx5):
    link = _generic_link(5, [6.0, 11.0])
    xi = XiDecomposition({"m0": 0.3, "m1": 0.1})
    prov = SolverBetaProvider(ctx5)
    table = {6.0: prov(6.0), 11.0: prov(11.0)}
    a = expansion_coefficient(ctx5, link, xi, prov).coefficient
    b = expansion_coefficient(ctx5, link, xi, table).coefficient
    assert a == b

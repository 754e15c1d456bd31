"""Exact geometry of the conformally round zonal cone family and its ε-expansion pieces.

The family is g = ds² + s² h(s) with h(s) = (1 + s f)² g_S on the unit sphere
S^{n-1} (optionally divided by a finite group of order k), where f is a finite
combination of zonal harmonics. Zonal functions are handled as functions of
x = cos θ; on S^m, m = n-1,

    Δ u = (1 - x²) u'' - m x u',      <∇u, ∇v> = (1 - x²) u' v'.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gegenbauer

from .bubble_core import ConeContext, bubble, bubble_derivative, sphere_volume
from .errors import DomainError, UnsupportedFamilyError


def zonal_harmonic(n: int, ell: int) -> Polynomial:
    """Zonal spherical harmonic of degree ell on S^{n-1}, as a polynomial in x = cos θ with Z(1) = 1."""
    if ell < 0:
        raise ValueError("degree must be non-negative")
    if ell == 0:
        return Polynomial([1.0])
    alpha = (n - 2) / 2.0
    if alpha == 0:  # circle link: Chebyshev
        p = Polynomial(np.polynomial.chebyshev.cheb2poly([0] * ell + [1]))
    else:
        p = Polynomial(np.asarray(gegenbauer(ell, alpha).coeffs[::-1], dtype=float))
    return p / p(1.0)


def zonal_eigenvalue(n: int, ell: int) -> float:
    """Eigenvalue ℓ(ℓ + n - 2) of -Δ on S^{n-1}."""
    return float(ell * (ell + n - 2))


def harmonic_dimension(m: int, ell: int) -> int:
    """Dimension of degree-ell spherical harmonics on S^m."""
    if ell == 0:
        return 1
    return (2 * ell + m - 1) * comb(ell + m - 2, m - 1) // ell


def zonal_norm_sq(n: int, ell: int) -> float:
    """∫_{S^{n-1}} Z_ℓ² = Vol(S^{n-1}) / dim H_ℓ for the Z(1) = 1 normalization."""
    return sphere_volume(n - 1) / harmonic_dimension(n - 1, ell)


def link_angular_factor(n: int) -> float:
    """Vol(S^{n-2}): converts ∫ ... sin^{n-2}θ dθ into an integral over S^{n-1}."""
    return sphere_volume(n - 2)


def _zonal_poly(n: int, profile) -> Polynomial:
    p = Polynomial([0.0])
    for ell, amp in profile:
        p = p + amp * zonal_harmonic(n, ell)
    return p


def _max_abs_on_interval(p: Polynomial) -> float:
    """max |p(x)| over [-1, 1]."""
    cand = [-1.0, 1.0]
    dp = p.deriv()
    if p.degree() >= 2 and np.any(dp.coef != 0):
        # negligible top coefficients would send roots to overflow
        dp = dp.trim(1e-15 * np.max(np.abs(dp.coef)))
        for z in dp.roots():
            if abs(z.imag) < 1e-12 and -1 <= z.real <= 1:
                cand.append(z.real)
    return float(max(abs(p(c)) for c in cand))


def _clean_profile(profile, what):
    prof = tuple((int(l), float(a)) for l, a in profile)
    if any(l == 0 and a != 0.0 for l, a in prof):
        raise DomainError(f"{what} must have zero mean (no ℓ = 0 term)")
    if any(l < 0 for l, _ in prof):
        raise DomainError("degrees must be non-negative")
    return prof


@dataclass(frozen=True)
class ZonalConformalFamily:
    """h(s) = φ² h₀ with φ = 1 + s f + s² q over the round S^{n-1}.

    f = Σ amp_ℓ Z_ℓ (``profile``) fixes ξ = h'(0) = 2f h₀; the optional
    ``second_order`` profile q only changes η = h''(0) = (2f² + 4q) h₀.
    ``quotient`` k divides the link volume (orbifold link S^{n-1}/Γ, |Γ| = k);
    link integrals of invariant data carry the factor 1/k.
    """

    n: int
    profile: tuple  # ((ell, amplitude), ...)
    quotient: float = 1.0
    second_order: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "profile", _clean_profile(self.profile, "zonal profile"))
        object.__setattr__(self, "second_order", _clean_profile(self.second_order, "second-order profile"))
        if not self.quotient >= 1:
            raise DomainError("quotient order must be >= 1")

    @cached_property
    def f_poly(self) -> Polynomial:
        return _zonal_poly(self.n, self.profile)

    @cached_property
    def q_poly(self) -> Polynomial:
        return _zonal_poly(self.n, self.second_order)

    @property
    def m(self) -> int:
        return self.n - 1

    @property
    def link_volume(self) -> float:
        return sphere_volume(self.n - 1) / self.quotient

    @cached_property
    def max_abs_f(self) -> float:
        return _max_abs_on_interval(self.f_poly)

    @cached_property
    def max_abs_q(self) -> float:
        return _max_abs_on_interval(self.q_poly)

    @property
    def s_max(self) -> float:
        """Largest |s| with |s f| + s²|q| < 1/2 everywhere, so that φ > 1/2."""
        mf, mq = self.max_abs_f, self.max_abs_q
        if mf == 0 and mq == 0:
            return np.inf
        # positive root of mq s² + mf s = 1/2, in the cancellation-free form
        return 1.0 / (mf + np.sqrt(mf * mf + 2.0 * mq))

    def f(self, x):
        return self.f_poly(np.asarray(x, dtype=float))

    def df(self, x):
        return self.f_poly.deriv()(np.asarray(x, dtype=float))

    def d2f(self, x):
        p = self.f_poly
        return p.deriv(2)(np.asarray(x, dtype=float)) if p.degree() >= 2 else np.zeros_like(np.asarray(x, float))

    def lap_f(self, x):
        x = np.asarray(x, dtype=float)
        return (1 - x * x) * self.d2f(x) - self.m * x * self.df(x)

    def grad_f_sq(self, x):
        x = np.asarray(x, dtype=float)
        return (1 - x * x) * self.df(x) ** 2

    def q(self, x):
        return self.q_poly(np.asarray(x, dtype=float))

    def lap_q(self, x):
        x = np.asarray(x, dtype=float)
        p = self.q_poly
        return (1 - x * x) * p.deriv(2)(x) - self.m * x * p.deriv()(x)

    # φ = 1 + s F with F = f + s q
    def phi(self, s, x):
        return 1.0 + s * self.f(x) + s * s * self.q(x)

    def phi_s(self, s, x):
        return self.f(x) + 2.0 * s * self.q(x)

    def big_f(self, s, x):
        return self.f(x) + s * self.q(x)

    def big_f_x(self, s, x):
        x = np.asarray(x, dtype=float)
        return self.df(x) + s * self.q_poly.deriv()(x)

    def lap_big_f(self, s, x):
        return self.lap_f(x) + s * self.lap_q(x)

    def spectral_coefficients(self):
        """(λ_ℓ, coefficient of f in an L²(Y)-orthonormal basis, ℓ) per zonal mode."""
        out = []
        for ell, amp in self.profile:
            if amp == 0.0:
                continue
            nrm = np.sqrt(zonal_norm_sq(self.n, ell) / self.quotient)
            out.append((zonal_eigenvalue(self.n, ell), amp * nrm, ell))
        return out

    # Exact second-order data of the family
    def xi_trace(self, x):
        return 2.0 * self.m * self.f(x)

    def xi_norm_sq(self, x):
        return 4.0 * self.m * self.f(x) ** 2

    def eta_trace(self, x):
        return self.m * (2.0 * self.f(x) ** 2 + 4.0 * self.q(x))

    def _check_s(self, s, allow_zero=False, signed=False):
        s = np.asarray(s, dtype=float)
        if np.any(np.abs(s) >= self.s_max):
            raise DomainError("s beyond s_max: metric may degenerate")
        if signed:
            return s
        if allow_zero:
            if np.any(s < 0):
                raise DomainError("s must be non-negative")
        elif np.any(s <= 0):
            raise DomainError("s must be positive")
        return s


@dataclass(frozen=True)
class ZonalGridFunction:
    """Values on a tensor grid (r_i, x_j = cos θ_j); optional radial derivatives."""

    r: np.ndarray
    x: np.ndarray
    values: np.ndarray
    dr: Optional[np.ndarray] = None
    drr: Optional[np.ndarray] = None
    rule: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.r), len(self.x)):
            raise DomainError(f"grid shape mismatch: {v.shape} vs ({len(self.r)}, {len(self.x)})")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function has non-finite values")


def measure_density(family: ZonalConformalFamily, s, x):
    """s^{n-1}(1 + s f)^{n-1}: density of μ_g against ds dμ_{h₀}."""
    s = family._check_s(s, allow_zero=True)
    return s ** (family.n - 1) * family.phi(s, x) ** (family.n - 1)


def scaled_measure_factor(family: ZonalConformalFamily, eps: float, r, x):
    """(1 + ε r f)^{n-1}: μ_{g_ε} / (r^{n-1} μ_{h₀}) in the blown-up variable r = s/ε.

    Negative ε is accepted (the expression is analytic in ε) so that central
    differences in ε can be taken.
    """
    family._check_s(eps * np.asarray(r), signed=True)
    return family.phi(eps * np.asarray(r), x) ** (family.n - 1)


def _curvature_parts(family: ZonalConformalFamily, s, x):
    m, n = family.m, family.n
    x = np.asarray(x, dtype=float)
    F = family.big_f(s, x)
    lF = family.lap_big_f(s, x)
    g2 = (1 - x * x) * family.big_f_x(s, x) ** 2
    phi = 1.0 + s * F
    ps = family.phi_s(s, x)
    # (R_h - m(m-1)) / s, rearranged so nothing cancels as s → 0
    rh_minus = (
        -m * (m - 1) * F * (2.0 + s * F)
        - 2.0 * (m - 1) * (lF / phi - s * g2 / phi**2)
        - (m - 1) * (m - 2) * s * g2 / phi**2
    ) / phi**2
    tr1 = 2.0 * m * ps / phi
    nrm1 = 4.0 * m * ps * ps / phi**2
    tr2 = 2.0 * m * (ps * ps + 2.0 * family.q(x) * phi) / phi**2
    return rh_minus, tr1, nrm1, tr2


def link_scalar_curvature(family: ZonalConformalFamily, s, x):
    """R_{h(s)} of φ(s)² g_S, φ = 1 + s f + s² q, by the m-dimensional conformal-change formula."""
    s = family._check_s(s, allow_zero=True)
    m = family.m
    rh_minus = _curvature_parts(family, s, x)[0]
    return m * (m - 1) + s * rh_minus


def scalar_curvature(family: ZonalConformalFamily, s, x):
    """R_g of ds² + s² h(s) at (s, x = cos θ)."""
    s = family._check_s(s)
    n = family.n
    rh_minus, tr1, nrm1, tr2 = _curvature_parts(family, s, x)
    return rh_minus / s - n * tr1 / s + 0.75 * nrm1 - 0.25 * tr1**2 - tr2


def scaled_scalar_curvature(family: ZonalConformalFamily, eps: float, r, x):
    """R_{g_ε}(r, x) = ε² R_g(ε r, x) for g_ε = dr² + r² h(ε r)."""
    r = np.asarray(r, dtype=float)
    s = family._check_s(eps * r, signed=True)
    n = family.n
    rh_minus, tr1, nrm1, tr2 = _curvature_parts(family, s, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(r > 0, eps * (rh_minus - n * tr1) / np.where(r > 0, r, 1.0), 0.0)
    return first + eps**2 * (0.75 * nrm1 - 0.25 * tr1**2 - tr2)


def zonal_x_derivatives(values, x):
    """First and second x-derivatives of zonal data sampled at nodes x, by polynomial collocation.

    ``values`` has x along its last axis; the derivatives come back in the same shape.
    """
    values = np.asarray(values, dtype=float)
    deg = len(x) - 1
    V = np.polynomial.chebyshev.chebvander(x, deg)
    coef = np.linalg.solve(V, values.T if values.ndim > 1 else values)
    d1 = np.polynomial.chebyshev.chebder(coef, 1)
    d2 = np.polynomial.chebyshev.chebder(coef, 2)
    u1 = np.polynomial.chebyshev.chebval(x, d1)
    u2 = np.polynomial.chebyshev.chebval(x, d2)
    return u1, u2


def link_laplacian(family: ZonalConformalFamily, s, x, u, ux, uxx):
    """Δ_{h(s)} u = φ^{-2}(Δ_{h₀} u + (m-2) <∇ ln φ, ∇u>), φ = 1 + s f."""
    m = family.m
    phi = family.phi(s, x)
    lap0 = (1 - x * x) * uxx - m * x * ux
    cross = s * (1 - x * x) * family.big_f_x(s, x) * ux / phi
    return (lap0 + (m - 2) * cross) / phi**2


def laplace_beltrami(family: ZonalConformalFamily, u: ZonalGridFunction, scale: float = 1.0) -> ZonalGridFunction:
    """Apply Δ_g for g = ds² + s² h(s) to a zonal grid function.

    The grid coordinate is r with s = scale·r; scale = 1 gives Δ_g itself,
    other values give Δ_{g_ε} (ε = scale) in blown-up coordinates. A negative
    scale continues the expression analytically (for differences in ε).
    θ-derivatives use polynomial collocation in x; radial derivatives come
    from ``u.dr``/``u.drr`` or, if absent, second-order finite differences.
    """
    r = np.asarray(u.r, dtype=float)[:, None]
    x = np.asarray(u.x, dtype=float)[None, :]
    if np.any(r <= 0):
        raise DomainError("grid must avoid the cone tip")
    vals = np.asarray(u.values, dtype=float)
    if u.dr is None:
        dr = np.gradient(vals, u.r, axis=0, edge_order=2)
        drr = np.gradient(dr, u.r, axis=0, edge_order=2)
    else:
        dr, drr = np.asarray(u.dr), np.asarray(u.drr)
    ux, uxx = zonal_x_derivatives(vals, u.x)
    s = scale * r
    family._check_s(s, signed=True)
    n = family.n
    tr1 = 2.0 * family.m * family.phi_s(s, x) / family.phi(s, x)
    out = drr + (n - 1) / r * dr + 0.5 * scale * tr1 * dr + link_laplacian(family, s, x, vals, ux, uxx) / r**2
    return ZonalGridFunction(u.r, u.x, out, rule=u.rule)


# ---------------------------------------------------------------------------
# ε-expansion pieces


def second_scalar_variation(family: ZonalConformalFamily, x):
    """d²/ds² R_{h(s)} at s = 0 (exact, pointwise) for h = (1 + s f + s² q)² h₀."""
    m = family.m
    f = family.f(x)
    quad = 3 * m * (m - 1) * f * f + 6 * (m - 1) * f * family.lap_f(x) + (m - 1) * (4 - m) * family.grad_f_sq(x)
    return 2.0 * quad - 4.0 * (m - 1) * (m * family.q(x) + family.lap_q(x))


def second_scalar_variation_integral(family: ZonalConformalFamily) -> float:
    """Link integral of the second-variation formula written with B(ξ), δξ, d tr ξ and dR[η].

    For ξ = 2f h₀, η = 2f² h₀ the divergence term integrates to zero and the
    remaining terms reduce to ∫ 6m(m-1) f² - 2(m-1)(m+2)|∇f|²; computed
    spectrally.
    """
    m = family.m
    tot = 0.0
    for lam, c, _ in family.spectral_coefficients():
        tot += (6 * m * (m - 1) - 2 * (m - 1) * (m + 2) * lam) * c * c
    return tot


def first_curvature_coefficient(family: ZonalConformalFamily, x):
    """R̂₁·r = R₁ - n tr ξ with R₁ = -Δ tr ξ + δ²ξ - <Ric, ξ> and δ²(f h₀) = Δf."""
    n, m = family.n, family.m
    f, lf = family.f(x), family.lap_f(x)
    trxi = 2 * m * f
    R1 = -2 * m * lf + 2 * lf - (m - 1) * trxi
    return R1 - n * trxi


def second_curvature_coefficient(family: ZonalConformalFamily, x):
    """R̂₂ = R₂/2 + (n + 3/4)|ξ|² - (tr ξ)²/4 - (n+1) tr η, with the exact pointwise R₂."""
    n = family.n
    return (
        0.5 * second_scalar_variation(family, x)
        + (n + 0.75) * family.xi_norm_sq(x)
        - 0.25 * family.xi_trace(x) ** 2
        - (n + 1) * family.eta_trace(x)
    )


def expansion_pieces(family: ZonalConformalFamily, ctx: ConeContext, r, x) -> dict:
    """m₁, m₂, 𝓛₁U, 𝓛₂U on the grid (r_i, x_j).

    𝓛_{g_ε} = -aΔ_{g_ε} + R_{g_ε} is the conformal Laplacian of the blown-up
    metric g_ε = dr² + r² h(ε r).
    """
    if not isinstance(family, ZonalConformalFamily):
        raise UnsupportedFamilyError("only conformally round zonal families have exact pieces")
    r = np.asarray(r, dtype=float)[:, None]
    x1 = np.asarray(x, dtype=float)
    x = x1[None, :]
    n, a = family.n, ctx.a
    f = family.f(x)
    trxi = family.xi_trace(x)
    nxi = family.xi_norm_sq(x)
    treta = family.eta_trace(x)
    U = bubble(ctx, r)
    dU = bubble_derivative(ctx, r)
    m1 = 0.5 * r * trxi
    m2 = r * r / 8.0 * (trxi**2 - 2 * nxi + 2 * treta)
    lap_tr = 2 * family.m * family.lap_f(x)
    dd_xi = 2 * family.lap_f(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        L1U = -0.5 * a * trxi * dU - (lap_tr - dd_xi + 2 * (n - 1) * trxi) * U / r
    delta2U = 0.5 * (treta - nxi) * r * dU
    L2U = -a * delta2U + second_curvature_coefficient(family, x) * U
    rr = r[:, 0]
    mk = lambda v: ZonalGridFunction(rr, x1, np.broadcast_to(v, (len(rr), len(x1))).copy())
    return {"m1": mk(m1), "m2": mk(m2), "L1U": mk(L1U), "L2U": mk(L2U)}


def conformal_laplacian_bubble(family: ZonalConformalFamily, ctx: ConeContext, eps: float, r, x):
    """Exact 𝓛_{g_ε}U = -aΔ_{g_ε}U + R_{g_ε}U for the radial bubble."""
    r = np.asarray(r, dtype=float)
    n = family.n
    f = family.f(x)
    s = eps * r
    family._check_s(s, signed=True)
    from .bubble_core import bubble_second_derivative

    U, dU, d2U = bubble(ctx, r), bubble_derivative(ctx, r), bubble_second_derivative(ctx, r)
    tr1 = 2.0 * family.m * family.phi_s(s, x) / family.phi(s, x)
    lap = d2U + (n - 1) / r * dU + 0.5 * eps * tr1 * dU
    return -ctx.a * lap + scaled_scalar_curvature(family, eps, r, x) * U


def first_order_operator(family: ZonalConformalFamily, ctx: ConeContext, r, x, u, ur, ux, uxx):
    """𝓛₁u = -aΔ₁u + R̂₁u for general zonal u, where Δ₁ is the ε-derivative of Δ_{g_ε} at 0.

    Δ₁u = (n-1) f u_r + (-2 f Δ_{h₀}u + (m-2)<∇f, ∇u>) / r.
    """
    m = family.m
    f = family.f(x)
    lap0 = (1 - x * x) * uxx - m * x * ux
    d1 = m * f * ur + (-2 * f * lap0 + (m - 2) * (1 - x * x) * family.df(x) * ux) / r
    return -ctx.a * d1 + first_curvature_coefficient(family, x) / r * u


def zeroth_order_operator(ctx: ConeContext, r, x, u, ur, urr, ux, uxx):
    """𝓛₀u = -aΔ_{g₀}u on the cone over the round link."""
    n = ctx.n
    m = n - 1
    lap0 = (1 - x * x) * uxx - m * x * ux
    return -ctx.a * (urr + (n - 1) / r * ur + lap0 / r**2)


def div_hessian_defect(n: int, G: Polynomial, theta):
    """δ(∇²G) - d(ΔG + (m-1)G) in the θ-direction for zonal G on S^m, m = n-1.

    For zonal G(θ): δ(∇²G)_θ = G''' + (m-1)cot θ (G'' - cot θ G'), with the
    divergence taken as the trace of ∇ (sign convention with δ = +tr∇).
    """
    m = n - 1
    th = np.asarray(theta, dtype=float)
    x = np.cos(th)
    s = np.sin(th)
    g1, g2, g3 = G.deriv(1), G.deriv(2), G.deriv(3) if G.degree() >= 3 else Polynomial([0.0])
    # θ-derivatives of G(cos θ)
    Gt = -s * g1(x)
    Gtt = s * s * g2(x) - x * g1(x)
    Gttt = -(s**3) * g3(x) + 3 * s * x * g2(x) + s * g1(x)
    cot = x / s
    div_hess = Gttt + (m - 1) * cot * (Gtt - cot * Gt)
    # d/dθ(ΔG + (m-1)G), with Δ written in x
    LG = (Polynomial([1.0, 0.0, -1.0]) * g2) - m * Polynomial([0.0, 1.0]) * g1 + (m - 1) * G
    rhs = -s * LG.deriv()(x)
    return div_hess - rhs

"""Dimensional constants, the cone bubble U and its derived radial profiles.

All profiles carry the bubble normalization c_Y, chosen so that U has unit
L^{2n/(n-2)} norm on the cone over a link of the given volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gamma, gammaln

from .errors import DivergentConstantError, DomainError, InvalidDimensionError


def sphere_volume(m: int) -> float:
    """Volume of the unit round sphere S^m."""
    return float(2.0 * np.pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0))


def sphere_yamabe_constant(n: int) -> float:
    """Yamabe constant of the round S^n, n(n-1) Vol(S^n)^{2/n}."""
    return n * (n - 1) * sphere_volume(n) ** (2.0 / n)


def omega_closed_form(n: int, bubble_scale: float) -> float:
    """Closed Beta-function form of int_0^inf U(r)^2 r^{n-1} dr (n >= 5)."""
    if n <= 4:
        raise DivergentConstantError(f"int U^2 r^(n-1) dr diverges for n={n}")
    log_beta = gammaln(n / 2.0) + gammaln((n - 4) / 2.0) - gammaln(n - 2.0)
    return bubble_scale**2 * 0.5 * float(np.exp(log_beta))


@dataclass(frozen=True)
class ConeContext:
    """Constants of the cone over an Einstein link (Ric = (n-2) h0) of given volume."""

    n: int
    a: float
    link_volume: float
    yamabe_constant: float
    bubble_scale: float
    omega: Optional[float]

    @property
    def critical_exponent(self) -> float:
        return 2.0 * self.n / (self.n - 2)

    def require_omega(self) -> float:
        if self.omega is None:
            raise DivergentConstantError(f"omega is undefined for n={self.n}")
        return self.omega

    def scaled(self, k: float) -> "ConeContext":
        """Context for a link whose volume is divided by k (orbifold quotient)."""
        return make_context(self.n, self.link_volume / k)


def make_context(n: int, link_volume: float, *, check_omega: bool = True) -> ConeContext:
    """Build the constants for dimension n and link volume.

    omega is set only for n >= 5 and, when ``check_omega`` is true, the closed
    form is cross-checked against quadrature to 1e-10 relative.
    """
    if int(n) != n or n < 4:
        raise InvalidDimensionError(f"dimension must be an integer >= 4, got {n}")
    n = int(n)
    if not link_volume > 0 or not np.isfinite(link_volume):
        raise DomainError(f"link volume must be positive, got {link_volume}")
    ratio = link_volume / sphere_volume(n - 1)
    y_p = ratio ** (2.0 / n) * sphere_yamabe_constant(n)
    c_y = (4.0 * n * (n - 1) / y_p) ** ((n - 2) / 4.0)
    omega = None
    if n >= 5:
        omega = omega_closed_form(n, c_y)
        if check_omega:
            from .quadrature import RadialRule, integrate_radial

            rule = RadialRule.gauss(400)
            quad = integrate_radial(lambda r: (c_y * (1 + r * r) ** (-(n - 2) / 2.0)) ** 2, rule, n - 1)
            if abs(quad - omega) > 1e-10 * omega:
                raise ArithmeticError(f"omega quadrature check failed: {quad} vs {omega}")
    return ConeContext(
        n=n,
        a=4.0 * (n - 1) / (n - 2),
        link_volume=float(link_volume),
        yamabe_constant=float(y_p),
        bubble_scale=float(c_y),
        omega=omega,
    )


def omega_of(n: int) -> float:
    """Convenience: omega for the round-sphere link of dimension n."""
    return make_context(n, sphere_volume(n - 1), check_omega=False).require_omega()


def _check_r(r, strict=False):
    r = np.asarray(r, dtype=float)
    if strict:
        if np.any(r <= 0):
            raise DomainError("radial sources have a pole at r = 0; need r > 0")
    elif np.any(r < 0):
        raise DomainError("radius must be non-negative")
    return r


def unnormalized_bubble(n: int, r):
    r = _check_r(r)
    return (1.0 + r * r) ** (-(n - 2) / 2.0)


def bubble(ctx: ConeContext, r):
    """U(r) = c_Y (1+r^2)^{-(n-2)/2}."""
    r = _check_r(r)
    return ctx.bubble_scale * (1.0 + r * r) ** (-(ctx.n - 2) / 2.0)


def bubble_derivative(ctx: ConeContext, r):
    """U'(r) = -(n-2) c_Y r (1+r^2)^{-n/2}."""
    r = _check_r(r)
    n = ctx.n
    return -(n - 2) * ctx.bubble_scale * r * (1.0 + r * r) ** (-n / 2.0)


def bubble_second_derivative(ctx: ConeContext, r):
    r = _check_r(r)
    n = ctx.n
    s = 1.0 + r * r
    return -(n - 2) * ctx.bubble_scale * s ** (-n / 2.0 - 1) * (1.0 - (n - 1) * r * r)


def dilation_generator(ctx: ConeContext, r):
    """V = (n-2)U/2 + rU', the generator of dilations of U."""
    r = _check_r(r)
    n = ctx.n
    return ctx.bubble_scale * (n - 2) / 2.0 * (1.0 - r * r) * (1.0 + r * r) ** (-n / 2.0)


def dilation_generator_derivative(ctx: ConeContext, r):
    r = _check_r(r)
    n = ctx.n
    s = 1.0 + r * r
    # d/dr [(1-r^2)(1+r^2)^{-n/2}]
    return ctx.bubble_scale * (n - 2) / 2.0 * s ** (-n / 2.0 - 1) * r * (-2.0 * s - n * (1.0 - r * r))


def radial_sources(ctx: ConeContext, r):
    """Return (q1, q2) with q1 = U'/(n-2) + U/r and q2 = 2(n-1)U'/(n-2) + nU/r.

    Evaluated in simplified closed form to avoid cancellation at large r.
    """
    r = _check_r(r, strict=True)
    n, c = ctx.n, ctx.bubble_scale
    s = (1.0 + r * r) ** (-n / 2.0)
    q1 = c * s / r
    q2 = c * s * (n / r - (n - 2) * r)
    return q1, q2


def linearized_potential(ctx: ConeContext, r):
    """Y_P (n+2)/(n-2) U^{4/(n-2)} = a n (n+2) / (1+r^2)^2."""
    r = _check_r(r)
    return ctx.a * ctx.n * (ctx.n + 2) / (1.0 + r * r) ** 2


def yamabe_residual(ctx: ConeContext, r, eps: float = 1.0):
    """Pointwise residual of -a Delta U_eps - Y_P U_eps^{(n+2)/(n-2)} for the radial bubble.

    U_eps(r) = eps^{-(n-2)/2} U(r/eps); the Laplacian is the flat radial one
    U'' + (n-1)U'/r (the cone over a unit-curvature link is radially flat).
    Returned relative to Y_P U_eps^{(n+2)/(n-2)}.
    """
    r = _check_r(r)
    n = ctx.n
    x = r / eps
    scale = eps ** (-(n - 2) / 2.0)
    u = scale * bubble(ctx, x)
    up = scale / eps * bubble_derivative(ctx, x)
    upp = scale / eps**2 * bubble_second_derivative(ctx, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = np.where(r > 0, upp + (n - 1) * up / np.where(r > 0, r, 1.0), n * upp)
    rhs = ctx.yamabe_constant * u ** ((n + 2.0) / (n - 2.0))
    return (-ctx.a * lap - rhs) / rhs


def linearized_residual(ctx: ConeContext, r, psi, dpsi, d2psi, lam: float = 0.0):
    """a(-psi'' - (n-1)psi'/r + lam psi/r^2) - a n(n+2)(1+r^2)^{-2} psi."""
    r = _check_r(r, strict=True)
    n = ctx.n
    return ctx.a * (-d2psi - (n - 1) * dpsi / r + lam * psi / r**2) - linearized_potential(ctx, r) * psi


@dataclass(frozen=True)
class IdentityResult:
    name: str
    lhs: float
    rhs: float
    scale: float

    @property
    def error(self) -> float:
        """Error relative to ``scale`` (omega for identities whose rhs vanishes)."""
        return abs(self.lhs - self.rhs) / self.scale

    def ok(self, tol: float = 1e-10) -> bool:
        return self.error <= tol


def verify_radial_identities(ctx: ConeContext, nodes: int = 400) -> list[IdentityResult]:
    """Quadrature check of the radial integral identities of the bubble.

    Zero right-hand sides are measured relative to omega.
    """
    from .quadrature import RadialRule, integrate_radial

    if ctx.n < 5:
        raise DivergentConstantError("radial identities involve integrals that diverge for n = 4")
    n, w = ctx.n, ctx.require_omega()
    rule = RadialRule.gauss(nodes)
    p = 2.0 * n / (n - 2)

    def U(r):
        return bubble(ctx, r)

    def dU(r):
        return bubble_derivative(ctx, r)

    def q1(r):
        return radial_sources(ctx, r)[0]

    def q2(r):
        return radial_sources(ctx, r)[1]

    out = []
    lhs = integrate_radial(lambda r: U(r) ** p, rule, n + 1)
    out.append(IdentityResult("int U^p r^(n+1)", lhs, n * n * (n - 4) / (ctx.yamabe_constant * (n - 2)) * w, w))
    lhs = integrate_radial(lambda r: U(r) * dU(r), rule, n)
    out.append(IdentityResult("int U U' r^n", lhs, -n / 2.0 * w, w))
    lhs = integrate_radial(lambda r: dU(r) ** 2, rule, n + 1)
    out.append(IdentityResult("int U'^2 r^(n+1)", lhs, n * (n * n - 4) / (4.0 * (n - 1)) * w, w))
    lhs = integrate_radial(lambda r: q1(r) ** 2, rule, n + 1)
    out.append(IdentityResult("int q1^2 r^(n+1)", lhs, (n - 4) * w / (4.0 * (n - 1)), w))
    lhs = integrate_radial(lambda r: q1(r) * q2(r), rule, n + 1)
    out.append(IdentityResult("int q1 q2 r^(n+1)", lhs, 0.0, w))
    lhs = integrate_radial(lambda r: q2(r) * dU(r), rule, n - 1)
    out.append(IdentityResult("int q2 U' r^(n-1)", lhs, 0.0, w))
    return out

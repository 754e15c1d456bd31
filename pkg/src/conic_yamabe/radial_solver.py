"""Per-mode radial correction problems and the quantity β(λ).

The mode equation

    -ψ'' - (n-1)ψ'/r + λψ/r² - n(n+2)(1+r²)^{-2} ψ = λ a^{-1} q₂(r)

is solved after the Liouville substitution x = ln r, ψ = r^{-k} w with
k = (n-2)/2, which turns it into the Schrödinger form

    -w'' + (k² + λ - n(n+2) / (4 cosh² x)) w = λ a^{-1} r^{k+2} q₂.

In x the regular singular point r = 0 and the decay at infinity both become
plain exponentials, so a uniform fourth-order Numerov grid resolves them
without factoring out the indicial power by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import make_interp_spline
from scipy.sparse.linalg import splu, spsolve

from .bubble_core import (
    ConeContext,
    bubble_derivative,
    dilation_generator,
    dilation_generator_derivative,
    radial_sources,
    unnormalized_bubble,
)
from .errors import DomainError, ResolutionError
from .quadrature import RadialRule, integrate_radial

X_LEFT = -30.0
X_RIGHT = 40.0
DEFAULT_STEP = 0.01


def indicial_exponent(n: int, lam: float) -> float:
    """Positive root μ of μ(μ + n - 2) = λ."""
    return 0.5 * (-(n - 2) + np.sqrt((n - 2) ** 2 + 4.0 * lam))


@dataclass(frozen=True)
class ModeProblem:
    ctx: ConeContext
    lam: float
    tol: float = 1e-8
    step: float = DEFAULT_STEP


@dataclass(frozen=True)
class RadialSolution:
    """ψ_λ sampled on the logarithmic grid x = ln r, with diagnostics."""

    n: int
    lam: float
    x: np.ndarray
    w: np.ndarray
    beta: float
    orthogonality_residual: float
    discrete_residual: float
    boundary_exponents: tuple
    constrained: bool
    multiplier: float = 0.0
    _spline: object = field(default=None, repr=False, compare=False)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.x)

    @property
    def psi(self) -> np.ndarray:
        k = (self.n - 2) / 2.0
        return np.exp(-k * self.x) * self.w

    def _w_spline(self):
        if self._spline is None:
            object.__setattr__(self, "_spline", make_interp_spline(self.x, self.w, k=5))
        return self._spline

    def evaluate(self, r, derivative: int = 0):
        """ψ(r) (derivative=0) or ψ'(r) (derivative=1), by quintic interpolation in ln r.

        Outside the grid the known power laws r^μ (r → 0) and r^{3-n}
        (r → ∞) are used.
        """
        r = np.asarray(r, dtype=float)
        k = (self.n - 2) / 2.0
        mu, decay = self.boundary_exponents
        sp = self._w_spline()
        out = np.zeros_like(r)
        pos = r > 0
        x = np.log(np.where(pos, r, 1.0))
        inside = pos & (x >= self.x[0]) & (x <= self.x[-1])
        xi = x[inside]
        w = sp(xi)
        if derivative == 0:
            out[inside] = np.exp(-k * xi) * w
        else:
            out[inside] = np.exp(-(k + 1) * xi) * (sp(xi, 1) - k * w)
        lo = pos & (x < self.x[0])
        hi = pos & (x > self.x[-1])
        p0 = np.exp(-k * self.x[0]) * self.w[0]
        p1 = np.exp(-k * self.x[-1]) * self.w[-1]
        r0, r1 = np.exp(self.x[0]), np.exp(self.x[-1])
        if derivative == 0:
            out[lo] = p0 * (r[lo] / r0) ** mu
            out[hi] = p1 * (r[hi] / r1) ** decay
        else:
            out[lo] = p0 * mu * r[lo] ** (mu - 1) / r0**mu
            out[hi] = p1 * decay * r[hi] ** (decay - 1) / r1**decay
        return out

    def __call__(self, r):
        return self.evaluate(r)


def _grid(step: float):
    N = int(round((X_RIGHT - X_LEFT) / step))
    x = np.linspace(X_LEFT, X_RIGHT, N + 1)
    return x, x[1] - x[0]


def _potential(n: int, lam: float, x):
    k = (n - 2) / 2.0
    return k * k + lam - n * (n + 2) / (4.0 * np.cosh(x) ** 2)


def _source(ctx: ConeContext, lam: float, x):
    k = (ctx.n - 2) / 2.0
    r = np.exp(x)
    q2 = radial_sources(ctx, r)[1]
    return lam / ctx.a * r ** (k + 2) * q2


def _kernel_profile(ctx: ConeContext, x):
    """r^k U'(r): the decaying zero mode at λ = n-1 in the w variable."""
    k = (ctx.n - 2) / 2.0
    r = np.exp(x)
    return r**k * bubble_derivative(ctx, r)


def _numerov_system(g, s, h):
    """Tridiagonal Numerov matrix (interior rows) for w'' = g w - s, scaled by 1/h²."""
    c = h * h / 12.0
    lower = (1.0 - c * g[:-2]) / (h * h)
    diag = -(2.0 + 10.0 * c * g[1:-1]) / (h * h)
    upper = (1.0 - c * g[2:]) / (h * h)
    rhs = -(s[2:] + 10.0 * s[1:-1] + s[:-2]) / 12.0
    return lower, diag, upper, rhs


def _trapezoid_weights(N1: int, h: float):
    wts = np.full(N1, h)
    wts[0] = wts[-1] = 0.5 * h
    return wts


def solve_mode(problem: ModeProblem) -> RadialSolution:
    """Decaying solution of the mode equation, orthogonal to U' in L²(r^{n-3} dr).

    For λ = n-1 the homogeneous operator has the decaying kernel U', so the
    solve is bordered: a multiplier column along U' and the orthogonality
    row are appended. For λ > n-1 the orthogonality holds automatically and
    is only measured.
    """
    ctx, lam = problem.ctx, float(problem.lam)
    n = ctx.n
    if n < 5:
        raise DomainError("mode solves need n >= 5 (q2 is not square integrable for n = 4)")
    if lam < n - 1 - 1e-12:
        raise DomainError(f"λ = {lam} is below the admissible bound n-1 = {n - 1}")
    k = (n - 2) / 2.0
    nu = np.sqrt(k * k + lam)
    sigma = (4.0 - n) / 2.0  # far-field w ~ e^{σx}, i.e. ψ ~ r^{3-n}
    x, h = _grid(problem.step)
    g = _potential(n, lam, x)
    s = _source(ctx, lam, x)
    lower, diag, upper, rhs = _numerov_system(g, s, h)
    M = len(x) - 2

    # Boundary values: decaying solution at the left; at the right the
    # leading far-field particular solution, w = A e^{σx} with
    # A (ν² - σ²) = λ a^{-1} (-(n-2) c_Y).
    wL = 0.0
    A_far = lam / ctx.a * (-(n - 2) * ctx.bubble_scale) / (nu * nu - sigma * sigma)
    wR = A_far * np.exp(sigma * x[-1])
    rhs = rhs.copy()
    rhs[0] -= lower[0] * wL
    rhs[-1] -= upper[-1] * wR

    A = sparse.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], shape=(M, M), format="csc")
    wts = _trapezoid_weights(len(x), h)
    w0 = _kernel_profile(ctx, x)
    constrained = abs(lam - (n - 1)) < 1e-9
    multiplier = 0.0
    if constrained:
        col = sparse.csc_matrix(w0[1:-1][:, None])
        row = sparse.csc_matrix((wts[1:-1] * w0[1:-1])[None, :])
        K = sparse.bmat([[A, col], [row, None]], format="csc")
        b = np.concatenate([rhs, [-(wts[-1] * w0[-1] * wR)]])
        sol = spsolve(K, b)
        interior, multiplier = sol[:-1], float(sol[-1])
    else:
        interior = spsolve(A, rhs)
    if not np.all(np.isfinite(interior)):
        raise ResolutionError("non-finite solution; try halving the step")
    w = np.concatenate([[wL], interior, [wR]])

    res = A @ interior - rhs
    if constrained:
        res = res + multiplier * w0[1:-1]
    discrete_residual = float(np.max(np.abs(res)) / max(np.max(np.abs(rhs)), 1e-300))

    norm = np.sqrt(np.dot(wts, w * w) * np.dot(wts, w0 * w0))
    ortho = float(np.dot(wts, w * w0) / norm)

    # β = ∫ψ q₂ r^{n-1} dr = ∫ w r^{-k} q₂ r^n dx
    r = np.exp(x)
    q2 = radial_sources(ctx, r)[1]
    beta = float(np.dot(wts, w * r ** (n - k) * q2))

    return RadialSolution(
        n=n,
        lam=lam,
        x=x,
        w=w,
        beta=beta,
        orthogonality_residual=ortho,
        discrete_residual=discrete_residual,
        boundary_exponents=(indicial_exponent(n, lam), 3.0 - n),
        constrained=constrained,
        multiplier=multiplier,
    )


def smallest_singular_value(ctx: ConeContext, lam: float, step: float = DEFAULT_STEP, iters: int = 60) -> float:
    """Smallest singular value of the discrete homogeneous operator (Dirichlet ends), by inverse iteration."""
    x, h = _grid(step)
    g = _potential(ctx.n, lam, x)
    lower, diag, upper, _ = _numerov_system(g, np.zeros_like(x), h)
    M = len(x) - 2
    A = sparse.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], shape=(M, M), format="csc")
    lu = splu(A)
    v = np.random.default_rng(0).standard_normal(M)
    v /= np.linalg.norm(v)
    sig = np.inf
    for _ in range(iters):
        y = lu.solve(v)
        z = lu.solve(y, trans="T")
        nz = np.linalg.norm(z)
        sig = 1.0 / np.sqrt(nz)
        v = z / nz
    return float(sig)


def beta(ctx: ConeContext, lam: float, step: float = DEFAULT_STEP) -> float:
    """β(λ) = ∫ψ_λ q₂ r^{n-1} dr."""
    return solve_mode(ModeProblem(ctx, lam, step=step)).beta


def beta_curve(ctx: ConeContext, lams: Sequence[float], step: float = DEFAULT_STEP, workers: Optional[int] = None):
    """β on a list of λ values; solves are independent and run on a thread pool."""
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda lam: beta(ctx, lam, step), lams))


def log_lambda_grid(n: int, count: int = 40) -> np.ndarray:
    return np.geomspace(n - 1, 4 * n, count)


def psi_hat(ctx: ConeContext, r):
    """c_Y · Ū'(r)(r² + 2 ln r)/8: closed-form solution of the λ = n-1 mode equation."""
    r = np.asarray(r, dtype=float)
    n = ctx.n
    dUbar = -(n - 2) * r * (1.0 + r * r) ** (-n / 2.0)
    return ctx.bubble_scale * dUbar * (r * r + 2.0 * np.log(r)) / 8.0


def psi1_radial(ctx: ConeContext, r):
    """Radial factor -(n-2) q₁ r²/2 of the explicit conformal correction (equals U'/2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    n = ctx.n
    return -(n - 2) / 2.0 * ctx.bubble_scale * r * (1.0 + r * r) ** (-n / 2.0)


def psi1_radial_derivative(ctx: ConeContext, r):
    r = np.asarray(r, dtype=float)
    n = ctx.n
    s = 1.0 + r * r
    return -(n - 2) / 2.0 * ctx.bubble_scale * s ** (-n / 2.0 - 1) * (1.0 - (n - 1) * r * r)


# ---------------------------------------------------------------------------
# Weighted Poincaré sampling


@dataclass(frozen=True)
class PoincareReport:
    ratios: tuple
    max_ratio: float
    argmax: int

    def ok(self, tol: float = 1e-8) -> bool:
        return self.max_ratio <= 1.0 + tol


Trial = tuple  # (ψ, ψ') callables


def _poincare_rule():
    return RadialRule.gauss(3000)


def weighted_poincare_check(ctx: ConeContext, trials: Sequence[Trial], rule: Optional[RadialRule] = None) -> PoincareReport:
    """Ratio n(n+2)∫ψ²(1+r²)^{-2}r^{n-1} / ∫ψ'²r^{n-1} for each trial after projection.

    Trials are projected onto the complement of U' in L²(r^{n-3} dr).
    A trial with (numerically) vanishing energy after projection is rejected.
    """
    rule = rule or _poincare_rule()
    n = ctx.n
    ratios = []
    dU = lambda r: bubble_derivative(ctx, r)
    d2U = lambda r: _bubble_d2(ctx, r)
    uu = integrate_radial(lambda r: dU(r) ** 2, rule, n - 3)
    for psi, dpsi in trials:
        c = integrate_radial(lambda r: psi(r) * dU(r), rule, n - 3) / uu
        p = lambda r: psi(r) - c * dU(r)
        dp = lambda r: dpsi(r) - c * d2U(r)
        check = integrate_radial(lambda r: p(r) * dU(r), rule, n - 3)
        scale = np.sqrt(integrate_radial(lambda r: p(r) ** 2, rule, n - 3) * uu)
        if not scale > 0 or abs(check) > 1e-8 * scale:
            raise DomainError("trial is not in the constrained class after projection")
        num = n * (n + 2) * integrate_radial(lambda r: p(r) ** 2 / (1 + r * r) ** 2, rule, n - 1)
        den = integrate_radial(lambda r: dp(r) ** 2, rule, n - 1)
        if not den > 0:
            raise DomainError("trial has zero energy")
        ratios.append(num / den)
    i = int(np.argmax(ratios))
    return PoincareReport(tuple(ratios), float(ratios[i]), i)


def _bubble_d2(ctx, r):
    from .bubble_core import bubble_second_derivative

    return bubble_second_derivative(ctx, r)


def dilation_trial(ctx: ConeContext) -> Trial:
    return (lambda r: dilation_generator(ctx, r), lambda r: dilation_generator_derivative(ctx, r))


def bump_trial(center: float, width: float, power: int = 0) -> Trial:
    """Smooth compactly supported bump r^power·exp(-1/(1-z²)), z = (r-center)/width."""

    def psi(r):
        z = (np.asarray(r) - center) / width
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        return np.where(inside, np.asarray(r) ** power * np.exp(-1.0 / (1.0 - zz * zz)), 0.0)

    def dpsi(r):
        r = np.asarray(r)
        z = (r - center) / width
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        e = np.exp(-1.0 / (1.0 - zz * zz))
        de = e * (-2.0 * zz / (1.0 - zz * zz) ** 2) / width
        val = power * r ** max(power - 1, 0) * e * (power > 0) + r**power * de
        return np.where(inside, val, 0.0)

    return psi, dpsi

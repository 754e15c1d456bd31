"""Semi-infinite radial and polar (zonal) quadrature, and ε-expansion fitting.

The radial rule uses the compactification r = t/(1-t) with Gauss-Legendre
nodes in t. The angular rule integrates against sin^{n-2}θ dθ through
Gauss-Jacobi nodes in x = cos θ, which is exact for zonal polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, roots_jacobi

from .errors import EvaluationError, FitError

DEFAULT_RADIAL_NODES = 400
DEFAULT_ANGULAR_NODES = 200


@lru_cache(maxsize=64)
def _legendre01(N: int):
    x, w = np.polynomial.legendre.leggauss(N)
    t = 0.5 * (x + 1.0)
    return t, 0.5 * w


@dataclass(frozen=True)
class RadialRule:
    """Nodes and weights for ∫_0^∞ g(r) dr under r = t/(1-t)."""

    nodes: np.ndarray
    weights: np.ndarray
    compactification: str = "r = t/(1-t)"

    @property
    def size(self) -> int:
        return len(self.nodes)

    @classmethod
    def gauss(cls, N: int = DEFAULT_RADIAL_NODES) -> "RadialRule":
        t, wt = _legendre01(int(N))
        r = t / (1.0 - t)
        w = wt / (1.0 - t) ** 2
        r.setflags(write=False)
        w.setflags(write=False)
        return cls(r, w)


def angular_mass(n: int) -> float:
    """∫_0^π sin^{n-2}θ dθ = √π Γ((n-1)/2) / Γ(n/2)."""
    return float(np.exp(0.5 * np.log(np.pi) + gammaln((n - 1) / 2.0) - gammaln(n / 2.0)))


@lru_cache(maxsize=64)
def _jacobi_rule(N: int, alpha: float):
    x, w = roots_jacobi(N, alpha, alpha)
    order = np.argsort(-x)  # increasing θ
    return x[order], w[order]


@dataclass(frozen=True)
class AngularRule:
    """Nodes x_j = cos θ_j with weights for the measure sin^{n-2}θ dθ."""

    n: int
    x: np.ndarray
    weights: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.x)

    @classmethod
    def gauss(cls, n: int, N: int = DEFAULT_ANGULAR_NODES) -> "AngularRule":
        x, w = _jacobi_rule(int(N), (n - 3) / 2.0)
        return cls(n, x, w)


@dataclass(frozen=True)
class PolarRule:
    radial: RadialRule
    angular: AngularRule

    @property
    def n(self) -> int:
        return self.angular.n

    @classmethod
    def gauss(cls, n: int, radial_nodes: int = DEFAULT_RADIAL_NODES, angular_nodes: int = DEFAULT_ANGULAR_NODES):
        return cls(RadialRule.gauss(radial_nodes), AngularRule.gauss(n, angular_nodes))


def _checked(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("integrand is not finite at some quadrature node")
    return values


def integrate_radial(f: Callable, rule: RadialRule, m: float = 0.0) -> float:
    """∫_0^∞ f(r) r^m dr on the given rule; f is called once on the node array."""
    r = rule.nodes
    vals = _checked(f(r)) * r**m
    return float(np.dot(vals, rule.weights))


def integrate_radial_converged(
    f: Callable, m: float = 0.0, nodes: int = DEFAULT_RADIAL_NODES, tol: float = 1e-9, max_nodes: int = 6400
) -> float:
    """Integrate on N and 2N nodes, doubling until they agree to ``tol`` relative."""
    N = nodes
    prev = integrate_radial(f, RadialRule.gauss(N), m)
    while True:
        cur = integrate_radial(f, RadialRule.gauss(2 * N), m)
        if abs(cur - prev) <= tol * max(abs(cur), np.finfo(float).tiny):
            return cur
        N *= 2
        if 2 * N > max_nodes:
            raise EvaluationError(f"radial quadrature did not converge by {max_nodes} nodes")
        prev = cur


def integrate_angular(g: Callable, rule: AngularRule) -> float:
    """∫_0^π g(cos θ) sin^{n-2}θ dθ, g taking x = cos θ."""
    return float(np.dot(_checked(g(rule.x)), rule.weights))


def integrate_polar(F: Callable, rule: PolarRule) -> float:
    """∫∫ F(r, θ) r^{n-1} sin^{n-2}θ dθ dr; F is called on broadcast arrays (r[:,None], θ[None,:])."""
    r = rule.radial.nodes[:, None]
    th = rule.angular.theta[None, :]
    vals = _checked(np.broadcast_to(F(r, th), (r.shape[0], th.shape[1])))
    radial_w = rule.radial.weights * rule.radial.nodes ** (rule.n - 1)
    return float(radial_w @ vals @ rule.angular.weights)


@dataclass(frozen=True)
class ExpansionFit:
    model: str
    coefficients: tuple
    residual: float
    eps: tuple
    basis: tuple = field(default=())

    def coefficient(self, name: str) -> float:
        return self.coefficients[self.basis.index(name)]


BASIS = {
    "eps2": lambda e: e**2,
    "eps2log": lambda e: e**2 * np.log(1.0 / e),
    "eps3": lambda e: e**3,
    "eps3log": lambda e: e**3 * np.log(1.0 / e),
    "eps4": lambda e: e**4,
    "eps1": lambda e: e,
}

MODELS = {
    "plain": ("eps2",),
    "log": ("eps2log", "eps2"),
    "linear": ("eps1", "eps2"),
}


def fit_expansion(samples: Sequence, baseline: float, model: str = "plain", extra: Sequence[str] = ()) -> ExpansionFit:
    """Least-squares fit of (value - baseline) on the model basis.

    ``model`` is "plain" ({ε²}), "log" ({ε² log(1/ε), ε²}) or "linear"
    ({ε, ε²}, used for the denominator). ``extra`` appends
    higher-order basis names (e.g. "eps3") for remainder absorption.
    """
    if model not in MODELS:
        raise FitError(f"unknown model {model!r}")
    basis = MODELS[model] + tuple(extra)
    eps = np.array([float(s[0]) for s in samples])
    vals = np.array([float(s[1]) for s in samples]) - baseline
    if len(eps) < 3:
        raise FitError("need at least 3 samples")
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise FitError("all ε must lie in (0, 1)")
    if len(np.unique(eps)) != len(eps):
        raise FitError("ε samples must be distinct")
    A = np.column_stack([BASIS[b](eps) for b in basis])
    scale = np.max(np.abs(A), axis=0)
    As = A / scale
    if np.linalg.matrix_rank(As) < len(basis):
        raise FitError("rank-deficient design")
    coef, *_ = np.linalg.lstsq(As, vals, rcond=None)
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - vals))
    return ExpansionFit(model, tuple(float(c) for c in coef), resid, tuple(eps), basis)

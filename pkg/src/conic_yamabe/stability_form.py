"""Second-order coefficient of the Yamabe quotient expansion from spectral link data.

A deformation ξ of the link metric is given through its decomposition
ξ = f h₀ + ∇²G + δ*α + η: the conformal and Hessian potentials f, G by their
coefficients in an L²-orthonormal eigenbasis of -Δ_{h₀}, the Lie-derivative
and transverse-traceless parts only through three scalars.

For n >= 5 the coefficient is assembled twice, once term by term ("raw") and
once after the conformal terms cancel ("reduced"); the two must agree.
For n = 4 the quantity returned is c_Y² J(ξ), the factor multiplying
ε² log(δ/ε).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .bubble_core import ConeContext, make_context, sphere_volume
from .errors import DomainError, IncompleteInputError, InvalidDimensionError


class RoundSphereWarning(UserWarning):
    """First spherical harmonics on the round sphere: the decomposition is not 𝓡″-orthogonal."""


@dataclass(frozen=True)
class LinkSpectrum:
    """Volume and the Laplace eigenvalues of the link that carry the deformation.

    ``modes`` is a tuple of (λ, label). Only modes used by ξ need to be listed.
    """

    n: int
    volume: float
    modes: tuple
    is_round_sphere: bool = False

    def __post_init__(self):
        modes = tuple((float(l), str(lab)) for l, lab in self.modes)
        object.__setattr__(self, "modes", modes)
        if self.n < 4:
            raise InvalidDimensionError("n must be >= 4")
        if not self.volume > 0:
            raise DomainError("link volume must be positive")
        labels = [lab for _, lab in modes]
        if len(set(labels)) != len(labels):
            raise DomainError("mode labels must be unique")
        for lam, lab in modes:
            if not lam > 0:
                raise DomainError(f"mode {lab}: eigenvalue must be positive")
            if self.is_round_sphere:
                if lam < self.n - 1 - 1e-12:
                    raise DomainError(f"mode {lab}: λ = {lam} below the sphere's first eigenvalue {self.n - 1}")
            elif lam <= self.n - 1:
                raise DomainError(f"mode {lab}: λ = {lam} must exceed n-1 on a link other than the round sphere")

    def eigenvalue(self, label: str) -> float:
        for lam, lab in self.modes:
            if lab == label:
                return lam
        raise IncompleteInputError(f"unknown mode label {label!r}")

    def is_first_harmonic(self, label: str) -> bool:
        return self.is_round_sphere and abs(self.eigenvalue(label) - (self.n - 1)) < 1e-9


@dataclass(frozen=True)
class XiDecomposition:
    """Spectral data of ξ = f h₀ + ∇²G + δ*α + η.

    ``f_mean`` is the coefficient of the constant mode of f (removed by
    :func:`normalize_gauge`).
    """

    f_coeffs: Mapping[str, float] = field(default_factory=dict)
    G_coeffs: Mapping[str, float] = field(default_factory=dict)
    lie_norm_sq: float = 0.0
    tt_norm_sq: float = 0.0
    tt_second_variation: float = 0.0
    f_mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f_coeffs", dict(self.f_coeffs))
        object.__setattr__(self, "G_coeffs", dict(self.G_coeffs))
        if self.lie_norm_sq < 0 or self.tt_norm_sq < 0:
            raise DomainError("norms must be non-negative")
        if (self.tt_norm_sq == 0) != (self.tt_second_variation == 0):
            raise DomainError("tt part: zero norm and zero second variation must occur together")

    def labels(self):
        return sorted(set(self.f_coeffs) | set(self.G_coeffs))

    def f(self, label: str) -> float:
        return float(self.f_coeffs.get(label, 0.0))

    def G(self, label: str) -> float:
        return float(self.G_coeffs.get(label, 0.0))

    def K(self, label: str) -> float:
        return self.f(label) - self.G(label)


def normalize_gauge(xi: XiDecomposition) -> XiDecomposition:
    """Drop the constant mode of f (a constant conformal rescaling of the link)."""
    if xi.f_mean == 0.0:
        return xi
    return replace(xi, f_mean=0.0)


def xi_condition(xi: XiDecomposition) -> bool:
    """False iff ξ is a pure conformal-gauge direction ∇²φ + φh₀ (f = G on every mode, no Lie/tt part)."""
    if xi.lie_norm_sq != 0.0 or xi.tt_norm_sq != 0.0:
        return True
    return any(xi.K(lab) != 0.0 for lab in xi.labels())


def _check_labels(link: LinkSpectrum, xi: XiDecomposition):
    for lab in xi.labels():
        link.eigenvalue(lab)


def conformal_defect(link: LinkSpectrum, xi: XiDecomposition) -> float:
    """A_f = Σ (λ_k - (n-1)) f_k²."""
    return math.fsum((link.eigenvalue(lab) - (link.n - 1)) * xi.f(lab) ** 2 for lab in xi.labels())


def gradient_energy(link: LinkSpectrum, xi: XiDecomposition) -> float:
    """B = Σ λ_k K_k² = ∫ |∇(f - G)|²."""
    return math.fsum(link.eigenvalue(lab) * xi.K(lab) ** 2 for lab in xi.labels())


def second_variation_EH(link: LinkSpectrum, xi: XiDecomposition) -> float:
    """𝓡″(h₀)[ξ, ξ]: conformal part plus the supplied tt value; Hessian and Lie parts contribute 0."""
    _check_labels(link, xi)
    n = link.n
    if any(link.is_first_harmonic(lab) and (xi.f(lab) or xi.G(lab)) for lab in xi.labels()):
        warnings.warn(
            "first spherical harmonics on the round sphere: parts of the decomposition are not 𝓡″-orthogonal",
            RoundSphereWarning,
            stacklevel=2,
        )
    conf = (n - 2) * (n - 3) / 2.0 * link.volume ** (-(n - 3) / (n - 1)) * conformal_defect(link, xi)
    return conf + xi.tt_second_variation


def trace_norm_term(link: LinkSpectrum, xi: XiDecomposition) -> float:
    """∫ ((tr ξ)² - |ξ|²) = (n-2)[Σλ K² - Σ(λ - (n-1)) f²] - |δ*α|² - |η|²."""
    _check_labels(link, xi)
    n = link.n
    return (n - 2) * (gradient_energy(link, xi) - conformal_defect(link, xi)) - xi.lie_norm_sq - xi.tt_norm_sq


BetaProvider = Union[Callable[[float], float], Mapping[float, float]]


def _beta_lookup(provider: BetaProvider, lam: float) -> float:
    if provider is None:
        raise IncompleteInputError(f"no β provider for λ = {lam}")
    if callable(provider):
        val = provider(lam)
    else:
        val = None
        for key, v in provider.items():
            if abs(float(key) - lam) <= 1e-12 * max(1.0, lam):
                val = v
                break
    if val is None:
        raise IncompleteInputError(f"missing β value for λ = {lam}")
    return float(val)


class SolverBetaProvider:
    """β(λ) from the radial mode solver, cached per λ."""

    def __init__(self, ctx: ConeContext, step: Optional[float] = None):
        self.ctx = ctx
        self.step = step
        self._cache: dict = {}

    def __call__(self, lam: float) -> float:
        from .radial_solver import DEFAULT_STEP, beta

        key = float(lam)
        if key not in self._cache:
            self._cache[key] = beta(self.ctx, key, self.step or DEFAULT_STEP)
        return self._cache[key]


@dataclass(frozen=True)
class StabilityReport:
    n: int
    coefficient: float
    contributions: dict
    B: float
    verdict: str  # "negative" | "zero" | "positive"
    xi_condition: bool
    raw_coefficient: Optional[float] = None
    flags: tuple = ()
    kind: str = "I''(0)/2"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "coefficient": self.coefficient,
            "raw_coefficient": self.raw_coefficient,
            "B": self.B,
            "verdict": self.verdict,
            "xi_condition": self.xi_condition,
            "contributions": dict(self.contributions),
            "flags": list(self.flags),
        }


def _verdict(total: float, scale: float, zero_tol: float) -> str:
    if abs(total) <= zero_tol * max(scale, 1e-300) or total == 0.0:
        return "zero"
    return "negative" if total < 0 else "positive"


def _sphere_flags(link: LinkSpectrum, xi: XiDecomposition) -> list:
    flags = []
    if link.is_round_sphere and any(link.is_first_harmonic(lab) and xi.K(lab) != 0.0 for lab in xi.labels()):
        flags.append("outside theorem hypotheses: f - G has a first spherical harmonic component")
    if link.is_round_sphere:
        flags.append("round sphere link: gauge condition evaluated by the generic criterion")
    return flags


def expansion_coefficient(
    ctx: ConeContext,
    link: LinkSpectrum,
    xi: XiDecomposition,
    beta_provider: BetaProvider,
    zero_tol: float = 1e-8,
    check_tol: float = 1e-10,
) -> StabilityReport:
    """I''(0)/2 for n >= 5, assembled raw and reduced; raises if the two disagree."""
    n = ctx.n
    if n < 5:
        raise InvalidDimensionError("expansion_coefficient needs n >= 5; use coefficient_n4 for n = 4")
    if link.n != n:
        raise DomainError("link and context dimensions differ")
    xi = normalize_gauge(xi)
    _check_labels(link, xi)
    w = ctx.require_omega()
    vol_pow = link.volume ** ((n - 3) / (n - 1))

    contributions = {}
    for lab in xi.labels():
        K = xi.K(lab)
        if K == 0.0:
            continue
        lam = link.eigenvalue(lab)
        b = _beta_lookup(beta_provider, lam)
        contributions[f"mode:{lab}"] = lam * K * K * (w * (n - 2) / 4.0 - b)
    contributions["tt_second_variation"] = w / 2.0 * vol_pow * xi.tt_second_variation
    contributions["lie_tt_norms"] = -w / 4.0 * (xi.lie_norm_sq + xi.tt_norm_sq)
    reduced = math.fsum(contributions.values())

    # term-by-term assembly
    A_f = conformal_defect(link, xi)
    psi1_energy = (n - 2) * (n - 4) * w / 4.0 * A_f
    psi2_energy = math.fsum(
        link.eigenvalue(lab) * xi.K(lab) ** 2 * _beta_lookup(beta_provider, link.eigenvalue(lab))
        for lab in xi.labels()
        if xi.K(lab) != 0.0
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RoundSphereWarning)
        rpp = second_variation_EH(link, xi)
    tn = trace_norm_term(link, xi)
    raw_terms = [-psi1_energy, -psi2_energy, w / 2.0 * vol_pow * rpp, w / 4.0 * tn]
    raw = math.fsum(raw_terms)
    scale = math.fsum(abs(t) for t in raw_terms) + math.fsum(abs(v) for v in contributions.values())
    if abs(raw - reduced) > check_tol * max(scale, 1e-300):
        raise ArithmeticError(f"raw ({raw}) and reduced ({reduced}) assemblies disagree")

    B = gradient_energy(link, xi)
    verdict_scale = w * B + math.fsum(abs(v) for v in contributions.values())
    return StabilityReport(
        n=n,
        coefficient=reduced,
        contributions=contributions,
        B=B,
        verdict=_verdict(reduced, verdict_scale, zero_tol),
        xi_condition=xi_condition(xi),
        raw_coefficient=raw,
        flags=tuple(_sphere_flags(link, xi)),
    )


def helmholtz_amplitudes(link: LinkSpectrum, xi: XiDecomposition, a: float = 6.0) -> dict:
    """Coefficients d_k of H solving -ΔH + H = 2a^{-1} ΔK: d_k = -2a^{-1} λ_k/(1+λ_k) K_k."""
    return {
        lab: -2.0 / a * link.eigenvalue(lab) / (1.0 + link.eigenvalue(lab)) * xi.K(lab) for lab in xi.labels()
    }


def coefficient_n4(link: LinkSpectrum, xi: XiDecomposition, zero_tol: float = 1e-12, check_tol: float = 1e-10):
    """c_Y² J(ξ) for n = 4, with J assembled per mode and cross-checked against the term-by-term form."""
    if link.n != 4:
        raise InvalidDimensionError("coefficient_n4 is only defined for n = 4")
    xi = normalize_gauge(xi)
    _check_labels(link, xi)
    ctx = make_context(4, link.volume)
    a, cy2 = ctx.a, ctx.bubble_scale**2
    contributions = {}
    for lab in xi.labels():
        K = xi.K(lab)
        if K == 0.0:
            continue
        lam = link.eigenvalue(lab)
        contributions[f"mode:{lab}"] = cy2 * lam * K * K * (0.5 - 4.0 / a * lam / (1.0 + lam))
    contributions["tt_second_variation"] = cy2 * 0.5 * link.volume ** (1.0 / 3.0) * xi.tt_second_variation
    contributions["lie_tt_norms"] = -cy2 * 0.25 * (xi.lie_norm_sq + xi.tt_norm_sq)
    total = math.fsum(contributions.values())

    d = helmholtz_amplitudes(link, xi, a)
    h_energy = a * math.fsum((link.eigenvalue(lab) + 1.0) * d[lab] ** 2 for lab in d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RoundSphereWarning)
        rpp = second_variation_EH(link, xi)
    raw_terms = [-h_energy, 0.5 * link.volume ** (1.0 / 3.0) * rpp, 0.25 * trace_norm_term(link, xi)]
    raw = cy2 * math.fsum(raw_terms)
    scale = cy2 * math.fsum(abs(t) for t in raw_terms) + math.fsum(abs(v) for v in contributions.values())
    if abs(raw - total) > check_tol * max(scale, 1e-300):
        raise ArithmeticError(f"raw ({raw}) and reduced ({total}) n = 4 assemblies disagree")
    B = gradient_energy(link, xi)
    return StabilityReport(
        n=4,
        coefficient=total,
        contributions=contributions,
        B=B,
        verdict=_verdict(total, cy2 * B + math.fsum(abs(v) for v in contributions.values()), zero_tol),
        xi_condition=xi_condition(xi),
        raw_coefficient=raw,
        flags=tuple(_sphere_flags(link, xi)),
        kind="c_Y^2 J",
    )


def J_value(link: LinkSpectrum, xi: XiDecomposition) -> float:
    """J(ξ) without the c_Y² factor."""
    rep = coefficient_n4(link, xi)
    return rep.coefficient / make_context(4, link.volume).bubble_scale ** 2


def round_sphere_link(n: int, modes, quotient: float = 1.0) -> LinkSpectrum:
    """LinkSpectrum of S^{n-1} (or of a quotient of order k) with the given (λ, label) modes."""
    return LinkSpectrum(n, sphere_volume(n - 1) / quotient, tuple(modes), is_round_sphere=(quotient == 1.0))

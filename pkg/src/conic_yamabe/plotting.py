"""Optional figures for the CLI (requires matplotlib; imported only on --plot)."""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _log_x(ax):
    from matplotlib.ticker import NullFormatter

    ax.set_xscale("log")
    ax.xaxis.set_minor_formatter(NullFormatter())


def plot_beta_curve(rows, n: int, path) -> None:
    """β/ω against λ with the anchor value (n-2)/4 marked."""
    plt = _pyplot()
    lam = np.array([r[0] for r in rows])
    ratio = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(lam, ratio, "o-", ms=3)
    ax.axhline((n - 2) / 4.0, color="grey", lw=0.8, ls="--")
    _log_x(ax)
    ax.set_xlabel("λ")
    ax.set_ylabel("β(λ)/ω")
    ax.set_title(f"n = {n}")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_expansion(report, path) -> None:
    """Left: Q - Q_flat with the full fitted curve. Right: (Q - Q_flat)/ε² with the predicted leading behaviour."""
    from .quadrature import BASIS

    plt = _pyplot()
    eps = np.array([s.eps for s in report.samples])
    diff = np.array([s.Q - b.Q for s, b in zip(report.samples, report.baseline_samples)])
    grid = np.geomspace(eps.min(), eps.max(), 100)
    fitc = sum(c * BASIS[b](grid) for c, b in zip(report.fit.coefficients, report.fit.basis))
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax.plot(eps, diff, "o", label="quadrature")
    ax.plot(grid, fitc, "-", label="fit")
    _log_x(ax)
    ax.set_xlabel("ε")
    ax.set_ylabel("Q - Q_flat")
    ax.legend(fontsize=8)
    if report.n == 4:
        L = np.log(1.0 / eps)
        Lg = np.log(1.0 / grid)
        intercept = report.fit.coefficient("eps2")
        bx.plot(L, diff / eps**2, "o", label="quadrature")
        bx.plot(Lg, report.predicted * Lg + intercept, "--", label="predicted slope")
        bx.set_xlabel("log(1/ε)")
    else:
        bx.plot(eps, diff / eps**2, "o", label="quadrature")
        bx.plot(grid, fitc / grid**2, "-", label="fit")
        bx.axhline(report.predicted, color="grey", ls="--", label="predicted")
        _log_x(bx)
        bx.set_xlabel("ε")
    bx.set_ylabel("(Q - Q_flat)/ε²")
    bx.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)

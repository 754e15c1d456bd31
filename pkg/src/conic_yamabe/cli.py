"""Command-line entry point: ``conic-yamabe identities|beta-curve|stability-check|verify-expansion``.

Exit codes: 0 success or negative coefficient, 1 solver failure, 2 n = 4
identities request, 3 zero coefficient, 4 positive coefficient, 5 expansion
tolerance miss or inconclusive fit, 64 usage error, 65 malformed spec file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .bubble_core import make_context, sphere_volume, verify_radial_identities
from .cone_geometry import ZonalConformalFamily
from .errors import ConicYamabeError, DomainError, FitError, SpecFileError
from .stability_form import LinkSpectrum, SolverBetaProvider, XiDecomposition, coefficient_n4, expansion_coefficient

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_N4 = 2
EXIT_ZERO = 3
EXIT_POSITIVE = 4
EXIT_TOLERANCE = 5
EXIT_USAGE = 64
EXIT_DATAERR = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_schema(name: str) -> dict:
    text = resources.files("conic_yamabe").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(data: dict, name: str) -> None:
    jsonschema.validate(data, load_schema(name))


# ---------------------------------------------------------------------------
# spec files


@dataclass(frozen=True)
class LinkSpecFile:
    n: int
    link: LinkSpectrum
    xi: XiDecomposition
    family: Optional[ZonalConformalFamily]
    quotient: float


def parse_spec(data: dict) -> LinkSpecFile:
    """Validate a decoded spec document and build the library objects."""
    try:
        jsonschema.validate(data, load_schema("link_spec"))
    except jsonschema.ValidationError as exc:
        raise SpecFileError(f"spec file: {exc.message}") from None
    n = data["n"]
    ln = data["link"]
    kind = ln["kind"]
    quotient = 1.0
    if kind == "round_sphere":
        if "volume" in ln or "quotient" in ln:
            raise SpecFileError("round_sphere link takes neither volume nor quotient")
        volume = sphere_volume(n - 1)
    elif kind == "sphere_quotient":
        if "quotient" not in ln or "volume" in ln:
            raise SpecFileError("sphere_quotient link needs quotient (and no volume)")
        quotient = float(ln["quotient"])
        volume = sphere_volume(n - 1) / quotient
    else:
        if "volume" not in ln or "quotient" in ln:
            raise SpecFileError("spectral link needs volume (and no quotient)")
        volume = float(ln["volume"])

    try:
        family = None
        if "family" in data:
            if kind == "spectral":
                raise SpecFileError("zonal families live on sphere links")
            prof = tuple((e["ell"], e["amplitude"]) for e in data["family"]["zonal_profile"])
            family = ZonalConformalFamily(n, prof, quotient)

        modes = [(m["lambda"], m["label"]) for m in ln.get("modes", [])]
        if "xi" in data:
            xd = data["xi"]
            tt = xd.get("tt", {"norm_sq": 0.0, "second_variation": 0.0})
            xi = XiDecomposition(
                _coeff_map(xd.get("conformal", []), "conformal"),
                _coeff_map(xd.get("hessian", []), "hessian"),
                lie_norm_sq=xd.get("lie_norm_sq", 0.0),
                tt_norm_sq=tt["norm_sq"],
                tt_second_variation=tt["second_variation"],
            )
        elif family is not None:
            from .expansion_verifier import family_link, family_xi

            xi = family_xi(family)
            known = {lab for _, lab in modes}
            modes += [m for m in family_link(family).modes if m[1] not in known]
        else:
            raise SpecFileError("spec needs xi or family")
        link = LinkSpectrum(n, volume, tuple(modes), is_round_sphere=(kind == "round_sphere"))
        for lab in xi.labels():
            link.eigenvalue(lab)
    except SpecFileError:
        raise
    except ConicYamabeError as exc:
        raise SpecFileError(f"spec file: {exc}") from None
    return LinkSpecFile(n, link, xi, family, quotient)


def _coeff_map(entries, what: str) -> dict:
    out = {}
    for e in entries:
        if e["label"] in out:
            raise SpecFileError(f"duplicate {what} label {e['label']!r}")
        out[e["label"]] = float(e["coeff"])
    return out


def load_spec(path) -> LinkSpecFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecFileError(f"cannot read spec file: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"spec file is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    return parse_spec(data)


# ---------------------------------------------------------------------------
# output helpers


def dumps_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _eps_list(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("ε list must be comma-separated numbers") from None
    return vals


# ---------------------------------------------------------------------------
# commands


def cmd_identities(args) -> int:
    n = args.n
    if n < 4:
        raise UsageError("identities need n >= 5")
    if n == 4:
        print("n = 4: the L² mass ω of the bubble diverges, so the identities are not finite", file=sys.stderr)
        return EXIT_N4
    ctx = make_context(n, sphere_volume(n - 1))
    res = verify_radial_identities(ctx)
    tol = args.tol_quad
    lines = [f"{'identity':<28} {'lhs':>24} {'rhs':>24} {'rel. error':>11}"]
    for r in res:
        lines.append(f"{r.name:<28} {r.lhs:>24.16e} {r.rhs:>24.16e} {r.error:>11.2e}{'' if r.ok(tol) else '  FAIL'}")
    passed = all(r.ok(tol) for r in res)
    print("\n".join(lines))
    if args.out:
        report = {
            "n": n,
            "tolerance": tol,
            "passed": passed,
            "identities": [{"name": r.name, "lhs": r.lhs, "rhs": r.rhs, "error": r.error, "ok": r.ok(tol)} for r in res],
        }
        validate_report(report, "identities_report")
        _write_text(args.out, dumps_json(report))
    return EXIT_OK if passed else EXIT_TOLERANCE


def beta_rows(n: int, lam_min: float, lam_max: float, points: int, workers=None):
    """(λ, β, β/ω) on a geometric λ grid, with the anchor λ = n-1 always first."""
    from .radial_solver import beta_curve

    ctx = make_context(n, sphere_volume(n - 1))
    lams = list(np.geomspace(lam_min, lam_max, points))
    if lams[0] != n - 1:
        lams.insert(0, float(n - 1))
    vals = beta_curve(ctx, lams, workers=workers)
    return [(float(l), float(b), float(b) / ctx.omega) for l, b in zip(lams, vals)]


def cmd_beta_curve(args) -> int:
    from .expansion_verifier import thread_cap

    n = args.n
    if n < 5:
        raise UsageError("beta-curve needs n >= 5")
    lo = float(n - 1) if args.lambda_min is None else args.lambda_min
    hi = float(4 * n) if args.lambda_max is None else args.lambda_max
    if lo < n - 1 or hi <= lo:
        raise UsageError(f"need {n - 1} <= lambda-min < lambda-max")
    if args.points < 2:
        raise UsageError("need at least 2 points")
    rows = beta_rows(n, lo, hi, args.points, thread_cap())
    _write_text(args.out, csv_text(("lambda", "beta", "beta_over_omega"), rows))
    if args.plot:
        _plot(args.out, "beta", lambda p: _plotting().plot_beta_curve(rows, n, p))
    anchor = rows[0][2] - (n - 2) / 4.0
    if abs(anchor) > args.tol_quad:
        print(f"anchor check failed: β(n-1)/ω - (n-2)/4 = {anchor:.3e}", file=sys.stderr)
        return EXIT_SOLVER
    if not all(b2 > b1 for (_, b1, _), (_, b2, _) in zip(rows, rows[1:])):
        print("β is not strictly increasing on the grid", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _plotting():
    from . import plotting

    return plotting


def _plot(out, stem_default, draw):
    target = Path(out).with_suffix(".png") if out not in (None, "-") else Path(f"{stem_default}.png")
    try:
        draw(target)
    except ImportError:
        print("--plot needs matplotlib (pip install 'artifact[plot]')", file=sys.stderr)


def stability_report(spec: LinkSpecFile):
    if spec.n == 4:
        return coefficient_n4(spec.link, spec.xi)
    ctx = make_context(spec.n, spec.link.volume)
    return expansion_coefficient(ctx, spec.link, spec.xi, SolverBetaProvider(ctx))


def cmd_stability_check(args) -> int:
    spec = load_spec(args.spec)
    rep = stability_report(spec)
    data = rep.to_dict()
    validate_report(data, "stability_report")
    _write_text(args.out, dumps_json(data))
    return {"negative": EXIT_OK, "zero": EXIT_ZERO, "positive": EXIT_POSITIVE}[rep.verdict]


def cmd_verify_expansion(args) -> int:
    from .expansion_verifier import DEFAULT_DELTA, verify_expansion

    if args.eps is not None and len(args.eps) < 3:
        raise UsageError("need at least 3 ε values")
    spec = load_spec(args.spec)
    if spec.family is None:
        raise SpecFileError("verify-expansion needs a zonal family in the spec file")
    if spec.n not in (4, 5):
        raise SpecFileError("verify-expansion supports n = 4 and n = 5")
    ctx = make_context(spec.n, spec.link.volume)
    rep = verify_expansion(
        ctx,
        spec.family,
        eps_list=args.eps,
        delta=DEFAULT_DELTA if args.delta is None else args.delta,
        correction=args.correction,
        tol_fit=args.tol_fit,
        tol_quad=args.tol_quad,
    )
    data = rep.to_dict()
    validate_report(data, "expansion_report")
    stem = Path(args.out)
    rows = [(s["eps"], s["Q"], s["numerator"], s["denominator"], s["baseline_Q"]) for s in data["samples"]]
    _write_text(str(stem.with_suffix(".csv")), csv_text(("eps", "Q", "numerator", "denominator", "baseline_Q"), rows))
    _write_text(str(stem.with_suffix(".json")), dumps_json(data))
    if args.plot:
        _plot(str(stem), "expansion", lambda p: _plotting().plot_expansion(rep, p))
    msg = f"fitted {rep.fitted:.10g}  predicted {rep.predicted:.10g}  rel. error {rep.relative_error:.3e}  status {rep.status}"
    print(msg)
    if rep.status != "pass":
        print(f"fit residual {rep.fit.residual:.3e}; " + "; ".join(rep.notes), file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conic-yamabe", description="Second-order Yamabe quotient expansion at conical points.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("identities", help="check the radial integral identities of the bubble")
    s.add_argument("-n", type=int, required=True, help="cone dimension")
    s.add_argument("--tol-quad", type=float, default=1e-10, help="relative tolerance per identity")
    s.add_argument("--out", help="also write a JSON report here")
    s.set_defaults(func=cmd_identities)

    s = sub.add_parser("beta-curve", help="tabulate β(λ) and β/ω as CSV")
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--lambda-min", type=float, help="default n-1")
    s.add_argument("--lambda-max", type=float, help="default 4n")
    s.add_argument("--points", type=int, default=40)
    s.add_argument("--tol-quad", type=float, default=1e-6, help="tolerance on the anchor β(n-1)/ω = (n-2)/4")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.add_argument("--plot", action="store_true", help="also render a PNG (needs matplotlib)")
    s.set_defaults(func=cmd_beta_curve)

    s = sub.add_parser("stability-check", help="assemble the expansion coefficient from a spec file")
    s.add_argument("spec", help="JSON link/deformation spec")
    s.add_argument("--out", help="JSON report path (default stdout)")
    s.set_defaults(func=cmd_stability_check)

    s = sub.add_parser("verify-expansion", help="fit the ε-expansion of the quotient on a zonal family")
    s.add_argument("spec", help="JSON spec with a family section")
    s.add_argument("--eps", type=_eps_list, help="comma-separated ε values (at least 3)")
    s.add_argument("--delta", type=float)
    s.add_argument("--correction", choices=("auto", "none", "psi", "psi_hat"), default="auto")
    s.add_argument("--tol-fit", type=float, help="relative tolerance (default 2%% for n = 5, 5%% for n = 4)")
    s.add_argument("--tol-quad", type=float, default=1e-11, help="relative quadrature self-check tolerance")
    s.add_argument("--out", default="expansion", help="output stem; writes STEM.csv and STEM.json")
    s.add_argument("--plot", action="store_true", help="also render STEM.png (needs matplotlib)")
    s.set_defaults(func=cmd_verify_expansion)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"conic-yamabe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecFileError as exc:
        print(f"conic-yamabe: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    except (DomainError, FitError) as exc:
        print(f"conic-yamabe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConicYamabeError as exc:
        print(f"conic-yamabe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

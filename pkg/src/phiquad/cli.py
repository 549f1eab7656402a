"""Command-line front end.

Commands: ``compute``, ``verify``, ``identify``, ``portfolio``, ``classify``,
``regress``, ``casestudy`` and ``recover``. Every command accepts
``--config FILE`` with flat ``key = value`` lines named after the long
flags (dashes or underscores); explicit flags win over the file.

Exit codes: 0 ok, 2 input error, 3 solver error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from phiquad import errors as E
from phiquad.closed_form import closed_form_quadrangle
from phiquad.divergences import DivergenceSpec, format_spec, parse_spec_with_beta, validate_spec
from phiquad.empirical import EmpiricalDistribution, load_csv
from phiquad.primal import QuadrangleResult, certainty_objective, primal_quadrangle

log = logging.getLogger("phiquad")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
_INPUT_ERRORS = (E.InputError, E.SpecParseError, E.DomainError, E.DegenerateInput,
                 E.HomogeneityError, E.NonsmoothSpecError)
WHICH = ("risk", "deviation", "regret", "error", "statistic", "all")


class VerificationFailed(Exception):
    pass


# ---------------------------------------------------------------- plumbing

def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise E.InputError(f"cannot read config {path}: {exc}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise E.InputError(f"{path}:{num}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _truthy(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise E.InputError(f"expected a boolean, got {text!r}")


def resolve_spec(text: str, beta: float | None) -> tuple[DivergenceSpec, float]:
    """Spec plus beta; beta may ride on the spec string or come from ``--beta``."""
    spec, spec_beta = parse_spec_with_beta(text)
    if beta is not None and spec_beta is not None and beta != spec_beta:
        raise E.InputError(f"beta given twice with different values ({spec_beta} and {beta})")
    beta = beta if beta is not None else spec_beta
    if beta is None:
        if spec.is_homogeneous:
            beta = 1.0
        else:
            raise E.InputError(f"{spec.name} needs a beta (--beta or ':beta=' on the spec)")
    if not beta > 0.0:
        raise E.InputError("beta must be positive")
    return spec, float(beta)


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header plus float matrix from a CSV file."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise E.InputError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise E.InputError(f"{path}: need a header row and data")
    header = [h.strip() for h in rows[0]]
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise E.InputError(f"{path}: header row missing")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise E.InputError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise E.InputError(f"{path}: ragged rows")
    return header, data


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def _split_column(header, data, name, path):
    if name not in header:
        raise E.InputError(f"{path}: missing a {name!r} column")
    j = header.index(name)
    feats = np.delete(data, j, axis=1)
    if feats.shape[1] == 0:
        raise E.InputError(f"{path}: no feature columns")
    return feats, data[:, j]


def _num(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _dump(doc: dict, path) -> None:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.bool_,)):
            return bool(o)
        return _num(o)

    text = json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"
    if path is None:
        return
    Path(path).write_text(text)


# ---------------------------------------------------------------- svg

def svg_scatter(path, points: np.ndarray, weights: np.ndarray, lines=(), size: int = 480,
                title: str = "") -> None:
    """Scatter with grayscale fill: darker points carry larger weights.

    ``lines`` holds ``(slope, intercept)`` pairs drawn across the plot.
    """
    pts = np.asarray(points, dtype=float)[:, :2]
    w = np.asarray(weights, dtype=float)
    pad = 30
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0.0, hi - lo, 1.0)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    span = hi - lo

    def px(x, y):
        return (pad + (x - lo[0]) / span[0] * (size - 2 * pad),
                size - pad - (y - lo[1]) / span[1] * (size - 2 * pad))

    wlo, whi = float(w.min()), float(w.max())
    shade = np.zeros_like(w) if whi - wlo <= 0.0 else (w - wlo) / (whi - wlo)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if lo[1] < 0.0 < hi[1]:
        x0, y0 = px(lo[0], 0.0)
        x1, _ = px(hi[0], 0.0)
        out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="#999"/>')
    if lo[0] < 0.0 < hi[0]:
        x0, y0 = px(0.0, lo[1])
        _, y1 = px(0.0, hi[1])
        out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="#999"/>')
    for (x, y), s in zip(pts, shade):
        g = int(round(230 * (1.0 - s)))
        cx, cy = px(x, y)
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="rgb({g},{g},{g})" stroke="none"/>')
    for slope, icpt in lines:
        xa, ya = px(lo[0], slope * lo[0] + icpt)
        xb, yb = px(hi[0], slope * hi[0] + icpt)
        out.append(f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xb:.2f}" y2="{yb:.2f}" '
                   f'stroke="crimson" stroke-width="1.5"/>')
    if title:
        out.append(f'<text x="{pad}" y="18" font-family="sans-serif" font-size="12">{title}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------- compute / verify

def _values(res: QuadrangleResult) -> dict:
    return res.as_dict()


def _compute(spec, beta, X, route):
    if route == "closed":
        return closed_form_quadrangle(spec, beta, X), None
    if route == "primal":
        return primal_quadrangle(spec, beta, X), None
    from phiquad.dual import dual_regret_oracle, dual_risk_oracle, make_identifier

    base = primal_quadrangle(spec, beta, X)
    risk = dual_risk_oracle(spec, beta, X)
    regret = dual_regret_oracle(spec, beta, X)
    mean = X.mean()
    res = QuadrangleResult(risk.value, max(risk.value - mean, 0.0), regret.value, max(regret.value - mean, 0.0),
                           base.statistic_interval, base.optimal_t, base.optimal_C, beta, spec.name,
                           base.shift, base.regret_t)
    return res, make_identifier(spec, X, risk.weights)


def cmd_compute(args) -> int:
    spec, beta = resolve_spec(args.spec, args.beta)
    X = load_csv(args.data)
    args.stage = f"{args.route} solve"
    res, ident = _compute(spec, beta, X, args.route)
    vals = _values(res)
    keys = ("risk", "deviation", "regret", "error") if args.which in ("all", "statistic") else (args.which,)
    if args.which == "statistic":
        keys = ()
    for k in keys:
        print(f"{k} = {vals[k]!r}")
    if args.which in ("all", "statistic"):
        lo, hi = res.statistic_interval
        print(f"statistic = [{lo!r}, {hi!r}]")
    print(f"C* = {res.optimal_C!r}  t* = {res.optimal_t!r}")
    doc = {
        "command": "compute",
        "spec": format_spec(spec),
        "beta": beta,
        "values": vals,
        "optimizers": {"C": res.optimal_C, "t": res.optimal_t, "shift": res.shift, "regret_t": res.regret_t},
        "diagnostics": {"route": args.route, "which": args.which, "atoms": len(X)},
    }
    if ident is not None:
        print(f"identifier: E[Q] = {ident.mean_weight!r}  E[phi(Q)] = {ident.divergence_value!r}  "
              f"E[XQ] = {ident.attained_objective!r}")
        print("weights = " + ", ".join(f"{q:.10g}" for q in ident.weights))
        doc["identifier"] = {"weights": ident.weights, "mean_weight": ident.mean_weight,
                             "divergence_value": ident.divergence_value}
    _dump(doc, args.out)
    return EXIT_OK


def _axiom_checks(spec, beta, X, res: QuadrangleResult, tol) -> list[tuple[str, bool, str]]:
    out = []
    mean = X.mean()
    c = float(np.round(mean, 6))
    rc = closed_form_quadrangle(spec, beta, EmpiricalDistribution.uniform([c, c]))
    out.append(("constancy R(c) = c", rc.risk == c, f"R({c}) = {rc.risk!r}"))
    if X.is_constant:
        out.append(("aversity", res.deviation == 0.0, "constant X, D = 0"))
    else:
        out.append(("aversity R(X) > E[X]", res.risk - mean > 1e-9, f"R - E = {res.risk - mean:.3g}"))
    out.append(("centerness D = R - E[X]", abs(res.deviation - (res.risk - mean)) <= 1e-7, ""))
    out.append(("centerness E = V - E[X]", abs(res.error - (res.regret - mean)) <= 1e-7, ""))
    lo, hi = X.values.min(), X.values.max()
    grid = np.linspace(lo, hi, 401)
    best = min(certainty_objective(spec, beta, X, s) for s in np.concatenate([grid, res.statistic_interval]))
    out.append(("certainty equivalence R = min_C C + V(X - C)", abs(best - res.risk) <= max(tol, 1e-5),
                f"grid min {best!r}"))
    out.append(("statistic: C + V(X - C) at S equals R",
                abs(certainty_objective(spec, beta, X, res.statistic) - res.risk) <= tol, ""))
    return out


def cmd_verify(args) -> int:
    spec, beta = resolve_spec(args.spec, args.beta)
    X = load_csv(args.data)
    tol = args.tol
    args.stage = "closed form"
    closed = closed_form_quadrangle(spec, beta, X)
    args.stage = "primal"
    primal = primal_quadrangle(spec, beta, X)
    rows = []
    names = ("risk", "deviation", "regret", "error")
    cv, pv = _values(closed), _values(primal)
    for k in names:
        rows.append((f"{k}: closed vs primal", abs(cv[k] - pv[k]), tol))
    for k in ("statistic_lo", "statistic_hi"):
        rows.append((f"{k}: closed vs primal", abs(cv[k] - pv[k]), max(tol, 1e-5)))
    from phiquad.dual import MAX_ORACLE_ATOMS, risk_identifier_from_primal

    if len(X) <= MAX_ORACLE_ATOMS:
        args.stage = "dual oracle"
        dual, ident = _compute(spec, beta, X, "dual")
        dv = _values(dual)
        for k in names:
            rows.append((f"{k}: dual vs primal", abs(dv[k] - pv[k]), tol))
    else:
        print(f"dual oracle skipped: {len(X)} atoms exceeds {MAX_ORACLE_ATOMS}")
    args.stage = "identifier"
    ident = risk_identifier_from_primal(spec, beta, X)
    bad = ident.violations(beta, spec, target=primal.risk, tol=max(tol, 1e-6))
    checks = _axiom_checks(spec, beta, X, primal, tol)
    checks.append(("identifier feasibility and optimality", not bad, "; ".join(bad)))
    report = validate_spec(spec)
    checks.append(("divergence axioms", report.ok, "; ".join(c.name for c in report.failed())))
    notes = []
    if spec.is_homogeneous and not X.is_constant:
        other = closed_form_quadrangle(spec, 2.0 * beta + 1.0, X)
        same = abs(other.risk - closed.risk) <= 1e-12 * (1.0 + abs(closed.risk))
        notes.append(f"beta-independence: risk at beta={2.0 * beta + 1.0:g} is {other.risk!r} "
                     f"({'identical' if same else 'DIFFERENT'})")
        checks.append(("beta-independence", same, ""))

    ok = True
    print(f"{'check':48s} {'gap':>12s} {'tol':>9s}  result")
    for name, gap, t in rows:
        passed = gap <= t
        ok &= passed
        print(f"{name:48s} {gap:12.3e} {t:9.1e}  {'ok' if passed else 'FAIL'}")
    for name, passed, detail in checks:
        ok &= bool(passed)
        print(f"{name:48s} {'':12s} {'':9s}  {'ok' if passed else 'FAIL'}" + (f"  ({detail})" if detail else ""))
    for n in notes:
        print(n)
    _dump({
        "command": "verify",
        "spec": format_spec(spec),
        "beta": beta,
        "values": pv,
        "optimizers": {"C": primal.optimal_C, "t": primal.optimal_t},
        "diagnostics": {"gaps": {n: g for n, g, _ in rows}, "checks": {n: bool(p) for n, p, _ in checks},
                        "notes": notes, "ok": bool(ok)},
    }, args.out)
    if not ok:
        raise VerificationFailed("one or more checks failed")
    return EXIT_OK


def cmd_identify(args) -> int:
    from phiquad.dual import export_identifier_csv, risk_identifier_from_primal

    spec, beta = resolve_spec(args.spec, args.beta)
    X = load_csv(args.data)
    args.stage = "identifier"
    ident = risk_identifier_from_primal(spec, beta, X)
    export_identifier_csv(ident, args.out)
    print(f"E[Q] = {ident.mean_weight!r}  E[phi(Q)] = {ident.divergence_value!r}  "
          f"E[XQ] = {ident.attained_objective!r}")
    return EXIT_OK


# ---------------------------------------------------------------- applications

def _app_outputs(report, args, points, lines, prefix=None) -> None:
    from phiquad.applications import export_identifier

    out = args.out
    if out:
        report.write_json(out)
    plot = prefix or args.emit_plot
    if plot:
        plot = Path(plot)
        export_identifier(report, plot.with_suffix(".csv"))
        svg_scatter(plot.with_suffix(".svg"), points, report.identifier.weights, lines,
                    title=f"{report.problem} {report.spec} beta={report.beta:g}")


def _solver_options(args):
    from phiquad.applications import SolverOptions

    return SolverOptions(phase1_iterations=args.max_iter)


def _run_portfolio(spec, beta, L, args):
    from phiquad.applications import PortfolioProblem, solve_portfolio

    args.stage = "portfolio solve"
    return solve_portfolio(PortfolioProblem(L, spec, beta, long_only=args.long_only), _solver_options(args))


def _run_classify(spec, beta, X, y, args):
    from phiquad.applications import ClassificationProblem, solve_classification

    args.stage = "classification solve"
    return solve_classification(ClassificationProblem(X, y, spec, beta, args.reg_weight), _solver_options(args))


def _run_regress(spec, beta, X, y, args):
    from phiquad.applications import RegressionProblem, solve_regression

    args.stage = "regression solve"
    return solve_regression(RegressionProblem(X, y, spec, beta), _solver_options(args))


def _print_portfolio(rep):
    print("weights = " + ", ".join(f"{w:.7f}" for w in rep.decision["weights"]))
    print(f"risk = {rep.objective!r}")


def _classify_line(rep):
    w, b = rep.decision["w"], rep.decision["b"]
    if w.size == 2 and w[1] != 0.0:
        return [(-w[0] / w[1], b / w[1])]
    return []


def _print_classify(rep):
    w, b = rep.decision["w"], rep.decision["b"]
    print("w = " + ", ".join(f"{v:.7g}" for v in w) + f"  b = {b:.7g}")
    for slope, icpt in _classify_line(rep):
        print(f"decision line: y = {slope:.4f}x + {icpt:.4f}")
    print(f"objective = {rep.objective!r}")


def _print_regress(rr):
    for name, rep in (("A (error over coef, C)", rr.route_a), ("B (deviation, C = statistic)", rr.route_b)):
        coef = rep.decision["coef"]
        print(f"route {name}: coef = " + ", ".join(f"{c:.7g}" for c in coef)
              + f"  intercept = {rep.decision['intercept']:.7g}  objective = {rep.objective!r}")
    print(f"route gap = {rr.objective_gap:.3e}  intercept in statistic: {rr.intercept_contained()}")


def cmd_portfolio(args) -> int:
    spec, beta = resolve_spec(args.spec, args.beta)
    _, L = read_table(args.data)
    rep = _run_portfolio(spec, beta, L, args)
    _print_portfolio(rep)
    _app_outputs(rep, args, L, [])
    return EXIT_OK


def cmd_classify(args) -> int:
    spec, beta = resolve_spec(args.spec, args.beta)
    header, data = read_table(args.data)
    X, y = _split_column(header, data, "label", args.data)
    rep = _run_classify(spec, beta, X, y, args)
    _print_classify(rep)
    _app_outputs(rep, args, X, _classify_line(rep))
    return EXIT_OK


def _regress_outputs(rr, args, X, y, prefix=None):
    out = args.out
    if out:
        rr.write_json(out)
    plot = prefix or args.emit_plot
    if plot:
        from phiquad.applications import export_identifier

        plot = Path(plot)
        rep = rr.route_b
        export_identifier(rep, plot.with_suffix(".csv"))
        lines = [(float(rep.decision["coef"][0]), float(rep.decision["intercept"]))] if X.shape[1] == 1 else []
        svg_scatter(plot.with_suffix(".svg"), np.column_stack([X[:, 0], y]), rep.identifier.weights, lines,
                    title=f"regress {rep.spec} beta={rep.beta:g}")


def cmd_regress(args) -> int:
    spec, beta = resolve_spec(args.spec, args.beta)
    header, data = read_table(args.data)
    X, y = _split_column(header, data, "y", args.data)
    rr = _run_regress(spec, beta, X, y, args)
    _print_regress(rr)
    _regress_outputs(rr, args, X, y)
    return EXIT_OK


def cmd_casestudy(args) -> int:
    from phiquad import applications as A

    which = args.which
    spec, beta = resolve_spec(args.spec or A.CASESTUDY_SPEC, args.beta if args.beta is not None
                              else A.CASESTUDY_BETA[which])
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = outdir / f"{which}_seed{args.seed}"
    args.out = str(stem) + "_report.json"
    plot = Path(str(stem) + "_identifier")
    data_path = Path(str(stem) + "_data.csv")
    if which == "portfolio":
        L = A.casestudy_portfolio_data(args.seed)
        write_table(data_path, ["asset0", "asset1"], L)
        rep = _run_portfolio(spec, beta, L, args)
        _print_portfolio(rep)
        _app_outputs(rep, args, L, [], plot)
    elif which == "classify":
        X, y = A.casestudy_classification_data(args.seed)
        write_table(data_path, ["x0", "x1", "label"], np.column_stack([X, y]))
        rep = _run_classify(spec, beta, X, y, args)
        _print_classify(rep)
        _app_outputs(rep, args, X, _classify_line(rep), plot)
    else:
        X, y = A.casestudy_regression_data(args.seed)
        write_table(data_path, ["x0", "y"], np.column_stack([X, y]))
        rr = _run_regress(spec, beta, X, y, args)
        _print_regress(rr)
        _regress_outputs(rr, args, X, y, plot)
    print(f"bundle written to {outdir}")
    return EXIT_OK


def cmd_recover(args) -> int:
    from phiquad.recovery import ROUTES, recover_divergence

    spec, _ = parse_spec_with_beta(args.spec)
    try:
        Q = [float(v) for v in args.weights.split(",")]
        probs = None if args.probs is None else [float(v) for v in args.probs.split(",")]
    except ValueError:
        raise E.InputError("weights and probs are comma-separated numbers") from None
    routes = ROUTES if args.route == "all" else (args.route,)
    results = {}
    for r in routes:
        args.stage = f"{r} recovery"
        res = recover_divergence(spec, Q, probs, route=r)
        results[r] = res
        print(f"{r:10s} recovered = {res.value:.8f}  direct = {res.truth:.8f}  "
              f"rel.err = {res.relative_error:.2e}" + ("  (grid exhausted)" if res.grid_exhausted else ""))
    _dump({
        "command": "recover",
        "spec": format_spec(spec),
        "beta": None,
        "values": {r: res.value for r, res in results.items()},
        "optimizers": {r: {"X": res.maximizer, "beta": res.beta} for r, res in results.items()},
        "diagnostics": {"truth": next(iter(results.values())).truth,
                        "grid_exhausted": {r: res.grid_exhausted for r, res in results.items()}},
    }, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_common(p, data=True, spec_required=True):
    p.add_argument("--config", help="flat key = value file mirroring these flags")
    p.add_argument("--spec", required=False, default=None,
                   help="divergence, e.g. indicator_cvar:alpha=0.75 (':beta=' allowed)")
    p.add_argument("--beta", type=float, default=None, help="divergence-ball radius")
    if data:
        p.add_argument("--data", default=None, help="input CSV")
    p.add_argument("--out", default=None, help="JSON (or CSV for identify) output path")
    p.set_defaults(_spec_required=spec_required, _data_required=data)


def _add_solver(p):
    p.add_argument("--max-iter", type=int, default=20_000, help="phase-1 subgradient iteration cap")
    p.add_argument("--emit-plot", default=None, help="path prefix for identifier CSV and SVG scatter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phiquad", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="quadrangle elements of one distribution")
    _add_common(p)
    p.add_argument("--which", choices=WHICH, default="all")
    p.add_argument("--route", choices=("closed", "primal", "dual"), default="closed")
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("verify", help="cross-check primal, dual and closed-form routes")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("identify", help="export the risk identifier as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("portfolio", help="min R(w^T L) subject to sum(w) = 1")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--long-only", action="store_true")
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("classify", help="min R(-margin) + reg ||w||^2")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--reg-weight", type=float, default=1.0)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("regress", help="linear regression by error and by deviation")
    _add_common(p)
    _add_solver(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("casestudy", help="regenerate a case-study data set and solve it")
    _add_common(p, data=False, spec_required=False)
    _add_solver(p)
    p.add_argument("--which", choices=("portfolio", "classify", "regress"), default="regress")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--outdir", default="casestudy")
    p.add_argument("--reg-weight", type=float, default=1.0)
    p.add_argument("--long-only", action="store_true")
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("recover", help="recover E[phi(Q)] from quadrangle elements")
    _add_common(p, data=False)
    p.add_argument("--weights", required=False, default=None, help="comma-separated Q, E[Q] = 1")
    p.add_argument("--probs", default=None, help="comma-separated atom probabilities")
    p.add_argument("--route", choices=("risk", "deviation", "regret", "error", "all"), default="all")
    p.set_defaults(func=cmd_recover)
    return parser


def _apply_config(parser, argv):
    """Parse once, fold config values in where the flag was not given, and re-parse."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in known or key in ("help", "config"):
            raise E.InputError(f"{args.config}: unknown key {key!r} for {args.command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _truthy(value)
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except E.PhiQuadError as exc:
        print(f"phiquad: config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    args.stage = "input"
    try:
        if args._spec_required and args.spec is None:
            raise E.InputError("--spec is required")
        if args._data_required and args.data is None:
            raise E.InputError("--data is required")
        if args.command == "recover" and args.weights is None:
            raise E.InputError("--weights is required")
        # argparse converts string defaults, but config values that land on typed flags need the same
        for key in ("beta", "tol", "reg_weight"):
            if isinstance(getattr(args, key, None), str):
                setattr(args, key, float(getattr(args, key)))
        for key in ("max_iter", "seed"):
            if isinstance(getattr(args, key, None), str):
                setattr(args, key, int(getattr(args, key)))
        return args.func(args)
    except VerificationFailed as exc:
        print(f"phiquad {args.command}: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except _INPUT_ERRORS as exc:
        print(f"phiquad {args.command}: {args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"phiquad {args.command}: {args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except E.PhiQuadError as exc:
        print(f"phiquad {args.command}: {args.stage} failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

``bellbound lb``    see-saw lower bound for one state
``bellbound ub``    upper bound (order0 | fixed-trace | semianalytic | sos)
``bellbound scan``  parameter grid, threshold bisection or table reproduction

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .dual import (
    PreconditionError,
    compatible_domain,
    find_threshold,
    order0_bound,
    order0_bound_probability,
    semianalytic_chsh,
    state_dependent_bound,
)
from .linalg import DimensionError, ValidationError
from .model import (
    CORRELATION,
    FAMILIES,
    builtin_inequality,
    evaluate,
    family_state,
    ginibre_state,
    load_state,
    ppt_check,
    resolve_inequality,
)
from .sdp import SdpError
from .seesaw import DEFAULT_SEED, SeesawOptions, make_rng, seesaw
from .sos import SizeError

log = logging.getLogger("bellbound")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

# strict margin used when deciding "violated" from a numerical value
VIOLATION_MARGIN = 1e-8
THRESHOLD_MARGIN = 1e-9
OPEN_EDGE = 1e-3


class CliError(ValidationError):
    pass


# ---------------------------------------------------------------------------
# state and family specifications


def _parse_kv(text):
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            out.setdefault("family", part)
            continue
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_state_spec(spec: str):
    """``family:NAME,d=..,p=..`` or ``file:PATH``; returns (kind, payload).

    Without ``p`` a family spec describes a one-parameter family and the
    payload is a callable ``p -> DensityState``.
    """
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if not path.is_file():
            raise CliError(f"state file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"state file {path}: invalid JSON ({exc})") from exc
        if isinstance(doc, dict) and "family" in doc and "p" not in doc:
            return _family_from_fields(doc)
        return "state", load_state(doc)
    if spec.startswith("family:"):
        fields = _parse_kv(spec[7:])
        if "p" in fields:
            try:
                p = float(fields["p"])
            except ValueError as exc:
                raise CliError(f"bad p in state spec {spec!r}") from exc
            d = int(fields["d"]) if "d" in fields else None
            return "state", family_state(fields.get("family", ""), p, d)
        return _family_from_fields(fields)
    raise CliError(f"state spec must start with 'family:' or 'file:', got {spec!r}")


def _family_from_fields(fields):
    name = fields.get("family", "")
    if name not in FAMILIES:
        raise CliError(f"unknown state family {name!r}; known: {sorted(FAMILIES)}")
    d = int(fields["d"]) if fields.get("d") is not None else None
    if name == "isotropic" and d is None:
        raise CliError("isotropic family needs d")
    fam = (lambda p: family_state(name, p, d))
    fam.name = name
    fam.open_interval = name == "horodecki_h"
    return "family", fam


def _need(kind, payload, want):
    if kind != want:
        raise CliError(f"this command needs a single state (include p=...)" if want == "state"
                       else "this command needs a state family (omit p)")
    return payload


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return f"{x:.17g}"
    return str(x)


def to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        if np.iscomplexobj(o):
            return _jsonable(np.stack([o.real, o.imag], axis=-1))
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        x = float(o)
        return x if math.isfinite(x) else None
    return o


def to_json(doc):
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _emit(text, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _seesaw_opts(args):
    return SeesawOptions(restarts=args.restarts, seed=args.seed, jobs=args.jobs,
                         init_scheme=args.init_scheme)


def lb_report(state, ineq, opts):
    res = seesaw(state, ineq, opts)
    # re-evaluate before claiming a violation
    direct = evaluate(state, ineq, res.settings)
    violated = bool(direct > ineq.beta_lhv + VIOLATION_MARGIN)
    return {
        "kind": "lower-bound",
        "method": "seesaw",
        "inequality": ineq.name,
        "value": direct,
        "beta_lhv": ineq.beta_lhv,
        "violated": violated,
        "settings": res.settings.to_json(),
        "restarts": res.restarts,
        "best_restart": res.best_restart,
        "best_init": res.best_scheme,
        "converged": res.converged,
        "trace": res.traces[res.best_restart],
        "seed": opts.seed,
    }


def ub_result(state, ineq, method, degree=0, jobs=1, force=False):
    if method == "order0":
        if ineq.kind == CORRELATION:
            return order0_bound(state, ineq)
        return order0_bound_probability(state, ineq)
    if method == "fixed-trace":
        if ineq.kind != CORRELATION:
            raise CliError("fixed-trace needs a correlation inequality; use --method sos")
        return state_dependent_bound(state, ineq, jobs=jobs)
    if method == "semianalytic":
        if not (ineq.kind == CORRELATION and ineq.name == "chsh"):
            raise CliError("semianalytic bound is only defined for CHSH")
        res, _ = semianalytic_chsh(state, force=force)
        return res
    if method == "sos":
        return state_dependent_bound(state, ineq.to_probability() if ineq.kind == CORRELATION else ineq,
                                     jobs=jobs, degree=degree)
    raise CliError(f"unknown method {method!r}")


def ub_report(state, ineq, method, degree, jobs, force):
    res = ub_result(state, ineq, method, degree, jobs, force)
    beta = ineq.to_probability().beta_lhv if (method == "sos" and ineq.kind == CORRELATION) else ineq.beta_lhv
    doc = res.to_json()
    doc.update({
        "kind": "upper-bound",
        "inequality": ineq.name,
        "beta_lhv": beta,
        # a bound at or below the classical value rules out any violation
        "no_violation_certified": bool(res.value <= beta + THRESHOLD_MARGIN),
        "degree": degree if method == "sos" else None,
    })
    return doc


def cmd_lb(args):
    ineq = resolve_inequality(args.ineq)
    state = _need(*parse_state_spec(args.state), "state")
    _emit(to_json(lb_report(state, ineq, _seesaw_opts(args))), args.output)


def cmd_ub(args):
    ineq = resolve_inequality(args.ineq)
    state = _need(*parse_state_spec(args.state), "state")
    _emit(to_json(ub_report(state, ineq, args.method, args.degree, args.jobs, args.force)), args.output)


def _grid(fam, points, pmin, pmax):
    lo, hi = pmin, pmax
    if getattr(fam, "open_interval", False):
        lo, hi = max(lo, OPEN_EDGE), min(hi, 1 - OPEN_EDGE)
    return np.linspace(lo, hi, points)


def _ub_gap(fam, ineq, method, degree, jobs):
    """``p -> bound - beta``, with early exit once the bound clearly exceeds beta."""
    beta = ineq.beta_lhv

    def g(p):
        state = fam(p)
        if method in ("fixed-trace", "sos"):
            q = ineq.to_probability() if (method == "sos" and ineq.kind == CORRELATION) else ineq
            res = state_dependent_bound(state, q, target=q.beta_lhv + THRESHOLD_MARGIN,
                                        jobs=jobs, degree=degree)
            return res.value - q.beta_lhv - THRESHOLD_MARGIN
        return ub_result(state, ineq, method, degree, jobs).value - beta - THRESHOLD_MARGIN
    return g


def _lb_gap(fam, ineq, opts):
    return lambda p: seesaw(fam(p), ineq, opts).value - ineq.beta_lhv - THRESHOLD_MARGIN


def cmd_scan(args):
    if args.reproduce:
        text = REPRODUCERS[args.reproduce](args)
        _emit(text, args.output)
        return
    if not args.state or not args.ineq:
        raise CliError("scan needs --ineq and --state (or --reproduce)")
    ineq = resolve_inequality(args.ineq)
    fam = _need(*parse_state_spec(args.state), "family")
    opts = _seesaw_opts(args)
    if args.bisect:
        lo, hi = args.pmin, args.pmax
        if fam.open_interval:
            lo, hi = max(lo, OPEN_EDGE), min(hi, 1 - OPEN_EDGE)
        g = _lb_gap(fam, ineq, opts) if args.bisect == "lb" else _ub_gap(fam, ineq, args.method, args.degree, args.jobs)
        th = find_threshold(g, lo, hi, tol=args.tol, scan_points=args.scan_points)
        rows = [[args.bisect, args.method if args.bisect == "ub" else "seesaw", th.value, th.lo, th.hi,
                 args.tol, th.monotone, th.evaluations]]
        _emit(to_csv(["bound", "method", "threshold", "lo", "hi", "tol", "monotone", "evaluations"], rows),
              args.output)
        return
    methods = [m for m in args.methods.split(",") if m]
    header = ["p"]
    for m in methods:
        header += [m, f"{m}_violated"] if m == "lb" else [f"ub_{m}", f"ub_{m}_no_violation"]
    rows = []
    for p in _grid(fam, args.points, args.pmin, args.pmax):
        state = fam(float(p))
        row = [float(p)]
        for m in methods:
            if m == "lb":
                rep = lb_report(state, ineq, opts)
                row += [rep["value"], rep["violated"]]
            else:
                rep = ub_report(state, ineq, m, args.degree, args.jobs, args.force)
                row += [rep["value"], rep["no_violation_certified"]]
        rows.append(row)
    _emit(to_csv(header, rows), args.output)


# ---------------------------------------------------------------------------
# reproduction targets


def _iso(d):
    fam = lambda p: family_state("isotropic", p, d)  # noqa: E731
    fam.open_interval = False
    return fam


def reproduce_table1(args):
    chsh = builtin_inequality("chsh")
    opts = _seesaw_opts(args)
    ds = list(range(2, min(args.dmax, 5) + 1)) + [d for d in (10, 25, 50) if d <= args.dmax]
    rows = []
    for d in ds:
        fam = _iso(d)
        semi = find_threshold(lambda p: semianalytic_chsh(fam(p))[0].value - 2, tol=args.tol,
                              scan_points=args.scan_points).value
        num = lb = float("nan")
        if d <= args.numeric_dmax:
            num = find_threshold(_ub_gap(fam, chsh, "fixed-trace", 0, args.jobs), tol=args.tol,
                                 scan_points=min(args.scan_points, 5)).value
            lb = find_threshold(_lb_gap(fam, chsh, opts), tol=args.tol,
                                scan_points=min(args.scan_points, 6)).value
        rows.append([d, 1.0 / (d + 1), semi, num, lb])
    return to_csv(["d", "p_ent", "p_ub_semianalytic", "p_ub_numerical", "p_lb"], rows)


def reproduce_fig1(args):
    """Domains of p for the two-qubit family under I3322."""
    ineq = builtin_inequality("i3322")
    fam = lambda p: family_state("cg", p)  # noqa: E731
    opts = _seesaw_opts(args)
    rows = []
    onset = find_threshold(_lb_gap(fam, ineq, opts), 0.5, 1.0, tol=args.tol,
                           scan_points=min(args.scan_points, 6))
    rows.append(["lb_violation", "seesaw", onset.value, 1.0, None])
    for label, deg, prune in (("ub_compatible", 0, False), ("ub_compatible_nondeterministic", 0, True)):
        dom = compatible_domain(fam, ineq, deg, jobs=args.jobs, prune_fixed=prune)
        rows.append([label, f"sos-degree{deg}", dom.lower, dom.upper, dom.solves])
    if args.degree == 2:
        dom = compatible_domain(fam, ineq, 2, jobs=args.jobs)
        rows.append(["ub_compatible", "sos-degree2", dom.lower, dom.upper, dom.solves])
    return to_csv(["domain", "method", "lower", "upper", "solves"], rows)


def reproduce_fig2(args):
    """Bounds for the 3x3 PPT family under Bell-CH."""
    ineq = builtin_inequality("ch")
    opts = _seesaw_opts(args)
    rows = []
    for p in np.linspace(OPEN_EDGE, 1 - OPEN_EDGE, args.points):
        state = family_state("horodecki_h", float(p))
        ppt, min_eig = ppt_check(state)
        ub = state_dependent_bound(state, ineq, jobs=args.jobs).value
        lb = seesaw(state, ineq, opts).value if args.with_lb else float("nan")
        rows.append([float(p), ub, lb, ppt, min_eig])
    return to_csv(["p", "ub_order0", "lb_seesaw", "ppt", "min_eig_pt"], rows)


def reproduce_state_independent(args):
    rng = make_rng(args.seed)
    rows = []
    cases = [("chsh", 2), ("chsh", 3), ("ch", 2), ("i3322", 2)]
    for name, d in cases:
        ineq = builtin_inequality(name)
        vals = []
        for _ in range(args.samples):
            st = ginibre_state(d, d, rng)
            r = order0_bound(st, ineq) if ineq.kind == CORRELATION else order0_bound_probability(st, ineq)
            vals.append(r.value)
        vals = np.array(vals)
        rows.append([name, d, args.samples, float(vals.mean()), float(vals.min()), float(vals.max()),
                     float(vals.max() - vals.min())])
    return to_csv(["inequality", "d", "samples", "mean", "min", "max", "spread"], rows)


REPRODUCERS = {
    "table1": reproduce_table1,
    "fig1-domains": reproduce_fig1,
    "fig2": reproduce_fig2,
    "state-independent-bounds": reproduce_state_independent,
}


# ---------------------------------------------------------------------------
# argument parsing


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--ineq", help="builtin name (chsh, ch, i3322), JSON path or data-dir file")
    common.add_argument("--state", help="family:NAME,d=..,p=.. or file:PATH")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--jobs", type=_positive(int), default=1)
    common.add_argument("--restarts", type=_positive(int), default=20)
    common.add_argument("--init-scheme", choices=["mixed", "povm", "projector"], default="mixed")
    common.add_argument("--output", help="write to this file instead of stdout")
    common.add_argument("--verbose", action="store_true")

    ubopts = argparse.ArgumentParser(add_help=False)
    ubopts.add_argument("--method", choices=["order0", "fixed-trace", "semianalytic", "sos"],
                        default="fixed-trace")
    ubopts.add_argument("--degree", type=int, choices=[0, 2], default=0)
    ubopts.add_argument("--force", action="store_true",
                        help="evaluate the semianalytic bound outside its precondition (heuristic)")

    ap = argparse.ArgumentParser(prog="bellbound", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("lb", parents=[common], help="see-saw lower bound")
    sub.add_parser("ub", parents=[common, ubopts], help="upper bound")
    sc = sub.add_parser("scan", parents=[common, ubopts], help="grid scan, bisection or reproduction")
    sc.add_argument("--reproduce", choices=sorted(REPRODUCERS))
    sc.add_argument("--bisect", choices=["lb", "ub"])
    sc.add_argument("--methods", default="lb,fixed-trace", help="comma list: lb and/or UB methods")
    sc.add_argument("--points", type=_positive(int), default=21)
    sc.add_argument("--pmin", type=float, default=0.0)
    sc.add_argument("--pmax", type=float, default=1.0)
    sc.add_argument("--tol", type=_positive(float), default=1e-5)
    sc.add_argument("--scan-points", type=int, default=20)
    sc.add_argument("--dmax", type=int, default=5)
    sc.add_argument("--numeric-dmax", type=int, default=5,
                    help="largest d for the enumerated numeric and see-saw columns of table1")
    sc.add_argument("--samples", type=_positive(int), default=10)
    sc.add_argument("--with-lb", action="store_true", help="fig2: also run the see-saw")
    return ap


COMMANDS = {"lb": cmd_lb, "ub": cmd_ub, "scan": cmd_scan}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (PreconditionError, ValidationError, DimensionError, SizeError) as exc:
        print(f"bellbound: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SdpError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"bellbound: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

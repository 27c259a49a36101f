"""Command-line front end: ``hardylab <verb> [options]`` prints one JSON report.

Exit status is 0 on success, 2 on invalid input (with an ``error`` object on
stdout) and 1 on an internal failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .duality import DualityFunctional, Family, Side, duality_gap, evaluate_with_argmax
from .gridfn import Extension, GridFunction, InputError, Kind, WeightSpec, lp_energy, weighted_lp
from .hardy_core import check_p, decreasing_rearrangement, sup_kernel_identity_check, verify
from .schrodinger import RadialPotential, certify_finiteness, count_table
from .sharp_estimator import EstimatorConfig, sandwich
from .transform import invert_halfline, log_map, substitute
from .weighted_constants import ConstantVariant, constant, converse_lower_bound

# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------


def _plain(x: Any) -> Any:
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def dumps(report: dict) -> str:
    # json writes floats with repr, the shortest string that parses back exactly
    return json.dumps(_plain(report), allow_nan=False, indent=2) + "\n"


def grid_function_to_json(f: GridFunction) -> dict:
    return {"kind": f.kind.value, "extension": f.extension.value, "csv": f.to_csv()}


def grid_function_from_json(d: dict) -> GridFunction:
    return GridFunction.from_csv(d["csv"], Extension(d["extension"]), Kind(d["kind"]))


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _weight(path: str) -> WeightSpec:
    try:
        return WeightSpec.from_dict(json.loads(_read(path)))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg}") from None


def _potential(path: str, d: int) -> RadialPotential:
    """A single weight, a list of weights, or {"terms": [...]}, summed."""
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg}") from None
    if isinstance(doc, dict) and "terms" in doc:
        doc = doc["terms"]
    items = doc if isinstance(doc, list) else [doc]
    if not all(isinstance(t, dict) for t in items):
        raise InputError("potential JSON must hold weight objects")
    return RadialPotential([WeightSpec.from_dict(t) for t in items], d)


def _function(path: str, extension: str, kind: str = "linear") -> GridFunction:
    return GridFunction.from_csv(_read(path), Extension(extension), Kind(kind))


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------


def _cmd_verify(a) -> dict:
    p = check_p(a.p)
    u = _function(a.u, a.extension)
    out = verify(u, p).to_dict()
    if a.weights or a.v:
        W = _weight(a.weights) if a.weights else WeightSpec.power(1.0, -p)
        V = _weight(a.v) if a.v else WeightSpec.power()
        bound = min(
            constant(V, W, p, ConstantVariant("overline")).upper_bound_on_C,
            constant(V, W, p, ConstantVariant("underline")).upper_bound_on_C,
        )
        lhs = weighted_lp(u, W, p)
        energy = lp_energy(u, p, V)
        rhs = bound * energy if energy else 0.0
        out["weighted"] = {
            "lhs": lhs,
            "energy": energy,
            "constant_upper_bound": bound,
            "bound": rhs,
            "holds": bool(lhs <= rhs * (1 + 1e-9)) or math.isinf(rhs),
        }
    return out


def _cmd_constants(a) -> dict:
    p = check_p(a.p)
    if a.interval_R is not None and a.interval == "full":
        raise InputError("--interval-R needs --interval origin-interval or tail-interval")
    variant = ConstantVariant(a.variant, a.anchor, a.interval, a.interval_R, a.M)
    V, W = _weight(a.v), _weight(a.w)
    out = constant(V, W, p, variant).to_dict()
    if variant.interval.value == "full":
        out["converse_lower_bound"] = converse_lower_bound(V, W, p)
    return out


def _cmd_sharp(a) -> dict:
    p = check_p(a.p)
    cfg = EstimatorConfig(a.eps, a.L, a.n, p, a.max_iter, a.tol)
    return sandwich(_weight(a.v), _weight(a.w), p, cfg).to_dict()


def _cmd_duality(a) -> dict:
    g = _function(a.g, a.extension, a.kind)
    F = DualityFunctional(Family(a.family), a.alpha)
    value, argmax = evaluate_with_argmax(F, g)
    check = None
    if F.family in (Family.NU_UPPER, Family.NU_LOWER):
        side = Side.LOWER if F.family is Family.NU_UPPER else Side.UPPER
        pairing, dual = duality_gap(g, side, F.parameter)
        check = {"pairing_sup": pairing, "parameter_times_value": dual, "gap": dual - pairing}
    return {
        "family": F.family.value,
        "parameter": F.parameter,
        "value": value,
        "argmax_r": None if math.isnan(argmax) else argmax,
        "extremizer_check": check,
    }


def _cmd_transform(a) -> dict:
    p = check_p(a.p)
    if a.op == "invert":
        if not (a.v and a.w):
            raise InputError("invert needs --v and --w")
        Vi, Wi = invert_halfline(_weight(a.v), _weight(a.w), p)
        return {"op": "invert", "V": Vi.to_dict(), "W": Wi.to_dict()}
    if not a.u:
        raise InputError(f"{a.op} needs --u")
    u = _function(a.u, a.extension)
    if a.op == "substitute":
        if not (a.v and a.w):
            raise InputError("substitute needs --v and --w")
        ut, wt = substitute(u, _weight(a.v), _weight(a.w), p)
        return {"op": "substitute", "u_tilde": grid_function_to_json(ut), "W_tilde": grid_function_to_json(wt)}
    if a.R is None:
        raise InputError("logmap needs --R")
    W = _weight(a.w) if a.w else WeightSpec.zero()
    lm = log_map(u, W, a.R)
    out = {"op": "logmap"}
    out.update(lm.to_dict())
    out["f_function"] = grid_function_to_json(lm.f)
    out["w_function"] = grid_function_to_json(lm.w)
    return out


def _ladder(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError("--ladder must be a comma-separated list of radii") from None
    if not vals or not all(v > 0 and math.isfinite(v) for v in vals):
        raise InputError("--ladder radii must be finite and positive")
    return vals


def _cmd_spectrum(a) -> dict:
    if a.dim < 1:
        raise InputError("--dim must be a positive integer")
    if a.lmax < 0:
        raise InputError("--lmax must be nonnegative")
    P = _potential(a.q, a.dim)
    ladder = _ladder(a.ladder)
    table = count_table(P, a.lmax, ladder, a.n)
    counts = [
        {"L": L, "per_ell": [table["per_ell"][L][ell] for ell in sorted(table["per_ell"][L])], "total": table["total"][L]}
        for L in ladder
    ]
    return {"dim": a.dim, "lmax": a.lmax, "counts": counts, "certificate": certify_finiteness(P).to_dict()}


def _cmd_rearrange(a) -> dict:
    f = _function(a.f, a.extension, a.kind)
    fstar = decreasing_rearrangement(f)
    vals, lengths = f.cells()
    svals, slengths = fstar.cells()
    p = check_p(a.p)
    norm = float(np.sum(np.abs(vals[np.isfinite(lengths)]) ** p * lengths[np.isfinite(lengths)]))
    snorm = float(np.sum(svals[np.isfinite(slengths)] ** p * slengths[np.isfinite(slengths)]))
    checks = []
    for r in fstar.r:
        lhs, rhs = sup_kernel_identity_check(fstar, float(r))
        checks.append(abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return {
        "f_star": grid_function_to_json(fstar),
        "p": p,
        "p_norm_p": norm,
        "p_norm_p_rearranged": snorm,
        "sup_kernel_max_rel_gap": max(checks) if checks else 0.0,
    }


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _integer(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hardylab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    ext = [e.value for e in Extension]
    kinds = [k.value for k in Kind]

    v = sub.add_parser("verify", help="both sides of the classical and improved inequalities")
    v.add_argument("--u", required=True, help="CSV r,value of a piecewise-linear u")
    v.add_argument("--p", type=float, required=True)
    v.add_argument("--extension", choices=ext, default=Extension.LINEAR0.value)
    v.add_argument("--weights", help="weight W as JSON; adds a weighted report")
    v.add_argument("--v", help="weight V as JSON (default 1)")
    v.set_defaults(run=_cmd_verify)

    c = sub.add_parser("constants", help="Muckenhoupt-type constants of a weight pair")
    c.add_argument("--v", required=True)
    c.add_argument("--w", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--variant", choices=["overline", "underline"], default="overline")
    c.add_argument("--anchor", choices=["origin", "infinity"], default="origin")
    c.add_argument("--interval", choices=["full", "origin-interval", "tail-interval"], default="full")
    c.add_argument("--interval-R", dest="interval_R", type=float)
    c.add_argument("--M", type=float)
    c.set_defaults(run=_cmd_constants)

    s = sub.add_parser("sharp", help="truncated estimate of the best constant with its bounds")
    s.add_argument("--v", required=True)
    s.add_argument("--w", required=True)
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--L", type=float, default=1e6)
    s.add_argument("--n", type=_integer, default=4000)
    s.add_argument("--max-iter", dest="max_iter", type=_integer, default=5000)
    s.add_argument("--tol", type=float, default=1e-12)
    s.set_defaults(run=_cmd_sharp)

    d = sub.add_parser("duality", help="evaluate a mu or nu functional")
    d.add_argument("--g", required=True, help="CSV r,value of a nonnegative function")
    d.add_argument("--family", choices=[f.value for f in Family], required=True)
    d.add_argument("--alpha", "--beta", dest="alpha", type=float, required=True, help="the family parameter")
    d.add_argument("--kind", choices=kinds, default="linear")
    d.add_argument("--extension", choices=ext, default=Extension.ZERO.value)
    d.set_defaults(run=_cmd_duality)

    t = sub.add_parser("transform", help="inversion, substitution or logarithmic map")
    t.add_argument("--op", choices=["invert", "substitute", "logmap"], required=True)
    t.add_argument("--v")
    t.add_argument("--w")
    t.add_argument("--u")
    t.add_argument("--p", type=float, default=2.0)
    t.add_argument("--R", type=float, help="inner radius for logmap")
    t.add_argument("--extension", choices=ext, default=Extension.LINEAR0.value)
    t.set_defaults(run=_cmd_transform)

    q = sub.add_parser("spectrum", help="negative-eigenvalue counts and a finiteness certificate")
    q.add_argument("--q", required=True, help="potential as a weight JSON, a list of them, or {terms: [...]}")
    q.add_argument("--dim", type=_integer, required=True)
    q.add_argument("--lmax", type=_integer, default=8)
    q.add_argument("--ladder", default="1e2,1e3,1e4")
    q.add_argument("--n", type=_integer, default=2000, help="minimum number of steps of the phase integration")
    q.set_defaults(run=_cmd_spectrum)

    r = sub.add_parser("rearrange", help="decreasing rearrangement with its checks")
    r.add_argument("--f", required=True)
    r.add_argument("--p", type=float, default=2.0)
    r.add_argument("--kind", choices=kinds, default="step")
    r.add_argument("--extension", choices=ext, default=Extension.ZERO.value)
    r.set_defaults(run=_cmd_rearrange)
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    echo = " ".join(["hardylab", *argv])
    start = time.perf_counter()

    def emit(body: dict) -> None:
        report = {"tool_version": __version__, "command_echo": echo}
        report.update(body)
        report["wall_time_ms"] = round((time.perf_counter() - start) * 1e3, 3)
        stdout.write(dumps(report))

    try:
        args = build_parser().parse_args(argv)
        body = args.run(args)
    except InputError as exc:
        emit({"error": {"type": "input", "message": str(exc)}})
        return 2
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - reported, never swallowed silently
        traceback.print_exc(file=stderr)
        emit({"error": {"type": "internal", "message": f"{type(exc).__name__}: {exc}"}})
        return 1
    emit(body)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

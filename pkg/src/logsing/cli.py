"""Command-line entry point: ``logsing <command> [flags]``.

Exit codes: 0 convergent / ok, 2 divergent, 3 inconclusive (or failed
suite checks), 1 usage or runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import cutoff, exponents, quadrature, suite, zeroset
from .errors import DegenerateRay, LabError, PreconditionError
from .poly import SparsePolynomial
from .quadrature import Budget, Kind
from .region import DEFAULT_SEED, Region, resolve_threads, substream
from .report import ReportRow, ReportWriter

COMMANDS = ("integrate", "log-lp", "critical-exponent", "radial", "exponents", "zeroset", "dimension", "cutoff", "suite")

EXIT_OK, EXIT_ERROR, EXIT_DIVERGENT, EXIT_INCONCLUSIVE = 0, 1, 2, 3


@dataclass
class ExperimentSpec:
    command: str
    f: str | None = None
    nvars: int | None = None
    region: list | None = None
    p: float | None = None
    bracket: list | None = None
    tol: float = 0.02
    samples: int | None = None
    j_max: int | None = None
    seed: int = DEFAULT_SEED
    threads: int | None = None
    output: str | None = None
    csv: str | None = None
    eps: list | None = None
    rays: int = 20
    omega: list | None = None
    count: int = 2000
    residual_tol: float = zeroset.RESIDUAL_TOL
    slices: int = 100
    method: str = "both"
    points: list | None = None
    l: float | None = None
    p_prime: float | None = None
    lam: float = 0.0
    alpha: list | None = None
    side_rule: str = "eps"
    points_csv: str | None = None
    cover_csv: str | None = None
    only: list | None = None
    _poly: SparsePolynomial | None = field(default=None, repr=False, compare=False)

    @property
    def polynomial(self) -> SparsePolynomial:
        return self._poly

    @property
    def region_obj(self) -> Region:
        n = self._poly.num_vars if self._poly is not None else 2
        return Region.from_flat(self.region) if self.region else Region.cube(n)

    @property
    def budget(self) -> Budget:
        kw = {}
        if self.samples is not None:
            kw["samples_per_shell"] = int(self.samples)
        if self.j_max is not None:
            kw["j_max"] = int(self.j_max)
        return Budget(**kw)

    def inputs(self) -> dict:
        """Fields that determine the result (not threads or output paths)."""
        skip = {"threads", "output", "csv", "points_csv", "cover_csv", "_poly"}
        d = {k: v for k, v in asdict(self).items() if k not in skip and v is not None}
        if self._poly is not None:
            d["f"] = self._poly.to_text()
            d["nvars"] = self._poly.num_vars
        return d


# -- parsing -------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    return [int(v) for v in _floats(text)]


def _point_list(text: str) -> list:
    return [_floats(chunk) for chunk in str(text).split(";") if chunk.strip()]


_REQUIRES_F = {"integrate", "log-lp", "critical-exponent", "radial", "exponents", "zeroset", "dimension"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--spec", help="flat JSON file with ExperimentSpec fields; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker cap (env THREADS otherwise)")
    common.add_argument("--output", help="JSON-lines report path (appended); stdout by default")
    common.add_argument("--csv", help="CSV summary path (appended)")

    poly = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    poly.add_argument("--f", help='polynomial text, e.g. "x1^2 + x2^4"')
    poly.add_argument("--nvars", type=int, help="number of variables (default: largest index used)")
    poly.add_argument("--region", type=_floats, help="lo1,hi1,lo2,hi2,... (default [-1,1]^n)")

    budget = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    budget.add_argument("--samples", type=int, help="points per refinement depth per replicate")
    budget.add_argument("--j-max", dest="j_max", type=int, help="deepest resolved dyadic level")

    parser = _Parser(prog="logsing", description="Integrability experiments for log|f| of real polynomials.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, parents, helptext):
        return sub.add_parser(name, parents=parents, help=helptext, argument_default=argparse.SUPPRESS)

    p = add("integrate", [common, poly, budget], "verdict on the integral of |grad f / f|^p")
    p.add_argument("--p", type=float)
    p = add("log-lp", [common, poly, budget], "verdict on the integral of |log|f||^p")
    p.add_argument("--p", type=float)
    p = add("critical-exponent", [common, poly, budget], "threshold p for |grad f / f|^p")
    p.add_argument("--bracket", type=_floats, help="p_lo,p_hi (default 0.5,3.5)")
    p.add_argument("--tol", type=float)
    p = add("radial", [common, poly], "one-dimensional blow-up along rays")
    p.add_argument("--omega", type=_floats, help="unit direction; random rays otherwise")
    p.add_argument("--rays", type=int)
    p = add("exponents", [common, poly, budget], "alpha0, beta0, alpha and the margin alpha0 + beta0 - 1")
    p = add("zeroset", [common, poly], "sample the zero set")
    p.add_argument("--count", type=int)
    p.add_argument("--residual-tol", dest="residual_tol", type=float)
    p.add_argument("--points-csv", dest="points_csv", help="write the sampled points here")
    p.add_argument("--slices", type=int, help="also survey monotonicity over this many slices")
    p = add("dimension", [common, poly], "box-counting and tube-volume dimension of Z_f")
    p.add_argument("--method", choices=("box", "volume", "both"))
    p.add_argument("--eps", type=_floats, help="dyadic scales, e.g. 0.125,0.0625,...")
    p.add_argument("--count", type=int)
    p = add("cutoff", [common], "dyadic cutoff partition checks and the L^p' derivative fit")
    p.add_argument("--points", type=_point_list, help='K as "x,y;x,y;..."')
    p.add_argument("--eps", type=_floats)
    p.add_argument("--l", type=float)
    p.add_argument("--p-prime", dest="p_prime", type=float)
    p.add_argument("--lam", type=float, help="Hausdorff content Lambda of K (exact for fixtures)")
    p.add_argument("--alpha", type=_ints, help="multi-index, e.g. 1,0")
    p.add_argument("--side-rule", dest="side_rule", choices=("eps", "content"))
    p.add_argument("--cover-csv", dest="cover_csv", help="export the finest cover here")
    p = add("suite", [common], "run the acceptance list")
    p.add_argument("--only", type=_ints, help="criterion numbers to run")
    return parser


_SPEC_FIELDS = {f.name for f in fields(ExperimentSpec)} - {"_poly"}


def _load_spec_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PreconditionError(f"cannot read spec file {path}: {exc}")
    if not isinstance(data, dict):
        raise PreconditionError("spec file must hold a flat JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - _SPEC_FIELDS)
    if unknown:
        raise PreconditionError(f"unknown spec fields: {', '.join(unknown)}")
    conv = {"region": _floats, "bracket": _floats, "eps": _floats, "omega": _floats, "alpha": _ints, "only": _ints,
            "points": _point_list}
    for k, fn in conv.items():
        if isinstance(data.get(k), str):
            data[k] = fn(data[k])
    return data


_LIST_FLAGS = ("--region", "--bracket", "--eps", "--omega", "--points", "--alpha", "--only")


def _glue_lists(argv: list) -> list:
    """Turn ``--region -1,1`` into ``--region=-1,1`` so negative bounds are not read as flags."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _LIST_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def parse_spec(argv=None) -> ExperimentSpec:
    """Flags override spec-file values, which override defaults; validation happens here."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = vars(build_parser().parse_args(_glue_lists(argv)))
    values = {}
    if "spec" in args:
        values = _load_spec_file(args.pop("spec"))
        if values.get("command", args["command"]) != args["command"]:
            raise PreconditionError(f"spec file is for {values['command']!r}, not {args['command']!r}")
    values.update(args)
    spec = ExperimentSpec(**values)
    _validate(spec)
    return spec


def _check_dyadic(eps) -> None:
    for e in eps:
        j = -math.log2(e) if e > 0 else math.nan
        if not (j >= 0 and abs(j - round(j)) < 1e-12):
            raise PreconditionError(f"eps = {e} is not a dyadic 2^-j")


def _validate(spec: ExperimentSpec) -> None:
    if spec.command not in COMMANDS:
        raise PreconditionError(f"unknown command {spec.command!r}")
    if spec.command in _REQUIRES_F:
        if not spec.f:
            raise PreconditionError(f"{spec.command} needs --f")
        spec._poly = SparsePolynomial.parse(spec.f, spec.nvars)
        region = spec.region_obj
        if region.dim != spec._poly.num_vars:
            raise PreconditionError(f"region has {region.dim} axes, polynomial {spec._poly.num_vars} variables")
        if spec.region is None:
            spec.region = region.to_flat()
    if spec.command in ("integrate", "log-lp") and spec.p is None:
        raise PreconditionError(f"{spec.command} needs --p")
    if spec.p is not None and not spec.p > 0:
        raise PreconditionError("--p must be positive")
    if spec.command == "critical-exponent":
        spec.bracket = list(spec.bracket or [0.5, 3.5])
        if len(spec.bracket) != 2:
            raise PreconditionError("--bracket takes p_lo,p_hi")
    if spec.eps is not None:
        _check_dyadic(spec.eps)
    if spec.command == "cutoff":
        if not spec.points:
            raise PreconditionError("cutoff needs --points")
        if len({len(q) for q in spec.points}) != 1:
            raise PreconditionError("all points of K need the same dimension")
        if spec.l is None or spec.p_prime is None:
            raise PreconditionError("cutoff needs --l and --p-prime")
        spec.eps = list(spec.eps or [2.0**-j for j in range(2, 8)])
        _check_dyadic(spec.eps)
    if spec.threads is not None and spec.threads < 1:
        raise PreconditionError("--threads must be >= 1")
    if spec.samples is not None or spec.j_max is not None:
        spec.budget  # validates
    if spec.rays < 1 or spec.count < 1 or spec.slices < 0:
        raise PreconditionError("--rays and --count must be >= 1, --slices >= 0")


# -- dispatch ---------------------------------------------------------------------
_KIND_EXIT = {Kind.CONVERGENT: EXIT_OK, Kind.DIVERGENT: EXIT_DIVERGENT, Kind.INCONCLUSIVE: EXIT_INCONCLUSIVE}


def _row(spec: ExperimentSpec, payload: dict, bars: dict | None = None, t0: float = 0.0, label: str = "") -> ReportRow:
    return ReportRow(spec.command, spec.inputs(), payload, bars or {}, time.perf_counter() - t0, label=label)


def _run_integral(spec, t0):
    fn = quadrature.integrate_grad_log if spec.command == "integrate" else quadrature.integrate_abs_log
    v = fn(spec.polynomial, spec.p, spec.region_obj, spec.budget, spec.seed, threads=resolve_threads(spec.threads))
    bars = {"value": v.error_bar} if v.error_bar is not None else {}
    if v.fit is not None:
        bars["growth_rate"] = v.fit.stderr
    return [_row(spec, v.to_dict(), bars, t0)], _KIND_EXIT[v.kind]


def _run_critical(spec, t0):
    ce = quadrature.critical_exponent(spec.polynomial, spec.region_obj, tuple(spec.bracket), spec.tol, spec.budget,
                                      spec.seed, threads=resolve_threads(spec.threads))
    return [_row(spec, ce.to_dict(), {"bracket_width": ce.width}, t0)], EXIT_OK


def _run_radial(spec, t0):
    f = spec.polynomial
    rays = [np.asarray(spec.omega, dtype=float)] if spec.omega else list(suite.random_rays(f.num_vars, spec.rays, spec.seed))
    results, degenerate = [], 0
    for w in rays:
        if spec.omega:
            w = w / np.linalg.norm(w)
        try:
            results.append(quadrature.radial_blowup_check(f, w).to_dict())
        except DegenerateRay:
            degenerate += 1
    kinds = {r["kind"] for r in results}
    if not kinds:
        raise DegenerateRay("every ray is degenerate")
    code = _KIND_EXIT[Kind(kinds.pop())] if len(kinds) == 1 else EXIT_INCONCLUSIVE
    payload = {"rays": results, "degenerate": degenerate, "count": len(rays)}
    return [_row(spec, payload, None, t0)], code


def _run_exponents(spec, t0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = exponents.exponent_inequality_report(spec.polynomial, spec.region_obj, spec.budget, spec.seed,
                                                   threads=resolve_threads(spec.threads))
    low = any("r^2" in w for w in rep.warnings)
    return [_row(spec, rep.to_dict(), {"inequality_margin": rep.margin_se}, t0)], EXIT_INCONCLUSIVE if low else EXIT_OK


def _run_zeroset(spec, t0):
    zs = zeroset.sample_zero_set(spec.polynomial, spec.region_obj, spec.count, spec.residual_tol, spec.seed)
    if spec.points_csv:
        with open(spec.points_csv, "w", encoding="utf-8") as fh:
            fh.write(zs.to_csv())
    payload = {
        "accepted": len(zs),
        "max_residual": float(zs.residuals.max()),
        "max_steps": int(zs.steps.max()),
        "bounding_box": [zs.points.min(axis=0).tolist(), zs.points.max(axis=0).tolist()],
    }
    if spec.slices:
        try:
            payload["monotonicity"] = zeroset.monotonicity_survey(spec.polynomial, spec.region_obj, spec.slices, spec.seed).to_dict()
        except PreconditionError:
            pass
    return [_row(spec, payload, None, t0)], EXIT_OK


def _run_dimension(spec, t0):
    f, region = spec.polynomial, spec.region_obj
    zs = zeroset.sample_zero_set(f, region, max(spec.count, 1000), spec.residual_tol, spec.seed)
    rows = []
    if spec.method in ("box", "both"):
        est = zeroset.box_dimension(zs, spec.eps)
        rows.append(_row(spec, {**est.to_dict(), "dim": est.dim_value}, {"slope": est.fit.stderr}, t0, "box"))
    if spec.method in ("volume", "both"):
        est = zeroset.neighborhood_volume_exponent(f, region, spec.eps, seed=spec.seed, zero_sample=zs)
        rows.append(_row(spec, {**est.to_dict(), "dim": est.dim_value}, {"slope": est.fit.stderr}, t0, "volume"))
    return rows, EXIT_OK


def _run_cutoff(spec, t0):
    K = np.array(spec.points, dtype=float)
    n = K.shape[1]
    alpha = tuple(spec.alpha) if spec.alpha else (1,) + (0,) * (n - 1)
    eps = sorted(spec.eps, reverse=True)
    cubes = cutoff.dyadic_cover(K, eps[-1])
    part = cutoff.build_partition(cubes)
    rng = substream(spec.seed, 11)
    x, _ = part.sample_union(rng, 10_000)
    pu = float(np.abs(part.phi_sum(x) - 1.0).max())
    lo, hi = K.min(axis=0) - 2 * eps[0], K.max(axis=0) + 2 * eps[0]
    y = lo + (hi - lo) * rng.random((20_000, n))
    y = y[~part.in_union(y, 1.5)]
    support = int(np.count_nonzero(part.phi_entries(y)[2])) if len(y) else 0
    near = cutoff.build_partition(cutoff.neighborhood_cover(K, eps[-1]))
    z = K[rng.integers(0, len(K), 10_000)] + rng.uniform(-eps[-1] / 4, eps[-1] / 4, (10_000, n))
    chi_one = bool(np.all(near.chi(z) == 1.0))
    flest = cutoff.verify_flest(K, eps, spec.l, spec.p_prime, spec.lam, alpha, seed=spec.seed, side_rule=spec.side_rule)
    if spec.cover_csv:
        with open(spec.cover_csv, "w", encoding="utf-8") as fh:
            fh.write(cutoff.cover_to_csv(cubes))
    ok = pu <= 1e-12 and support == 0 and chi_one
    payload = {
        "cubes": len(cubes),
        "partition_residual": pu,
        "support_violations": support,
        "chi_one_near_K": chi_one,
        "flest": flest.to_dict(),
        "slope": flest.fit.slope,
        "verdict": "ok" if ok else "violated",
    }
    return [_row(spec, payload, {"slope": flest.fit.stderr}, t0)], EXIT_OK if ok else EXIT_INCONCLUSIVE


def _run_suite(spec, t0, writer):
    results = suite.run_suite(spec.seed, resolve_threads(spec.threads), set(spec.only) if spec.only else None,
                              on_result=lambda r: writer.write(r.to_row(spec.seed)))
    summ = suite.summary(results)
    summ["payload_digest"] = suite_digest(writer.rows)
    row = ReportRow("suite", {"check": "summary", "seed": spec.seed, "only": spec.only}, summ, {}, time.perf_counter() - t0,
                    label="summary")
    writer.write(row)
    print(f"suite: {summ['passed']}/{summ['checks']} checks passed", file=sys.stderr)
    return EXIT_OK if summ["failed"] == 0 else EXIT_INCONCLUSIVE


def suite_digest(rows) -> str:
    h = hashlib.sha256()
    for r in rows:
        h.update(r.payload_json().encode())
    return h.hexdigest()


_RUNNERS = {
    "integrate": _run_integral,
    "log-lp": _run_integral,
    "critical-exponent": _run_critical,
    "radial": _run_radial,
    "exponents": _run_exponents,
    "zeroset": _run_zeroset,
    "dimension": _run_dimension,
    "cutoff": _run_cutoff,
}


def run(spec: ExperimentSpec, writer: ReportWriter) -> int:
    t0 = time.perf_counter()
    if spec.command == "suite":
        return _run_suite(spec, t0, writer)
    rows, code = _RUNNERS[spec.command](spec, t0)
    writer.write_all(rows)
    return code


def main(argv=None) -> int:
    try:
        spec = parse_spec(argv)
    except (LabError, ValueError) as exc:
        print(f"logsing: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        with ReportWriter(spec.output, spec.csv) as writer:
            return run(spec, writer)
    except (LabError, ValueError, OSError) as exc:
        print(f"logsing: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

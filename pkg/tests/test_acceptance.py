"""The twelve acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import math
import time
import warnings

import numpy as np
import pytest

from logsing import (
    DegenerateRay,
    Kind,
    Region,
    SparsePolynomial,
    box_dimension,
    build_partition,
    critical_exponent,
    dyadic_cover,
    exponent_inequality_report,
    integrate_abs_log,
    integrate_grad_log,
    max_monotonicity_changes,
    neighborhood_volume_exponent,
    radial_blowup_check,
    sample_zero_set,
    verify_derivative_bound,
    verify_flest,
)
from logsing.cli import main
from logsing.cutoff import neighborhood_cover
from logsing.quadrature import sample_shells
from logsing.report import strip_wall_time
from logsing.suite import _mixed_cover, random_rays

P = SparsePolynomial.parse
XY = P("x1*x2")
DISK = P("x1^2 + x2^2")
ANISO = P("x1^2 + x2^4")
BALL3 = P("x1^2 + x2^2 + x3^2")
QUARTIC3 = P("x1^4 + x2^4 + x3^4 + 2*x1^2*x2^2 + 2*x1^2*x3^2 + 2*x2^2*x3^2")
SEED = 20240611


def test_c01_product_threshold(record_acceptance):
    t0 = time.perf_counter()
    s = sample_shells(XY, seed=SEED)
    low = integrate_grad_log(XY, 0.9, samples=s)
    high = integrate_grad_log(XY, 1.1, samples=s)
    ce = critical_exponent(XY, samples=s, seed=SEED)
    elapsed = time.perf_counter() - t0
    ok = low.kind is Kind.CONVERGENT and high.kind is Kind.DIVERGENT and abs(ce.gamma - 1.0) <= 0.1 and elapsed <= 60
    record_acceptance(1, ok, f"x1*x2: p=0.9 {low.kind.value}, p=1.1 {high.kind.value}, "
                             f"gamma*={ce.gamma:.3f} (oracle 1.0), {elapsed:.1f}s")
    assert ok


def test_c02_example_family_thresholds(record_acceptance):
    t0 = time.perf_counter()
    got = {}
    for name, f, oracle, tol in (("x1^2+x2^2", DISK, 2.0, 0.1), ("x1^2+x2^4", ANISO, 1.5, 0.1),
                                 ("x1^2+x2^2+x3^2", BALL3, 3.0, 0.15)):
        got[name] = (critical_exponent(f, seed=SEED).gamma, oracle, tol)
    elapsed = time.perf_counter() - t0
    ok = all(abs(g - o) <= t for g, o, t in got.values()) and elapsed <= 600
    record_acceptance(2, ok, ", ".join(f"{k} {g:.3f} (oracle {o})" for k, (g, o, _) in got.items()) + f", {elapsed:.1f}s")
    assert ok


def test_c03_codimension_blowup(record_acceptance):
    s = sample_shells(BALL3, seed=SEED)
    at3 = integrate_grad_log(BALL3, 3.0, samples=s)
    at27 = integrate_grad_log(BALL3, 2.7, samples=s)
    ok = at3.kind is Kind.DIVERGENT and at27.kind is Kind.CONVERGENT
    record_acceptance(3, ok, f"|x|^2 in R^3: p=3.0 {at3.kind.value}, p=2.7 {at27.kind.value}")
    assert ok


def test_c04_w11_instances(record_acceptance):
    got = {name: integrate_grad_log(f, 1.0, seed=SEED)
           for name, f in (("disk", DISK), ("aniso", ANISO), ("ball3", BALL3), ("|x|^4", QUARTIC3))}
    ok = all(v.kind is Kind.CONVERGENT for v in got.values())
    record_acceptance(4, ok, ", ".join(f"{k} {v.kind.value} {v.value:.2f}" for k, v in got.items()))
    assert ok


def test_c05_log_lp(record_acceptance):
    kinds = {}
    for name, f in (("x1*x2", XY), ("x1^2+x2^4", ANISO)):
        s = sample_shells(f, seed=SEED)
        for p in (1.0, 2.0, 4.0):
            kinds[(name, p)] = integrate_abs_log(f, p, samples=s).kind
    one_d = integrate_abs_log(P("x1"), 1.0, seed=SEED)
    ok = all(k is Kind.CONVERGENT for k in kinds.values()) and one_d.kind is Kind.CONVERGENT \
        and abs(one_d.value - 2.0) <= 0.04
    n_conv = sum(k is Kind.CONVERGENT for k in kinds.values())
    record_acceptance(5, ok, f"{n_conv}/6 CONVERGENT; 1D integral {one_d.value:.4f} (oracle 2)")
    assert ok


def test_c06_radial_rigidity(record_acceptance):
    summary = {}
    ok = True
    for name, f in (("x1^2+x2^2", DISK), ("x1*x2", XY)):
        kinds, degenerate = [], 0
        for w in random_rays(2, 20, SEED):
            try:
                kinds.append(radial_blowup_check(f, w).kind)
            except DegenerateRay:
                degenerate += 1
        ok &= bool(kinds) and all(k is Kind.DIVERGENT for k in kinds)
        summary[name] = (sum(k is Kind.DIVERGENT for k in kinds), len(kinds), degenerate)
    record_acceptance(6, ok, ", ".join(f"{k} {d}/{n} DIVERGENT ({g} degenerate)" for k, (d, n, g) in summary.items()))
    assert ok


@pytest.fixture(scope="module")
def exponent_reports():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {name: exponent_inequality_report(f, seed=SEED) for name, f in
                (("disk", DISK), ("aniso", ANISO), ("ball3", BALL3))}


def test_c07_exponent_inequality(record_acceptance, exponent_reports):
    oracles = {"disk": 0.5, "aniso": 0.5, "ball3": 1.0}
    margins = {k: r.inequality_margin for k, r in exponent_reports.items()}
    ok = all(m >= -0.1 and abs(m - oracles[k]) <= 0.15 for k, m in margins.items())
    record_acceptance(7, ok, ", ".join(f"{k} margin {m:.3f} (oracle {oracles[k]})" for k, m in margins.items()))
    assert ok


def test_c08_lojasiewicz_fits(record_acceptance, exponent_reports):
    disk, aniso = exponent_reports["disk"], exponent_reports["aniso"]
    fits = [disk.alpha_dist, disk.beta0, aniso.beta0]
    ok = (
        abs(disk.alpha_dist.slope - 2.0) <= 0.1
        and abs(disk.beta0.slope - 0.5) <= 0.05
        and abs(aniso.beta0.slope - 0.75) <= 0.05
        and min(f.r_squared for f in fits) >= 0.95
    )
    record_acceptance(8, ok, f"disk alpha {disk.alpha_dist.slope:.3f}, beta0 {disk.beta0.slope:.3f}; "
                             f"aniso beta0 {aniso.beta0.slope:.3f}; min r^2 {min(f.r_squared for f in fits):.4f}")
    assert ok


def test_c09_dimensions(record_acceptance):
    rows = {}
    ok = True
    for name, f, oracle in (("{0}", DISK, 0.0), ("axes", XY, 1.0), ("line in R^3", P("x1^2 + x2^2", 3), 1.0)):
        region = Region.cube(f.num_vars)
        zs = sample_zero_set(f, region, 4000, seed=SEED)
        box = box_dimension(zs).dim_value
        vol = neighborhood_volume_exponent(f, region, seed=SEED, zero_sample=zs).dim_value
        proj = box_dimension(zs.project(0)).dim_value
        ok &= abs(box - oracle) <= 0.15 and abs(vol - oracle) <= 0.15 and proj <= box + 0.2
        rows[name] = (box, vol, proj)
    record_acceptance(9, ok, ", ".join(f"{k} box {b:.2f} vol {v:.2f} proj {p:.2f}" for k, (b, v, p) in rows.items()))
    assert ok


def test_c10_monotonicity(record_acceptance):
    got = {}
    ok = True
    for name, f, check in (("x1^2+x2^2", DISK, lambda m: m == 1), ("x1^3-x1*x2", P("x1^3 - x1*x2"), lambda m: m <= 2),
                           ("x1*x2", XY, lambda m: m == 0)):
        m = max_monotonicity_changes(f, slice_count=200, seed=SEED)
        ok &= check(m) and m <= max(f.degree_in(0) - 1, 0)
        got[name] = m
    record_acceptance(10, ok, ", ".join(f"{k} M={m}" for k, m in got.items()))
    assert ok


def test_c11_cutoff_suite(record_acceptance):
    rng = np.random.default_rng(SEED)
    t = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
    K = np.c_[np.cos(t), np.sin(t)]
    part = build_partition(dyadic_cover(K, 2.0**-4))
    x, _ = part.sample_union(rng, 10_000)
    residual = float(np.abs(part.phi_sum(x) - 1.0).max())
    y = rng.uniform(-1.5, 1.5, (40_000, 2))
    y = y[~part.in_union(y, 1.5)][:10_000]
    violations = int(np.count_nonzero(part.phi_entries(y)[2]))
    eps = 2.0**-4
    near = build_partition(neighborhood_cover(K, eps))
    z = K[rng.integers(0, len(K), 10_000)] + rng.uniform(-eps / 4, eps / 4, (10_000, 2))
    chi_one = bool(np.all(near.chi(z) == 1.0))
    mixed = build_partition(_mixed_cover())
    spreads = [verify_derivative_bound(mixed, a, seed=SEED).spread for a in ((1, 0), (0, 1), (2, 0), (1, 1))]
    scales = [2.0**-j for j in range(2, 8)]
    flest = verify_flest([[0.0, 0.0]], scales, 1.5, 1.2, 0.0, seed=SEED)
    content = verify_flest([[0.0, 0.0]], scales, 1.5, 1.2, 0.0, seed=SEED, side_rule="content")
    oracle = 2 / 1.2 - 1
    ok = (
        residual <= 1e-12
        and violations == 0
        and chi_one
        and max(spreads) <= 3.0
        and abs(flest.fit.slope - oracle) <= 0.2
        and flest.fit.r_squared >= 0.9
        and content.bound_holds
    )
    record_acceptance(11, ok, f"PU residual {residual:.1e}, support violations {violations}, chi=1 near K {chi_one}, "
                              f"max spread {max(spreads):.2f}, flest slope {flest.fit.slope:.3f} (oracle {oracle:.3f}, "
                              f"r^2 {flest.fit.r_squared:.4f}), content-cover bound {content.bound_holds}")
    assert ok


def test_c12_suite_determinism(record_acceptance, tmp_path):
    codes, runs = [], []
    for k in range(2):
        out = tmp_path / f"suite{k}.jsonl"
        codes.append(main(["suite", "--output", str(out)]))
        runs.append([strip_wall_time(line) for line in out.read_text().splitlines()])
    identical = runs[0] == runs[1]
    record_acceptance(12, identical, f"{len(runs[0])} rows per run, byte-identical payloads {identical}, "
                                     f"exit codes {codes}")
    assert identical
    assert codes == [0, 0]

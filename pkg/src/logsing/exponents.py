"""Empirical Łojasiewicz and singularity exponents at the origin.

Probes are placed at coordinatewise log-uniform offsets, both around the
origin and around sampled zeros, so that monomial approach curves
x_i ~ t^(a_i) are visited at every scale.  The distance and gradient
exponents are read off binned lower envelopes; the singularity exponent
comes from sublevel volumes of the dyadic shell sampler.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSample, PreconditionError
from .fitting import MIN_FIT_POINTS, ExponentFit, fit_line, trim_levels
from .poly import SparsePolynomial
from .quadrature import Budget, sample_shells
from .region import DEFAULT_SEED, Region, substream
from .zeroset import ZeroSample, box_dimension, distances, sample_zero_set

PROBES = 40000
MAX_OFFSET_LEVEL = 40
DIST_LEVELS = (1, 20)
VALUE_LEVELS = (1, 30)


class LowConfidence(UserWarning):
    """A fitted exponent has r^2 below the confidence floor."""


def _flag(fit: ExponentFit, what: str) -> ExponentFit:
    if fit.low_confidence:
        warnings.warn(f"{what}: r^2 = {fit.r_squared:.3f} below 0.9", LowConfidence, stacklevel=3)
    return fit


def multiscale_probes(
    region: Region, sample: ZeroSample | None, count: int, seed: int, max_level: int = MAX_OFFSET_LEVEL
) -> np.ndarray:
    """Points c + (+-2^-k_i u_i)_i with k_i uniform in [0, max_level], u_i in [1, 2).

    Half the centres are the origin, the other half sampled zeros (when a
    sample is given).  Points outside the region are dropped.
    """
    rng = substream(seed, 5)
    n = region.dim
    k = rng.uniform(0.0, max_level, size=(count, n))
    off = np.exp2(-k) * rng.choice([-1.0, 1.0], size=(count, n))
    centres = np.zeros((count, n))
    if sample is not None and len(sample):
        half = count // 2
        centres[half:] = sample.points[rng.integers(0, len(sample), size=count - half)]
    x = centres + off
    return x[region.contains(x)]


def _envelope(x: np.ndarray, y: np.ndarray, bins: tuple) -> tuple:
    """Per integer bin floor(-x) in [lo, hi]: the point with minimal y."""
    b = np.floor(-x).astype(np.int64)
    keep = (b >= bins[0]) & (b <= bins[1]) & np.isfinite(y)
    b, x, y = b[keep], x[keep], y[keep]
    order = np.lexsort((y, b))
    b, x, y = b[order], x[order], y[order]
    first = np.r_[True, b[1:] != b[:-1]]
    return b[first], x[first], y[first]


def _fit_envelope(levels, x, y, note: str) -> ExponentFit:
    kept = set(trim_levels(list(levels)))
    sel = np.array([lv in kept for lv in levels], dtype=bool)
    if sel.sum() < MIN_FIT_POINTS:
        raise InsufficientSample(f"{note}: only {int(sel.sum())} envelope levels after trimming")
    return fit_line(x[sel], y[sel], min_points=MIN_FIT_POINTS, note=note)


def loja_distance_exponent(
    f: SparsePolynomial,
    region: Region | None = None,
    sample: ZeroSample | None = None,
    probes: int = PROBES,
    seed: int = DEFAULT_SEED,
) -> ExponentFit:
    """alpha-hat: slope of log2 min|f| against log2 dist(x, Z_f), per dyadic distance bin."""
    region = region or Region.cube(f.num_vars)
    sample = sample if sample is not None else sample_zero_set(f, region, 2000, seed=seed)
    if len(sample) == 0:
        raise InsufficientSample("empty zero sample")
    x = multiscale_probes(region, sample, probes, seed)
    d = distances(f, x, sample)
    val = np.abs(f.evaluate(x))
    ok = (d > 0) & (val > 0)
    lv, lx, ly = _envelope(np.log2(d[ok]), np.log2(val[ok]), DIST_LEVELS)
    return _flag(_fit_envelope(lv, lx, ly, "log2 min|f| vs log2 dist"), "distance exponent")


def _shortcut_fit(grad0: float) -> ExponentFit:
    return ExponentFit(
        slope=0.0,
        intercept=math.log2(grad0),
        r_squared=1.0,
        window=(0.0, 0.0),
        point_count=0,
        note="gradient nonzero at 0; beta0 = 0",
    )


def loja_gradient_exponent(
    f: SparsePolynomial,
    sample: ZeroSample | None = None,
    probes: int = PROBES,
    seed: int = DEFAULT_SEED,
    region: Region | None = None,
) -> ExponentFit:
    """beta0-hat: slope of the lower envelope of log2|grad f| against log2|f|."""
    region = region or Region.cube(f.num_vars)
    _, g0 = f.value_and_gradient(np.zeros((1, f.num_vars)))
    grad0 = float(np.linalg.norm(g0[0]))
    if grad0 > 0:
        return _shortcut_fit(grad0)
    x = multiscale_probes(region, sample, probes, seed)
    val, grad = f.value_and_gradient(x)
    val = np.abs(val)
    gn = np.linalg.norm(grad, axis=1)
    ok = (val > 0) & (gn > 0)
    lv, lx, ly = _envelope(np.log2(val[ok]), np.log2(gn[ok]), VALUE_LEVELS)
    return _flag(_fit_envelope(lv, lx, ly, "log2 min|grad f| vs log2|f|"), "gradient exponent")


def sublevel_volumes(f: SparsePolynomial, region: Region | None = None, budget: Budget | None = None, seed: int = DEFAULT_SEED, threads=None) -> tuple:
    """(j, v(2^-j)) for j = 0..j_max+1, where v(t) = |{x in U : |f(x)| <= t}|."""
    samples = sample_shells(f, region, budget, seed, threads)
    j_max = samples.budget.j_max
    per = []
    for rep in samples.replicates:
        lv = rep.levels
        sel = lv >= 0
        shell = np.bincount(lv[sel], weights=rep.weights[sel], minlength=j_max + 1)[: j_max + 1]
        tail = np.cumsum(shell[::-1])[::-1] + rep.beyond_volume
        per.append(np.r_[tail, rep.beyond_volume])
    per = np.array(per)
    return np.arange(j_max + 2), per.mean(axis=0), per


def singularity_exponent(
    f: SparsePolynomial,
    region: Region | None = None,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    threads=None,
) -> ExponentFit:
    """alpha0-hat: the exponent theta in v(t) ~ c t^theta (1 + ln 1/t)^k.

    Sublevel volumes of polynomials grow like a power of t times an integer
    power k < n of log(1/t).  Each k is tried; the one with the smallest
    residual is kept and theta is the slope of log2(v / (1 + ln 1/t)^k)
    against log2 t.  Under v(t) ~ t^theta, |f|^-a is integrable iff a < theta.
    """
    if f.is_zero:
        raise PreconditionError("f is identically zero")
    levels, vols, _ = sublevel_volumes(f, region, budget, seed, threads)
    keep = trim_levels([j for j, v in zip(levels, vols) if v > 0])
    if len(keep) < MIN_FIT_POINTS:
        raise InsufficientSample("too few non-empty sublevel sets")
    keep = np.array(keep)
    x = -keep.astype(float)
    logv = np.log2(vols[keep])
    loglog = np.log2(1.0 + keep * math.log(2.0))
    best = None
    for k in range(f.num_vars):
        fit = fit_line(x, logv - k * loglog, min_points=MIN_FIT_POINTS, note=f"log2 v(t) vs log2 t, log power k={k}")
        ss = (1.0 - fit.r_squared) * np.sum((logv - k * loglog - np.mean(logv - k * loglog)) ** 2)
        if best is None or ss < best[0] - 1e-12:
            best = (ss, fit)
    return _flag(best[1], "singularity exponent")


@dataclass(frozen=True)
class ExponentReport:
    alpha0: ExponentFit
    beta0: ExponentFit
    alpha_dist: ExponentFit
    inequality_margin: float
    margin_se: float
    codim_estimate: float
    warnings: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0.to_dict(),
            "beta0": self.beta0.to_dict(),
            "alpha_dist": self.alpha_dist.to_dict(),
            "inequality_margin": self.inequality_margin,
            "margin_se": self.margin_se,
            "codim_estimate": self.codim_estimate,
            "warnings": list(self.warnings),
        }


def exponent_inequality_report(
    f: SparsePolynomial,
    region: Region | None = None,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    probes: int = PROBES,
    threads=None,
) -> ExponentReport:
    """alpha0-hat + beta0-hat - 1, with the zero-set codimension checked on the side."""
    region = region or Region.cube(f.num_vars)
    notes = []
    zs = sample_zero_set(f, region, 2000, seed=seed)
    try:
        codim = f.num_vars - box_dimension(zs).dim_value
    except InsufficientSample:
        codim = float("nan")
    if not codim >= 1.5:
        notes.append(f"zero set codimension estimate {codim:.2f} < 2; the inequality is not claimed here")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LowConfidence)
        a0 = singularity_exponent(f, region, budget, seed, threads)
        b0 = loja_gradient_exponent(f, zs, probes, seed, region)
        ad = loja_distance_exponent(f, region, zs, probes, seed)
    notes += [str(w.message) for w in caught if issubclass(w.category, LowConfidence)]
    for msg in notes:
        warnings.warn(msg, LowConfidence if "r^2" in msg else UserWarning, stacklevel=2)
    return ExponentReport(
        alpha0=a0,
        beta0=b0,
        alpha_dist=ad,
        inequality_margin=a0.value + b0.value - 1.0,
        margin_se=math.hypot(a0.stderr, b0.stderr),
        codim_estimate=float(codim),
        warnings=tuple(notes),
    )

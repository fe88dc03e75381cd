"""Numerical access to the zero set Z_f: descent sampling, distances, dimensions.

Distances are *heuristic* upper estimates: the distance to the nearest
sampled zero, improved by sliding that zero along Z_f toward the query
point.  The reported lower value is simply upper/2 and is not certified.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyAfterBudget,
    IdenticallyZeroSlice,
    InsufficientSample,
    PreconditionError,
)
from .fitting import ExponentFit, fit_line
from .poly import ZERO_RTOL, SparsePolynomial
from .region import DEFAULT_SEED, Region, substream

RESIDUAL_TOL = 1e-10
POLISH_STEPS = 60
_MULTIPLIERS = (8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 0.0625)


@dataclass(frozen=True)
class ZeroSample:
    points: np.ndarray
    residuals: np.ndarray
    steps: np.ndarray
    residual_tol: float
    region: Region

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def project(self, drop: int = 0) -> "ZeroSample":
        """Coordinate projection forgetting axis ``drop`` (default: the first)."""
        keep = [i for i in range(self.dim) if i != drop]
        reg = Region(tuple(self.region.lo[i] for i in keep), tuple(self.region.hi[i] for i in keep))
        return ZeroSample(self.points[:, keep], self.residuals, self.steps, self.residual_tol, reg)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["residual", "steps"])
        for x, r, s in zip(self.points, self.residuals, self.steps):
            w.writerow([repr(float(v)) for v in x] + [repr(float(r)), int(s)])
        return buf.getvalue()


def _newton_project(f: SparsePolynomial, x: np.ndarray, steps: int, tol: float) -> tuple:
    """Damped Newton iterations for f = 0.

    Each step tries the least-norm direction f grad f / |grad f|^2 and the
    one-coordinate Newton directions, each scaled by t in {8, 4, 2, 1, 1/2,
    ...}, and keeps the candidate with the smallest |f|; ties go to the
    shorter move, i.e. the nearer branch.  Overrelaxation and axis moves keep
    convergence fast at zeros of high or mixed order.  Points whose |f|
    stops decreasing are frozen.
    """
    x = x.copy()
    vals, grads = f.value_and_gradient(x)
    hit = np.full(len(x), -1)
    hit[np.abs(vals) <= tol] = 0
    frozen = np.zeros(len(x), dtype=bool)
    for it in range(1, steps + 1):
        g2 = np.sum(grads**2, axis=1)
        live = (vals != 0) & (g2 > 0) & ~frozen
        if not live.any():
            break
        idx = np.flatnonzero(live)
        v, g = vals[idx], grads[idx]
        best_x, best_v = x[idx], np.abs(v)
        best_len = np.full(len(idx), np.inf)
        dirs = [(v / g2[idx])[:, None] * g]
        for i in range(x.shape[1]):
            axis = np.zeros_like(g)
            nz = g[:, i] != 0
            axis[nz, i] = v[nz] / g[nz, i]
            dirs.append(axis)
        for step in dirs:
            for t in _MULTIPLIERS:
                cand = x[idx] - t * step
                cv = np.abs(f.evaluate(cand))
                length = t * np.linalg.norm(step, axis=1)
                better = (cv < best_v) | ((cv == best_v) & (length < best_len))
                best_x = np.where(better[:, None], cand, best_x)
                best_v = np.where(better, cv, best_v)
                best_len = np.where(better, length, best_len)
        frozen[idx] = best_v >= np.abs(v)
        x[idx] = best_x
        vals[idx], grads[idx] = f.value_and_gradient(best_x)
        hit[(hit < 0) & (np.abs(vals) <= tol)] = it
    return x, vals, hit


def sample_zero_set(
    f: SparsePolynomial,
    region: Region | None = None,
    count: int = 2000,
    residual_tol: float = RESIDUAL_TOL,
    seed: int = DEFAULT_SEED,
    max_rounds: int = 10,
) -> ZeroSample:
    """Descend from uniform random starts onto Z_f; keep points with |f| <= residual_tol inside U."""
    region = region or Region.cube(f.num_vars)
    if region.dim != f.num_vars:
        raise PreconditionError("region and polynomial dimensions differ")
    rng = substream(seed, 2)
    pts, res, steps = [], [], []
    got = 0
    for _ in range(max_rounds):
        starts = region.uniform(rng, count)
        x, vals, hit = _newton_project(f, starts, POLISH_STEPS, residual_tol)
        ok = (np.abs(vals) <= residual_tol) & region.contains(x)
        pts.append(x[ok])
        res.append(np.abs(vals[ok]))
        steps.append(hit[ok])
        got += int(ok.sum())
        if got >= count:
            break
    points = np.concatenate(pts)[:count]
    if len(points) < max(1, count // 10):
        raise EmptyAfterBudget(f"only {len(points)} of {count} zero-set points accepted")
    return ZeroSample(points, np.concatenate(res)[:count], np.concatenate(steps)[:count], residual_tol, region)


# -- distances --------------------------------------------------------------------
def distances(f: SparsePolynomial, x, sample: ZeroSample, neighbours: int = 3, slides: int = 3) -> np.ndarray:
    """Upper estimates of dist(x, Z_f) for an (m, n) array of query points."""
    if len(sample) == 0:
        raise InsufficientSample("empty zero sample")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tree = cKDTree(sample.points)
    k = min(neighbours, len(sample))
    d, idx = tree.query(x, k=k)
    d = d.reshape(len(x), k)
    idx = idx.reshape(len(x), k)
    best = d[:, 0].copy()
    tol = max(sample.residual_tol, 1e-12)
    for col in range(k):
        z = sample.points[idx[:, col]]
        for _ in range(slides):
            _, g = f.value_and_gradient(z)
            g2 = np.sum(g**2, axis=1)
            move = x - z
            regular = g2 > 1e-24
            normal = np.zeros_like(move)
            normal[regular] = (np.sum(move[regular] * g[regular], axis=1) / g2[regular])[:, None] * g[regular]
            y = z + np.where(regular[:, None], move - normal, 0.0)
            y, vals, _ = _newton_project(f, y, 12, tol)
            good = np.abs(vals) <= tol
            dist = np.linalg.norm(x - y, axis=1)
            better = good & (dist < best)
            best[better] = dist[better]
            z = np.where(good[:, None], y, z)
    return best


def distance_to_zero(f: SparsePolynomial, x: Sequence[float], sample: ZeroSample) -> tuple:
    """(lower, upper) heuristic bracket for dist(x, Z_f); lower = upper / 2."""
    upper = float(distances(f, np.asarray(x, dtype=float)[None, :], sample)[0])
    return upper / 2.0, upper


# -- dimensions ---------------------------------------------------------------------
@dataclass(frozen=True)
class DimensionEstimate:
    fit: ExponentFit
    dim_value: float
    method: str
    ambient_dim: int

    @property
    def codim(self) -> float:
        return self.ambient_dim - self.dim_value

    def to_dict(self) -> dict:
        return {"method": self.method, "dim": self.dim_value, "ambient_dim": self.ambient_dim, "fit": self.fit.to_dict()}


def dyadic_levels(lo: int, hi: int) -> list:
    """Side lengths 2^-lo, ..., 2^-hi."""
    return [2.0**-j for j in range(lo, hi + 1)]


def _check_eps(eps_range) -> np.ndarray:
    eps = np.asarray(eps_range, dtype=float)
    if len(eps) < 4:
        raise InsufficientSample("need at least 4 dyadic scales")
    j = -np.log2(eps)
    if np.any(np.abs(j - np.round(j)) > 1e-12):
        raise PreconditionError("scales must be powers of two")
    return eps


def box_dimension(sample: ZeroSample, eps_range=None) -> DimensionEstimate:
    """Slope of log2(occupied dyadic boxes) against log2(1/eps)."""
    eps = _check_eps(eps_range if eps_range is not None else dyadic_levels(1, 8))
    if len(sample) < 1000:
        raise InsufficientSample(f"box counting needs at least 1000 points, got {len(sample)}")
    counts = []
    for e in eps:
        cells = np.floor(sample.points / e).astype(np.int64)
        counts.append(len(np.unique(cells, axis=0)))
    fit = fit_line(-np.log2(eps), np.log2(counts), note="log2 boxes vs log2(1/eps)")
    dim = float(min(max(fit.slope, 0.0), sample.dim))
    return DimensionEstimate(fit, dim, "BOX_COUNT", sample.dim)


def neighborhood_volume_exponent(
    f: SparsePolynomial,
    region: Region | None = None,
    eps_range=None,
    samples: int = 20000,
    seed: int = DEFAULT_SEED,
    zero_sample: ZeroSample | None = None,
) -> DimensionEstimate:
    """Fit |N_eps(Z_f) cap U| ~ eps^(n - l) and report l = n - slope.

    Query points are drawn uniformly from the dyadic cells (side eps) that
    neighbour a sampled zero, which contain the whole eps-tube.
    """
    region = region or Region.cube(f.num_vars)
    eps = _check_eps(eps_range if eps_range is not None else dyadic_levels(3, 8))
    zs = zero_sample if zero_sample is not None else sample_zero_set(f, region, 4000, seed=seed)
    n = f.num_vars
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T
    vols = []
    for i, e in enumerate(eps):
        rng = substream(seed, 3, i)
        base = np.unique(np.floor(zs.points / e).astype(np.int64), axis=0)
        cells = np.unique((base[:, None, :] + offsets[None, :, :]).reshape(-1, n), axis=0)
        pick = rng.integers(0, len(cells), size=samples)
        x = (cells[pick] + rng.random((samples, n))) * e
        inside = region.contains(x)
        hit = np.zeros(samples, dtype=bool)
        if inside.any():
            hit[inside] = distances(f, x[inside], zs) < e
        vols.append(len(cells) * e**n * hit.mean())
    vols = np.array(vols)
    if np.any(vols <= 0):
        raise InsufficientSample("an eps-tube came out empty; increase samples")
    fit = fit_line(np.log2(eps), np.log2(vols), note="log2 |N_eps| vs log2 eps")
    dim = float(min(max(n - fit.slope, 0.0), n))
    return DimensionEstimate(fit, dim, "NEIGHBORHOOD_VOLUME", n)


# -- monotonicity -----------------------------------------------------------------------
def _polyval(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(t)
    for c in coeffs[::-1]:
        acc = acc * t + c
    return acc


def monotonicity_breakpoints(
    f: SparsePolynomial, rest: Sequence[float], interval: tuple, grid: int = 2**12, tol: float = 1e-10
) -> list:
    """Points in (a, b) where t -> f(t, rest) switches between increasing and decreasing."""
    a, b = map(float, interval)
    if not a < b:
        raise PreconditionError("interval must satisfy a < b")
    coeffs = f.slice_first(rest)
    scale = max((abs(float(c)) for _, c in f.items()), default=0.0)
    if scale == 0.0 or np.all(np.abs(coeffs) <= ZERO_RTOL * scale):
        raise IdenticallyZeroSlice(f"f(., {tuple(rest)}) vanishes identically")
    deriv = np.array([k * c for k, c in enumerate(coeffs)][1:]) if len(coeffs) > 1 else np.zeros(1)
    if np.all(deriv == 0):
        return []
    t = np.linspace(a, b, grid + 1)
    v = _polyval(deriv, t)
    nz = np.flatnonzero(v != 0)
    out = []
    for i, k in zip(nz[:-1], nz[1:]):
        if np.sign(v[i]) == np.sign(v[k]):
            continue
        lo, hi = t[i], t[k]
        slo = np.sign(v[i])
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            sm = np.sign(_polyval(deriv, np.array([mid]))[0])
            if sm == 0:
                lo = hi = mid
                break
            if sm == slo:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return out


@dataclass(frozen=True)
class MonotonicitySurvey:
    max_changes: int
    slices: int
    degenerate: int
    counts: tuple

    def to_dict(self) -> dict:
        return {"max_changes": self.max_changes, "slices": self.slices, "degenerate": self.degenerate}


def monotonicity_survey(f: SparsePolynomial, region: Region | None = None, slice_count: int = 100, seed: int = DEFAULT_SEED) -> MonotonicitySurvey:
    region = region or Region.cube(f.num_vars)
    if slice_count < 1:
        raise PreconditionError("slice_count must be >= 1")
    rng = substream(seed, 4)
    rest_lo, rest_hi = region.lo_array[1:], region.hi_array[1:]
    counts = []
    degenerate = 0
    for _ in range(slice_count):
        rest = rest_lo + (rest_hi - rest_lo) * rng.random(f.num_vars - 1)
        try:
            counts.append(len(monotonicity_breakpoints(f, rest, (region.lo[0], region.hi[0]))))
        except IdenticallyZeroSlice:
            degenerate += 1
    return MonotonicitySurvey(max(counts, default=0), slice_count, degenerate, tuple(counts))


def max_monotonicity_changes(f: SparsePolynomial, region: Region | None = None, slice_count: int = 100, seed: int = DEFAULT_SEED) -> int:
    """Largest number of monotonicity changes of x1 -> f over random slices."""
    return monotonicity_survey(f, region, slice_count, seed).max_changes

"""Dyadic-cube cutoffs: bump partitions of unity and their derivative bounds.

Cubes are half-open, Q = prod [k_i s, (k_i + 1) s) with s = 2^-level.  The
bump of a cube is psi_Q(x) = prod_i b(|x_i - c_i| / (s/2)), where the 1D
profile b equals 1 on [0, 1], 0 on [3/2, inf) and is a smooth exp(-1/t)
bridge in between.  For cubes Q_1, ..., Q_N ordered by decreasing side,

    phi_k = psi_k * prod_{j<k} (1 - psi_j),   chi = sum_k phi_k = 1 - prod_k (1 - psi_k).

Derivatives up to total order 3 are exact (closed-form profile derivatives
combined by the Leibniz rule).
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import InsufficientSample, PreconditionError
from .fitting import ExponentFit, fit_line
from .region import DEFAULT_SEED, substream

MAX_ORDER = 3
# Profile derivatives are set to 0 this close to the bridge endpoints;
# the true values there are below 1e-40.
_EDGE = 0.01


# -- 1D profile ------------------------------------------------------------------
def bridge(s, order: int = 0) -> np.ndarray:
    """B(s) = e(s) / (e(s) + e(1-s)) with e(s) = exp(-1/s), and its derivatives.

    B = 0 for s <= 0, B = 1 for s >= 1.  Written as expit(h) with
    h(s) = 1/(1-s) - 1/s.
    """
    if not 0 <= order <= MAX_ORDER:
        raise PreconditionError(f"profile derivatives are implemented to order {MAX_ORDER}")
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    if order == 0:
        out[s >= 1] = 1.0
        mid = (s > 0) & (s < 1)
        t = s[mid]
        out[mid] = expit(1.0 / (1.0 - t) - 1.0 / t)
        return out
    mid = (s > _EDGE) & (s < 1 - _EDGE)
    t = s[mid]
    sg = expit(1.0 / (1.0 - t) - 1.0 / t)
    d1 = sg * (1 - sg)
    h1 = 1 / (1 - t) ** 2 + 1 / t**2
    if order == 1:
        out[mid] = d1 * h1
        return out
    d2 = d1 * (1 - 2 * sg)
    h2 = 2 / (1 - t) ** 3 - 2 / t**3
    if order == 2:
        out[mid] = d2 * h1**2 + d1 * h2
        return out
    d3 = d1 * ((1 - 2 * sg) ** 2 - 2 * sg * (1 - sg))
    h3 = 6 / (1 - t) ** 4 + 6 / t**4
    out[mid] = d3 * h1**3 + 3 * d2 * h1 * h2 + d1 * h3
    return out


def profile(t, order: int = 0) -> np.ndarray:
    """b(t) = B(3 - 2t) for t >= 0: 1 on [0, 1], 0 on [3/2, inf)."""
    t = np.asarray(t, dtype=float)
    return (-2.0) ** order * bridge(3.0 - 2.0 * t, order)


def profile_sup(order: int) -> float:
    """max_t |b^(order)(t)| (1 for order 0), from a dense grid plus local refinement."""
    if order == 0:
        return 1.0
    grid = np.linspace(1.0, 1.5, 200001)
    vals = np.abs(profile(grid, order))
    i = int(np.argmax(vals))
    fine = np.linspace(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)], 2001)
    return float(np.abs(profile(fine, order)).max())


# -- cubes --------------------------------------------------------------------------
@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple

    def __post_init__(self):
        if self.level < 0:
            raise PreconditionError("cube level must be >= 0")
        object.__setattr__(self, "index", tuple(int(k) for k in self.index))

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.index, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.index, dtype=float) + 0.5) * self.side

    def contains(self, x) -> np.ndarray:
        """Membership in the half-open cube."""
        x = np.atleast_2d(x)
        return np.all(np.floor(x / self.side) == np.array(self.index), axis=1)

    def in_dilate(self, x, factor: float = 1.5) -> np.ndarray:
        """Membership in the open dilate factor * Q about the centre."""
        x = np.atleast_2d(x)
        return np.all(np.abs(x - self.center) < 0.5 * factor * self.side, axis=1)

    def sample_dilate(self, rng: np.random.Generator, m: int, factor: float = 1.5) -> np.ndarray:
        half = 0.5 * factor * self.side
        return self.center + half * (2.0 * rng.random((m, self.dim)) - 1.0)

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((k >> shift) == c for k, c in zip(other.index, self.index))


def _level_of(eps: float) -> int:
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    j = -math.log2(eps)
    if abs(j - round(j)) > 1e-12 or round(j) < 0:
        raise PreconditionError(f"eps = {eps} is not 2^-j with j >= 0")
    return int(round(j))


def _points(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim == 1:
        K = K[None, :]
    if K.size == 0:
        raise PreconditionError("K is empty")
    if not np.all(np.isfinite(K)):
        raise PreconditionError("K must be bounded")
    return K


def dyadic_cover(K, eps: float) -> list:
    """The level cubes of side eps meeting the point set K, in lexicographic order."""
    K = _points(K)
    j = _level_of(eps)
    idx = np.unique(np.floor(K / eps).astype(np.int64), axis=0)
    return [DyadicCube(j, tuple(row)) for row in idx]


def neighborhood_cover(K, eps: float, radius: float | None = None) -> list:
    """Cubes of side eps/2 covering the closed L-infinity radius-neighbourhood of K.

    radius defaults to eps/4, so chi = 1 on every point within eps/4 of K.
    """
    K = _points(K)
    side = eps / 2
    j = _level_of(side)
    r = eps / 4 if radius is None else float(radius)
    lo = np.floor((K - r) / side).astype(np.int64)
    hi = np.floor((K + r) / side).astype(np.int64)
    n = K.shape[1]
    span = int((hi - lo).max()) + 1
    offs = np.array(list(itertools.product(range(span), repeat=n)), dtype=np.int64)
    cand = (lo[:, None, :] + offs[None, :, :]).reshape(-1, n)
    ok = np.all(cand <= np.repeat(hi, len(offs), axis=0), axis=1)
    idx = np.unique(cand[ok], axis=0)
    return [DyadicCube(j, tuple(row)) for row in idx]


def cover_to_csv(cubes: Sequence[DyadicCube]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = cubes[0].dim if cubes else 0
    w.writerow(["level", "side"] + [f"k{i + 1}" for i in range(n)])
    for q in cubes:
        w.writerow([q.level, repr(q.side)] + list(q.index))
    return buf.getvalue()


# -- bumps and jets ---------------------------------------------------------------------
def _multi_indices_below(alpha: tuple) -> list:
    return list(itertools.product(*[range(a + 1) for a in alpha]))


def base_bump(x, cube: DyadicCube, alpha: Sequence[int] | None = None) -> np.ndarray:
    """D^alpha psi_Q at the points x (shape (m, n) or (n,))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    alpha = tuple(alpha) if alpha is not None else (0,) * cube.dim
    if len(alpha) != cube.dim or min(alpha) < 0 or sum(alpha) > MAX_ORDER:
        raise PreconditionError(f"multi-index must have {cube.dim} entries and order <= {MAX_ORDER}")
    half = 0.5 * cube.side
    u = (x - cube.center) / half
    out = np.ones(len(x))
    for i, a in enumerate(alpha):
        factor = profile(np.abs(u[:, i]), a)
        if a:
            factor = factor * np.sign(u[:, i]) ** a / half**a
        out = out * factor
    return out


def _psi_jet(x: np.ndarray, cube: DyadicCube, betas: list) -> np.ndarray:
    """Rows D^beta psi_Q(x) for each beta in betas."""
    half = 0.5 * cube.side
    u = (x - cube.center) / half
    top = max(max(b) for b in betas)
    per_axis = []
    for i in range(x.shape[1]):
        au, sg = np.abs(u[:, i]), np.sign(u[:, i])
        per_axis.append([profile(au, m) * (sg**m if m else 1.0) / half**m for m in range(top + 1)])
    jet = np.ones((len(betas), len(x)))
    for r, b in enumerate(betas):
        for i, m in enumerate(b):
            jet[r] *= per_axis[i][m]
    return jet


class _Leibniz:
    """Product rule on jets indexed by the multi-indices below alpha."""

    def __init__(self, alpha: tuple):
        self.betas = _multi_indices_below(alpha)
        pos = {b: r for r, b in enumerate(self.betas)}
        self.terms = []
        for b in self.betas:
            t = []
            for g in _multi_indices_below(b):
                rest = tuple(bi - gi for bi, gi in zip(b, g))
                coef = math.prod(math.comb(bi, gi) for bi, gi in zip(b, g))
                t.append((coef, pos[g], pos[rest]))
            self.terms.append(t)

    def mul(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for r, t in enumerate(self.terms):
            for coef, a, b in t:
                out[r] += coef * u[a] * v[b]
        return out

    def one(self, m: int) -> np.ndarray:
        j = np.zeros((len(self.betas), m))
        j[0] = 1.0
        return j


@dataclass
class _Active:
    point: np.ndarray
    cube: np.ndarray


class CutoffPartition:
    """phi_k and chi for disjoint dyadic cubes sorted by decreasing side."""

    def __init__(self, cubes: Sequence[DyadicCube]):
        cubes = list(cubes)
        if not cubes:
            raise PreconditionError("empty cube list")
        n = cubes[0].dim
        if any(q.dim != n for q in cubes):
            raise PreconditionError("cubes of different dimensions")
        if any(a.level > b.level for a, b in zip(cubes, cubes[1:])):
            raise PreconditionError("cubes must be sorted by side, largest first")
        self.cubes = cubes
        self.dim = n
        self._levels = {}
        for pos, q in enumerate(cubes):
            self._levels.setdefault(q.level, []).append(pos)
        self._tables = {}
        for lv, members in self._levels.items():
            idx = np.array([cubes[p].index for p in members], dtype=np.int64)
            base = idx.min(axis=0) - 2
            extent = idx.max(axis=0) - base + 3
            keys = self._keys(idx, base, extent)
            if len(np.unique(keys)) != len(keys):
                raise PreconditionError(f"duplicate cubes at level {lv}")
            order = np.argsort(keys)
            self._tables[lv] = (base, extent, keys[order], np.array(members)[order])
        self._check_disjoint()

    @staticmethod
    def _keys(idx: np.ndarray, base: np.ndarray, extent: np.ndarray) -> np.ndarray:
        rel = idx - base
        key = np.zeros(len(idx), dtype=np.int64)
        for i in range(idx.shape[1]):
            key = key * int(extent[i]) + rel[:, i]
        return key

    def _lookup(self, level: int, idx: np.ndarray) -> np.ndarray:
        """Positions of the level cubes with the given indices, -1 when absent."""
        base, extent, keys, members = self._tables[level]
        rel = idx - base
        inside = np.all((rel >= 0) & (rel < extent), axis=1)
        out = np.full(len(idx), -1)
        if inside.any():
            k = self._keys(idx[inside], base, extent)
            at = np.searchsorted(keys, k).clip(0, len(keys) - 1)
            hit = keys[at] == k
            res = np.full(len(k), -1)
            res[hit] = members[at[hit]]
            out[inside] = res
        return out

    def _check_disjoint(self):
        levels = sorted(self._levels)
        for fine in levels:
            for coarse in levels:
                if coarse >= fine:
                    continue
                idx = np.array([self.cubes[p].index for p in self._levels[fine]], dtype=np.int64)
                parent = idx >> (fine - coarse)
                if np.any(self._lookup(coarse, parent) >= 0):
                    raise PreconditionError(f"a level-{fine} cube overlaps a level-{coarse} cube")

    def __len__(self) -> int:
        return len(self.cubes)

    @property
    def sides(self) -> np.ndarray:
        return np.array([q.side for q in self.cubes])

    def active(self, x: np.ndarray) -> _Active:
        """(point, cube) pairs with x in the open dilate (3/2)Q, sorted by point then cube order."""
        n = self.dim
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int64)
        pts, cbs = [], []
        for lv in self._tables:
            s = 2.0**-lv
            q = np.floor(x / s).astype(np.int64)
            for off in offsets:
                pos = self._lookup(lv, q + off)
                has = np.flatnonzero(pos >= 0)
                if not len(has):
                    continue
                centres = (q[has] + off + 0.5) * s
                near = np.all(np.abs(x[has] - centres) < 0.75 * s, axis=1)
                pts.append(has[near])
                cbs.append(pos[has[near]])
        if not pts:
            return _Active(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        p, c = np.concatenate(pts), np.concatenate(cbs)
        order = np.lexsort((c, p))
        return _Active(p[order], c[order])

    def _jets(self, x: np.ndarray, alpha: tuple):
        lz = _Leibniz(alpha)
        act = self.active(x)
        m, nb = len(x), len(lz.betas)
        psi = np.zeros((nb, len(act.point)))
        for pos in np.unique(act.cube):
            sel = act.cube == pos
            psi[:, sel] = _psi_jet(x[act.point[sel]], self.cubes[pos], lz.betas)
        running = lz.one(m)
        prefix = np.zeros_like(psi)
        rank = np.zeros(len(act.point), dtype=np.int64)
        if len(act.point):
            start = np.r_[True, act.point[1:] != act.point[:-1]]
            group = np.cumsum(start) - 1
            first = np.flatnonzero(start)
            rank = np.arange(len(act.point)) - first[group]
        for r in range(int(rank.max()) + 1 if len(rank) else 0):
            sel = np.flatnonzero(rank == r)
            who = act.point[sel]
            prefix[:, sel] = running[:, who]
            comp = -psi[:, sel]
            comp[0] += 1.0
            running[:, who] = lz.mul(running[:, who], comp)
        phi = lz.mul(psi, prefix) if len(act.point) else psi
        return lz, act, phi, running

    def _alpha(self, alpha) -> tuple:
        alpha = tuple(alpha) if alpha is not None else (0,) * self.dim
        if len(alpha) != self.dim or min(alpha) < 0 or sum(alpha) > MAX_ORDER:
            raise PreconditionError(f"multi-index must have {self.dim} entries and order <= {MAX_ORDER}")
        return alpha

    def chi(self, x, alpha=None) -> np.ndarray:
        """D^alpha chi = D^alpha (1 - prod_k (1 - psi_k))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = self._alpha(alpha)
        lz, _, _, running = self._jets(x, alpha)
        last = lz.betas.index(alpha)
        return 1.0 - running[last] if last == 0 else -running[last]

    def phi_entries(self, x, alpha=None) -> tuple:
        """Sparse (point, cube, D^alpha phi_cube(point)) over the active pairs."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = self._alpha(alpha)
        lz, act, phi, _ = self._jets(x, alpha)
        return act.point, act.cube, phi[lz.betas.index(alpha)]

    def phi(self, k: int, x, alpha=None) -> np.ndarray:
        """D^alpha phi_k at x; zero off the active set."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p, c, v = self.phi_entries(x, alpha)
        out = np.zeros(len(x))
        sel = c == k
        out[p[sel]] = v[sel]
        return out

    def phi_sum(self, x) -> np.ndarray:
        """sum_k phi_k evaluated term by term."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p, _, v = self.phi_entries(x)
        return np.bincount(p, weights=v, minlength=len(x))

    def theta_direct(self, x) -> np.ndarray:
        """1 - prod over all cubes of (1 - psi_k), with no support skipping."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        prod = np.ones(len(x))
        for q in self.cubes:
            prod *= 1.0 - base_bump(x, q)
        return 1.0 - prod

    def in_union(self, x, factor: float = 1.0) -> np.ndarray:
        """Membership in the union of the cubes (factor 1, half-open) or of their open dilates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if factor == 1.0:
            hit = np.zeros(len(x), dtype=bool)
            for lv in self._tables:
                hit |= self._lookup(lv, np.floor(x / 2.0**-lv).astype(np.int64)) >= 0
            return hit
        act = self.active(x)
        out = np.zeros(len(x), dtype=bool)
        out[act.point] = True
        return out

    def sample_union(self, rng: np.random.Generator, m: int, factor: float = 1.0) -> tuple:
        """m points uniform on the union of the factor-dilates, with their multiplicity.

        Draw a cube with probability proportional to its dilate volume, then a
        uniform point in it; weight total_volume / multiplicity is unbiased for
        integrals over the union.
        """
        vol = (factor * self.sides) ** self.dim
        pick = rng.choice(len(self.cubes), size=m, p=vol / vol.sum())
        pts = np.empty((m, self.dim))
        for k in np.unique(pick):
            sel = pick == k
            pts[sel] = self.cubes[k].sample_dilate(rng, int(sel.sum()), factor)
        if factor == 1.0:
            mult = np.ones(m)
        else:
            mult = np.zeros(m)
            for k, q in enumerate(self.cubes):
                mult += q.in_dilate(pts, factor)
        return pts, float(vol.sum()) / np.maximum(mult, 1)


def build_partition(cubes: Sequence[DyadicCube]) -> CutoffPartition:
    """Order cubes by decreasing side (index order within a level) and build the partition."""
    return CutoffPartition(sorted(cubes, key=lambda q: (q.level, q.index)))


# -- verification ------------------------------------------------------------------------
@dataclass(frozen=True)
class DerivativeBound:
    alpha: tuple
    per_cube: np.ndarray
    levels: np.ndarray
    per_level: dict
    single_cube_constant: float
    spread: float
    uniform: bool

    def to_dict(self) -> dict:
        return {
            "alpha": list(self.alpha),
            "per_level": {str(k): v for k, v in self.per_level.items()},
            "single_cube_constant": self.single_cube_constant,
            "spread": self.spread,
            "uniform": self.uniform,
        }


UNIFORMITY_FACTOR = 3.0


def single_cube_constant(alpha: Sequence[int]) -> float:
    """sup |D^alpha psi_Q| s^|alpha| for one cube: prod_i 2^a_i sup|b^(a_i)|."""
    return float(math.prod(2.0**a * profile_sup(a) for a in alpha))


def verify_derivative_bound(partition: CutoffPartition, alpha: Sequence[int], samples: int = 2000, seed: int = DEFAULT_SEED) -> DerivativeBound:
    """Monte Carlo sup over (3/2)Q_k of |D^alpha phi_k| s_k^|alpha|, per cube and per level."""
    alpha = partition._alpha(alpha)
    if sum(alpha) > 2 and MAX_ORDER < 3:
        raise PreconditionError("order 3 derivatives are not available")
    order = sum(alpha)
    sups = np.zeros(len(partition))
    for k, q in enumerate(partition.cubes):
        rng = substream(seed, 7, k)
        x = q.sample_dilate(rng, samples)
        sups[k] = np.abs(partition.phi(k, x, alpha)).max() * q.side**order
    levels = np.array([q.level for q in partition.cubes])
    per_level = {int(lv): float(sups[levels == lv].max()) for lv in np.unique(levels)}
    vals = np.array(list(per_level.values()))
    spread = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
    return DerivativeBound(
        alpha=alpha,
        per_cube=sups,
        levels=levels,
        per_level=per_level,
        single_cube_constant=single_cube_constant(alpha),
        spread=spread,
        uniform=spread <= UNIFORMITY_FACTOR,
    )


@dataclass(frozen=True)
class FlestResult:
    fit: ExponentFit
    eps: tuple
    norms: tuple
    sides: tuple
    bound_slope: float
    side_rule: str
    bound_holds: bool

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict(),
            "eps": list(self.eps),
            "norms": list(self.norms),
            "sides": list(self.sides),
            "bound_slope": self.bound_slope,
            "side_rule": self.side_rule,
            "bound_holds": self.bound_holds,
        }


def hausdorff_side(K, eps: float, codim_exp: float, lam: float, max_level: int = 60) -> float:
    """Largest dyadic s <= eps whose cover {Q} of K has sum s^codim_exp <= lam + eps."""
    K = _points(K)
    for j in range(_level_of(eps), max_level + 1):
        s = 2.0**-j
        count = len(np.unique(np.floor(K / s).astype(np.int64), axis=0))
        if count * s**codim_exp <= lam + eps:
            return s
    raise PreconditionError("no dyadic side up to 2^-60 meets the content condition")


def verify_flest(
    K,
    eps_range: Sequence[float],
    l: float,
    p_prime: float,
    lam: float,
    alpha: Sequence[int] | None = None,
    samples: int = 20000,
    seed: int = DEFAULT_SEED,
    side_rule: str = "eps",
) -> FlestResult:
    """Fit log2 ||D^alpha chi_eps||_{p'} against log2 eps.

    side_rule "eps" covers K by cubes of side eps; "content" uses the
    largest dyadic side s <= eps with N(s) s^(n - l p') <= lam + eps, which
    is the cover the L^{p'} bound is stated for.  bound_slope is
    l - |alpha| + 1/p' when lam = 0 and l - |alpha| otherwise; the bound
    holds asymptotically when the fitted slope is at least bound_slope.
    """
    K = _points(K)
    n = K.shape[1]
    alpha = tuple(alpha) if alpha is not None else (1,) + (0,) * (n - 1)
    if not p_prime >= 1:
        raise PreconditionError("p' must be >= 1")
    codim_exp = n - l * p_prime
    if not codim_exp > 0:
        raise PreconditionError(f"need n - l p' > 0, got {codim_exp}")
    if lam < 0:
        raise PreconditionError("Lambda must be >= 0")
    if side_rule not in ("eps", "content"):
        raise PreconditionError("side_rule must be 'eps' or 'content'")
    eps = sorted((float(e) for e in eps_range), reverse=True)
    if len(eps) < 4:
        raise InsufficientSample("need at least 4 dyadic scales")
    norms, sides = [], []
    for i, e in enumerate(eps):
        s = e if side_rule == "eps" else hausdorff_side(K, e, codim_exp, lam)
        part = build_partition(dyadic_cover(K, s))
        rng = substream(seed, 8, i)
        x, w = part.sample_union(rng, samples, 1.5)
        vals = np.abs(part.chi(x, alpha)) ** p_prime
        norms.append(float(np.mean(vals * w)) ** (1.0 / p_prime))
        sides.append(s)
    norms = np.array(norms)
    if np.any(norms <= 0):
        raise InsufficientSample("a derivative norm came out zero; increase samples")
    fit = fit_line(np.log2(eps), np.log2(norms), note="log2 ||D^a chi||_p' vs log2 eps")
    order = sum(alpha)
    bound = l - order + (1.0 / p_prime if lam == 0 else 0.0)
    return FlestResult(
        fit=fit,
        eps=tuple(eps),
        norms=tuple(float(v) for v in norms),
        sides=tuple(sides),
        bound_slope=bound,
        side_rule=side_rule,
        bound_holds=bool(fit.slope >= bound - 0.2),
    )

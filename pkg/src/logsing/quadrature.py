"""Shell-wise Monte Carlo integration of singular integrands built from log|f|.

The box U is decomposed into dyadic level shells

    E_j = {x in U : 2^-(j+1) < |f(x)| <= 2^-j}

and the contribution c_j of every shell to the integral is estimated.  The
shells near the zero set are tiny, so uniform sampling never reaches them;
instead each replicate walks a randomized dyadic box tree:

* a box is *split* into its 2^n children when interval bounds show |f| may
  cross several shells on it (in particular when it may touch Z_f);
* a box is a *leaf* when |f| stays within a factor 4 on it, and is then
  sampled uniformly;
* a box on which |f| < 2^-(j_max+1) everywhere is dropped into the
  "beyond" volume (the tail past j_max).

At every depth at most ``max_boxes`` children are kept, chosen uniformly
without replacement and reweighted by (pool size / kept), which keeps each
replicate unbiased while bounding the cost near zero sets of positive
dimension.  Standard errors come from independent replicates, so they
include the variance of the random pruning.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import BadBracket, BudgetExhausted, DegenerateRay, FunctionVanishes, InsufficientSample, PreconditionError
from .fitting import ExponentFit, fit_line
from .poly import IDENTICALLY_ZERO, SparsePolynomial, restrict_to_ray, vanishing_order
from .region import DEFAULT_SEED, Region, resolve_threads, substream

#: |f| below this is treated as an exact zero (sink shell, never regressed)
UNDERFLOW = 1e-300
#: half-width of the "flat shells" band, in log2 units per level
SLOPE_MARGIN = 0.05
#: z-score a decaying slope must clear to count as convergent
SIGNIFICANCE = 2.0
#: relative standard error above which a shell counts as unresolved
RESOLVED_RSE = 0.25
#: a leaf box is one on which sup|f| / inf|f| stays below this
LEAF_RATIO = 4.0


@dataclass(frozen=True)
class Budget:
    """Sampling parameters for one shell decomposition.

    ``samples_per_shell`` is the number of points drawn per refinement depth
    and replicate; with ``box_samples`` points per leaf it caps the number of
    boxes kept per depth.
    """

    samples_per_shell: int = 200_000
    box_samples: int = 32
    replicates: int = 8
    j_max: int = 24
    max_depth: int = 80

    def __post_init__(self):
        if self.j_max < 4:
            raise PreconditionError("j_max must be at least 4")
        if self.replicates < 2:
            raise PreconditionError("need at least two replicates for error bars")
        if self.box_samples < 1 or self.samples_per_shell < self.box_samples:
            raise PreconditionError("samples_per_shell must be >= box_samples >= 1")

    @property
    def max_boxes(self) -> int:
        return max(1, self.samples_per_shell // self.box_samples)

    def doubled(self) -> "Budget":
        return replace(self, samples_per_shell=2 * self.samples_per_shell)


# -- sampling -------------------------------------------------------------------
@dataclass
class _Replicate:
    levels: np.ndarray
    logf: np.ndarray
    loggrad: np.ndarray
    weights: np.ndarray
    beyond_volume: float
    sink_volume: float
    points: int


@dataclass
class ShellSamples:
    """Weighted sample points of one shell decomposition, reusable for any integrand."""

    f: SparsePolynomial
    region: Region
    budget: Budget
    seed: int
    replicates: list

    @property
    def total_points(self) -> int:
        return sum(r.points for r in self.replicates)


def _children(lo: np.ndarray, hi: np.ndarray) -> tuple:
    n = lo.shape[1]
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    mid = 0.5 * (lo + hi)
    clo = np.where(bits[None], mid[:, None, :], lo[:, None, :]).reshape(-1, n)
    chi = np.where(bits[None], hi[:, None, :], mid[:, None, :]).reshape(-1, n)
    return clo, chi


def shell_index(values: np.ndarray) -> np.ndarray:
    """floor(-log2 |v|) computed exactly from the binary exponent."""
    mant, expo = np.frexp(np.abs(values))
    return (-expo + (mant == 0.5)).astype(np.int64)


def _sample_replicate(f: SparsePolynomial, region: Region, budget: Budget, rng: np.random.Generator) -> _Replicate:
    n = region.dim
    lo = region.lo_array[None, :]
    hi = region.hi_array[None, :]
    w = np.ones(1)
    threshold = 2.0 ** -(budget.j_max + 1)
    k = budget.box_samples
    beyond = 0.0
    sink = 0.0
    out_lv, out_lf, out_lg, out_w = [], [], [], []
    points = 0
    for depth in range(budget.max_depth + 1):
        nb = len(w)
        if nb == 0:
            break
        if nb > budget.max_boxes:
            keep = np.sort(rng.choice(nb, size=budget.max_boxes, replace=False))
            lo, hi = lo[keep], hi[keep]
            w = w[keep] * (nb / budget.max_boxes)
        lower, upper = f.abs_bounds(lo, hi)
        vol = np.prod(hi - lo, axis=1)
        gone = upper < threshold
        leaf = ~gone & (lower > 0) & (upper <= LEAF_RATIO * lower)
        if depth == budget.max_depth:
            leaf = ~gone
        split = ~gone & ~leaf
        beyond += float(np.sum(w[gone] * vol[gone]))
        if leaf.any():
            llo, lhi = lo[leaf], hi[leaf]
            nl = len(llo)
            u = rng.random((nl, k, n))
            pts = (llo[:, None, :] + (lhi - llo)[:, None, :] * u).reshape(-1, n)
            pw = np.repeat(w[leaf] * vol[leaf] / k, k)
            vals, grads = f.value_and_gradient(pts)
            points += len(pts)
            absf = np.abs(vals)
            ok = absf >= UNDERFLOW
            sink += float(np.sum(pw[~ok]))
            lv = shell_index(np.where(ok, absf, 1.0))
            deep = ok & (lv > budget.j_max)
            beyond += float(np.sum(pw[deep]))
            use = ok & ~deep
            with np.errstate(divide="ignore"):
                lg = np.log(np.sqrt(np.sum(grads[use] ** 2, axis=1)))
            out_lv.append(lv[use])
            out_lf.append(np.log(absf[use]))
            out_lg.append(lg)
            out_w.append(pw[use])
        if split.any():
            lo, hi = _children(lo[split], hi[split])
            w = np.repeat(w[split], 2**n)
        else:
            lo = hi = np.zeros((0, n))
            w = np.zeros(0)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)  # noqa: E731
    return _Replicate(
        levels=cat(out_lv, np.int64),
        logf=cat(out_lf, float),
        loggrad=cat(out_lg, float),
        weights=cat(out_w, float),
        beyond_volume=beyond,
        sink_volume=sink,
        points=points,
    )


def sample_shells(
    f: SparsePolynomial,
    region: Region | None = None,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> ShellSamples:
    region = region or Region.cube(f.num_vars)
    budget = budget or Budget()
    if region.dim != f.num_vars:
        raise PreconditionError(f"region has dimension {region.dim}, polynomial {f.num_vars}")
    if f.is_zero:
        raise FunctionVanishes("f is the zero polynomial")

    def task(r: int) -> _Replicate:
        return _sample_replicate(f, region, budget, substream(seed, 1, r))

    workers = min(resolve_threads(threads), budget.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(task, range(budget.replicates)))
    else:
        reps = [task(r) for r in range(budget.replicates)]
    if all(len(r.weights) == 0 for r in reps):
        raise FunctionVanishes("every sampled value of f is below 1e-300 on the region")
    return ShellSamples(f=f, region=region, budget=budget, seed=seed, replicates=reps)


# -- profiles -------------------------------------------------------------------
class Shell(NamedTuple):
    level: int
    measure: float
    contribution: float
    stderr: float


def _grad_log_integrand(p: float) -> Callable:
    def h(rep: _Replicate) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(p * (rep.loggrad - rep.logf))

    h.name = "grad_log"
    return h


def _abs_log_integrand(p: float) -> Callable:
    def h(rep: _Replicate) -> np.ndarray:
        return np.abs(rep.logf) ** p

    h.name = "abs_log"
    return h


@dataclass(frozen=True)
class ShellProfile:
    """Per-shell estimates (mean over replicates) for one integrand and exponent."""

    integrand: str
    p: float
    levels: tuple
    measures: tuple
    measure_se: tuple
    contributions: tuple
    contribution_se: tuple
    j_max: int
    beyond_volume: float
    beyond_volume_se: float
    region_volume: float
    per_replicate: np.ndarray = field(repr=False, compare=False, default=None)
    measure_per_replicate: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def shells(self) -> list:
        return [Shell(*t) for t in zip(self.levels, self.measures, self.contributions, self.contribution_se)]

    @property
    def j_min(self) -> int:
        return self.levels[0]

    def contribution(self, j: int) -> float:
        return self.contributions[self.levels.index(j)]

    def measure(self, j: int) -> float:
        return self.measures[self.levels.index(j)]

    def resolved_levels(self) -> list:
        return [
            j
            for j, c, se in zip(self.levels, self.contributions, self.contribution_se)
            if 0 <= j <= self.j_max and c > 0 and se <= RESOLVED_RSE * c
        ]

    def to_dict(self) -> dict:
        return {
            "integrand": self.integrand,
            "p": self.p,
            "j_max": self.j_max,
            "shells": [
                {"level": j, "measure": m, "measure_se": ms, "contribution": c, "stderr": cs}
                for j, m, ms, c, cs in zip(
                    self.levels, self.measures, self.measure_se, self.contributions, self.contribution_se
                )
            ],
            "beyond_volume": self.beyond_volume,
            "beyond_volume_se": self.beyond_volume_se,
        }


def _se(mat: np.ndarray) -> np.ndarray:
    r = mat.shape[0]
    return mat.std(axis=0, ddof=1) / math.sqrt(r)


def build_profile(samples: ShellSamples, integrand: Callable, p: float) -> ShellProfile:
    reps = samples.replicates
    j_max = samples.budget.j_max
    lows = [int(r.levels.min()) for r in reps if len(r.levels)]
    j_min = min(min(lows, default=0), 0)
    width = j_max - j_min + 1
    contrib = np.zeros((len(reps), width))
    meas = np.zeros((len(reps), width))
    for i, rep in enumerate(reps):
        if not len(rep.levels):
            continue
        idx = rep.levels - j_min
        contrib[i] = np.bincount(idx, weights=rep.weights * integrand(rep), minlength=width)
        meas[i] = np.bincount(idx, weights=rep.weights, minlength=width)
    beyond = np.array([r.beyond_volume for r in reps])
    return ShellProfile(
        integrand=getattr(integrand, "name", "custom"),
        p=float(p),
        levels=tuple(range(j_min, j_max + 1)),
        measures=tuple(float(v) for v in meas.mean(axis=0)),
        measure_se=tuple(float(v) for v in _se(meas)),
        contributions=tuple(float(v) for v in contrib.mean(axis=0)),
        contribution_se=tuple(float(v) for v in _se(contrib)),
        j_max=j_max,
        beyond_volume=float(beyond.mean()),
        beyond_volume_se=float(beyond.std(ddof=1) / math.sqrt(len(reps))),
        region_volume=samples.region.volume,
        per_replicate=contrib,
        measure_per_replicate=meas,
    )


def shell_decompose(
    f: SparsePolynomial,
    region: Region | None = None,
    j_max: int = 24,
    samples_per_shell: int = 200_000,
    seed: int = DEFAULT_SEED,
    budget: Budget | None = None,
    threads: int | None = None,
) -> ShellProfile:
    """Measures |E_j cap U| of the dyadic level shells (contributions are the measures)."""
    budget = budget or Budget(samples_per_shell=samples_per_shell, j_max=j_max)
    samples = sample_shells(f, region, budget, seed, threads)
    unit = lambda rep: np.ones(len(rep.weights))  # noqa: E731
    unit.name = "measure"
    return build_profile(samples, unit, 0.0)


# -- verdicts -------------------------------------------------------------------
class Kind(str, enum.Enum):
    CONVERGENT = "CONVERGENT"
    DIVERGENT = "DIVERGENT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class IntegralVerdict:
    kind: Kind
    profile: ShellProfile
    fit: ExponentFit | None = None
    value: float | None = None
    error_bar: float | None = None
    tail: float | None = None
    growth_rate: float | None = None
    reason: str = ""

    def to_dict(self, with_profile: bool = True) -> dict:
        d = {
            "kind": self.kind.value,
            "value": self.value,
            "error_bar": self.error_bar,
            "tail": self.tail,
            "growth_rate": self.growth_rate,
            "reason": self.reason,
            "fit": self.fit.to_dict() if self.fit else None,
        }
        if with_profile:
            d["profile"] = self.profile.to_dict()
        return d


def _window(profile: ShellProfile) -> list:
    resolved = profile.resolved_levels()
    half = len(resolved) // 2
    return resolved[half:] if len(resolved) >= 8 else resolved


def _slope_with_jackknife(profile: ShellProfile, window: list) -> tuple:
    idx = [profile.levels.index(j) for j in window]
    c = np.array([profile.contributions[i] for i in idx])
    fit = fit_line(window, np.log2(c), min_points=4, note="log2 c_j vs j")
    mat = profile.per_replicate[:, idx]
    r = mat.shape[0]
    slopes = []
    for i in range(r):
        loo = np.delete(mat, i, axis=0).mean(axis=0)
        if np.all(loo > 0):
            slopes.append(fit_line(window, np.log2(loo), min_points=4).slope)
    if len(slopes) == r:
        s = np.array(slopes)
        jack = float(math.sqrt((r - 1) / r * np.sum((s - s.mean()) ** 2)))
    else:
        jack = float("inf")
    return replace(fit, stderr=max(jack, 0.0)), jack


def _total_se(profile: ShellProfile) -> float:
    lv = np.array(profile.levels)
    tot = profile.per_replicate[:, lv <= profile.j_max].sum(axis=1)
    return float(tot.std(ddof=1) / math.sqrt(len(tot)))


def classify(profile: ShellProfile, margin: float = SLOPE_MARGIN, z: float = SIGNIFICANCE) -> IntegralVerdict:
    """Turn a shell profile into a CONVERGENT / DIVERGENT / INCONCLUSIVE verdict.

    With fitted slope s (log2 c_j per level) and jackknife error se:
    s <= -margin and s + z*se < 0 is convergent (geometric decay); s >= margin
    is divergent (geometric growth); |s| < margin means flat shells whose
    partial sums grow linearly, which is divergent as well.
    """
    lv = np.array(profile.levels)
    c = np.array(profile.contributions)
    core = (lv >= 0) & (lv <= profile.j_max)
    partial = float(c[lv <= profile.j_max].sum())
    noisy = [
        j
        for j, cj, se in zip(profile.levels, profile.contributions, profile.contribution_se)
        if 0 <= j <= profile.j_max and cj > 0 and se > RESOLVED_RSE * cj
    ]
    occupied = [j for j, cj in zip(profile.levels, profile.contributions) if 0 <= j <= profile.j_max and cj > 0]
    upper_half = lv > profile.j_max // 2
    if not np.any(c[core & upper_half] > 0) and profile.beyond_volume == 0.0:
        # |f| stays bounded away from zero on U: the integrand is bounded
        return IntegralVerdict(
            Kind.CONVERGENT, profile, value=partial, error_bar=SIGNIFICANCE * _total_se(profile), tail=0.0,
            reason="no deep shells: |f| bounded away from 0 on the region",
        )
    if occupied and len(noisy) > len(occupied) / 2:
        raise BudgetExhausted(
            f"{len(noisy)} of {len(occupied)} shells have standard error above {RESOLVED_RSE:.0%} of c_j"
        )
    window = _window(profile)
    if len(window) < 4:
        return IntegralVerdict(Kind.INCONCLUSIVE, profile, reason=f"only {len(window)} resolved shells to fit")
    fit, se = _slope_with_jackknife(profile, window)
    s = fit.slope
    if s <= -margin and s + z * se < 0:
        ratio = 2.0**s
        last = 2.0 ** (fit.intercept + s * profile.j_max)
        tail = last * ratio / (1.0 - ratio)
        return IntegralVerdict(
            Kind.CONVERGENT, profile, fit=fit, value=partial + tail,
            error_bar=z * _total_se(profile) + tail, tail=tail,
        )
    if s >= margin:
        return IntegralVerdict(Kind.DIVERGENT, profile, fit=fit, growth_rate=s, reason="shell contributions grow geometrically")
    if s > -margin:
        return IntegralVerdict(Kind.DIVERGENT, profile, fit=fit, growth_rate=s, reason="flat shells: partial sums grow linearly")
    return IntegralVerdict(
        Kind.INCONCLUSIVE, profile, fit=fit, reason=f"decay slope {s:.3f} not significant (se {se:.3f})"
    )


def integrate_grad_log(
    f: SparsePolynomial,
    p: float,
    region: Region | None = None,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    *,
    margin: float = SLOPE_MARGIN,
    threads: int | None = None,
    samples: ShellSamples | None = None,
) -> IntegralVerdict:
    """Verdict on the integral of |grad f / f|^p over the region."""
    if not p > 0:
        raise PreconditionError("p must be positive")
    samples = samples or sample_shells(f, region, budget, seed, threads)
    return classify(build_profile(samples, _grad_log_integrand(p), p), margin)


def integrate_abs_log(
    f: SparsePolynomial,
    p: float,
    region: Region | None = None,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    *,
    margin: float = SLOPE_MARGIN,
    threads: int | None = None,
    samples: ShellSamples | None = None,
) -> IntegralVerdict:
    """Verdict on the integral of |log|f||^p over the region."""
    if not p > 0:
        raise PreconditionError("p must be positive")
    samples = samples or sample_shells(f, region, budget, seed, threads)
    return classify(build_profile(samples, _abs_log_integrand(p), p), margin)


# -- critical exponent ------------------------------------------------------------
@dataclass(frozen=True)
class Probe:
    p: float
    kind: Kind
    slope: float | None
    stderr: float | None
    rebudgeted: bool = False


@dataclass(frozen=True)
class CriticalExponent:
    gamma: float
    bracket: tuple
    probes: tuple

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "bracket": list(self.bracket),
            "bracket_width": self.width,
            "probes": [
                {"p": q.p, "kind": q.kind.value, "slope": q.slope, "stderr": q.stderr, "rebudgeted": q.rebudgeted}
                for q in self.probes
            ],
        }


def critical_exponent(
    f: SparsePolynomial,
    region: Region | None = None,
    search: tuple = (0.5, 3.5),
    tol: float = 0.02,
    budget: Budget | None = None,
    seed: int = DEFAULT_SEED,
    *,
    margin: float = SLOPE_MARGIN,
    threads: int | None = None,
    samples: ShellSamples | None = None,
) -> CriticalExponent:
    """Bisect on p for the threshold where |grad f/f|^p stops being integrable.

    The end points must classify as CONVERGENT / DIVERGENT under the usual
    ``margin``.  Interior probes are classified by the sign of the shell slope
    alone (margin 0), which is the exact criterion for geometric shells.  A
    probe that stays inconclusive after one doubled budget is recorded and
    the reported bracket is widened to include it.
    """
    p_lo, p_hi = map(float, search)
    if not 0 < p_lo < p_hi:
        raise BadBracket("need 0 < p_lo < p_hi")
    budget = budget or Budget()
    base = samples or sample_shells(f, region, budget, seed, threads)
    budget = base.budget
    big: list = []

    def bigger() -> ShellSamples:
        if not big:
            big.append(sample_shells(f, base.region, budget.doubled(), seed + 1, threads))
        return big[0]

    lo_v = integrate_grad_log(f, p_lo, margin=margin, samples=base)
    hi_v = integrate_grad_log(f, p_hi, margin=margin, samples=base)
    if lo_v.kind is not Kind.CONVERGENT or hi_v.kind is not Kind.DIVERGENT:
        raise BadBracket(f"bracket verdicts are {lo_v.kind.value} at p={p_lo} and {hi_v.kind.value} at p={p_hi}")
    probes = [
        Probe(p_lo, lo_v.kind, lo_v.fit.slope if lo_v.fit else None, lo_v.fit.stderr if lo_v.fit else None),
        Probe(p_hi, hi_v.kind, hi_v.fit.slope if hi_v.fit else None, hi_v.fit.stderr if hi_v.fit else None),
    ]
    lo, hi = p_lo, p_hi
    undecided: list = []
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = integrate_grad_log(f, mid, margin=0.0, samples=base)
        again = False
        if v.kind is Kind.INCONCLUSIVE:
            again = True
            v = integrate_grad_log(f, mid, margin=0.0, samples=bigger())
        probes.append(Probe(mid, v.kind, v.fit.slope if v.fit else None, v.fit.stderr if v.fit else None, again))
        if v.kind is Kind.CONVERGENT:
            lo = mid
        else:
            # inconclusive probes sit next to the threshold; keep searching below them
            if v.kind is Kind.INCONCLUSIVE:
                undecided.append(mid)
            hi = mid
    b_lo = min([lo] + undecided)
    b_hi = max([hi] + undecided)
    return CriticalExponent(gamma=0.5 * (lo + hi), bracket=(b_lo, b_hi), probes=tuple(probes))


# -- one-dimensional rays -----------------------------------------------------------
@dataclass(frozen=True)
class RadialVerdict:
    kind: Kind
    order: int
    direction: tuple
    epsilon: float
    shells: tuple
    slope: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "vanishing_order": self.order,
            "direction": list(self.direction),
            "epsilon": self.epsilon,
            "shells": list(self.shells),
            "slope": self.slope,
        }


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def radial_blowup_check(
    f: SparsePolynomial, omega, epsilon: float = 0.5, levels: int = 40, margin: float = SLOPE_MARGIN
) -> RadialVerdict:
    """Divergence test for the integral of |phi'/phi| over (0, epsilon], phi(rho) = f(rho*omega).

    The interval is cut into dyadic pieces (eps 2^-(j+1), eps 2^-j]; each piece
    is integrated by Gauss-Legendre quadrature.  Pieces tending to a positive
    constant (phi ~ rho^N gives N ln 2) mean logarithmic divergence.
    """
    phi = restrict_to_ray(f, omega)
    order = vanishing_order(phi)
    if order is IDENTICALLY_ZERO:
        raise DegenerateRay(f"f vanishes identically along {tuple(omega)}")
    if not epsilon > 0:
        raise PreconditionError("epsilon must be positive")
    shells = []
    for j in range(levels):
        a, b = epsilon * 2.0 ** -(j + 1), epsilon * 2.0**-j
        rho = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        vals = np.abs(phi.log_derivative(rho))
        shells.append(float(0.5 * (b - a) * np.sum(_GL_WEIGHTS * vals)))
    deep = list(range(levels // 2, levels))
    c = np.array([shells[j] for j in deep])
    if np.all(c > 0):
        slope = fit_line(deep, np.log2(c), min_points=4).slope
    else:
        slope = -math.inf
    kind = Kind.DIVERGENT if slope > -margin and c[-1] > 0 else Kind.CONVERGENT
    return RadialVerdict(kind, int(order), tuple(float(w) for w in omega), float(epsilon), tuple(shells), float(slope))

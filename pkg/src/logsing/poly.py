"""Sparse multivariate polynomials: parsing, evaluation, derivatives, rays.

Coefficients are kept exactly as supplied (``int``, ``Fraction`` or ``float``);
numerical evaluation always goes through a float64 copy and compensated
summation over the terms in sorted exponent order, so the result does not
depend on how the term map was built.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, PolynomialSyntaxError, PreconditionError

Exponent = tuple

#: relative threshold below which float coefficients count as zero
ZERO_RTOL = 1e-14


class _Flag(enum.Enum):
    IDENTICALLY_ZERO = "identically-zero"

    def __repr__(self) -> str:
        return self.value


IDENTICALLY_ZERO = _Flag.IDENTICALLY_ZERO


def _is_exact(c) -> bool:
    return isinstance(c, Rational)


def _normalize_coef(c):
    if isinstance(c, bool):
        raise TypeError("boolean coefficient")
    if isinstance(c, int):
        return c
    if isinstance(c, Rational):
        c = Fraction(c)
        return c.numerator if c.denominator == 1 else c
    c = float(c)
    if not math.isfinite(c):
        raise ValueError("non-finite coefficient")
    return c


def neumaier_sum(parts: Iterable[np.ndarray]) -> np.ndarray:
    """Compensated (Neumaier) summation, elementwise over equally shaped arrays."""
    s = None
    comp = None
    for t in parts:
        t = np.asarray(t, dtype=float)
        if s is None:
            s = t.copy()
            comp = np.zeros_like(s)
            continue
        tt = s + t
        big = np.abs(s) >= np.abs(t)
        comp += np.where(big, (s - tt) + t, (t - tt) + s)
        s = tt
    if s is None:
        return np.zeros(())
    return s + comp


class SparsePolynomial:
    """A real polynomial in ``num_vars`` variables stored as {exponent: coefficient}.

    Instances are immutable; arithmetic returns new objects.

    >>> f = SparsePolynomial.parse("x1*x2")
    >>> f([2.0, 3.0])
    6.0
    """

    __slots__ = ("num_vars", "_terms", "_exps", "_coefs", "_grad")

    def __init__(self, num_vars: int, terms: Mapping[Sequence[int], object] = ()):
        if int(num_vars) < 1:
            raise ValueError("num_vars must be positive")
        self.num_vars = int(num_vars)
        acc: dict = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for exp, c in items:
            exp = tuple(int(a) for a in exp)
            if len(exp) != self.num_vars:
                raise DimensionMismatch(f"exponent {exp} has length {len(exp)}, expected {self.num_vars}")
            if any(a < 0 for a in exp):
                raise ValueError(f"negative exponent in {exp}")
            acc[exp] = acc.get(exp, 0) + _normalize_coef(c)
        ordered = sorted((e, c) for e, c in acc.items() if c != 0)
        self._terms = tuple(ordered)
        if ordered:
            self._exps = np.array([e for e, _ in ordered], dtype=np.int64)
        else:
            self._exps = np.zeros((0, self.num_vars), dtype=np.int64)
        self._coefs = np.array([float(c) for _, c in ordered], dtype=float)
        self._grad = None

    # -- construction -----------------------------------------------------
    @classmethod
    def parse(cls, text: str, num_vars: int | None = None) -> "SparsePolynomial":
        return parse_polynomial(text, num_vars)

    @classmethod
    def constant(cls, c, num_vars: int) -> "SparsePolynomial":
        return cls(num_vars, {(0,) * num_vars: c})

    @classmethod
    def variable(cls, i: int, num_vars: int) -> "SparsePolynomial":
        """The coordinate function x_{i+1} (``i`` is zero-based)."""
        exp = [0] * num_vars
        exp[i] = 1
        return cls(num_vars, {tuple(exp): 1})

    @classmethod
    def example_family(cls, half_powers: Sequence[int], num_vars: int | None = None) -> "SparsePolynomial":
        """x1^(2 r1) + ... + xk^(2 rk), optionally embedded in more variables."""
        k = len(half_powers)
        n = k if num_vars is None else num_vars
        if n < k:
            raise ValueError("num_vars smaller than the number of powers")
        terms = {}
        for i, r in enumerate(half_powers):
            exp = [0] * n
            exp[i] = 2 * int(r)
            terms[tuple(exp)] = 1
        return cls(n, terms)

    # -- inspection ---------------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_exact(self) -> bool:
        return all(_is_exact(c) for _, c in self._terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self._terms), default=0)

    def degree_in(self, i: int) -> int:
        return max((e[i] for e, _ in self._terms), default=0)

    @property
    def order(self) -> int:
        """Lowest total degree among the terms (order of vanishing at the origin)."""
        return min((sum(e) for e, _ in self._terms), default=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsePolynomial):
            return NotImplemented
        return self.num_vars == other.num_vars and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.num_vars, self._terms))

    def __repr__(self) -> str:
        return f"SparsePolynomial({self.num_vars}, {self.to_text()!r})"

    def to_text(self) -> str:
        """Canonical text that ``parse`` reads back to an equal polynomial."""
        if not self._terms:
            return "0"
        out = ""
        for exp, c in self._terms:
            neg = c < 0
            mag = -c if neg else c
            factors = []
            for i, a in enumerate(exp):
                if a == 1:
                    factors.append(f"x{i + 1}")
                elif a > 1:
                    factors.append(f"x{i + 1}^{a}")
            if mag != 1 or not factors:
                factors.insert(0, _format_coef(mag))
            body = "*".join(factors)
            if not out:
                out = f"-{body}" if neg else body
            else:
                out += f" - {body}" if neg else f" + {body}"
        return out

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "SparsePolynomial":
        if isinstance(other, SparsePolynomial):
            if other.num_vars != self.num_vars:
                raise DimensionMismatch("polynomials live in different dimensions")
            return other
        return SparsePolynomial.constant(other, self.num_vars)

    def __add__(self, other):
        other = self._coerce(other)
        return SparsePolynomial(self.num_vars, list(self._terms) + list(other._terms))

    __radd__ = __add__

    def __neg__(self):
        return SparsePolynomial(self.num_vars, [(e, -c) for e, c in self._terms])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = []
        for e1, c1 in self._terms:
            for e2, c2 in other._terms:
                out.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return SparsePolynomial(self.num_vars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers")
        result = SparsePolynomial.constant(1, self.num_vars)
        for _ in range(int(k)):
            result = result * self
        return result

    def scale(self, c) -> "SparsePolynomial":
        return SparsePolynomial(self.num_vars, [(e, ci * c) for e, ci in self._terms])

    def embed(self, num_vars: int) -> "SparsePolynomial":
        """Same polynomial viewed as a function of more variables."""
        if num_vars < self.num_vars:
            raise ValueError("cannot embed into fewer variables")
        pad = (0,) * (num_vars - self.num_vars)
        return SparsePolynomial(num_vars, [(e + pad, c) for e, c in self._terms])

    # -- calculus ---------------------------------------------------------
    def partial(self, i: int) -> "SparsePolynomial":
        out = []
        for exp, c in self._terms:
            a = exp[i]
            if a == 0:
                continue
            e = list(exp)
            e[i] -= 1
            out.append((tuple(e), c * a))
        return SparsePolynomial(self.num_vars, out)

    def gradient(self) -> tuple:
        if self._grad is None:
            self._grad = tuple(self.partial(i) for i in range(self.num_vars))
        return self._grad

    # -- numerics ---------------------------------------------------------
    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.num_vars:
            raise DimensionMismatch(f"expected points with {self.num_vars} coordinates, got shape {np.shape(x)}")
        return x

    def _power_table(self, x: np.ndarray, max_exp: Sequence[int]) -> list:
        table = []
        for i in range(self.num_vars):
            col = x[:, i]
            pw = [np.ones_like(col)]
            for _ in range(int(max_exp[i])):
                pw.append(pw[-1] * col)
            table.append(pw)
        return table

    @staticmethod
    def _eval_terms(exps: np.ndarray, coefs: np.ndarray, table: list, m: int) -> np.ndarray:
        if len(coefs) == 0:
            return np.zeros(m)

        def parts():
            for exp, c in zip(exps, coefs):
                v = np.full(m, c)
                for i, a in enumerate(exp):
                    if a:
                        v = v * table[i][a]
                yield v

        return neumaier_sum(parts())

    def evaluate(self, x) -> np.ndarray:
        """Values at an (m, n) array of points (or a single point) as a 1-D array."""
        pts = self._points(x)
        max_exp = self._exps.max(axis=0) if len(self._coefs) else [0] * self.num_vars
        table = self._power_table(pts, max_exp)
        return self._eval_terms(self._exps, self._coefs, table, len(pts))

    def value_and_gradient(self, x) -> tuple:
        """(values (m,), gradients (m, n)) sharing one table of coordinate powers."""
        pts = self._points(x)
        m = len(pts)
        max_exp = self._exps.max(axis=0) if len(self._coefs) else [0] * self.num_vars
        table = self._power_table(pts, max_exp)
        vals = self._eval_terms(self._exps, self._coefs, table, m)
        grads = np.empty((m, self.num_vars))
        for i, g in enumerate(self.gradient()):
            grads[:, i] = self._eval_terms(g._exps, g._coefs, table, m)
        return vals, grads

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionMismatch("use evaluate() for batches of points")
        return float(self.evaluate(x)[0])

    def abs_bounds(self, lo: np.ndarray, hi: np.ndarray) -> tuple:
        """Interval-arithmetic bounds on |f| over boxes [lo, hi] (arrays of shape (B, n)).

        The bounds are computed term by term and are therefore conservative;
        returns (lower, upper) arrays of shape (B,).
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        nb = lo.shape[0]
        tot_lo = np.zeros(nb)
        tot_hi = np.zeros(nb)
        mag = np.zeros(nb)
        for exp, c in zip(self._exps, self._coefs):
            t_lo = np.ones(nb)
            t_hi = np.ones(nb)
            for i, a in enumerate(exp):
                if a == 0:
                    continue
                f_lo, f_hi = _power_interval(lo[:, i], hi[:, i], int(a))
                prods = np.stack([t_lo * f_lo, t_lo * f_hi, t_hi * f_lo, t_hi * f_hi])
                t_lo, t_hi = prods.min(axis=0), prods.max(axis=0)
            if c >= 0:
                tot_lo += c * t_lo
                tot_hi += c * t_hi
            else:
                tot_lo += c * t_hi
                tot_hi += c * t_lo
            mag += abs(c) * np.maximum(np.abs(t_lo), np.abs(t_hi))
        slack = 1e-13 * mag
        tot_lo -= slack
        tot_hi += slack
        upper = np.maximum(np.abs(tot_lo), np.abs(tot_hi))
        lower = np.where((tot_lo > 0) | (tot_hi < 0), np.minimum(np.abs(tot_lo), np.abs(tot_hi)), 0.0)
        return lower, upper

    def slice_first(self, rest: Sequence[float]) -> np.ndarray:
        """Coefficients (ascending) of t -> f(t, rest) as floats."""
        rest = np.asarray(rest, dtype=float)
        if rest.shape != (self.num_vars - 1,):
            raise DimensionMismatch(f"slice needs {self.num_vars - 1} fixed coordinates")
        deg = self.degree_in(0)
        buckets = [[] for _ in range(deg + 1)]
        for exp, c in self._terms:
            v = float(c)
            for a, r in zip(exp[1:], rest):
                v *= r ** a
            buckets[exp[0]].append(v)
        return np.array([math.fsum(b) for b in buckets])


def _power_interval(lo: np.ndarray, hi: np.ndarray, k: int) -> tuple:
    plo = lo ** k
    phi = hi ** k
    if k % 2 == 1:
        return plo, phi
    low = np.where(lo >= 0, plo, np.where(hi <= 0, phi, 0.0))
    high = np.maximum(plo, phi)
    return low, high


def _format_coef(c) -> str:
    if isinstance(c, Fraction):
        return f"{c.numerator}/{c.denominator}"
    return repr(c)


# -- text format --------------------------------------------------------------
_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?|\.\d+(?:[eE][+-]?\d+)?)
      | (?P<var>x(?P<idx>\d+))
      | (?P<pow>\*\*|\^)
      | (?P<op>[-+*])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list:
    pos = 0
    tokens = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolynomialSyntaxError(f"unexpected character at position {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("var") is not None:
            idx = int(m.group("idx"))
            if idx < 1:
                raise PolynomialSyntaxError("variables are numbered from x1")
            tokens.append(("var", idx))
        elif m.group("pow") is not None:
            tokens.append(("pow", "^"))
        else:
            tokens.append(("op", m.group("op")))
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


def _number(s: str):
    if "/" in s:
        p, q = s.split("/")
        if "." in p or "e" in p.lower():
            raise PolynomialSyntaxError(f"rational literal must be integer/integer: {s!r}")
        if int(q) == 0:
            raise PolynomialSyntaxError("zero denominator")
        return _normalize_coef(Fraction(int(p), int(q)))
    if any(ch in s for ch in ".eE"):
        return float(s)
    return int(s)


def parse_polynomial(text: str, num_vars: int | None = None) -> SparsePolynomial:
    """Parse ``c * x1^a1 * ... * xn^an`` terms joined by ``+``/``-``.

    Grammar (whitespace ignored)::

        poly   := [sign] term (sign term)*
        term   := factor ("*" factor)*
        factor := number | "x" index [("^" | "**") integer]
        number := integer | decimal | integer "/" integer

    Variables are ``x1 .. xn``; ``num_vars`` defaults to the largest index used.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise PolynomialSyntaxError("empty polynomial")
    pos = 0
    terms = []
    max_idx = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    sign = 1
    kind, val = peek()
    if kind == "op" and val in "+-":
        sign = -1 if val == "-" else 1
        pos += 1
    while True:
        coef = sign
        powers: dict = {}
        expect_factor = True
        while expect_factor:
            kind, val = peek()
            if kind == "num":
                coef = coef * _number(val)
                pos += 1
            elif kind == "var":
                pos += 1
                a = 1
                k2, _ = peek()
                if k2 == "pow":
                    pos += 1
                    k3, v3 = peek()
                    if k3 != "num" or not v3.isdigit():
                        raise PolynomialSyntaxError("exponent must be a non-negative integer")
                    a = int(v3)
                    pos += 1
                powers[val] = powers.get(val, 0) + a
                max_idx = max(max_idx, val)
            else:
                raise PolynomialSyntaxError(f"expected a number or variable, found {val!r}")
            kind, val = peek()
            if kind == "op" and val == "*":
                pos += 1
            else:
                expect_factor = False
        terms.append((powers, coef))
        kind, val = peek()
        if kind is None:
            break
        if kind == "op" and val in "+-":
            sign = -1 if val == "-" else 1
            pos += 1
            if peek()[0] is None:
                raise PolynomialSyntaxError("dangling operator")
        else:
            raise PolynomialSyntaxError(f"unexpected token {val!r}")
    n = max(max_idx, 1) if num_vars is None else int(num_vars)
    if n < max_idx:
        raise PolynomialSyntaxError(f"x{max_idx} used but num_vars={n}")
    out = []
    for powers, coef in terms:
        exp = [0] * n
        for idx, a in powers.items():
            exp[idx - 1] = a
        out.append((tuple(exp), coef))
    return SparsePolynomial(n, out)


# -- module-level operations ----------------------------------------------------
def evaluate(f: SparsePolynomial, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (f.num_vars,):
        raise DimensionMismatch(f"point has shape {x.shape}, polynomial has {f.num_vars} variables")
    return f(x)


def gradient(f: SparsePolynomial) -> tuple:
    return f.gradient()


@dataclass(frozen=True)
class UnivariateRestriction:
    """phi(rho) = f(rho * direction) as ascending coefficients."""

    coeffs: tuple
    direction: tuple

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coeffs) if c != 0]
        return nz[-1] if nz else 0

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        acc = np.zeros_like(rho)
        for c in reversed(self.coeffs):
            acc = acc * rho + float(c)
        return acc

    def log_derivative(self, rho) -> np.ndarray:
        """phi'(rho)/phi(rho), evaluated after factoring out rho^N to avoid underflow."""
        order = vanishing_order(self)
        if order is IDENTICALLY_ZERO:
            raise PreconditionError("identically zero restriction")
        rho = np.asarray(rho, dtype=float)
        tail = [float(c) for c in self.coeffs[order:]]
        num = np.zeros_like(rho)
        den = np.zeros_like(rho)
        for k in range(len(tail) - 1, -1, -1):
            den = den * rho + tail[k]
            num = num * rho + (order + k) * tail[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            return num / (rho * den) if order + len(tail) > 1 else np.zeros_like(rho)


def restrict_to_ray(f: SparsePolynomial, omega: Sequence[float]) -> UnivariateRestriction:
    """Coefficients of rho -> f(rho * omega); the rho^d coefficient is sum_{|a|=d} c_a omega^a."""
    if len(omega) != f.num_vars:
        raise DimensionMismatch("direction has the wrong dimension")
    exact = all(_is_exact(w) for w in omega) and f.is_exact
    if exact:
        om = [Fraction(w) for w in omega]
        norm2 = sum(w * w for w in om)
        if norm2 == 0:
            raise PreconditionError("zero direction vector")
        if norm2 != 1:
            raise PreconditionError("direction must be a unit vector")
    else:
        om = [float(w) for w in omega]
        norm = math.sqrt(math.fsum(w * w for w in om))
        if norm == 0:
            raise PreconditionError("zero direction vector")
        if abs(norm - 1.0) > 1e-12:
            raise PreconditionError(f"direction must be a unit vector (|omega| = {norm!r})")
    buckets: dict = {}
    for exp, c in f.items():
        d = sum(exp)
        v = c if exact else float(c)
        for w, a in zip(om, exp):
            if a:
                v = v * w ** a
        buckets.setdefault(d, []).append(v)
    deg = f.degree
    if exact:
        coeffs = tuple(_normalize_coef(sum(buckets.get(d, []), Fraction(0))) for d in range(deg + 1))
    else:
        coeffs = tuple(math.fsum(buckets.get(d, [])) for d in range(deg + 1))
    return UnivariateRestriction(coeffs=coeffs, direction=tuple(omega))


def vanishing_order(phi: UnivariateRestriction):
    """Smallest N with a nonzero rho^N coefficient, or IDENTICALLY_ZERO."""
    coeffs = phi.coeffs
    if all(_is_exact(c) for c in coeffs):
        for k, c in enumerate(coeffs):
            if c != 0:
                return k
        return IDENTICALLY_ZERO
    scale = max((abs(float(c)) for c in coeffs), default=0.0)
    if scale == 0.0:
        return IDENTICALLY_ZERO
    for k, c in enumerate(coeffs):
        if abs(float(c)) > ZERO_RTOL * scale:
            return k
    return IDENTICALLY_ZERO

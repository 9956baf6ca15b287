"""Distances between spectral distributions.

The main tool is a metric on sub-probability distribution functions built
from a countable family of trapezoid test functions: f takes the constant
value 1/m on [a, b] (a, b rational), ramps linearly to zero over [a - 1/m, a]
and [b, b + 1/m], and vanishes outside.  The metric is
sum_i |int f_i dF - int f_i dG| 2^{-i}; truncating at i_max leaves a tail of
at most 2^{1 - i_max} since every term is bounded by 2.

Enumeration freeze: index i runs over tuples (m, p_a, q_a, p_b, q_b) with
1 <= q <= m, |p| <= m q, a = p_a/q_a < b = p_b/q_b, ordered by m then
lexicographically, deduplicated on the rational values (m, a, b), 1-based.
Any enumeration induces the same topology; a fixed one makes reported
values reproducible.  Reported metric values are enumeration-relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import DensityCurve, EmpiricalDistribution, LengthMismatchError

DEFAULT_I_MAX = 24   # tail 2^-23 ~ 1.2e-7, below every comparison tolerance


@dataclass(frozen=True)
class TestFunctionIndex:
    """The i-th trapezoid test function: plateau 1/m on [a, b]."""

    __test__ = False  # domain type, not a pytest class

    i: int
    m: int
    a: Fraction
    b: Fraction

    def __call__(self, x):
        w = 1.0 / self.m
        a, b = float(self.a), float(self.b)
        x = np.asarray(x, dtype=float)
        rise = (x - (a - w)) / w
        fall = ((b + w) - x) / w
        return w * np.clip(np.minimum(rise, fall), 0.0, 1.0)

    @classmethod
    def from_index(cls, i: int) -> "TestFunctionIndex":
        if i < 1:
            raise ValueError("indices are 1-based")
        _extend_enumeration(i)
        return _ENUMERATION[i - 1]


_ENUMERATION: list[TestFunctionIndex] = []
_SEEN: set = set()
_NEXT_M = 1


def _rational_pairs(m: int):
    """(p, q) with 1 <= q <= m and |p| <= m q, ascending lexicographically."""
    for p in range(-m * m, m * m + 1):
        q_min = max(1, math.ceil(abs(p) / m))
        for q in range(q_min, m + 1):
            yield p, q


def _extend_enumeration(upto: int) -> None:
    global _NEXT_M
    while len(_ENUMERATION) < upto:
        m = _NEXT_M
        pairs = list(_rational_pairs(m))
        for p_a, q_a in pairs:
            a = Fraction(p_a, q_a)
            for p_b, q_b in pairs:
                b = Fraction(p_b, q_b)
                if not a < b:
                    continue
                key = (m, a, b)
                if key in _SEEN:
                    continue
                _SEEN.add(key)
                _ENUMERATION.append(TestFunctionIndex(len(_ENUMERATION) + 1, m, a, b))
        _NEXT_M += 1


def integrate_test_function(F, tf: TestFunctionIndex) -> float:
    """int f dF: exact atom sum for empirical F, trapezoid for a curve."""
    if isinstance(F, EmpiricalDistribution):
        return float(np.mean(tf(F.atoms)))
    if isinstance(F, DensityCurve):
        val = float(np.trapezoid(tf(F.xs) * F.density, F.xs))
        if F.atom_at_zero:
            val += F.atom_at_zero * float(tf(0.0))
        return val
    raise TypeError(f"cannot integrate against {type(F).__name__}")


@dataclass(frozen=True)
class DMetricResult:
    value: float
    tail_bound: float

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


def d_metric(F, G, i_max: int = DEFAULT_I_MAX) -> DMetricResult:
    """Truncated test-function metric; the true value lies in [value, value + tail]."""
    if i_max < 1:
        raise ValueError("i_max must be at least 1")
    total = 0.0
    for i in range(1, i_max + 1):
        tf = TestFunctionIndex.from_index(i)
        total += abs(integrate_test_function(F, tf) - integrate_test_function(G, tf)) * 2.0 ** (-i)
    return DMetricResult(value=total, tail_bound=2.0 ** (1 - i_max))


def ks_distance(F: EmpiricalDistribution, G) -> float:
    """Sup-norm distance, evaluated from both sides at every atom."""
    if not isinstance(F, EmpiricalDistribution):
        raise TypeError("first argument must be an EmpiricalDistribution")
    if isinstance(G, EmpiricalDistribution):
        pts = np.union1d(F.atoms, G.atoms)
        diffs = [np.abs(F.cdf(pts) - G.cdf(pts)), np.abs(F.cdf_left(pts) - G.cdf_left(pts))]
        return float(max(np.max(d) for d in diffs))
    if isinstance(G, DensityCurve):
        pts = np.union1d(F.atoms, G.xs)
        gv = G.cdf_at(pts)
        hi = np.max(np.abs(F.cdf(pts) - gv))
        lo = np.max(np.abs(F.cdf_left(pts) - gv))
        return float(max(hi, lo))
    raise TypeError(f"cannot compare against {type(G).__name__}")


def comparison_record(F, G, i_max: int = DEFAULT_I_MAX, n: int | None = None,
                      N: int | None = None, seed: int | None = None) -> dict:
    """Flat JSON-style comparison record between two distributions.

    wasserstein_bound is only defined for two empirical distributions with
    matched atom counts; otherwise it is None.
    """
    dm = d_metric(F, G, i_max)
    bound = None
    if (isinstance(F, EmpiricalDistribution) and isinstance(G, EmpiricalDistribution)
            and len(F) == len(G)):
        bound = wasserstein_sq_bound(F.atoms, G.atoms)
    return {
        "d_value": dm.value,
        "d_tail": dm.tail_bound,
        "ks": ks_distance(F, G),
        "wasserstein_bound": bound,
        "n": n,
        "N": N,
        "seed": seed,
    }


def wasserstein_sq_bound(xs, ys) -> float:
    """sqrt((1/n) sum (x_j - y_j)^2): upper bound certificate for the metric.

    For empirical distributions on matched ascending samples this dominates
    the test-function metric.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise LengthMismatchError("inputs must be 1-d sequences of equal length")
    if np.any(np.diff(xs) < 0) or np.any(np.diff(ys) < 0):
        raise ValueError("inputs must be ascending")
    return float(np.sqrt(np.mean((xs - ys) ** 2)))

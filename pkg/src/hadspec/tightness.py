"""Exceptional-line planning and entrywise truncation of weight profiles.

A profile is "tight at level epsilon" when removing at most floor(eps * n)
rows plus columns leaves all remaining entries below some bound M.  The
planner peels lines greedily: at each step it removes the single row or
column whose removal most reduces the maximum surviving entry.  Downstream
consumers only need a feasible plan, not an optimal one; minimizing M under
a line budget is a combinatorial problem this module deliberately does not
solve, and a brute-force oracle bounds the greedy gap in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import WeightProfile, validate_profile


class ZeroColumnAfterTruncationError(ValueError):
    """Entrywise truncation zeroed out whole columns; caller decides."""

    def __init__(self, columns):
        self.columns = tuple(int(k) for k in columns)
        self.k = self.columns[0]
        super().__init__(
            f"columns {self.columns} (0-based) became all-zero after truncation")


@dataclass(frozen=True)
class TruncationPlan:
    """Lines to remove and the resulting entry bound M."""

    epsilon: float
    M: float
    rows_removed: tuple
    cols_removed: tuple
    budget: int

    def __post_init__(self):
        if len(self.rows_removed) + len(self.cols_removed) > self.budget:
            raise ValueError("plan exceeds its line budget")

    @property
    def lines_used(self) -> int:
        return len(self.rows_removed) + len(self.cols_removed)

    def to_record(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "M": self.M,
            "rows": list(self.rows_removed),
            "cols": list(self.cols_removed),
            "budget": self.budget,
        }


def _masked_max(entries, row_ok, col_ok) -> float:
    sub = entries[np.ix_(row_ok, col_ok)]
    return float(sub.max()) if sub.size else 0.0


def plan_truncation(profile: WeightProfile, epsilon: float) -> TruncationPlan:
    """Greedy line peeling under the budget floor(eps * n).

    Each step removes the single row or column whose removal most reduces
    the maximum surviving entry; when the current maximum is spread over
    several lines so that no single removal lowers it, the line covering
    the most maximum-attaining entries is peeled instead (rows before
    columns, lower index first on ties).  Removals past the last strict
    drop of the maximum are rolled back, so an already-flat profile removes
    nothing.
    """
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    budget = int(np.floor(epsilon * profile.n))
    entries = profile.entries
    row_ok = np.ones(profile.n, dtype=bool)
    col_ok = np.ones(profile.N, dtype=bool)
    removals: list[tuple[str, int]] = []   # trajectory in removal order
    last_drop = 0                          # removals needed for the best M seen

    while len(removals) < budget:
        current = _masked_max(entries, row_ok, col_ok)
        if current <= 0:
            break
        best = (current, None, None)
        for i in np.nonzero(row_ok)[0]:
            row_ok[i] = False
            cand = _masked_max(entries, row_ok, col_ok)
            row_ok[i] = True
            if cand < best[0]:
                best = (cand, "row", int(i))
        for k in np.nonzero(col_ok)[0]:
            col_ok[k] = False
            cand = _masked_max(entries, row_ok, col_ok)
            col_ok[k] = True
            if cand < best[0]:
                best = (cand, "col", int(k))
        if best[1] is None:
            # maximum is attained on several lines: peel the best cover
            at_max = (entries >= current) & row_ok[:, None] & col_ok[None, :]
            row_hits = at_max.sum(axis=1)
            col_hits = at_max.sum(axis=0)
            i = int(np.argmax(row_hits))
            k = int(np.argmax(col_hits))
            if row_hits[i] >= col_hits[k]:
                best = (current, "row", i)
            else:
                best = (current, "col", k)
        kind, idx = best[1], best[2]
        if kind == "row":
            row_ok[idx] = False
        else:
            col_ok[idx] = False
        removals.append((kind, idx))
        if _masked_max(entries, row_ok, col_ok) < current:
            last_drop = len(removals)

    # roll back peels past the last strict improvement
    for kind, idx in removals[last_drop:]:
        if kind == "row":
            row_ok[idx] = True
        else:
            col_ok[idx] = True
    removals = removals[:last_drop]

    rows = tuple(idx for kind, idx in removals if kind == "row")
    cols = tuple(idx for kind, idx in removals if kind == "col")
    M = _masked_max(entries, row_ok, col_ok)
    return TruncationPlan(epsilon=epsilon, M=M, rows_removed=rows,
                          cols_removed=cols, budget=budget)


def truncate_profile(profile: WeightProfile, d_eps: float) -> WeightProfile:
    """Zero every weight above d_eps (keep entries <= d_eps).

    Choose d_eps at least the plan's M so the surviving entries are exactly
    those outside the removed lines.  Columns that become all-zero violate
    the nonzero-column assumption and are surfaced as an error.
    """
    if d_eps < 0:
        raise ValueError("d_eps must be nonnegative")
    out = np.where(profile.entries <= d_eps, profile.entries, 0.0)
    dead = np.nonzero(~(out > 0).any(axis=0))[0]
    if dead.size:
        raise ZeroColumnAfterTruncationError(dead)
    return validate_profile(out)

"""Coupled fixed-point solver for e0(z) with uniqueness/stability certificates.

The iteration map sends e in (C+)^N to

    T(e)_j = (1/n) sum_i d_ij^2 / ( (1/N) sum_k d_ik^2 / (1 + (n/N) e_k) - z ),

whose unique fixed point in the upper half-plane defines the deterministic
equivalent's Stieltjes transform G(z) = (1/n) sum_i 1/denom_i.  Convergence
of the plain iteration is guaranteed only locally; the solver damps
adaptively for global robustness, and every solution ships with the
spectral-radius certificate rho(C0) < 1 plus the imaginary-part identity
defect, which together certify uniqueness and local stability.

Identical columns of the weight profile provably carry identical solution
components, so the iteration runs on the deduplicated (reduced) system and
expands afterwards; results are identical up to floating-point grouping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FixedPointSolution, SpectralPoint, WeightProfile, ZGrid

_MIN_DAMPING = 1.0 / 64.0
_POWER_TOL = 1e-12
_POWER_CAP = 50_000
_POWER_STALL = 1e-10


class NonpositiveImaginaryInputError(ValueError):
    """An input vector left the open upper half-plane."""


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-point solver knobs.

    damping is the initial mixing weight alpha in e <- (1-alpha) e + alpha T(e);
    it is halved (floor 1/64) whenever the residual increases and restored
    after 10 consecutive decreases.
    """

    tol: float = 1e-12
    max_iter: int = 10_000
    damping: float = 1.0
    continuation: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class ContractionDiagnostics:
    """Certificate data at a solution: e2 = C0 e2 + v b0 and rho(C0) < 1."""

    C0: np.ndarray
    b0: np.ndarray
    e2: np.ndarray
    rho: float
    identity_defect: float
    power_stalled: bool = False

    def __post_init__(self):
        if np.any(self.C0 < 0):
            raise ValueError("C0 must be entrywise nonnegative")
        if np.any(self.b0 <= 0):
            raise ValueError("b0 must be entrywise positive")
        if np.any(self.e2 <= 0):
            raise ValueError("e2 must be entrywise positive")


def _as_z(z) -> complex:
    if isinstance(z, SpectralPoint):
        return z.z
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"z must lie in the open upper half-plane, got {z}")
    return z


def _check_upper(e: np.ndarray) -> None:
    if np.any(e.imag <= 0):
        raise NonpositiveImaginaryInputError("every component must have positive imaginary part")


# ---------------------------------------------------------------------------
# elementary maps (full-size, spec surface)
# ---------------------------------------------------------------------------

def row_denominators(profile: WeightProfile, e, z) -> np.ndarray:
    """Inner denominators (1/N) sum_k d_ik^2 / (1 + (n/N) e_k) - z, length n.

    For e in (C+)^N each denominator has imaginary part <= -Im z, so the
    outer sums in the iteration map never blow up.
    """
    z = _as_z(z)
    e = np.asarray(e, dtype=complex)
    _check_upper(e)
    w = 1.0 / (1.0 + profile.c * e)
    return profile.squared @ w / profile.N - z


def iterate_e(profile: WeightProfile, e, z) -> np.ndarray:
    """One application of the fixed-point map; preserves the upper half-plane."""
    denom = row_denominators(profile, e, z)
    return profile.squared.T @ (1.0 / denom) / profile.n


def _g_from_denominators(denom: np.ndarray) -> complex:
    return complex(np.mean(1.0 / denom))


def evaluate_G(profile: WeightProfile, sol: FixedPointSolution, strict: bool = True) -> complex:
    """Stieltjes transform G(z) = (1/n) sum_i 1/denom_i at a solved point."""
    if strict and not sol.converged:
        raise ValueError("solution is not converged; pass strict=False to evaluate anyway")
    denom = row_denominators(profile, sol.e0, sol.z)
    return _g_from_denominators(denom)


# ---------------------------------------------------------------------------
# reduced-system kernels
# ---------------------------------------------------------------------------

def _reduced_parts(profile: WeightProfile):
    red = profile.reduced
    # weighted rows enter e-updates; column masses give the cold start
    t_red = (red.row_mult @ red.d2) / profile.n
    return red, t_red


def _iterate_reduced(red, n, N, c, e, z):
    """Map on unique columns; e has shape (nc,) or (nc, P) for P grid points."""
    w = red.col_mult[:, None] / (1.0 + c * e) if e.ndim == 2 else red.col_mult / (1.0 + c * e)
    denom = red.d2 @ w / N - z
    back = (red.d2 * red.row_mult[:, None]).T @ (1.0 / denom) / n
    return back, denom


def _cold_start(t_red: np.ndarray, v) -> np.ndarray:
    # exact large-v asymptote: e_j ~ i t_j / v
    return 1j * np.multiply.outer(t_red, 1.0 / np.asarray(v)) if np.ndim(v) else 1j * t_red / v


def _expand(red, e_red: np.ndarray) -> np.ndarray:
    return e_red[red.col_inverse]


def _restrict(red, e_full: np.ndarray) -> np.ndarray:
    # representative value per group: first original column in each group
    _, first = np.unique(red.col_inverse, return_index=True)
    return np.asarray(e_full, dtype=complex)[first]


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def spectral_radius_nonneg(C: np.ndarray, start: np.ndarray,
                           rel_tol: float = _POWER_TOL, cap: int = _POWER_CAP):
    """Perron eigenvalue of a nonnegative matrix by power iteration.

    Returns (rho, stalled); stalled is set when the relative eigenvalue
    change still exceeds 1e-10 at the iteration cap.
    """
    x = np.asarray(start, dtype=float)
    norm = x.max()
    if norm <= 0:
        raise ValueError("start vector must be entrywise positive")
    x = x / norm
    rho = 0.0
    for _ in range(cap):
        y = C @ x
        new = float(y.max())
        if new <= 0.0:
            return 0.0, False
        x = y / new
        if abs(new - rho) <= rel_tol * max(new, 1e-300):
            return new, False
        rho = new
    stalled = abs(new - rho) > _POWER_STALL * max(new, 1e-300)
    return new, stalled


def _certificate_reduced(red, n, N, c, v, e_red, denom_red):
    """rho(C0) and the identity defect via the group-collapsed system.

    Nonzero eigenvectors of C0 are constant on groups of identical columns,
    so the Perron value of the nc x nc collapsed matrix equals rho(C0).
    """
    inv_abs2 = 1.0 / np.abs(denom_red) ** 2                     # (nr,)
    wcol = 1.0 / np.abs(1.0 + c * e_red) ** 2                   # (nc,)
    core = (red.d2 * (red.row_mult * inv_abs2)[:, None]).T @ red.d2   # (nc, nc)
    C_red = core / N**2 * (wcol * red.col_mult)[None, :]
    b_red = (red.d2 * red.row_mult[:, None]).T @ inv_abs2 / n   # (nc,)
    e2 = e_red.imag
    defect = float(np.max(np.abs(e2 - C_red @ e2 - v * b_red)))
    rho, stalled = spectral_radius_nonneg(C_red, b_red)
    return rho, defect, stalled


def build_certificate(profile: WeightProfile, sol: FixedPointSolution) -> ContractionDiagnostics:
    """Assemble C0, b0 and the imaginary-part identity defect at a solution."""
    z = sol.z.z
    e = np.asarray(sol.e0, dtype=complex)
    denom = row_denominators(profile, e, z)
    d2 = profile.squared
    inv_abs2 = 1.0 / np.abs(denom) ** 2                          # (n,)
    wcol = 1.0 / np.abs(1.0 + profile.c * e) ** 2                # (N,)
    C0 = ((d2 * inv_abs2[:, None]).T @ d2) / profile.N**2 * wcol[None, :]
    b0 = d2.T @ inv_abs2 / profile.n
    e2 = e.imag
    defect = float(np.max(np.abs(e2 - C0 @ e2 - z.imag * b0)))
    rho, stalled = spectral_radius_nonneg(C0, b0)
    return ContractionDiagnostics(C0=C0, b0=b0, e2=e2, rho=rho,
                                  identity_defect=defect, power_stalled=stalled)


def cross_contraction_matrix(profile: WeightProfile, e, e_bar, z) -> np.ndarray:
    """Matrix A coupling two candidate solutions at the same z.

    Satisfies e - e_bar = A (e - e_bar) for exact solutions; Cauchy-Schwarz
    bounds |A| entrywise by the geometric mean of the two C0 matrices.
    """
    z = _as_z(z)
    e = np.asarray(e, dtype=complex)
    e_bar = np.asarray(e_bar, dtype=complex)
    denom = row_denominators(profile, e, z)
    denom_bar = row_denominators(profile, e_bar, z)
    d2 = profile.squared
    c = profile.c
    core = (d2 / (denom * denom_bar)[:, None]).T @ d2            # (N, N)
    scale = 1.0 / ((1.0 + c * e_bar) * (1.0 + c * e))
    return core / profile.N**2 * scale[None, :]


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_e0(profile: WeightProfile, z, cfg: SolverConfig | None = None,
             warm_start=None) -> FixedPointSolution:
    """Solve the coupled system at one point of the upper half-plane.

    Cold start is the exact large-v asymptote e_j = i t_j / v with
    t_j = (1/n) sum_i d_ij^2.  The iterate never leaves the upper
    half-plane; on hitting max_iter the best iterate is returned with
    converged=False rather than raising.  A warm start that differs across
    identical profile columns is collapsed to its first-column
    representatives (the fixed point is column-symmetric).
    """
    cfg = cfg or SolverConfig()
    zc = _as_z(z)
    red, t_red = _reduced_parts(profile)
    n, N, c = profile.n, profile.N, profile.c
    if warm_start is not None:
        e = _restrict(red, np.asarray(warm_start, dtype=complex))
        _check_upper(e)
    else:
        e = _cold_start(t_red, zc.imag)

    fe, denom = _iterate_reduced(red, n, N, c, e, zc)
    res = float(np.max(np.abs(fe - e)))
    evals = 1
    alpha = cfg.damping
    decreases = 0
    rejects = 0
    best = (e, denom, res)
    while res > cfg.tol and evals < cfg.max_iter:
        cand = e + alpha * (fe - e)
        if np.any(cand.imag <= 0):
            # cannot occur for alpha in (0,1] in exact arithmetic; guard
            # against underflow by rejecting the step, never by projecting
            alpha = max(alpha / 2.0, _MIN_DAMPING)
            rejects += 1
            if rejects > 64:
                break
            continue
        rejects = 0
        fc, denom = _iterate_reduced(red, n, N, c, cand, zc)
        evals += 1
        res_c = float(np.max(np.abs(fc - cand)))
        if res_c > res:
            alpha = max(alpha / 2.0, _MIN_DAMPING)
            decreases = 0
        else:
            decreases += 1
            if decreases >= 10:
                alpha = cfg.damping
                decreases = 0
        e, fe, res = cand, fc, res_c
        if res < best[2]:
            best = (e, denom, res)
    if res > best[2]:
        e, denom, res = best
    # denom tracks e through every path above, so the certificate can reuse it
    rho, defect, stalled = _certificate_reduced(red, n, N, c, zc.imag, e, denom)
    # a solution is only "converged" when the residual target is met AND the
    # uniqueness certificate holds
    converged = res <= cfg.tol and rho < 1.0
    g = (red.row_mult @ (1.0 / denom)) / n
    point = z if isinstance(z, SpectralPoint) else SpectralPoint.of(zc)
    return FixedPointSolution(
        z=point, e0=_expand(red, e), residual=res, rho_C0=rho,
        identity_defect=defect, iterations=evals, g=complex(g),
        converged=converged, rho_stalled=stalled,
    )


def solve_grid(profile: WeightProfile, grid: ZGrid, cfg: SolverConfig | None = None):
    """Solve every grid point, warm-starting from the nearest solved point.

    Failures (unconverged points) are recorded in place and excluded from
    the warm-start pool; the sweep never aborts.
    """
    cfg = cfg or SolverConfig()
    solutions = []
    solved_pts: list[tuple[complex, np.ndarray]] = []
    for point in grid:
        warm = None
        if cfg.continuation and solved_pts:
            dists = [abs(point.z - zc) for zc, _ in solved_pts]
            warm = solved_pts[int(np.argmin(dists))][1]
        sol = solve_e0(profile, point, cfg, warm_start=warm)
        solutions.append(sol)
        if sol.converged:
            solved_pts.append((point.z, sol.e0))
    return solutions


def solve_batch(profile: WeightProfile, xs, v: float, cfg: SolverConfig | None = None,
                warm: np.ndarray | None = None):
    """Solve all points x + iv simultaneously (data-parallel damped iteration).

    Grid points are independent; each column follows exactly the damped
    update rule of solve_e0 and freezes once its residual reaches tol.
    Returns (e_red, residuals, iterations) with e_red of shape
    (unique columns, len(xs)); expand with expand_batch.
    """
    cfg = cfg or SolverConfig()
    red, t_red = _reduced_parts(profile)
    n, N, c = profile.n, profile.N, profile.c
    xs = np.asarray(xs, dtype=float)
    zs = xs + 1j * v
    P = len(xs)
    e = warm.astype(complex).copy() if warm is not None else _cold_start(t_red, np.full(P, v))
    if np.any(e.imag <= 0):
        raise NonpositiveImaginaryInputError("warm start must lie in the upper half-plane")

    fe, _ = _iterate_reduced(red, n, N, c, e, zs)
    res = np.max(np.abs(fe - e), axis=0)
    iters = np.ones(P, dtype=int)
    alpha = np.full(P, cfg.damping)
    decreases = np.zeros(P, dtype=int)
    active = (res > cfg.tol) & (iters < cfg.max_iter)
    while active.any():
        idx = np.where(active)[0]
        ea, fea = e[:, idx], fe[:, idx]
        cand = ea + alpha[idx] * (fea - ea)
        bad = (cand.imag <= 0).any(axis=0)
        if bad.any():
            cand[:, bad] = ea[:, bad]
        fc, _ = _iterate_reduced(red, n, N, c, cand, zs[idx])
        res_c = np.max(np.abs(fc - cand), axis=0)
        worse = res_c > res[idx]
        alpha[idx[worse | bad]] = np.maximum(alpha[idx[worse | bad]] / 2.0, _MIN_DAMPING)
        decreases[idx[worse]] = 0
        decreases[idx[~worse]] += 1
        refresh = idx[decreases[idx] >= 10]
        alpha[refresh] = cfg.damping
        decreases[refresh] = 0
        e[:, idx], fe[:, idx] = cand, fc
        res[idx] = res_c
        iters[idx] += 1
        active[idx] = res_c > cfg.tol
        active &= iters < cfg.max_iter
    return e, res, iters


def expand_batch(profile: WeightProfile, e_red: np.ndarray) -> np.ndarray:
    """Expand a reduced batch (nc, P) back to full length-N columns."""
    return e_red[profile.reduced.col_inverse, :]


def batch_G(profile: WeightProfile, e_red: np.ndarray, xs, v: float) -> np.ndarray:
    """G(x + iv) for every batch column from the reduced solutions."""
    red = profile.reduced
    zs = np.asarray(xs, dtype=float) + 1j * v
    w = red.col_mult[:, None] / (1.0 + profile.c * e_red)
    denom = red.d2 @ w / profile.N - zs[None, :]
    return (red.row_mult @ (1.0 / denom)) / profile.n

"""Maximin and maximin-fractional programs over the action simplex.

Two problem shapes arise when computing guiding distributions:

* maximize min_j (row_j . lam) over the probability simplex, and
* maximize min_j (row_j . lam) / (costs . lam) over the same simplex.

The fractional form reduces to a linear program through the change of
variables y = lam / (costs . lam), z = 1 / (costs . lam): maximize
min_j row_j . y subject to costs . y = 1, y >= 0, and recover
lam = y / sum(y).  Both shapes are solved by an embedded dense two-phase
simplex method (problems here never exceed a few dozen variables), with
Bland's rule against cycling and lexicographically-smallest tie-breaking
among optimal vertices so results are reproducible everywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_RCOST_TOL = 1e-9
_PIVOT_TOL = 1e-9
_RATIO_TIE_TOL = 1e-12


class SolverError(RuntimeError):
    """The embedded simplex solver failed (cycling guard, unbounded, infeasible)."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    DEGENERATE = "degenerate"  # multiple optimal vertices; lexicographic pick
    INFEASIBLE = "infeasible"


def _validate_rows(rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValueError("need at least one objective row and one action")
    if not np.all(np.isfinite(rows)):
        raise ValueError("objective rows must be finite")
    if not np.any(rows > 0.0):
        raise ValueError("no objective row has a strictly positive entry; problem value is 0")
    return rows


@dataclass(frozen=True)
class MaximinProblem:
    """Rows of the inner minimum, one per competing hypothesis."""

    objective_rows: np.ndarray

    def __init__(self, objective_rows):
        object.__setattr__(self, "objective_rows", _validate_rows(objective_rows))

    @property
    def num_actions(self) -> int:
        return self.objective_rows.shape[1]


@dataclass(frozen=True)
class FractionalProblem:
    """Maximin rows plus a strictly positive per-action cost vector."""

    objective_rows: np.ndarray
    costs: np.ndarray

    def __init__(self, objective_rows, costs):
        rows = _validate_rows(objective_rows)
        costs = np.asarray(costs, dtype=float).ravel()
        if costs.shape != (rows.shape[1],):
            raise ValueError(f"costs must have length {rows.shape[1]}, got {costs.shape}")
        if not np.all(np.isfinite(costs)) or np.any(costs <= 0.0):
            raise ValueError("costs must be strictly positive")
        object.__setattr__(self, "objective_rows", rows)
        object.__setattr__(self, "costs", costs)

    @property
    def num_actions(self) -> int:
        return self.objective_rows.shape[1]


@dataclass(frozen=True)
class SimplexSolution:
    """A point on the action simplex together with its achieved objective."""

    lam: np.ndarray
    value: float
    status: Status


def fractional_objective(rows, costs, lam) -> float:
    """min_j (row_j . lam) / (costs . lam) at a simplex point lam."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    costs = np.asarray(costs, dtype=float).ravel()
    lam = np.asarray(lam, dtype=float).ravel()
    return float(np.min(rows @ lam) / (costs @ lam))


# ---------------------------------------------------------------------------
# Dense two-phase simplex on equality standard form
# ---------------------------------------------------------------------------

def _pivot(T, obj, basis, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    obj -= obj[col] * T[row, : obj.size]
    basis[row] = col


def _run_simplex(T, obj, basis, active_cols, max_iter) -> None:
    """Bland-rule pivoting for maximization until no positive reduced cost.

    Columns whose positive reduced cost comes with no usable pivot entry are
    numerically dead (for our bounded encodings a genuinely unbounded ray
    cannot occur) and are skipped; a clearly positive one still raises.
    """
    for _ in range(max_iter):
        candidates = np.nonzero(obj[:active_cols] > _RCOST_TOL)[0]
        progressed = False
        for col in candidates:
            pivcol = T[:, int(col)]
            eligible = pivcol > _PIVOT_TOL
            if not np.any(eligible):
                if obj[col] > 1e-6:
                    raise SolverError("linear program is unbounded")
                continue
            rhs = T[:, -1]
            ratios = np.full(T.shape[0], np.inf)
            ratios[eligible] = rhs[eligible] / pivcol[eligible]
            best = ratios.min()
            tied = np.nonzero(ratios <= best + _RATIO_TIE_TOL)[0]
            row = int(tied[np.argmin(basis[tied])])
            _pivot(T, obj, basis, row, int(col))
            progressed = True
            break
        if not progressed:
            return
    raise SolverError("cycling guard exceeded (iteration cap hit)")


def _simplex_max(c, A, b, max_iter=None):
    """Maximize c @ x subject to A @ x = b, x >= 0.

    Returns (x, value).  Raises SolverError when infeasible, unbounded, or
    the Bland iteration cap is exceeded.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 10 * (n + m) ** 2

    T = np.hstack([A, b[:, None]]).astype(float)
    # Row equilibration: mixed magnitudes (divergences vs. tiny face slacks)
    # otherwise force pivots on near-noise entries.
    scales = np.max(np.abs(T[:, :n]), axis=1)
    scales[scales == 0.0] = 1.0
    T /= scales[:, None]
    flip = T[:, -1] < 0.0
    T[flip] *= -1.0

    # Phase 1: artificial basis, drive sum of artificials to zero.
    T = np.hstack([T[:, :n], np.eye(m), T[:, -1:]])
    basis = np.arange(n, n + m)
    obj = np.concatenate([np.zeros(n), -np.ones(m)])
    obj = obj - obj[basis] @ T[:, : n + m]
    _run_simplex(T, obj, basis, n + m, max_iter)
    art_mask = basis >= n
    if T[art_mask, -1].sum() > 1e-7:
        raise SolverError("linear program is infeasible")
    # Pivot leftover zero-level artificials out (largest pivot for stability);
    # rows with no real-variable entry left are redundant and dropped.
    keep = np.ones(m, dtype=bool)
    for r in np.nonzero(art_mask)[0]:
        col = int(np.argmax(np.abs(T[r, :n])))
        if abs(T[r, col]) > _PIVOT_TOL:
            _pivot(T, obj, basis, int(r), col)
        else:
            keep[r] = False
    if not keep.all():
        T = T[keep]
        basis = basis[keep]

    # Phase 2: original objective on the feasible tableau.
    obj = c.copy() if n == c.size else np.concatenate([c, np.zeros(n - c.size)])
    obj = np.concatenate([obj, np.zeros(m)])
    obj -= c[basis] @ T[:, : n + m]
    obj[basis] = 0.0
    _run_simplex(T, obj, basis, n, max_iter)

    x = np.zeros(n)
    in_range = basis < n
    x[basis[in_range]] = T[in_range, -1]
    return x, float(c @ x)


def _solve_lp(c, A_eq, b_eq, A_ge=None, b_ge=None, max_iter=None):
    """max c @ x s.t. A_eq x = b_eq, A_ge x >= b_ge, x >= 0 (surplus form)."""
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    n = A_eq.shape[1]
    if A_ge is None:
        A = A_eq
        b = np.asarray(b_eq, dtype=float)
        c_full = np.asarray(c, dtype=float)
    else:
        A_ge = np.atleast_2d(np.asarray(A_ge, dtype=float))
        k = A_ge.shape[0]
        A = np.vstack([
            np.hstack([A_eq, np.zeros((A_eq.shape[0], k))]),
            np.hstack([A_ge, -np.eye(k)]),
        ])
        b = np.concatenate([np.asarray(b_eq, dtype=float), np.asarray(b_ge, dtype=float)])
        c_full = np.concatenate([np.asarray(c, dtype=float), np.zeros(k)])
    x, value = _simplex_max(c_full, A, b, max_iter=max_iter)
    return x[:n], value


# ---------------------------------------------------------------------------
# Epigraph encodings and lexicographic tie-breaking
# ---------------------------------------------------------------------------

def _epigraph_solve(rows, weights, max_iter=None):
    """max_{y >= 0, weights . y = 1} min_j row_j . y.

    Variables are [y, t+, t-] with the inner minimum lifted to an epigraph
    variable t = t+ - t-.  Returns (y, t*).
    """
    J, n = rows.shape
    c = np.concatenate([np.zeros(n), [1.0, -1.0]])
    A_eq = np.concatenate([weights, [0.0, 0.0]])[None, :]
    b_eq = np.array([1.0])
    A_ge = np.hstack([rows, -np.ones((J, 1)), np.ones((J, 1))])
    b_ge = np.zeros(J)
    y_ext, value = _solve_lp(c, A_eq, b_eq, A_ge, b_ge, max_iter=max_iter)
    return y_ext[:n], value


def _lex_smallest(n, A_ge, b_ge, max_iter=None):
    """Lexicographically smallest simplex point satisfying A_ge lam >= b_ge.

    Coordinates are minimized in index order, each previous coordinate being
    pinned at its minimum (with a hair of slack so rounding cannot make
    later programs infeasible).
    """
    ones = np.ones((1, n))
    pins: list[np.ndarray] = []
    pin_rhs: list[float] = []
    lam = None
    for k in range(n - 1):
        c = np.zeros(n)
        c[k] = -1.0
        G = np.vstack([A_ge] + pins) if pins else A_ge
        h = np.concatenate([b_ge, np.array(pin_rhs)]) if pins else b_ge
        lam, _ = _solve_lp(c, ones, np.array([1.0]), G, h, max_iter=max_iter)
        pin = np.zeros(n)
        pin[k] = -1.0
        pins.append(pin[None, :])
        pin_rhs.append(-(lam[k] + 1e-10 * max(1.0, abs(lam[k]))))
    return lam


def _clean(lam, raw_value, recompute, label):
    lam = np.asarray(lam, dtype=float).copy()
    if lam.min() < -1e-12:
        raise SolverError(f"{label}: negative simplex coordinate {lam.min():.3e}")
    lam[lam < 1e-9] = 0.0  # face-slack leakage, not genuine mass
    total = lam.sum()
    if abs(total - 1.0) > 1e-9:
        raise SolverError(f"{label}: simplex coordinates sum to {total!r}")
    lam /= total
    check = recompute(lam)
    if abs(check - raw_value) > 1e-8 * max(1.0, abs(raw_value)):
        raise SolverError(f"{label}: objective recomputation {check!r} != LP value {raw_value!r}")
    return lam


def _finalize(lam_refined, raw_value, recompute, lam_first, label):
    """Validate the refined point, falling back to the unrefined optimum.

    The tie-breaking refinement is best-effort: if its output fails the
    simplex/objective re-checks, the plain optimal vertex is used instead
    (the achieved value is identical either way, and the choice is still
    deterministic).
    """
    lam = None
    if lam_refined is not None:
        try:
            lam = _clean(lam_refined, raw_value, recompute, label)
        except SolverError:
            lam = None
    refined = lam is not None
    if lam is None:
        lam = _clean(lam_first, raw_value, recompute, label)
    status = Status.OPTIMAL
    if refined and np.max(np.abs(lam - lam_first)) > 1e-7:
        status = Status.DEGENERATE
    lam.flags.writeable = False
    return SimplexSolution(lam=lam, value=raw_value, status=status)


def solve_maximin(problem: MaximinProblem, lexicographic: bool = True) -> SimplexSolution:
    """Distribution maximizing the worst row average over the simplex.

    With ``lexicographic`` (the default) ties among optimal vertices are
    broken toward the lexicographically smallest distribution; turning it
    off skips the refinement when only the value matters.
    """
    rows = problem.objective_rows
    n = problem.num_actions
    lam0, t_star = _epigraph_solve(rows, np.ones(n))
    lam0 = lam0 / lam0.sum()
    lam = None
    if lexicographic and n > 1:
        # Optimal face: simplex points keeping every row at least t*.
        slack = 1e-9 * max(1.0, abs(t_star))
        try:
            lam = _lex_smallest(n, rows, np.full(rows.shape[0], t_star - slack))
        except SolverError:
            lam = None
    return _finalize(lam, t_star, lambda v: float(np.min(rows @ v)), lam0, "maximin")


def solve_fractional(problem: FractionalProblem, lexicographic: bool = True) -> SimplexSolution:
    """Distribution maximizing (worst row average) / (average cost).

    Solved through the linear-program transform described in the module
    docstring; the returned value is the achieved ratio.
    """
    rows, costs = problem.objective_rows, problem.costs
    n = problem.num_actions
    y, t_star = _epigraph_solve(rows, costs)
    z = y.sum()
    if abs(z) < 1e-12:
        raise SolverError("fractional transform returned z ~ 0; numerical failure")
    lam0 = y / z
    lam = None
    if lexicographic and n > 1:
        # t* equals the ratio objective at lam0 because costs . y = 1, so the
        # optimal face is where every row clears t* times the mean cost.
        slack = 1e-9 * max(1.0, abs(t_star)) * float(np.min(costs))
        face = rows - t_star * costs[None, :]
        try:
            lam = _lex_smallest(n, face, np.full(rows.shape[0], -slack))
        except SolverError:
            lam = None
    return _finalize(
        lam, t_star, lambda v: fractional_objective(rows, costs, v), lam0, "fractional"
    )

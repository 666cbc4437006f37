"""Shared linear-algebra and LP helpers.

Everything in here is deliberately dependency-light: a pivoted row
reduction with an explicit relative threshold (so rank decisions are
reproducible and auditable), a couple of SVD wrappers, and a thin layer
over ``scipy.optimize.linprog`` for the max-slack feasibility programs
used by the adjacency and rationalizability tests.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog

FloatArray = NDArray[np.float64]

#: Relative pivot threshold for row reduction.  A pivot is treated as
#: zero when its magnitude is at most ``RANK_RTOL * (1 + max_abs)``
#: where ``max_abs`` is taken over the original matrix.
RANK_RTOL = 1e-9


def project_vec(vector: FloatArray) -> FloatArray:
    """Remove the mean from a vector (orthogonal projection onto sum-zero)."""
    arr = np.asarray(vector, dtype=np.float64)
    return arr - arr.mean()


def project_rows(matrix: FloatArray) -> FloatArray:
    """Remove each row's mean."""
    arr = np.asarray(matrix, dtype=np.float64)
    return arr - arr.mean(axis=1, keepdims=True)


def as_float_matrix(values: object) -> FloatArray:
    """Coerce ``values`` to a 2-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    return arr


def row_reduce_rank(matrix: object, rtol: float = RANK_RTOL) -> int:
    """Numerical rank via Gaussian elimination with partial pivoting.

    A pivot counts as zero when ``abs(pivot) <= rtol * (1 + max_abs)``,
    with ``max_abs`` the largest absolute entry of the input matrix.
    The same threshold is applied at every elimination step, which keeps
    the decision boundary easy to reason about in tests.
    """
    work = as_float_matrix(matrix).copy()
    if work.size == 0:
        return 0
    threshold = rtol * (1.0 + float(np.max(np.abs(work))))
    rows, cols = work.shape
    rank = 0
    pivot_row = 0
    for col in range(cols):
        if pivot_row >= rows:
            break
        candidates = np.abs(work[pivot_row:, col])
        best = int(np.argmax(candidates)) + pivot_row
        if abs(work[best, col]) <= threshold:
            continue
        if best != pivot_row:
            work[[pivot_row, best]] = work[[best, pivot_row]]
        pivot = work[pivot_row, col]
        below = work[pivot_row + 1 :, col] / pivot
        work[pivot_row + 1 :, :] -= np.outer(below, work[pivot_row, :])
        work[pivot_row + 1 :, col] = 0.0
        rank += 1
        pivot_row += 1
    return rank


def nullspace(matrix: object, rtol: float = RANK_RTOL) -> FloatArray:
    """Orthonormal basis (rows) of the right nullspace of ``matrix``."""
    arr = as_float_matrix(matrix)
    if arr.size == 0:
        return np.eye(arr.shape[1] if arr.ndim == 2 else 0)
    _, s, vt = np.linalg.svd(arr, full_matrices=True)
    cutoff = rtol * (1.0 + float(np.max(np.abs(arr))))
    keep = int(np.sum(s > cutoff))
    return vt[keep:]


def orthonormal_complement(rows: object, dim: int, rtol: float = RANK_RTOL) -> FloatArray:
    """Orthonormal basis (rows) of the orthogonal complement of ``span(rows)`` in R^dim."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.size == 0:
        return np.eye(dim)
    return nullspace(arr.reshape(-1, dim), rtol=rtol)


def max_slack_lp(
    utility: FloatArray,
    target: int,
    tie_with: int | None = None,
) -> tuple[float, FloatArray | None]:
    """Maximize the optimality slack of one action over a belief simplex.

    Finds a belief ``p`` maximizing ``s`` subject to
    ``E_p[u(target)] >= E_p[u(c)] + s`` for every competitor ``c``.
    When ``tie_with`` is given, the program additionally forces
    ``E_p[u(target)] == E_p[u(tie_with)]`` and the tied action is not a
    competitor.  Returns ``(slack, belief)``; an infeasible program
    yields ``(-inf, None)``.

    Callers are expected to pre-scale ``utility`` so the slack lives in
    a known gauge; this routine does no scaling of its own.
    """
    n_actions, n_states = utility.shape
    competitors = [
        c for c in range(n_actions) if c != target and c != tie_with
    ]
    # Variables: p (n_states) then s.
    c_vec = np.zeros(n_states + 1)
    c_vec[-1] = -1.0  # maximize s
    a_ub = np.zeros((len(competitors), n_states + 1))
    for row, comp in enumerate(competitors):
        a_ub[row, :n_states] = utility[comp] - utility[target]
        a_ub[row, -1] = 1.0
    b_ub = np.zeros(len(competitors))
    eq_rows = [np.concatenate([np.ones(n_states), [0.0]])]
    eq_rhs = [1.0]
    if tie_with is not None:
        tie = np.concatenate([utility[target] - utility[tie_with], [0.0]])
        eq_rows.append(tie)
        eq_rhs.append(0.0)
    bounds = [(0.0, None)] * n_states + [(None, 2.0)]
    result = linprog(
        c_vec,
        A_ub=a_ub if competitors else None,
        b_ub=b_ub if competitors else None,
        A_eq=np.array(eq_rows),
        b_eq=np.array(eq_rhs),
        bounds=bounds,
        method="highs",
    )
    if not result.success:
        return float("-inf"), None
    belief = np.clip(result.x[:n_states], 0.0, None)
    total = float(belief.sum())
    if total <= 0.0:
        return float("-inf"), None
    return float(result.x[-1]), belief / total

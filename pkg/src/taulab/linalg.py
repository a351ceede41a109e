"""Small exact linear algebra over the rationals.

Only what the node-wise representation tests need: rank, linear solves and a
vector in the orthogonal complement of a span under a weighted inner product.
Matrices are lists of row lists of ``Q`` scalars; sizes are tiny (one node of
a finite tree), so plain fraction-free-ish Gaussian elimination is enough.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .rationals import ONE, ZERO, Q


def _echelon(rows: list[list]) -> tuple[list[list], list[int]]:
    """Row-reduce in place; returns (echelon rows, pivot column indices)."""
    if not rows:
        return rows, []
    ncols = len(rows[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot_row = None
        for i in range(r, len(rows)):
            if rows[i][c] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rank(matrix: Sequence[Sequence]) -> int:
    rows = [list(row) for row in matrix]
    _, pivots = _echelon(rows)
    return len(pivots)


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> Optional[list]:
    """One exact solution of ``matrix @ x = rhs``, or None if inconsistent."""
    m = len(matrix)
    if m == 0:
        return []
    n = len(matrix[0])
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    rows, pivots = _echelon(aug)
    # Inconsistent iff a pivot lands in the rhs column.
    if n in pivots:
        return None
    x = [ZERO] * n
    for r, c in enumerate(pivots):
        x[c] = rows[r][n]
    return x


def nullspace_vector(matrix: Sequence[Sequence], ncols: int) -> Optional[list]:
    """A nonzero vector with ``matrix @ v = 0``, or None if only v = 0."""
    rows = [list(row) for row in matrix]
    rows, pivots = _echelon(rows)
    free = [c for c in range(ncols) if c not in pivots]
    if not free:
        return None
    c_free = free[0]
    v = [ZERO] * ncols
    v[c_free] = ONE
    for r, c in enumerate(pivots):
        if r < len(rows):
            v[c] = -rows[r][c_free]
    return v


def weighted_orthogonal_vector(
    vectors: Sequence[Sequence], weights: Sequence
) -> Optional[list]:
    """A nonzero v with sum_b w_b u_b v_b = 0 for every u in ``vectors``.

    Weights must be strictly positive.  Returns None when the vectors span
    everything, i.e. the complement is trivial.
    """
    n = len(weights)
    rows = [[Q(u[b]) * weights[b] for b in range(n)] for u in vectors]
    return nullspace_vector(rows, n)

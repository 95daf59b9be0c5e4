"""Small dense two-phase simplex with Bland's anti-cycling rule.

Solves ``maximize c @ x  s.t.  A_eq @ x == b_eq, x >= 0``.  Meant for the
tiny programs that show up in Pareto-distance computations (tens of
variables), where an exact pivoting method is preferable to an interior
point solver.
"""

import numpy as np


class InfeasibleError(ValueError):
    pass


class UnboundedError(ValueError):
    pass


_EPS = 1e-11


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run(T: np.ndarray, basis: list, allowed: int, max_iter: int) -> None:
    """Bland's rule on tableau T whose last row is the reduced-cost row
    (entries < 0 can improve) and last column the right-hand side."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        obj = T[-1, :allowed]
        entering = np.flatnonzero(obj < -_EPS)
        if entering.size == 0:
            return
        col = int(entering[0])
        column = T[:m, col]
        positive = column > _EPS
        if not positive.any():
            raise UnboundedError("objective is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _EPS * max(1.0, abs(best)))
        row = min(ties, key=lambda r: basis[r])
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError("simplex iteration limit reached")


def linprog_simplex(c, A_eq, b_eq, max_iter: int = 10_000):
    """Return ``(x, value)`` maximizing ``c @ x`` over the standard-form polytope.

    Raises InfeasibleError or UnboundedError.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).ravel()
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: artificial variables n..n+m-1, minimize their sum
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run(T, basis, n + m, max_iter)
    scale = max(1.0, np.abs(b).max(initial=0.0))
    if -T[-1, -1] > 1e-9 * scale:
        raise InfeasibleError("constraints are infeasible")

    # drive remaining artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > _EPS)
            if cand.size:
                _pivot(T, r, int(cand[0]))
                basis[r] = int(cand[0])
    keep = [r for r in range(m) if basis[r] < n]
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]

    # phase 2
    T2[-1, :n] = -c
    for r, j in enumerate(basis2):
        T2[-1] -= T2[-1, j] * T2[r]
    _run(T2, basis2, n, max_iter)
    x = np.zeros(n)
    for r, j in enumerate(basis2):
        x[j] = T2[r, -1]
    return x, float(c @ x)

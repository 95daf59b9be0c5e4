"""Pareto-front enumeration (optimistic linear support), the normalized
L-infinity distance to a front, Pareto paths between optimal deterministic
policies and return-aliasing diagnostics."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .momdp import (
    DeterministicPolicy,
    TabularMOMDP,
    enumerate_deterministic_policies,
    evaluate_returns,
    lexicographic_optimal_policy,
    scalarized_value_iteration,
    state_values,
)
from .simplex import linprog_simplex


class PathError(ValueError):
    """Raised when pareto_path's inputs are not optimal for the given weight."""


class PathVerificationError(RuntimeError):
    """An intermediate policy on a constructed path failed verification."""


@dataclass(frozen=True, eq=False)
class ParetoFront:
    vertices: np.ndarray
    supporting_weights: np.ndarray
    witness_policies: list = field(default_factory=list)

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float, ndmin=2)
        W = np.array(self.supporting_weights, dtype=float, ndmin=2)
        if V.size == 0:
            raise ValueError("a front needs at least one vertex")
        if W.shape != V.shape:
            raise ValueError("one supporting weight per vertex is required")
        V.setflags(write=False)
        W.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "supporting_weights", W)
        object.__setattr__(self, "witness_policies", list(self.witness_policies))

    def __len__(self):
        return len(self.vertices)

    @property
    def num_objectives(self) -> int:
        return self.vertices.shape[1]

    def ranges(self) -> np.ndarray:
        R = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return np.where(R > 0, R, 1.0)

    def to_csv(self, path) -> None:
        d = self.num_objectives
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow([f"J_{i + 1}" for i in range(d)] + [f"w_{i + 1}" for i in range(d)])
            for v, w in zip(self.vertices, self.supporting_weights):
                out.writerow([repr(float(x)) for x in (*v, *w)])

    @classmethod
    def from_csv(cls, path) -> "ParetoFront":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        d = len(rows[0]) // 2
        data = np.array(rows[1:], dtype=float)
        return cls(data[:, :d], data[:, d:])


@dataclass(frozen=True, eq=False)
class DistanceReport:
    delta: float
    mixture_weights: np.ndarray
    ranges: np.ndarray
    raw_delta: float


# --- LP distance ----------------------------------------------------------------

def _lp_gap(vertices: np.ndarray, J: np.ndarray, R: np.ndarray):
    """max delta s.t. sum_j alpha_j v_j >= J + delta R, alpha in simplex.

    delta is written as lo + t with t >= 0, where lo is the gap achieved by
    the best single vertex (always feasible).  Standard form over
    [alpha (n), t, slack (d)].
    """
    n, d = vertices.shape
    G = ((vertices - J) / R).T  # d x n
    lo = float(G.min(axis=0).max())
    A = np.zeros((d + 1, n + 1 + d))
    A[:d, :n] = G
    A[:d, n] = -1.0
    A[:d, n + 1:] = -np.eye(d)
    A[d, :n] = 1.0
    b = np.zeros(d + 1)
    b[:d] = lo
    b[d] = 1.0
    c = np.zeros(n + 1 + d)
    c[n] = 1.0
    x, value = linprog_simplex(c, A, b)
    alpha = np.clip(x[:n], 0.0, None)
    return lo + value, alpha / alpha.sum()


def linf_pareto_distance(front: ParetoFront, J) -> DistanceReport:
    """Largest normalized uniform improvement over J achievable by mixing
    front vertices; zero when J is on or beyond the front."""
    J = np.asarray(J, dtype=float)
    if J.shape != (front.num_objectives,):
        raise ValueError("return vector has the wrong dimension")
    if not np.isfinite(J).all():
        raise ValueError("return vector must be finite")
    R = front.ranges()
    raw, alpha = _lp_gap(front.vertices, J, R)
    return DistanceReport(max(raw, 0.0), alpha, R, raw)


def is_dominated(front: ParetoFront, J, eps: float = 0.0) -> bool:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return linf_pareto_distance(front, J).delta > eps


# --- corner weights -------------------------------------------------------------

def _simplex_weights_from(rows: np.ndarray):
    """Solve rows @ w = 0 with sum(w) = 1 for each stacked (d-1, d) system."""
    d = rows.shape[-1]
    k = rows.shape[0]
    M = np.concatenate([rows, np.ones((k, 1, d))], axis=1)
    rhs = np.zeros((k, d))
    rhs[:, -1] = 1.0
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-12
    out = np.full((k, d), np.nan)
    if ok.any():
        out[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    return out


def corner_weights(values: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Vertices of the upper envelope w -> max_v w.v over the weight simplex.

    For d = 2 these are the simplex endpoints plus the crossing weights of
    envelope-adjacent value vectors; for d = 3 they come from intersecting
    pairs of hyperplanes drawn from {w.(v_i - v_j) = 0} and {w_k = 0}.
    """
    V = np.asarray(values, dtype=float)
    d = V.shape[1]
    if d == 1:
        return np.ones((1, 1))
    planes = [np.eye(d)[k] for k in range(d)]
    planes += [V[i] - V[j] for i, j in itertools.combinations(range(len(V)), 2)
               if np.abs(V[i] - V[j]).max() > tol]
    planes = np.array(planes)
    combos = np.array(list(itertools.combinations(range(len(planes)), d - 1)))
    W = _simplex_weights_from(planes[combos])
    W = W[np.isfinite(W).all(axis=1)]
    W = W[(W >= -tol).all(axis=1)]
    W = np.clip(W, 0.0, None)
    W /= W.sum(axis=1, keepdims=True)
    if len(W) == 0:
        return W
    # keep points where the envelope is attained by >= d vectors/boundaries
    scores = W @ V.T
    best = scores.max(axis=1, keepdims=True)
    scale = tol * np.maximum(1.0, np.abs(best))
    active = (scores >= best - scale).sum(axis=1) + (W <= tol).sum(axis=1)
    W = W[active >= d]
    return _dedupe_rows(W, tol)


def _dedupe_rows(W: np.ndarray, tol: float) -> np.ndarray:
    out = []
    for w in W[np.lexsort(W.T[::-1])]:
        if not out or np.abs(out[-1] - w).max() > tol:
            if not any(np.abs(o - w).max() <= tol for o in out):
                out.append(w)
    return np.array(out).reshape(-1, W.shape[1])


# --- front construction -----------------------------------------------------------

def prune_to_extreme(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of points not weakly dominated by any mixture of the others."""
    P = np.asarray(points, dtype=float)
    keep: list[int] = []
    for i in range(len(P)):
        if not any(np.abs(P[i] - P[j]).max() <= tol for j in keep):
            keep.append(i)
    # cheap pairwise filter before the LPs
    keep = [i for i in keep
            if not any(j != i and np.all(P[j] >= P[i] - tol) for j in keep)]
    R = P[keep].max(axis=0) - P[keep].min(axis=0)
    R = np.where(R > 0, R, 1.0)
    # weak domination by mixtures is transitive, so one pass is enough
    for i in list(keep):
        others = [j for j in keep if j != i]
        if others and _lp_gap(P[others], P[i], R)[0] >= -tol:
            keep.remove(i)
    return np.array(keep, dtype=np.int64)


def _support_weights(V: np.ndarray, tol: float) -> np.ndarray:
    """Centroid of the corner weights at which each vertex is optimal."""
    d = V.shape[1]
    if len(V) == 1:
        return np.full((1, d), 1.0 / d)
    W = corner_weights(V, tol)
    scores = W @ V.T
    best = scores.max(axis=1, keepdims=True)
    opt = scores >= best - tol * np.maximum(1.0, np.abs(best))
    out = np.zeros_like(V)
    for k in range(len(V)):
        ws = W[opt[:, k]]
        out[k] = ws.mean(axis=0) if len(ws) else np.full(d, 1.0 / d)
    return out / out.sum(axis=1, keepdims=True)


def front_from_points(points, policies=None, tol: float = 1e-9) -> ParetoFront:
    """Front of conv(points): keep non-dominated extreme points, attach
    supporting weights from the corner-weight arrangement."""
    P = np.asarray(points, dtype=float)
    idx = prune_to_extreme(P, tol)
    V = P[idx]
    order = np.lexsort(V.T[::-1])[::-1]
    V = V[order]
    W = _support_weights(V, 1e-10) if V.shape[1] <= 3 else np.full_like(V, 1.0 / V.shape[1])
    wit = [policies[i] for i in idx[order]] if policies is not None else []
    return ParetoFront(V, W, wit)


def ols_front(m: TabularMOMDP, tol: float = 1e-9, max_rounds: int = 10_000) -> ParetoFront:
    """Exact Pareto front by optimistic linear support.

    Starting from the simplex corners, repeatedly computes the corner weights
    of the current envelope and solves the scalarized problem there, adding
    a new value vector whenever it improves the envelope by more than tol.
    Boundary-weight solves break ties toward the objective sum so that only
    non-dominated vectors enter.
    """
    d = m.num_objectives
    if d > 3:
        raise ValueError("ols_front supports at most three objectives")
    if tol <= 0:
        raise ValueError("tol must be positive")
    values: list[np.ndarray] = []
    policies: list[DeterministicPolicy] = []
    checked: list[np.ndarray] = []

    def solve(w):
        pi = lexicographic_optimal_policy(m, w)
        return evaluate_returns(m, pi), pi

    for k in range(d):
        w = np.eye(d)[k]
        v, pi = solve(w)
        checked.append(w)
        if not any(np.abs(v - u).max() <= tol for u in values):
            values.append(v)
            policies.append(pi)

    for _ in range(max_rounds):
        if d == 1:
            break
        corners = corner_weights(np.array(values))
        fresh = [w for w in corners if not any(np.abs(w - c).max() <= 1e-10 for c in checked)]
        improved = False
        for w in fresh:
            checked.append(w)
            v, pi = solve(w)
            current = max(w @ u for u in values)
            if w @ v > current + tol * max(1.0, abs(current)):
                values.append(v)
                policies.append(pi)
                improved = True
        if not improved:
            break
    else:
        raise RuntimeError("OLS did not terminate")
    return front_from_points(np.array(values), policies, tol=max(tol, 1e-9))


# --- Pareto paths ----------------------------------------------------------------

def _check_uniformly_optimal(m, pi, Q, w, tol, name):
    idx = np.arange(m.num_states)
    best = Q.max(axis=1)
    gap = best - Q[idx, pi.action_of]
    if gap.max() > tol * max(1.0, np.abs(best).max()):
        s = int(np.argmax(gap))
        raise PathError(f"{name} is not {w.tolist()}-optimal at state {s} (gap {gap[s]:.3e})")


def pareto_path(m: TabularMOMDP, pi_A: DeterministicPolicy, pi_B: DeterministicPolicy, w, tol: float = 1e-8):
    """Chain of w-optimal deterministic policies from pi_A to pi_B in which
    neighbours differ at exactly one state.

    Both endpoints must take a Q*_w-greedy action in every state.  Differing
    states are flipped from pi_A's to pi_B's action in ascending index order
    and every intermediate policy is re-evaluated exactly.
    """
    w = np.asarray(w, dtype=float)
    if (w <= 0).any():
        raise PathError("weight must be strictly positive")
    for pi in (pi_A, pi_B):
        if len(pi.action_of) != m.num_states or (pi.action_of >= m.num_actions).any():
            raise PathError("policy does not fit the MOMDP")
    Q, _ = scalarized_value_iteration(m, w)
    V_star = Q.max(axis=1)
    opt = float(m.initial_dist @ V_star)
    scaled = tol * max(1.0, np.abs(V_star).max())
    for name, pi in (("pi_A", pi_A), ("pi_B", pi_B)):
        _check_uniformly_optimal(m, pi, Q, w, tol, name)
        if evaluate_returns(m, pi) @ w < opt - scaled:
            raise PathError(f"{name} does not attain the optimal scalarized value")

    path = [pi_A]
    current = pi_A.action_of.copy()
    for s in np.flatnonzero(pi_A.action_of != pi_B.action_of):
        current[s] = pi_B.action_of[s]
        nxt = DeterministicPolicy(current)
        if np.count_nonzero(nxt.action_of != path[-1].action_of) != 1:
            raise PathVerificationError("neighbouring policies must differ at one state")
        V = state_values(m, nxt) @ w
        if abs(float(m.initial_dist @ V) - opt) > scaled or np.abs(V - V_star).max() > scaled:
            raise PathVerificationError(f"intermediate policy {len(path)} is not {w.tolist()}-optimal")
        path.append(nxt)
    return path


# --- aliasing -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AliasGroup:
    returns: np.ndarray
    policies: list


def aliasing_groups(m: TabularMOMDP, cap: int = 100_000, merge_tol: float = 1e-8) -> list[AliasGroup]:
    """Partition all deterministic policies by their (exact) return vector."""
    groups: list[tuple[np.ndarray, list]] = []
    for pi in enumerate_deterministic_policies(m, cap):
        J = evaluate_returns(m, pi)
        for key, members in groups:
            if np.abs(key - J).max() <= merge_tol:
                members.append(pi)
                break
        else:
            groups.append((J, [pi]))
    return [AliasGroup(k, v) for k, v in groups]


def brute_force_front(m: TabularMOMDP, cap: int = 100_000) -> ParetoFront:
    """Front from exhaustive enumeration; a reference for small instances."""
    pols = enumerate_deterministic_policies(m, cap)
    pts = np.array([evaluate_returns(m, p) for p in pols])
    return front_from_points(pts, pols)


def save_front(front: ParetoFront, path) -> None:
    front.to_csv(Path(path))

"""Finite discounted multi-objective MDPs: exact evaluation, occupancy
measures, scalarized planning and samplers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, np.random.Generator, None]

_PROB_TOL = 1e-12


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMOMDP:
    """Finite MOMDP with dense tables.

    ``transitions[s, a, s']`` is P(s'|s, a), ``rewards[s, a, i]`` the i-th
    reward component, ``initial_dist[s]`` the start distribution.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        P = _frozen(self.transitions)
        r = _frozen(self.rewards)
        nu0 = _frozen(self.initial_dist)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.ndim != 3 or r.shape[:2] != (S, A):
            raise ValueError(f"rewards must have shape ({S}, {A}, d), got {r.shape}")
        if r.shape[2] < 1:
            raise ValueError("need at least one objective")
        if nu0.shape != (S,):
            raise ValueError(f"initial_dist must have shape ({S},), got {nu0.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if (P < 0).any() or np.abs(P.sum(axis=2) - 1.0).max() > _PROB_TOL:
            raise ValueError("every transitions[s, a] must be a probability vector")
        if (nu0 < 0).any() or abs(nu0.sum() - 1.0) > _PROB_TOL:
            raise ValueError("initial_dist must be a probability vector")
        if not np.isfinite(r).all():
            raise ValueError("rewards must be finite")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_dist", nu0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_objectives(self) -> int:
        return self.rewards.shape[2]

    def with_initial_dist(self, nu0) -> "TabularMOMDP":
        return TabularMOMDP(self.transitions, self.rewards, self.gamma, nu0)

    def absorbing_zero_reward_states(self) -> np.ndarray:
        """Boolean mask of states that self-loop with zero reward under every action."""
        idx = np.arange(self.num_states)
        loops = np.all(self.transitions[idx, :, idx] == 1.0, axis=1)
        silent = np.all(self.rewards == 0.0, axis=(1, 2))
        return loops & silent


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    action_of: np.ndarray

    def __post_init__(self):
        a = _frozen(self.action_of, dtype=np.int64)
        if a.ndim != 1 or (a < 0).any():
            raise ValueError("action_of must be a 1-d array of non-negative action indices")
        object.__setattr__(self, "action_of", a)

    def __eq__(self, other):
        return isinstance(other, DeterministicPolicy) and np.array_equal(self.action_of, other.action_of)

    def __hash__(self):
        return hash(self.action_of.tobytes())

    def __repr__(self):
        return f"DeterministicPolicy({tuple(self.action_of.tolist())})"

    def as_stochastic(self, num_actions: int) -> "StochasticPolicy":
        if (self.action_of >= num_actions).any():
            raise ValueError("action index out of range")
        dist = np.zeros((len(self.action_of), num_actions))
        dist[np.arange(len(self.action_of)), self.action_of] = 1.0
        return StochasticPolicy(dist)


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    dist_of: np.ndarray

    def __post_init__(self):
        d = _frozen(self.dist_of)
        if d.ndim != 2:
            raise ValueError("dist_of must be a (S, A) table")
        if (d < 0).any() or np.abs(d.sum(axis=1) - 1.0).max() > _PROB_TOL:
            raise ValueError("each row of dist_of must be a probability vector")
        object.__setattr__(self, "dist_of", d)

    def __eq__(self, other):
        return isinstance(other, StochasticPolicy) and np.array_equal(self.dist_of, other.dist_of)

    __hash__ = None

    def is_deterministic(self) -> bool:
        return bool(np.all((self.dist_of == 0.0) | (self.dist_of == 1.0)))


Policy = Union[DeterministicPolicy, StochasticPolicy]


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    state_action_mass: np.ndarray
    state_mass: np.ndarray


def policy_matrix(m: TabularMOMDP, pi: Policy) -> np.ndarray:
    """Return pi as an (S, A) table, checking dimensions against m."""
    if isinstance(pi, DeterministicPolicy):
        if len(pi.action_of) != m.num_states:
            raise ValueError(f"policy covers {len(pi.action_of)} states, MOMDP has {m.num_states}")
        return pi.as_stochastic(m.num_actions).dist_of
    if pi.dist_of.shape != (m.num_states, m.num_actions):
        raise ValueError(
            f"policy table has shape {pi.dist_of.shape}, expected {(m.num_states, m.num_actions)}"
        )
    return pi.dist_of


def _induced_chain(m: TabularMOMDP, pi: Policy):
    table = policy_matrix(m, pi)
    P_pi = np.einsum("sa,sat->st", table, m.transitions)
    r_pi = np.einsum("sa,sad->sd", table, m.rewards)
    return table, P_pi, r_pi


def state_values(m: TabularMOMDP, pi: Policy) -> np.ndarray:
    """Per-state vector values V[s, i], by a direct solve of (I - gamma P_pi) V = r_pi."""
    _, P_pi, r_pi = _induced_chain(m, pi)
    lhs = np.eye(m.num_states) - m.gamma * P_pi
    V = np.linalg.solve(lhs, r_pi)
    residual = np.abs(lhs @ V - r_pi).max()
    scale = max(1.0, np.abs(r_pi).max(), np.abs(V).max())
    if residual > 1e-10 * scale:
        raise np.linalg.LinAlgError(f"policy evaluation residual {residual:.3e} too large")
    return V


def evaluate_returns(m: TabularMOMDP, pi: Policy) -> np.ndarray:
    """Exact expected discounted return vector J(pi), shape (d,)."""
    return m.initial_dist @ state_values(m, pi)


def occupancy(m: TabularMOMDP, pi: Policy) -> OccupancyMeasure:
    """Normalized discounted state-action occupancy of pi."""
    table, P_pi, _ = _induced_chain(m, pi)
    lhs = (np.eye(m.num_states) - m.gamma * P_pi).T
    nu = np.linalg.solve(lhs, (1.0 - m.gamma) * m.initial_dist)
    nu = np.where(nu < 0.0, 0.0, nu)
    mu = nu[:, None] * table
    return OccupancyMeasure(_frozen(mu), _frozen(mu.sum(axis=1)))


def scalarized_q(m: TabularMOMDP, w, pi: Policy) -> np.ndarray:
    """Q-table of pi for the scalar reward w . r."""
    w = np.asarray(w, dtype=float)
    r_w = m.rewards @ w
    V = state_values(m, pi) @ w
    return r_w + m.gamma * m.transitions @ V


def _greedy(Q: np.ndarray, tie_tol: float) -> np.ndarray:
    # lowest action index among those within tie_tol of the row maximum
    best = Q.max(axis=1, keepdims=True)
    return np.argmax(Q >= best - tie_tol, axis=1)


def _tie_tol(m: TabularMOMDP, r_w: np.ndarray) -> float:
    return 1e-9 * max(1.0, np.abs(r_w).max() / (1.0 - m.gamma))


def _policy_iteration(m: TabularMOMDP, r_w: np.ndarray, allowed: np.ndarray | None = None):
    S, A = m.num_states, m.num_actions
    tol = _tie_tol(m, r_w)
    mask = np.ones((S, A), dtype=bool) if allowed is None else allowed
    penalty = np.where(mask, 0.0, -np.inf)
    actions = _greedy(r_w + penalty, 0.0)
    idx = np.arange(S)
    lhs_eye = np.eye(S)
    for _ in range(10 * S * A + 100):
        P_pi = m.transitions[idx, actions]
        V = np.linalg.solve(lhs_eye - m.gamma * P_pi, r_w[idx, actions])
        Q = r_w + m.gamma * m.transitions @ V + penalty
        current = Q[idx, actions]
        improve = Q.max(axis=1) > current + tol
        if not improve.any():
            return Q, V
        actions = np.where(improve, np.argmax(Q, axis=1), actions)
    raise RuntimeError("policy iteration did not converge")


def scalarized_value_iteration(m: TabularMOMDP, w, tol: float = 1e-9, method: str = "policy_iteration"):
    """Optimal Q-table and greedy deterministic policy for the scalar reward w . r.

    ``method="value_iteration"`` runs plain Bellman sweeps stopped once the
    sup-norm change drops below tol (1 - gamma) / (2 gamma).  The default
    policy-iteration route reaches the same fixed point with exact linear
    solves, which matters for gamma close to one.  Ties in the greedy step go
    to the lowest action index.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (m.num_objectives,) or not np.isfinite(w).all():
        raise ValueError("weight vector must be finite with one entry per objective")
    if tol <= 0:
        raise ValueError("tol must be positive")
    r_w = m.rewards @ w
    if method == "policy_iteration":
        Q, _ = _policy_iteration(m, r_w)
    elif method == "value_iteration":
        Q = _value_iteration(m, r_w, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Q, DeterministicPolicy(_greedy(Q, _tie_tol(m, r_w)))


def _value_iteration(m: TabularMOMDP, r_w: np.ndarray, tol: float) -> np.ndarray:
    if m.gamma == 0.0:
        return r_w.copy()
    stop = tol * (1.0 - m.gamma) / (2.0 * m.gamma)
    V = np.zeros(m.num_states)
    while True:
        Q = r_w + m.gamma * m.transitions @ V
        V_new = Q.max(axis=1)
        if np.abs(V_new - V).max() <= stop:
            return r_w + m.gamma * m.transitions @ V_new
        V = V_new


def optimal_action_sets(m: TabularMOMDP, w, tol: float | None = None) -> list[np.ndarray]:
    """Per-state sets of actions attaining max_a Q*_w(s, a) within tol."""
    Q, _ = scalarized_value_iteration(m, w)
    if tol is None:
        tol = _tie_tol(m, m.rewards @ np.asarray(w, dtype=float))
    best = Q.max(axis=1)
    return [np.flatnonzero(Q[s] >= best[s] - tol) for s in range(m.num_states)]


def lexicographic_optimal_policy(m: TabularMOMDP, w, tie_weights=None) -> DeterministicPolicy:
    """A w-optimal deterministic policy that, among w-optimal ones, maximizes
    ``tie_weights . J`` (all-ones by default).

    With a weight on the simplex boundary this returns a Pareto-optimal
    policy rather than a weakly dominated one.
    """
    w = np.asarray(w, dtype=float)
    Q, _ = scalarized_value_iteration(m, w)
    tol = _tie_tol(m, m.rewards @ w)
    allowed = Q >= Q.max(axis=1, keepdims=True) - tol
    tie = np.ones(m.num_objectives) if tie_weights is None else np.asarray(tie_weights, dtype=float)
    r_tie = m.rewards @ tie
    Q2, _ = _policy_iteration(m, r_tie, allowed)
    return DeterministicPolicy(_greedy(Q2, _tie_tol(m, r_tie)))


def enumerate_deterministic_policies(m: TabularMOMDP, cap: int = 100_000) -> list[DeterministicPolicy]:
    """All A**S deterministic policies in lexicographic order."""
    count = m.num_actions ** m.num_states
    if count > cap:
        raise ValueError(f"{count} deterministic policies exceed cap {cap}")
    return [
        DeterministicPolicy(np.array(acts, dtype=np.int64))
        for acts in itertools.product(range(m.num_actions), repeat=m.num_states)
    ]


def _sample_rows(cdf: np.ndarray, rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(rows))
    out = (u[:, None] >= cdf[rows]).sum(axis=1)
    return np.minimum(out, cdf.shape[1] - 1)


def _cdfs(m: TabularMOMDP, table: np.ndarray):
    return np.cumsum(m.initial_dist), np.cumsum(table, axis=1), np.cumsum(m.transitions, axis=2)


def sample_occupancy_pairs(m: TabularMOMDP, pi: Policy, n: int, seed: SeedLike = None) -> np.ndarray:
    """n i.i.d. (state, action) draws from the occupancy measure of pi.

    Each draw rolls pi out from the initial distribution for a geometric
    number of steps T, P(T = t) = (1 - gamma) gamma**t, and emits the pair
    at time T.  Chains sitting in a state that pi never leaves are stopped
    early, which does not change the law of X_T.  Returns an (n, 2) int array.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = as_generator(seed)
    table = policy_matrix(m, pi)
    if n == 0:
        return np.zeros((0, 2), dtype=np.int64)
    nu0_cdf, pi_cdf, p_cdf = _cdfs(m, table)
    horizon = rng.geometric(1.0 - m.gamma, size=n) - 1 if m.gamma > 0 else np.zeros(n, dtype=np.int64)
    states = np.minimum(np.searchsorted(nu0_cdf, rng.random(n), side="right"), m.num_states - 1)
    idx = np.arange(m.num_states)
    stuck = np.einsum("sa,sa->s", table, m.transitions[idx, :, idx]) >= 1.0 - _PROB_TOL
    t = 0
    active = (horizon > t) & ~stuck[states]
    while active.any():
        rows = np.flatnonzero(active)
        acts = _sample_rows(pi_cdf, states[rows], rng)
        flat = states[rows] * m.num_actions + acts
        states[rows] = _sample_rows(p_cdf.reshape(-1, m.num_states), flat, rng)
        t += 1
        active = (horizon > t) & ~stuck[states]
    actions = _sample_rows(pi_cdf, states, rng)
    return np.stack([states, actions], axis=1).astype(np.int64)


def sample_trajectories(m: TabularMOMDP, pi: Policy, n: int, max_len: int, seed: SeedLike = None) -> list[np.ndarray]:
    """n independent episodic rollouts of pi, each an (T, 2) array of
    (state, action) rows.

    A rollout ends when it enters an absorbing zero-reward state (which is
    not recorded) or after max_len recorded steps.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = as_generator(seed)
    table = policy_matrix(m, pi)
    if n == 0:
        return []
    nu0_cdf, pi_cdf, p_cdf = _cdfs(m, table)
    dead = m.absorbing_zero_reward_states()
    flat_cdf = p_cdf.reshape(-1, m.num_states)
    states = np.minimum(np.searchsorted(nu0_cdf, rng.random(n), side="right"), m.num_states - 1)
    lengths = np.zeros(n, dtype=np.int64)
    rec_s = np.zeros((max_len, n), dtype=np.int64)
    rec_a = np.zeros((max_len, n), dtype=np.int64)
    active = ~dead[states]
    for t in range(max_len):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        acts = _sample_rows(pi_cdf, states[rows], rng)
        rec_s[t, rows] = states[rows]
        rec_a[t, rows] = acts
        lengths[rows] += 1
        states[rows] = _sample_rows(flat_cdf, states[rows] * m.num_actions + acts, rng)
        active[rows] = ~dead[states[rows]]
    return [np.stack([rec_s[: lengths[i], i], rec_a[: lengths[i], i]], axis=1) for i in range(n)]


def sample_trajectory(m: TabularMOMDP, pi: Policy, max_len: int, seed: SeedLike = None) -> np.ndarray:
    """Single rollout; see :func:`sample_trajectories`."""
    return sample_trajectories(m, pi, 1, max_len, seed)[0]


# --- text serialization -----------------------------------------------------

_HEADER = "# tabular-momdp v1"


def dumps_momdp(m: TabularMOMDP) -> str:
    """Serialize to the plain-text MOMDP format (documented in README)."""
    S, A, d = m.num_states, m.num_actions, m.num_objectives
    fmt = lambda row: " ".join(repr(float(x)) for x in row)  # noqa: E731
    lines = [
        _HEADER,
        f"states {S}",
        f"actions {A}",
        f"objectives {d}",
        f"gamma {m.gamma!r}",
        f"initial {fmt(m.initial_dist)}",
        "transitions",
    ]
    lines += [fmt(m.transitions[s, a]) for s in range(S) for a in range(A)]
    lines.append("rewards")
    lines += [fmt(m.rewards[s, a]) for s in range(S) for a in range(A)]
    return "\n".join(lines) + "\n"


def loads_momdp(text: str) -> TabularMOMDP:
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    head = {}
    it = iter(rows)
    for line in it:
        key, _, rest = line.partition(" ")
        if key == "transitions":
            break
        head[key] = rest
    try:
        S, A, d = int(head["states"]), int(head["actions"]), int(head["objectives"])
        gamma = float(head["gamma"])
        nu0 = np.array(head["initial"].split(), dtype=float)
    except KeyError as exc:
        raise ValueError(f"missing header field {exc}") from None
    body = list(it)
    if len(body) != 2 * S * A + 1 or body[S * A] != "rewards":
        raise ValueError("malformed transition/reward blocks")
    P = np.array([ln.split() for ln in body[: S * A]], dtype=float).reshape(S, A, S)
    r = np.array([ln.split() for ln in body[S * A + 1:]], dtype=float).reshape(S, A, d)
    return TabularMOMDP(P, r, gamma, nu0)


def save_momdp(m: TabularMOMDP, path) -> None:
    Path(path).write_text(dumps_momdp(m))


def load_momdp(path) -> TabularMOMDP:
    return loads_momdp(Path(path).read_text())


def random_momdp(
    num_states: int,
    num_actions: int,
    num_objectives: int,
    gamma: float = 0.9,
    seed: SeedLike = None,
    sparse: bool = False,
) -> TabularMOMDP:
    """Random instance with rewards in [0, 1]; handy for tests and demos.

    ``sparse=True`` zeroes a random subset of transition entries so that
    some states become hard or impossible to reach.
    """
    rng = as_generator(seed)
    P = rng.random((num_states, num_actions, num_states))
    if sparse:
        P *= rng.random(P.shape) < 0.5
        empty = P.sum(axis=2) == 0
        P[empty, 0] = 1.0
    P /= P.sum(axis=2, keepdims=True)
    r = rng.random((num_states, num_actions, num_objectives))
    nu0 = rng.random(num_states)
    return TabularMOMDP(P, r, gamma, nu0 / nu0.sum())


def policy_from_actions(actions: Sequence[int]) -> DeterministicPolicy:
    return DeterministicPolicy(np.asarray(actions, dtype=np.int64))

"""Tabular behavioral-cloning learners: naive BC, isolated BC, MA-BC on
split demonstrations and its unsplit variant driven by an action
consistency graph."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .momdp import (
    DeterministicPolicy,
    StochasticPolicy,
    TabularMOMDP,
    as_generator,
    occupancy,
    policy_matrix,
    sample_occupancy_pairs,
    sample_trajectories,
)

log = logging.getLogger(__name__)


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array of (state, action)")
    return arr


def _check_range(pairs: np.ndarray, S: int, A: int) -> None:
    if len(pairs) and ((pairs < 0).any() or pairs[:, 0].max() >= S or pairs[:, 1].max() >= A):
        raise ValueError("state or action index out of range")


@dataclass(frozen=True, eq=False)
class SplitDemos:
    per_expert: list
    num_states: int
    num_actions: int

    def __post_init__(self):
        data = [_as_pairs(p) for p in self.per_expert]
        if not data:
            raise ValueError("need at least one expert")
        for p in data:
            _check_range(p, self.num_states, self.num_actions)
        object.__setattr__(self, "per_expert", data)

    @property
    def sizes(self) -> list[int]:
        return [len(p) for p in self.per_expert]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def num_experts(self) -> int:
        return len(self.per_expert)

    def union(self) -> np.ndarray:
        return np.concatenate(self.per_expert, axis=0)

    def prefix(self, sizes: Sequence[int]) -> "SplitDemos":
        return SplitDemos([p[:n] for p, n in zip(self.per_expert, sizes)], self.num_states, self.num_actions)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["expert_id", "step", "state", "action"])
            for e, pairs in enumerate(self.per_expert):
                for k, (s, a) in enumerate(pairs.tolist()):
                    out.writerow([e, k, s, a])

    @classmethod
    def from_csv(cls, path, num_states: int, num_actions: int) -> "SplitDemos":
        rows = _read_rows(path, "expert_id")
        L = max(rows, default=-1) + 1
        return cls([rows.get(e, []) for e in range(L)], num_states, num_actions)


@dataclass(frozen=True, eq=False)
class UnsplitDemos:
    trajectories: list
    num_states: int
    num_actions: int

    def __post_init__(self):
        data = [_as_pairs(t) for t in self.trajectories]
        if any(len(t) == 0 for t in data):
            raise ValueError("trajectories must be non-empty")
        for t in data:
            _check_range(t, self.num_states, self.num_actions)
        object.__setattr__(self, "trajectories", data)

    def union(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, 2), dtype=np.int64)
        return np.concatenate(self.trajectories, axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["trajectory_id", "step", "state", "action"])
            for i, traj in enumerate(self.trajectories):
                for k, (s, a) in enumerate(traj.tolist()):
                    out.writerow([i, k, s, a])

    @classmethod
    def from_csv(cls, path, num_states: int, num_actions: int) -> "UnsplitDemos":
        rows = _read_rows(path, "trajectory_id")
        return cls([rows[i] for i in sorted(rows)], num_states, num_actions)


def _read_rows(path, key: str) -> dict:
    groups: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or key not in reader.fieldnames:
            raise ValueError(f"CSV must have a {key!r} column")
        for row in sorted(reader, key=lambda r: (int(r[key]), int(r["step"]))):
            groups.setdefault(int(row[key]), []).append((int(row["state"]), int(row["action"])))
    return groups


@dataclass(frozen=True, eq=False)
class CuratedDataset:
    div_states: frozenset
    div_pairs: frozenset
    common_pairs: np.ndarray


def counts_of(pairs, num_states: int, num_actions: int) -> np.ndarray:
    pairs = _as_pairs(pairs)
    C = np.zeros((num_states, num_actions))
    np.add.at(C, (pairs[:, 0], pairs[:, 1]), 1.0)
    return C


def _bc_from_counts(C: np.ndarray) -> StochasticPolicy:
    totals = C.sum(axis=1, keepdims=True)
    uniform = np.full_like(C, 1.0 / C.shape[1])
    dist = np.divide(C, totals, out=uniform, where=totals > 0)
    return StochasticPolicy(dist)


def bc_fit(pairs, num_states: int, num_actions: int) -> StochasticPolicy:
    """Tabular maximum-likelihood policy; uniform where a state was never seen."""
    return _bc_from_counts(counts_of(pairs, num_states, num_actions))


def _divergent_mask(per_expert_counts: np.ndarray) -> np.ndarray:
    # >= 2 experts visit the state and their pooled action set has >= 2 actions
    seen = per_expert_counts > 0
    visitors = seen.any(axis=2).sum(axis=0)
    actions = seen.any(axis=0).sum(axis=1)
    return (visitors >= 2) & (actions >= 2)


def curate(demos: SplitDemos) -> CuratedDataset:
    """Split the pooled data into divergent states (two experts seen taking
    different actions) and the conflict-free common multiset."""
    S, A = demos.num_states, demos.num_actions
    C = np.stack([counts_of(p, S, A) for p in demos.per_expert])
    div = _divergent_mask(C)
    pooled = demos.union()
    in_div = div[pooled[:, 0]] if len(pooled) else np.zeros(0, dtype=bool)
    div_pairs = frozenset(map(tuple, pooled[in_div].tolist()))
    return CuratedDataset(frozenset(np.flatnonzero(div).tolist()), div_pairs, pooled[~in_div])


def naive_bc(demos: SplitDemos) -> StochasticPolicy:
    return bc_fit(demos.union(), demos.num_states, demos.num_actions)


def isolated_bc(demos: SplitDemos) -> list[StochasticPolicy]:
    return [bc_fit(p, demos.num_states, demos.num_actions) for p in demos.per_expert]


def mabc(demos: SplitDemos) -> list[StochasticPolicy]:
    """One policy per expert, each cloned from the common data plus the
    expert's own samples at divergent states."""
    S, A = demos.num_states, demos.num_actions
    C = np.stack([counts_of(p, S, A) for p in demos.per_expert])
    div = _divergent_mask(C)[:, None]
    common = np.where(div, 0.0, C.sum(axis=0))
    return [_bc_from_counts(np.where(div, C_l, common)) for C_l in C]


# --- unsplit data -------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


@dataclass(frozen=True, eq=False)
class ConsistencyGraph:
    nodes: list
    edges: frozenset
    components: list
    expected_components: int
    mismatch: bool = False
    conflicting_components: list = field(default_factory=list)

    @property
    def num_components(self) -> int:
        return len(self.components)

    def partition(self) -> frozenset:
        return frozenset(frozenset(c) for c in self.components)


def build_consistency_graph(demos: UnsplitDemos, L_expected: int) -> ConsistencyGraph:
    S, A = demos.num_states, demos.num_actions
    C = counts_of(demos.union(), S, A)
    div = (C > 0).sum(axis=1) >= 2
    nodes = [(int(s), int(a)) for s, a in zip(*np.nonzero((C > 0) & div[:, None]))]
    node_id = {n: i for i, n in enumerate(nodes)}
    uf = _UnionFind(len(nodes))
    edges = set()
    for traj in demos.trajectories:
        ids = sorted({node_id[(s, a)] for s, a in traj.tolist() if div[s]})
        for i in ids[1:]:
            uf.union(ids[0], i)
        edges.update((i, j) for k, i in enumerate(ids) for j in ids[k + 1:])
    groups: dict[int, list] = {}
    for i, n in enumerate(nodes):
        groups.setdefault(uf.find(i), []).append(n)
    components = sorted(groups.values(), key=lambda c: c[0])
    conflicting = [k for k, comp in enumerate(components) if len({s for s, _ in comp}) < len(comp)]
    mismatch = len(components) != L_expected
    edge_pairs = frozenset((nodes[i], nodes[j]) for i, j in edges)
    return ConsistencyGraph(nodes, edge_pairs, components, L_expected, mismatch, conflicting)


def unsplit_mabc(demos: UnsplitDemos, L_expected: int):
    """MA-BC without expert labels.

    Divergent states are those observed with two or more actions.  The
    (state, action) pairs at those states are grouped into connected
    components of the trajectory co-occurrence graph, and each component is
    treated as one latent expert.  Returns ``(policies, graph)``; when the
    component count differs from ``L_expected`` every component is still
    returned and ``graph.mismatch`` is set.
    """
    if L_expected < 1:
        raise ValueError("L_expected must be positive")
    S, A = demos.num_states, demos.num_actions
    graph = build_consistency_graph(demos, L_expected)
    if graph.mismatch:
        log.warning("consistency graph has %d components, expected %d", graph.num_components, L_expected)
    if graph.conflicting_components:
        log.warning("components %s hold two actions for one state", graph.conflicting_components)
    pooled = demos.union()
    C = counts_of(pooled, S, A)
    div = (C > 0).sum(axis=1) >= 2
    common = np.where(div[:, None], 0.0, C)
    if not graph.components:
        return [_bc_from_counts(C) for _ in range(L_expected)], graph
    policies = []
    for comp in graph.components:
        own = common.copy()
        for s, a in comp:
            own[s, a] = C[s, a]
        policies.append(_bc_from_counts(own))
    return policies, graph


# --- diagnostics ------------------------------------------------------------------

def state_occupancies(m: TabularMOMDP, experts) -> np.ndarray:
    return np.stack([occupancy(m, pi).state_mass for pi in experts])


def concentrability(m: TabularMOMDP, experts, sizes, common_states=None) -> float:
    """max over experts and common states of nu_l(x) / nu_data(x), where
    nu_data is the size-weighted mixture of expert state occupancies."""
    sizes = np.asarray(sizes, dtype=float)
    if len(sizes) != len(experts) or (sizes <= 0).any():
        raise ValueError("need one positive size per expert")
    nu = state_occupancies(m, experts)
    nu_data = sizes @ nu / sizes.sum()
    states = np.arange(m.num_states) if common_states is None else np.asarray(sorted(common_states), dtype=np.int64)
    states = states[nu_data[states] > 0]
    if states.size == 0:
        return float("nan")
    return float((nu[:, states] / nu_data[states]).max())


def expert_node_owner(experts, num_actions: int) -> dict:
    """Map (state, action) to the index of the expert whose support contains it."""
    owner = {}
    for e, pi in enumerate(experts):
        table = pi.as_stochastic(num_actions).dist_of if isinstance(pi, DeterministicPolicy) else pi.dist_of
        for s, a in zip(*np.nonzero(table > 0)):
            owner.setdefault((int(s), int(a)), e)
    return owner


def true_partition(nodes, owner: dict) -> frozenset:
    groups: dict[int, set] = {}
    for n in nodes:
        groups.setdefault(owner.get(n, -1), set()).add(n)
    return frozenset(frozenset(g) for g in groups.values())


def sample_split_demos(m: TabularMOMDP, experts, sizes, seed=None, mode: str = "occupancy",
                       max_len: int = 200) -> SplitDemos:
    """Per-expert datasets.  ``mode="occupancy"`` draws ``sizes[l]`` i.i.d.
    occupancy pairs; ``mode="trajectory"`` rolls out ``sizes[l]`` episodes and
    concatenates their pairs."""
    rng = as_generator(seed)
    data = []
    for pi, n in zip(experts, sizes):
        if mode == "occupancy":
            data.append(sample_occupancy_pairs(m, pi, int(n), rng))
        elif mode == "trajectory":
            trajs = sample_trajectories(m, pi, int(n), max_len, rng)
            data.append(np.concatenate(trajs) if trajs else np.zeros((0, 2), dtype=np.int64))
        else:
            raise ValueError(f"unknown sampling mode {mode!r}")
    return SplitDemos(data, m.num_states, m.num_actions)


def sample_unsplit_demos(m: TabularMOMDP, experts, n_traj: int, seed=None, max_len: int = 200):
    """Trajectories whose expert is drawn uniformly at random; returns the
    demos and the hidden expert labels."""
    rng = as_generator(seed)
    labels = rng.integers(len(experts), size=n_traj)
    trajs: list = [None] * n_traj
    for e, pi in enumerate(experts):
        idx = np.flatnonzero(labels == e)
        for i, t in zip(idx, sample_trajectories(m, pi, len(idx), max_len, rng)):
            trajs[i] = t
    return UnsplitDemos(trajs, m.num_states, m.num_actions), labels


def graph_failure_rate(m: TabularMOMDP, experts, N: int, trials: int, seed=None, max_len: int = 200) -> float:
    """Fraction of trials whose consistency-graph components differ from the
    ground-truth grouping of observed divergent pairs by expert."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = as_generator(seed)
    owner = expert_node_owner(experts, m.num_actions)
    failures = 0
    for _ in range(trials):
        demos, _ = sample_unsplit_demos(m, experts, N, rng, max_len)
        graph = build_consistency_graph(demos, len(experts))
        if graph.partition() != true_partition(graph.nodes, owner):
            failures += 1
    return failures / trials


def true_divergent_states(m: TabularMOMDP, experts) -> np.ndarray:
    """States where at least two experts act differently and both reach."""
    tables = np.stack([policy_matrix(m, pi) for pi in experts])
    nu = state_occupancies(m, experts)
    out = []
    for s in range(m.num_states):
        reach = [e for e in range(len(experts)) if nu[e, s] > 0]
        if len(reach) >= 2 and any(not np.array_equal(tables[reach[0], s], tables[e, s]) for e in reach[1:]):
            out.append(s)
    return np.array(out, dtype=np.int64)


def estimate_link_probability(m: TabularMOMDP, experts, n_traj: int, seed=None, max_len: int = 200):
    """Held-out estimate of p_link and the divergent-state count K.

    Divergent states are ordered by index; link j is present in a trajectory
    generated by expert l when it visits both x_j and x_{j+1}.  p_link is the
    smallest empirical link frequency over all (j, l).
    """
    div = true_divergent_states(m, experts)
    K = len(div)
    if K < 2:
        return 1.0, K
    demos, labels = sample_unsplit_demos(m, experts, n_traj, seed, max_len)
    hits = np.zeros((len(experts), K - 1))
    for traj, e in zip(demos.trajectories, labels):
        visited = np.isin(div, traj[:, 0])
        hits[e] += visited[:-1] & visited[1:]
    return float(hits.min() / n_traj), K


def failure_envelope(p_link: float, K: int, N: int) -> float:
    return max(K - 1, 0) * (1.0 - p_link) ** N

"""Benchmark MOMDPs with their ground-truth experts.

Grid conventions: cells are (row, col) with row 0 at the top; actions are
Up=0, Down=1, Left=2, Right=3 wherever a grid is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .momdp import (
    DeterministicPolicy,
    TabularMOMDP,
    lexicographic_optimal_policy,
    save_momdp,
)

UP, DOWN, LEFT, RIGHT = range(4)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
ACTION_NAMES = ("up", "down", "left", "right")


@dataclass(frozen=True, eq=False)
class EnvironmentBundle:
    name: str
    momdp: TabularMOMDP
    experts: list
    expert_labels: list
    expert_weights: list
    layout_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.expert_labels)) != len(self.expert_labels):
            raise ValueError("expert labels must be unique")
        if not (len(self.experts) == len(self.expert_labels) == len(self.expert_weights)):
            raise ValueError("experts, labels and weights must align")

    def select(self, labels) -> "EnvironmentBundle":
        """Bundle restricted to the named experts, in the given order."""
        idx = [self.expert_labels.index(lab) for lab in labels]
        return replace(self, experts=[self.experts[i] for i in idx],
                       expert_labels=[self.expert_labels[i] for i in idx],
                       expert_weights=[self.expert_weights[i] for i in idx])

    def save(self, stem) -> None:
        """Write ``<stem>.momdp`` and a JSON layout sidecar ``<stem>.layout.json``."""
        stem = Path(stem)
        save_momdp(self.momdp, stem.with_suffix(".momdp"))
        meta = {
            "name": self.name,
            "expert_labels": list(self.expert_labels),
            "expert_weights": [list(map(float, w)) for w in self.expert_weights],
            "experts": [_policy_json(p) for p in self.experts],
            "layout": self.layout_meta,
        }
        stem.with_suffix(".layout.json").write_text(json.dumps(meta, indent=1, default=_jsonable))


def _policy_json(p):
    if isinstance(p, DeterministicPolicy):
        return p.action_of.tolist()
    return p.dist_of.tolist()


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _spawn(cells: int, start: int, mix: float, total: int) -> np.ndarray:
    if not 0.0 <= mix <= 1.0:
        raise ValueError("spawn_mix must lie in [0, 1]")
    nu0 = np.zeros(total)
    nu0[:cells] = mix / cells
    nu0[start] += 1.0 - mix
    return nu0


def _extreme_experts(m: TabularMOMDP, weights):
    return [lexicographic_optimal_policy(m, w) for w in weights]


# --- counterexample ---------------------------------------------------------------

def build_counterexample(alpha: float = 1 / 3, gamma: float = 0.9) -> EnvironmentBundle:
    """One absorbing state, three actions, rewards [1,0], [0,1] and
    [1/2 + alpha, 1/2 + alpha]; experts always play a1 or a2."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    r = np.array([[[1.0, 0.0], [0.0, 1.0], [0.5 + alpha, 0.5 + alpha]]])
    m = TabularMOMDP(np.ones((1, 3, 1)), r, gamma, [1.0])
    experts = [DeterministicPolicy([0]), DeterministicPolicy([1])]
    return EnvironmentBundle("counterexample", m, experts, ["a1", "a2"], [[1.0, 0.0], [0.0, 1.0]],
                             {"actions": ["a1", "a2", "a3"]})


# --- Deep Sea Treasure ------------------------------------------------------------

DST_DEPTHS = (1, 2, 3, 4, 4, 4, 7, 7, 9, 10)
DST_VALUES = (1.0, 2.0, 3.0, 5.0, 8.0, 16.0, 24.0, 50.0, 74.0, 124.0)


def build_deep_sea(gamma: float = 0.999, spawn_mix: float = 1.0) -> EnvironmentBundle:
    """Deep Sea Treasure on an 11 x 10 grid.

    Column c holds a treasure at row ``DST_DEPTHS[c]`` worth ``DST_VALUES[c]``;
    cells below it are seabed.  Every step costs [0, -1]; moving into a
    treasure pays [value, -1] and ends the episode.  Bumping into walls or the
    seabed leaves the submarine in place.  The start cell is (0, 0).
    """
    water = [(row, col) for col, depth in enumerate(DST_DEPTHS) for row in range(depth)]
    water.sort()
    index = {cell: i for i, cell in enumerate(water)}
    treasure = {(depth, col): DST_VALUES[col] for col, depth in enumerate(DST_DEPTHS)}
    n = len(water)
    end = n
    S = n + 1
    P = np.zeros((S, 4, S))
    r = np.zeros((S, 4, 2))
    for cell, s in index.items():
        for a, (dr, dc) in MOVES.items():
            nxt = (cell[0] + dr, cell[1] + dc)
            r[s, a, 1] = -1.0
            if nxt in treasure:
                P[s, a, end] = 1.0
                r[s, a, 0] = treasure[nxt]
            elif nxt in index:
                P[s, a, index[nxt]] = 1.0
            else:
                P[s, a, s] = 1.0
    P[end, :, end] = 1.0
    nu0 = _spawn(n, index[(0, 0)], spawn_mix, S)
    m = TabularMOMDP(P, r, gamma, nu0)
    weights = [[1.0, 0.0], [0.0, 1.0]]
    experts = _extreme_experts(m, weights)
    meta = {
        "cells": {str(s): list(c) for c, s in index.items()},
        "terminal": end,
        "treasures": [[list(c), v] for c, v in treasure.items()],
        "start": index[(0, 0)],
        "spawn_mix": spawn_mix,
    }
    return EnvironmentBundle("deep_sea", m, experts, ["treasure", "time"], weights, meta)


# --- Slippery Y-maze --------------------------------------------------------------

def build_y_maze(gamma: float = 0.9999, stem_length: int = 20, branch_length: int = 10,
                 slip: float = 0.1, spawn_mix: float = 1.0) -> EnvironmentBundle:
    """Y-shaped maze in (x, y) coordinates: stem (0, 0)..(0, L_stem-1) with the
    fork at its top, branches (+-1..+-L_branch, L_stem-1).

    Stem moves (fork included) end the episode with probability ``slip``.
    Any action at the right tip pays [1, 0] (gold), at the left tip [0, 1]
    (gem), and terminates.  Up increases y, Right increases x.
    """
    fork_y = stem_length - 1
    stem = [(0, y) for y in range(fork_y)]
    branch = [(x, fork_y) for x in range(-branch_length, branch_length + 1)]
    cells = stem + branch
    index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    term = n
    S = n + 1
    shift = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}
    P = np.zeros((S, 4, S))
    r = np.zeros((S, 4, 2))
    gold, gem = (branch_length, fork_y), (-branch_length, fork_y)
    for c, s in index.items():
        in_stem = c[0] == 0
        for a, (dx, dy) in shift.items():
            if c in (gold, gem):
                P[s, a, term] = 1.0
                r[s, a] = [1.0, 0.0] if c == gold else [0.0, 1.0]
                continue
            nxt = (c[0] + dx, c[1] + dy)
            target = index.get(nxt, s)
            if in_stem:
                P[s, a, term] += slip
                P[s, a, target] += 1.0 - slip
            else:
                P[s, a, target] = 1.0
    P[term, :, term] = 1.0
    nu0 = _spawn(n, index[(0, 0)], spawn_mix, S)
    m = TabularMOMDP(P, r, gamma, nu0)
    weights = [[1.0, 0.0], [0.0, 1.0]]
    experts = _extreme_experts(m, weights)
    meta = {
        "cells": {str(s): list(c) for c, s in index.items()},
        "terminal": term,
        "fork": index[(0, fork_y)],
        "stem_states": [index[c] for c in cells if c[0] == 0],
        "start": index[(0, 0)],
    }
    return EnvironmentBundle("y_maze", m, experts, ["gold", "gem"], weights, meta)


# --- Resource Gathering -----------------------------------------------------------

RG_HOME = (4, 2)
RG_GOLD = (0, 2)
RG_GEM = (1, 4)
RG_ENEMIES = ((0, 3), (1, 2))


def build_resource_gathering(gamma: float = 0.95, spawn_mix: float = 1.0,
                             attack_prob: float = 0.1) -> EnvironmentBundle:
    """5 x 5 Resource Gathering with three objectives [gold, gem, enemy].

    Moving onto the gold or gem cell pays +1 on its channel and ends the
    episode.  Moving onto an enemy cell triggers an attack with probability
    ``attack_prob``: the agent passes through an internal "hit" state whose
    only transition pays [0, 0, -1] and returns it home.
    """
    grid = [(i, j) for i in range(5) for j in range(5) if (i, j) not in (RG_GOLD, RG_GEM)]
    index = {c: k for k, c in enumerate(grid)}
    n = len(grid)
    hit, end = n, n + 1
    S = n + 2
    P = np.zeros((S, 4, S))
    r = np.zeros((S, 4, 3))
    for c, s in index.items():
        for a, (dr, dc) in MOVES.items():
            nxt = (c[0] + dr, c[1] + dc)
            if nxt == RG_GOLD:
                P[s, a, end] = 1.0
                r[s, a, 0] = 1.0
            elif nxt == RG_GEM:
                P[s, a, end] = 1.0
                r[s, a, 1] = 1.0
            elif nxt in index:
                if nxt in RG_ENEMIES:
                    P[s, a, hit] += attack_prob
                    P[s, a, index[nxt]] += 1.0 - attack_prob
                else:
                    P[s, a, index[nxt]] = 1.0
            else:
                P[s, a, s] = 1.0
    P[hit, :, index[RG_HOME]] = 1.0
    r[hit, :, 2] = -1.0
    P[end, :, end] = 1.0
    nu0 = _spawn(n, index[RG_HOME], spawn_mix, S)
    m = TabularMOMDP(P, r, gamma, nu0)
    weights = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    experts = _extreme_experts(m, weights)
    meta = {
        "cells": {str(s): list(c) for c, s in index.items()},
        "hit_state": hit,
        "terminal": end,
        "home": index[RG_HOME],
        "gold": list(RG_GOLD),
        "gem": list(RG_GEM),
        "enemies": [list(e) for e in RG_ENEMIES],
        "spawn_mix": spawn_mix,
    }
    return EnvironmentBundle("resource_gathering", m, experts, ["gold", "gem", "avoid"], weights, meta)


# --- lower-bound instance ---------------------------------------------------------

def build_lower_bound(K: int = 4, n_common: int = 5, p: float = 0.5, gamma: float = 0.9,
                      hard_n: int = 50) -> EnvironmentBundle:
    """Divergent root states feeding two copies of a hard common-region MDP.

    Divergent states x_div^k (actions a1, a2, a3, a_end) pay [1,0], [0,1],
    [0.8,0.8], [0,0].  With probability 1/2 a1 and a2 keep the agent in
    place; otherwise a1 enters the top copy and a2 the top copy with
    probability p, the bottom copy with 1 - p.  a3 averages a1 and a2, a_end
    leaves for the zero sink.  Each copy has a root sending the agent to
    x_1 w.p. 1 - (n-1)/(hard_n+1) and to every other x_i w.p. 1/(hard_n+1);
    at x_i the action i mod 4 self-loops paying [1,1], all others fall into
    the sink.  The initial distribution is uniform over divergent states.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if not 0.5 <= gamma < 1.0:
        raise ValueError("gamma must lie in [1/2, 1)")
    if n_common < 1 or hard_n < n_common - 1:
        raise ValueError("need n_common >= 1 and hard_n >= n_common - 1")
    A = 4
    div = list(range(K))
    top_root = K
    top = list(range(K + 1, K + 1 + n_common))
    bot_root = K + 1 + n_common
    bot = list(range(bot_root + 1, bot_root + 1 + n_common))
    sink = bot_root + 1 + n_common
    S = sink + 1
    P = np.zeros((S, A, S))
    r = np.zeros((S, A, 2))
    for x in div:
        P[x, 0, x] = 0.5
        P[x, 0, top_root] = 0.5
        P[x, 1, x] = 0.5
        P[x, 1, top_root] = 0.5 * p
        P[x, 1, bot_root] += 0.5 * (1 - p)
        P[x, 2] = 0.5 * (P[x, 0] + P[x, 1])
        P[x, 3, sink] = 1.0
        r[x, 0] = [1.0, 0.0]
        r[x, 1] = [0.0, 1.0]
        r[x, 2] = [0.8, 0.8]
    first = 1.0 - (n_common - 1) / (hard_n + 1)
    rest = 1.0 / (hard_n + 1)
    for root, region in ((top_root, top), (bot_root, bot)):
        P[root, :, region[0]] = first
        for x in region[1:]:
            P[root, :, x] = rest
        for i, x in enumerate(region):
            star = i % A
            for a in range(A):
                if a == star:
                    P[x, a, x] = 1.0
                    r[x, a] = [1.0, 1.0]
                else:
                    P[x, a, sink] = 1.0
    P[sink, :, sink] = 1.0
    nu0 = np.zeros(S)
    nu0[div] = 1.0 / K
    m = TabularMOMDP(P, r, gamma, nu0)

    def expert(a_div):
        acts = np.zeros(S, dtype=np.int64)
        acts[div] = a_div
        for region in (top, bot):
            for i, x in enumerate(region):
                acts[x] = i % A
        return DeterministicPolicy(acts)

    meta = {
        "divergent": div,
        "top_root": top_root,
        "top_region": [top_root] + top,
        "bottom_root": bot_root,
        "bottom_region": [bot_root] + bot,
        "sink": sink,
        "p": p,
        "actions": ["a1", "a2", "a3", "a_end"],
    }
    return EnvironmentBundle("lower_bound", m, [expert(0), expert(1)], ["pi1", "pi2"],
                             [[1.0, 0.0], [0.0, 1.0]], meta)


def lower_bound_concentrability(N1: float, N2: float, p: float) -> float:
    """Closed form N / (N1 + p N2) for expert 1 on the top common region."""
    return (N1 + N2) / (N1 + p * N2)


BUILDERS = {
    "counterexample": build_counterexample,
    "deep_sea": build_deep_sea,
    "y_maze": build_y_maze,
    "resource_gathering": build_resource_gathering,
    "lower_bound": build_lower_bound,
}


def build(name: str, **params) -> EnvironmentBundle:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**params)

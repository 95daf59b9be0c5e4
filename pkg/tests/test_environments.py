import json

import numpy as np
import pytest

from mabc.environments import (
    DST_VALUES,
    build,
    build_counterexample,
    build_deep_sea,
    build_lower_bound,
    build_resource_gathering,
    build_y_maze,
    lower_bound_concentrability,
)
from mabc.momdp import evaluate_returns, load_momdp, sample_trajectory, scalarized_value_iteration
from mabc.pareto import ols_front

ALL = [
    build_counterexample,
    build_deep_sea,
    build_y_maze,
    build_resource_gathering,
    build_lower_bound,
]


@pytest.fixture(scope="module", params=ALL, ids=lambda f: f.__name__)
def bundle(request):
    return request.param()


def test_experts_optimal_for_their_weights(bundle):
    m = bundle.momdp
    for pi, w in zip(bundle.experts, bundle.expert_weights):
        Q, _ = scalarized_value_iteration(m, w)
        opt = m.initial_dist @ Q.max(axis=1)
        assert evaluate_returns(m, pi) @ np.asarray(w) == pytest.approx(opt, abs=1e-8)


def test_labels_unique_and_experts_fit(bundle):
    assert len(set(bundle.expert_labels)) == len(bundle.expert_labels)
    for pi in bundle.experts:
        assert len(pi.action_of) == bundle.momdp.num_states
        assert (pi.action_of < bundle.momdp.num_actions).all()


def test_expert_returns_mutually_nondominated(bundle):
    J = [evaluate_returns(bundle.momdp, pi) for pi in bundle.experts]
    for i, a in enumerate(J):
        for j, b in enumerate(J):
            if i != j:
                assert not (np.all(b >= a) and np.any(b > a))


def test_sidecar_roundtrip(bundle, tmp_path):
    bundle.save(tmp_path / "env")
    m = load_momdp(tmp_path / "env.momdp")
    np.testing.assert_array_equal(m.transitions, bundle.momdp.transitions)
    meta = json.loads((tmp_path / "env.layout.json").read_text())
    assert meta["expert_labels"] == list(bundle.expert_labels)


def test_build_dispatch():
    assert build("y_maze").name == "y_maze"
    with pytest.raises(ValueError):
        build("atari")


# --- counterexample ------------------------------------------------------------

def test_counterexample_rewards_and_returns():
    b = build_counterexample(1 / 3, 0.9)
    np.testing.assert_allclose(b.momdp.rewards[0, 2], [5 / 6, 5 / 6])
    np.testing.assert_allclose(evaluate_returns(b.momdp, b.experts[0]), [10.0, 0.0])
    for bad in (0.0, 0.5, -1):
        with pytest.raises(ValueError):
            build_counterexample(bad, 0.9)


# --- DST -----------------------------------------------------------------------

def test_dst_structure():
    b = build_deep_sea()
    m = b.momdp
    end = b.layout_meta["terminal"]
    assert m.num_states == 52
    np.testing.assert_array_equal(m.rewards[:end, :, 1], -1.0)
    assert all(x < y for x, y in zip(DST_VALUES, DST_VALUES[1:]))
    paid = sorted(set(m.rewards[:, :, 0].ravel()) - {0.0})
    assert paid == sorted(DST_VALUES)


def test_dst_spawn_knob():
    m = build_deep_sea(spawn_mix=0.0).momdp
    assert m.initial_dist.max() == 1.0
    m = build_deep_sea(spawn_mix=1.0).momdp
    np.testing.assert_allclose(m.initial_dist[:51], 1 / 51)


# --- Y-maze --------------------------------------------------------------------

def test_y_maze_dynamics():
    b = build_y_maze()
    m, meta = b.momdp, b.layout_meta
    term = meta["terminal"]
    cells = {int(k): tuple(v) for k, v in meta["cells"].items()}
    for s, (x, y) in cells.items():
        if x == 0:
            np.testing.assert_allclose(m.transitions[s, :, term], 0.1)
        elif abs(x) < 10:
            assert (m.transitions[s].max(axis=1) == 1.0).all()
            assert (m.transitions[s, :, term] == 0).all()
    gold = next(s for s, c in cells.items() if c == (10, 19))
    gem = next(s for s, c in cells.items() if c == (-10, 19))
    np.testing.assert_array_equal(m.rewards[gold, 0], [1.0, 0.0])
    np.testing.assert_array_equal(m.rewards[gem, 0], [0.0, 1.0])
    assert m.gamma == 0.9999


def test_y_maze_experts_differ_only_at_fork_among_stem_states():
    b = build_y_maze()
    stem = b.layout_meta["stem_states"]
    a, c = (e.action_of[stem] for e in b.experts)
    diff = [stem[i] for i in np.flatnonzero(a != c)]
    assert diff == [b.layout_meta["fork"]]
    gold_expert, gem_expert = b.experts
    fork = b.layout_meta["fork"]
    assert gold_expert.action_of[fork] == 3 and gem_expert.action_of[fork] == 2
    assert all(gold_expert.action_of[s] == 0 for s in stem if s != fork)


def test_y_maze_branch_rollout_is_deterministic():
    b = build_y_maze()
    cells = {int(k): tuple(v) for k, v in b.layout_meta["cells"].items()}
    start = next(s for s, c in cells.items() if c == (4, 19))
    m = b.momdp.with_initial_dist(np.eye(b.momdp.num_states)[start])
    t = sample_trajectory(m, b.experts[0], 100, seed=0)
    xs = [cells[s][0] for s in t[:, 0]]
    assert xs == [4, 5, 6, 7, 8, 9, 10]
    # any action at the tip exits; ties resolve to the lowest index
    assert (t[:-1, 1] == 3).all()


# --- Resource Gathering --------------------------------------------------------

def test_resource_gathering_rewards():
    b = build_resource_gathering()
    m, meta = b.momdp, b.layout_meta
    cells = {tuple(v): int(k) for k, v in meta["cells"].items()}
    below_gold = cells[(1, 1)]
    # from (0,1) moving right enters the gold cell
    np.testing.assert_array_equal(m.rewards[cells[(0, 1)], 3], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(m.rewards[cells[(0, 4)], 1], [0.0, 1.0, 0.0])
    hit = meta["hit_state"]
    np.testing.assert_array_equal(m.rewards[hit, :, 2], -1.0)
    # stepping into an enemy cell attacks with probability 0.1
    assert m.transitions[below_gold, 3, hit] == pytest.approx(0.1)
    assert m.num_objectives == 3


def test_resource_gathering_spawn():
    m = build_resource_gathering(spawn_mix=1.0).momdp
    n = m.num_states - 2
    np.testing.assert_allclose(m.initial_dist[:n], 1 / n)
    assert m.initial_dist[n:].sum() == 0
    m0 = build_resource_gathering(spawn_mix=0.0).momdp
    assert m0.initial_dist.max() == 1.0


def test_resource_gathering_front_is_three_dimensional():
    f = ols_front(build_resource_gathering().momdp)
    assert f.vertices.shape[1] == 3 and len(f) >= 3


# --- lower bound ---------------------------------------------------------------

def test_lower_bound_structure():
    b = build_lower_bound(K=3, n_common=4, p=0.3)
    m, meta = b.momdp, b.layout_meta
    sink = meta["sink"]
    for x in meta["divergent"]:
        assert m.transitions[x, 3, sink] == 1.0
        np.testing.assert_array_equal(m.rewards[x, 3], [0.0, 0.0])
        np.testing.assert_allclose(m.rewards[x, 2], [0.8, 0.8])
        assert m.transitions[x, 1, meta["top_root"]] == pytest.approx(0.5 * 0.3)
    for region in (meta["top_region"][1:], meta["bottom_region"][1:]):
        for i, x in enumerate(region):
            for a in range(4):
                if a != i % 4:
                    assert m.transitions[x, a, sink] == 1.0
                    np.testing.assert_array_equal(m.rewards[x, a], 0.0)
    np.testing.assert_array_equal(m.rewards[sink], 0.0)
    assert (m.transitions[sink, :, sink] == 1.0).all()


def test_lower_bound_validation():
    with pytest.raises(ValueError):
        build_lower_bound(K=0)
    with pytest.raises(ValueError):
        build_lower_bound(p=1.5)
    with pytest.raises(ValueError):
        build_lower_bound(gamma=0.3)


def test_lower_bound_closed_form():
    assert lower_bound_concentrability(50, 50, 1.0) == 1.0
    assert lower_bound_concentrability(50, 50, 0.0) == 2.0

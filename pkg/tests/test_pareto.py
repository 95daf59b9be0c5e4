import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabc.momdp import DeterministicPolicy, TabularMOMDP, evaluate_returns, random_momdp
from mabc.pareto import (
    ParetoFront,
    PathError,
    aliasing_groups,
    brute_force_front,
    corner_weights,
    front_from_points,
    is_dominated,
    linf_pareto_distance,
    ols_front,
    pareto_path,
)
from mabc.simplex import InfeasibleError, UnboundedError, linprog_simplex
from oracles import (
    all_deterministic_returns,
    hull_front,
    nondominated,
    same_point_sets,
    scipy_lp_distance,
)

TRIANGLE = [[10, 0], [25 / 3, 25 / 3], [0, 10]]


def counterexample(gamma=0.9):
    r = np.array([[[1, 0], [0, 1], [5 / 6, 5 / 6]]])
    return TabularMOMDP(np.ones((1, 3, 1)), r, gamma, [1.0])


def triangle_front():
    return ParetoFront(TRIANGLE, [[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]])


# --- simplex ------------------------------------------------------------------

def test_simplex_basic():
    # max x + y, x + 2y + s1 = 4, 3x + y + s2 = 6
    x, v = linprog_simplex([1, 1, 0, 0], [[1, 2, 1, 0], [3, 1, 0, 1]], [4, 6])
    assert v == pytest.approx(2.8)
    np.testing.assert_allclose(x[:2], [1.6, 1.2])


def test_simplex_infeasible_and_unbounded():
    with pytest.raises(InfeasibleError):
        linprog_simplex([1, 0], [[1, 1]], [-1])
    with pytest.raises(UnboundedError):
        linprog_simplex([1, 0], [[1, -1]], [1])


def test_simplex_degenerate_redundant_rows():
    x, v = linprog_simplex([1, 2], [[1, 1], [2, 2]], [1, 2])
    assert v == pytest.approx(2.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 8), d=st.integers(1, 3), seed=st.integers(0, 2**31 - 1))
def test_lp_matches_scipy(n, d, seed):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n, d)) * 5
    J = rng.normal(size=d) * 5
    front = ParetoFront(V, np.full((n, d), 1.0 / d))
    assert linf_pareto_distance(front, J).delta == pytest.approx(scipy_lp_distance(V, J), abs=1e-9)


# --- LP distance --------------------------------------------------------------

def test_distance_fixtures():
    f = triangle_front()
    rep = linf_pareto_distance(f, [5, 5])
    assert rep.delta == pytest.approx(1 / 3, abs=1e-12)
    np.testing.assert_allclose(rep.ranges, [10, 10])
    assert rep.mixture_weights.sum() == pytest.approx(1.0)
    dominating = rep.mixture_weights @ f.vertices
    assert np.all(dominating >= np.array([5, 5]) + rep.delta * rep.ranges - 1e-8)
    for v in TRIANGLE:
        assert linf_pareto_distance(f, v).delta == pytest.approx(0.0, abs=1e-12)
    mid = (np.array(TRIANGLE[0]) + np.array(TRIANGLE[1])) / 2
    assert linf_pareto_distance(f, mid).delta == pytest.approx(0.0, abs=1e-12)


def test_flat_objective_uses_unit_range():
    f = ParetoFront([[3.0, 1.0]], [[0.5, 0.5]])
    rep = linf_pareto_distance(f, [2.0, 0.5])
    np.testing.assert_array_equal(rep.ranges, [1.0, 1.0])
    assert rep.delta == pytest.approx(0.5)


def test_is_dominated_examples():
    f = triangle_front()
    assert not is_dominated(f, TRIANGLE[1], 0.0)
    assert not is_dominated(f, [5, 5], 0.4)
    assert is_dominated(f, [5, 5], 0.1)
    with pytest.raises(ValueError):
        is_dominated(f, [5, 5], -1)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_distance_zero_on_mixtures_and_monotone(seed):
    rng = np.random.default_rng(seed)
    m = random_momdp(3, 2, 2, seed=seed)
    f = ols_front(m)
    # faces of a 2-d front join neighbours in sorted order
    V = f.vertices[np.argsort(f.vertices[:, 0])]
    k = rng.integers(len(V))
    t = rng.random()
    on_face = t * V[k] + (1 - t) * V[min(k + 1, len(V) - 1)]
    assert linf_pareto_distance(f, on_face).delta <= 1e-8
    a = rng.dirichlet(np.ones(len(f)))
    J = a @ f.vertices - rng.random(2) * f.ranges()
    Jp = J + rng.random(2) * f.ranges() * 0.5
    assert linf_pareto_distance(f, Jp).delta <= linf_pareto_distance(f, J).delta + 1e-8


# --- OLS ----------------------------------------------------------------------

def test_ols_counterexample():
    f = ols_front(counterexample())
    assert same_point_sets(f.vertices, TRIANGLE, 1e-9)


def test_ols_single_objective():
    m = random_momdp(4, 3, 1, seed=3)
    f = ols_front(m)
    assert len(f) == 1
    best = max(v[0] for v in all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values())
    assert f.vertices[0, 0] == pytest.approx(best, abs=1e-9)


def test_ols_rejects_four_objectives():
    with pytest.raises(ValueError):
        ols_front(random_momdp(2, 2, 4, seed=0))


@pytest.mark.parametrize("seed", range(25))
def test_ols_matches_hull_oracle_d2(seed):
    m = random_momdp(3, 2, 2, seed=seed)
    pts = list(all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values())
    assert same_point_sets(ols_front(m).vertices, hull_front(pts), 1e-6)


@pytest.mark.parametrize("seed", range(15))
def test_ols_matches_hull_oracle_d3(seed):
    m = random_momdp(3, 3, 3, seed=100 + seed)
    pts = list(all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values())
    assert same_point_sets(ols_front(m).vertices, hull_front(pts), 1e-6)


def test_ols_d3_against_weight_grid():
    m = random_momdp(3, 3, 3, seed=7)
    f = ols_front(m)
    pts = np.array(list(all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values()))
    grid = [(i / 100, j / 100, 1 - (i + j) / 100) for i in range(101) for j in range(101 - i)]
    for w in np.array(grid):
        assert (f.vertices @ w).max() >= (pts @ w).max() - 1e-8


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.sampled_from([2, 3]))
def test_front_invariants(seed, d):
    m = random_momdp(3, 2, d, seed=seed)
    f = ols_front(m)
    V = f.vertices
    for i in range(len(V)):
        for j in range(len(V)):
            if i != j:
                assert not (np.all(V[j] >= V[i]) and np.any(V[j] > V[i]))
    assert np.all(f.supporting_weights >= 0)
    np.testing.assert_allclose(f.supporting_weights.sum(axis=1), 1.0)
    pts = np.array(list(all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values()))
    for v, w in zip(V, f.supporting_weights):
        assert w @ v >= (V @ w).max() - 1e-8
        assert w @ v >= (pts @ w).max() - 1e-8
    for v, pi in zip(V, f.witness_policies):
        np.testing.assert_allclose(evaluate_returns(m, pi), v, atol=1e-9)


def test_corner_weights_d2():
    W = corner_weights(np.array(TRIANGLE, dtype=float))
    # envelope breaks where 10 lam = 25/3 and 25/3 = 10 (1 - lam)
    np.testing.assert_allclose(sorted(W[:, 0]), [0.0, 1 / 6, 5 / 6, 1.0], atol=1e-12)


def test_front_from_points_drops_interior_and_collinear():
    pts = [[0, 2], [1, 1], [2, 0], [0.5, 0.5], [2, 0]]
    f = front_from_points(pts)
    assert same_point_sets(f.vertices, [[0, 2], [2, 0]], 1e-12)


def test_front_csv_roundtrip(tmp_path):
    f = triangle_front()
    f.to_csv(tmp_path / "f.csv")
    g = ParetoFront.from_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(f.vertices, g.vertices)
    np.testing.assert_array_equal(f.supporting_weights, g.supporting_weights)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "J_1,J_2,w_1,w_2"


def test_brute_force_front_nondominated_filter_agrees():
    m = random_momdp(3, 2, 2, seed=42)
    pts = list(all_deterministic_returns(m.transitions, m.rewards, m.gamma, m.initial_dist).values())
    hull = hull_front(pts)
    nd = nondominated(pts)
    # every hull vertex is non-dominated
    assert all(any(np.abs(h - q).max() < 1e-12 for q in nd) for h in hull)
    assert same_point_sets(brute_force_front(m).vertices, hull, 1e-9)


# --- Pareto path --------------------------------------------------------------

def test_path_identical_endpoints():
    m = counterexample()
    pi = DeterministicPolicy([2])
    assert pareto_path(m, pi, pi, [0.5, 0.5]) == [pi]


def test_path_two_flips():
    # three states, two actions that are interchangeable everywhere except rewards tie
    P = np.zeros((3, 2, 3))
    P[:, :, :] = 1 / 3
    r = np.zeros((3, 2, 2))
    r[:, 0] = [1.0, 0.0]
    r[:, 1] = [0.0, 1.0]
    m = TabularMOMDP(P, r, 0.9, [1 / 3] * 3)
    a = DeterministicPolicy([0, 0, 0])
    b = DeterministicPolicy([1, 0, 1])
    path = pareto_path(m, a, b, [0.5, 0.5])
    assert len(path) == 3
    assert [tuple(p.action_of) for p in path] == [(0, 0, 0), (1, 0, 0), (1, 0, 1)]


def test_path_rejects_suboptimal_and_boundary_weight():
    m = counterexample()
    with pytest.raises(PathError):
        pareto_path(m, DeterministicPolicy([0]), DeterministicPolicy([2]), [0.5, 0.5])
    with pytest.raises(PathError):
        pareto_path(m, DeterministicPolicy([0]), DeterministicPolicy([0]), [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_path_property(seed):
    m = random_momdp(3, 3, 2, seed=seed)
    # make ties likely by duplicating action 0 into action 1
    P = m.transitions.copy()
    r = m.rewards.copy()
    P[:, 1] = P[:, 0]
    r[:, 1] = r[:, 0]
    m = TabularMOMDP(P, r, m.gamma, m.initial_dist)
    f = ols_front(m)
    from itertools import combinations
    from mabc.momdp import enumerate_deterministic_policies
    pols = enumerate_deterministic_policies(m)
    for w in f.supporting_weights:
        vals = np.array([evaluate_returns(m, p) @ w for p in pols])
        opt = [p for p, v in zip(pols, vals) if v >= vals.max() - 1e-9]
        for a, b in combinations(opt, 2):
            path = pareto_path(m, a, b, w)
            assert path[0] == a and path[-1] == b
            for u, v in zip(path, path[1:]):
                assert np.count_nonzero(u.action_of != v.action_of) == 1
            for p in path:
                assert evaluate_returns(m, p) @ w == pytest.approx(vals.max(), abs=1e-8)


# --- aliasing -----------------------------------------------------------------

def test_aliasing_unreachable_state():
    m = random_momdp(3, 2, 2, seed=1)
    P = m.transitions.copy()
    P[:, :, 2] = 0.0
    P[:, :, 0] += m.transitions[:, :, 2]
    m = TabularMOMDP(P, m.rewards, m.gamma, [0.5, 0.5, 0.0])
    groups = aliasing_groups(m)
    assert all(len(g.policies) >= m.num_actions for g in groups)


def test_aliasing_counterexample_and_zero():
    groups = aliasing_groups(counterexample())
    assert sum(len(g.policies) for g in groups) == 3
    assert len(groups) == 3
    m = random_momdp(2, 3, 2, seed=0)
    z = TabularMOMDP(m.transitions, np.zeros_like(m.rewards), m.gamma, m.initial_dist)
    groups = aliasing_groups(z)
    assert len(groups) == 1 and len(groups[0].policies) == 9

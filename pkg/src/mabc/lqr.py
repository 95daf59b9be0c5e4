"""Linear-quadratic drone track: dynamics, Riccati solver, expert
controllers, compatible-pair pooling and ridge-regression cloning."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .momdp import as_generator
from .pareto import ParetoFront

STATE_NAMES = ("phi", "theta", "psi", "X", "Y", "Z", "p", "q", "r", "u", "v", "w")
INPUT_NAMES = ("F", "tau_x", "tau_y", "tau_z")
Q_TRACKING = np.diag([10, 10, 10, 100, 100, 100, 1, 1, 1, 1, 1, 1]).astype(float)
Q_ECO = np.diag([0.1, 0.1, 0.1, 1, 1, 1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])


class DAREError(RuntimeError):
    pass


class UnstableControllerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    dt: float = 0.05
    gravity: float = 9.8

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class LQRObjective:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if not np.array_equal(Q, np.diag(np.diag(Q))) or (np.diag(Q) < 0).any():
            raise ValueError("Q must be diagonal with non-negative entries")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearController:
    """Static feedback u = -K x."""

    K: np.ndarray
    P: np.ndarray | None = None
    residual: float = float("nan")

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.K, 2))

    def act(self, x: np.ndarray) -> np.ndarray:
        return -np.asarray(x) @ self.K.T

    def to_text(self) -> str:
        return "\n".join(" ".join(repr(float(v)) for v in row) for row in self.K) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinearController":
        return cls(np.array([line.split() for line in text.strip().splitlines()], dtype=float))


def build_drone(dt: float = 0.05, g: float = 9.8) -> LinearSystem:
    """Linearized quadrotor, Euler-discretized: A = I + Ac dt, B = Bc dt."""
    i = {name: k for k, name in enumerate(STATE_NAMES)}
    j = {name: k for k, name in enumerate(INPUT_NAMES)}
    Ac = np.zeros((12, 12))
    Bc = np.zeros((12, 4))
    for angle, rate in (("phi", "p"), ("theta", "q"), ("psi", "r")):
        Ac[i[angle], i[rate]] = 1.0
    for pos, vel in (("X", "u"), ("Y", "v"), ("Z", "w")):
        Ac[i[pos], i[vel]] = 1.0
    Ac[i["u"], i["theta"]] = -g
    Ac[i["v"], i["phi"]] = g
    Bc[i["p"], j["tau_x"]] = 10.0
    Bc[i["q"], j["tau_y"]] = 10.0
    Bc[i["r"], j["tau_z"]] = 6.6667
    Bc[i["w"], j["F"]] = 5.0
    return LinearSystem(np.eye(12) + Ac * dt, Bc * dt, dt, g)


def mixed_objective(lam: float) -> LQRObjective:
    return LQRObjective(lam * Q_TRACKING + (1 - lam) * Q_ECO, np.eye(4))


def riccati_residual(sys: LinearSystem, obj: LQRObjective, P: np.ndarray) -> float:
    A, B, Q, R = sys.A, sys.B, obj.Q, obj.R
    BtPA = B.T @ P @ A
    rhs = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
    return float(np.linalg.norm(P - rhs, np.inf))


def _gain(sys, obj, P):
    return np.linalg.solve(obj.R + sys.B.T @ P @ sys.B, sys.B.T @ P @ sys.A)


def solve_dare(sys: LinearSystem, obj: LQRObjective, tol: float = 1e-10, max_iter: int = 200) -> LinearController:
    """Stabilizing DARE solution by structure-preserving doubling, polished
    with Newton (Hewer) steps until the residual (scaled by max(1, |P|))
    is below tol."""
    A, B, Q, R = sys.A, sys.B, obj.Q, obj.R
    n = A.shape[0]
    I = np.eye(n)
    Ak, Gk, Hk = A.copy(), B @ np.linalg.solve(R, B.T), Q.copy()
    for _ in range(max_iter):
        if not np.abs(Hk).max() < 1e100:
            raise DAREError("doubling iteration diverged")
        W = I + Gk @ Hk
        AW = np.linalg.solve(W.T, Ak.T).T  # Ak W^-1
        H_next = Hk + Ak.T @ Hk @ np.linalg.solve(W, Ak)
        G_next = Gk + AW @ Gk @ Ak.T
        Ak = AW @ Ak
        done = np.linalg.norm(H_next - Hk, np.inf) <= 1e-14 * max(1.0, np.linalg.norm(H_next, np.inf))
        Hk, Gk = 0.5 * (H_next + H_next.T), 0.5 * (G_next + G_next.T)
        if done:
            break
    P = Hk
    for _ in range(50):
        scale = max(1.0, np.linalg.norm(P, np.inf))
        res = riccati_residual(sys, obj, P)
        if res <= tol * scale:
            break
        K = _gain(sys, obj, P)
        Acl = A - B @ K
        P = solve_discrete_lyapunov(Acl.T, Q + K.T @ R @ K)
        P = 0.5 * (P + P.T)
    res = riccati_residual(sys, obj, P)
    if not np.isfinite(res) or res > tol * max(1.0, np.linalg.norm(P, np.inf)):
        raise DAREError(f"Riccati residual {res:.3e} above tolerance")
    K = _gain(sys, obj, P)
    return LinearController(K, P, res)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(M)).max())


def make_experts(alpha: float = 0.5, sys: LinearSystem | None = None):
    """Agile and Eco objectives as convex mixtures of the base matrices and
    their optimal controllers."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    sys = sys or build_drone()
    hi, lo = 0.5 + 0.5 * alpha, 0.5 - 0.5 * alpha
    objs = (LQRObjective(hi * Q_TRACKING + lo * Q_ECO, np.eye(4)),
            LQRObjective(lo * Q_TRACKING + hi * Q_ECO, np.eye(4)))
    return objs, tuple(solve_dare(sys, o) for o in objs)


# --- demonstrations ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContinuousDemo:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.states, dtype=float).reshape(-1, 12) if np.size(self.states) else np.zeros((0, 12))
        U = np.asarray(self.actions, dtype=float).reshape(-1, 4) if np.size(self.actions) else np.zeros((0, 4))
        if len(X) != len(U):
            raise ValueError("states and actions must have equal length")
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "actions", U)

    def __len__(self):
        return len(self.states)

    def normalization(self):
        """Per-dimension (min, max) of states and actions."""
        return (self.states.min(axis=0), self.states.max(axis=0),
                self.actions.min(axis=0), self.actions.max(axis=0))

    def prefix(self, n: int) -> "ContinuousDemo":
        return ContinuousDemo(self.states[:n], self.actions[:n])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(list(STATE_NAMES) + list(INPUT_NAMES))
            for x, u in zip(self.states, self.actions):
                out.writerow([repr(float(v)) for v in (*x, *u)])


def sample_demos(sys: LinearSystem, K: np.ndarray, n_traj: int, horizon: int = 1,
                 noise_sigma: float = 0.1, seed=None) -> ContinuousDemo:
    """Roll out u = -K x + noise from standard-normal initial states and
    record every (x_t, u_t) for t < horizon."""
    rng = as_generator(seed)
    K = np.asarray(K)
    x = rng.standard_normal((n_traj, sys.n))
    xs, us = [], []
    for _ in range(horizon):
        u = -x @ K.T
        if noise_sigma > 0:
            u = u + noise_sigma * rng.standard_normal(u.shape)
        xs.append(x)
        us.append(u)
        x = x @ sys.A.T + u @ sys.B.T
    order = np.arange(n_traj * horizon).reshape(horizon, n_traj).T.ravel()
    return ContinuousDemo(np.concatenate(xs)[order], np.concatenate(us)[order])


@dataclass(frozen=True, eq=False)
class PooledData:
    states: np.ndarray
    actions: np.ndarray
    pooled_mask: np.ndarray
    action_bias: np.ndarray

    @property
    def pooled_fraction(self) -> float:
        return float(self.pooled_mask.mean()) if len(self.pooled_mask) else 0.0

    @property
    def num_pooled(self) -> int:
        return int(self.pooled_mask.sum())


class Normalizer:
    """Min/max scaling to [0, 1]; flat dimensions are left unscaled."""

    def __init__(self, demos):
        X = np.concatenate([d.states for d in demos])
        U = np.concatenate([d.actions for d in demos])
        self.x_lo, self.u_lo = X.min(axis=0), U.min(axis=0)
        xr, ur = X.max(axis=0) - self.x_lo, U.max(axis=0) - self.u_lo
        self.x_rng = np.where(xr > 0, xr, 1.0)
        self.u_rng = np.where(ur > 0, ur, 1.0)

    def states(self, X):
        return (X - self.x_lo) / self.x_rng

    def actions(self, U):
        return (U - self.u_lo) / self.u_rng

    def lipschitz(self, K) -> float:
        """Spectral norm of the policy map in normalized coordinates."""
        return float(np.linalg.norm((K * self.x_rng[None, :]) / self.u_rng[:, None], 2))


def compatible_mask(target: ContinuousDemo, other: ContinuousDemo, delta: float, lipschitz: float,
                    norm: Normalizer) -> np.ndarray:
    """Which rows of ``other`` have a target pair within delta in state and
    within lipschitz * state distance in action (normalized coordinates)."""
    if len(target) == 0 or len(other) == 0:
        return np.zeros(len(other), dtype=bool)
    Xt, Xo = norm.states(target.states), norm.states(other.states)
    Ut, Uo = norm.actions(target.actions), norm.actions(other.actions)
    dx = np.linalg.norm(Xo[:, None, :] - Xt[None, :, :], axis=2)
    du = np.linalg.norm(Uo[:, None, :] - Ut[None, :, :], axis=2)
    return ((dx <= delta) & (du <= lipschitz * dx)).any(axis=1)


def pool_compatible(target: ContinuousDemo, others, delta: float, lipschitz: float | None = None,
                    true_K: np.ndarray | None = None, target_K: np.ndarray | None = None) -> PooledData:
    """Augment the target dataset with compatible pairs from the others.

    Comparisons happen in min/max-normalized coordinates computed over all
    the datasets.  When ``lipschitz`` is None it is derived from
    ``target_K`` in those coordinates.  ``true_K`` (the target expert's gain)
    enables the per-pair action bias ``|A' - (-K X')|`` of pooled pairs.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    norm = Normalizer([target, *others])
    if lipschitz is None:
        if target_K is None:
            raise ValueError("need lipschitz or target_K")
        lipschitz = norm.lipschitz(target_K)
    Xs, Us, masks = [target.states], [target.actions], [np.zeros(len(target), dtype=bool)]
    for other in others:
        keep = compatible_mask(target, other, delta, lipschitz, norm)
        Xs.append(other.states[keep])
        Us.append(other.actions[keep])
        masks.append(np.ones(keep.sum(), dtype=bool))
    X, U, mask = np.concatenate(Xs), np.concatenate(Us), np.concatenate(masks)
    if true_K is not None and mask.any():
        bias = np.linalg.norm(U[mask] + X[mask] @ np.asarray(true_K).T, axis=1)
    else:
        bias = np.zeros(int(mask.sum()))
    return PooledData(X, U, mask, bias)


def ridge_fit(states, actions, lam: float = 1e-3) -> LinearController:
    """K minimizing sum |a + K x|^2 + lam |K|_F^2 (policy u = -K x)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    X = np.asarray(states, dtype=float)
    U = np.asarray(actions, dtype=float)
    G = X.T @ X + lam * np.eye(X.shape[1])
    K = -np.linalg.solve(G, X.T @ U).T
    return LinearController(K)


def ridge_objective(K, states, actions, lam):
    R = np.asarray(actions) + np.asarray(states) @ np.asarray(K).T
    return float((R ** 2).sum() + lam * (np.asarray(K) ** 2).sum())


# --- evaluation ---------------------------------------------------------------------

def evaluate_controller(sys: LinearSystem, K, Q_bases=(Q_TRACKING, Q_ECO), init_cov=None,
                        R=None) -> np.ndarray:
    """Vector return J_i = -trace(P_i Sigma0) with P_i the closed-loop cost
    matrix for stage cost x'(Q_i + K'RK)x."""
    K = np.asarray(K, dtype=float)
    Acl = sys.A - sys.B @ K
    if spectral_radius(Acl) >= 1.0:
        raise UnstableControllerError("closed loop is not stable")
    R = np.eye(sys.m) if R is None else np.asarray(R, dtype=float)
    Sigma = np.eye(sys.n) if init_cov is None else np.asarray(init_cov, dtype=float)
    out = []
    for Qb in Q_bases:
        P = solve_discrete_lyapunov(Acl.T, np.asarray(Qb) + K.T @ R @ K)
        out.append(-float(np.trace(P @ Sigma)))
    return np.array(out)


def continuous_front(sys: LinearSystem | None = None, n_weights: int = 101) -> ParetoFront:
    """Reference front from a uniform grid of mixed objectives, keeping the
    mutually non-dominated evaluated points."""
    sys = sys or build_drone()
    lams = np.linspace(0.0, 1.0, n_weights)
    pts = np.array([evaluate_controller(sys, solve_dare(sys, mixed_objective(l)).K) for l in lams])
    keep = [i for i in range(len(pts))
            if not any(np.all(pts[j] >= pts[i]) and np.any(pts[j] > pts[i]) for j in range(len(pts)))]
    W = np.stack([lams[keep], 1 - lams[keep]], axis=1)
    return ParetoFront(pts[keep], W)

"""Config-driven experiment harness: seeded trials over a sweep grid, exact
evaluation of every learned policy and LP distance to a reference front."""

from __future__ import annotations

import configparser
import csv
import hashlib
import inspect
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import environments, lqr
from .imitation import SplitDemos, UnsplitDemos, isolated_bc, mabc, naive_bc, unsplit_mabc
from .momdp import dumps_momdp, evaluate_returns, sample_occupancy_pairs, sample_trajectories
from .pareto import ParetoFront, linf_pareto_distance, ols_front

LEARNERS = ("naive", "isolated", "mabc", "unsplit_mabc")
SWEEPS = ("N", "p", "spawn_mix", "delta")
HEADER = ["env", "learner", "sweep", "expert", "seed", "distance", "wall_ms"]
DRONE = "drone"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str
    learners: tuple
    grid: tuple
    sweep: str = "N"
    trials: int = 1
    base_seed: int = 0
    output: str | None = None
    env_params: dict = field(default_factory=dict)
    n: int | None = None  # fixed sample size for non-N sweeps
    sampling: str = "trajectory"
    max_len: int = 200
    timing: bool = False
    front_cache: str | None = None
    experts: tuple | None = None  # expert labels to keep (tabular)
    # drone track
    alpha: float = 0.5
    horizon: int = 20
    noise: float = 0.1
    ridge_lambda: float = 1e-3
    delta: float = 0.0
    n_weights: int = 101

    def validate(self) -> "ExperimentConfig":
        known = set(environments.BUILDERS) | {DRONE}
        if self.env not in known:
            raise ConfigError(f"unknown environment {self.env!r}")
        if not self.learners:
            raise ConfigError("at least one learner is required")
        for name in self.learners:
            if name not in LEARNERS:
                raise ConfigError(f"unknown learner {name!r}")
        if self.sweep not in SWEEPS:
            raise ConfigError(f"unknown sweep variable {self.sweep!r}")
        if not self.grid:
            raise ConfigError("grid must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.sampling not in ("trajectory", "occupancy"):
            raise ConfigError(f"unknown sampling mode {self.sampling!r}")
        if self.sweep == "N":
            if any(v != int(v) or v < 1 for v in self.grid):
                raise ConfigError("sample sizes must be positive integers")
        elif self.n is None or self.n < 1:
            raise ConfigError("non-N sweeps need a positive fixed sample size n")
        if self.sweep in ("p", "spawn_mix") and any(not 0 <= v <= 1 for v in self.grid):
            raise ConfigError(f"{self.sweep} values must lie in [0, 1]")
        if self.sweep == "p" and self.env != "lower_bound":
            raise ConfigError("the p sweep applies to lower_bound only")
        if self.sweep == "spawn_mix" and self.env not in ("deep_sea", "resource_gathering", "y_maze"):
            raise ConfigError("the spawn_mix sweep applies to gridworlds only")
        if self.env == DRONE:
            if "unsplit_mabc" in self.learners:
                raise ConfigError("unsplit_mabc is tabular only")
            if self.sweep not in ("N", "delta"):
                raise ConfigError("drone sweeps are N or delta")
            if self.horizon < 1 or self.ridge_lambda <= 0 or self.noise < 0 or self.delta < 0:
                raise ConfigError("invalid drone parameters")
        else:
            if self.sweep == "delta":
                raise ConfigError("the delta sweep applies to the drone only")
            allowed = inspect.signature(environments.BUILDERS[self.env]).parameters
            for key in self.env_params:
                if key not in allowed:
                    raise ConfigError(f"{self.env} has no parameter {key!r}")
            if self.experts is not None:
                labels = environments.build(self.env, **self.env_params).expert_labels
                unknown = [e for e in self.experts if e not in labels]
                if unknown or len(set(self.experts)) < 2 or len(set(self.experts)) != len(self.experts):
                    raise ConfigError(f"experts must be two or more distinct labels from {labels}")
        if self.sweep == "delta" and any(v < 0 for v in self.grid):
            raise ConfigError("delta values must be non-negative")
        return self


def _scalar(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _list(text: str, cast=str) -> tuple:
    return tuple(cast(x.strip()) for x in text.split(",") if x.strip())


def load_config(path) -> ExperimentConfig:
    """Read an INI-style file: an ``[experiment]`` section plus optional
    ``[env]`` (builder keyword arguments) and ``[drone]`` sections."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    cp.optionxform = str  # builder arguments are case-sensitive (K)
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(cp, base=Path(path).parent)


def config_from_parser(cp: configparser.ConfigParser, base: Path | None = None) -> ExperimentConfig:
    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    ex = cp["experiment"]
    try:
        kw = dict(
            env=ex["env"].strip(),
            learners=_list(ex.get("learners", "")),
            grid=_list(ex.get("grid", ""), float),
            sweep=ex.get("sweep", "N").strip(),
            trials=ex.getint("trials", 1),
            base_seed=ex.getint("base_seed", 0),
            output=ex.get("output"),
            n=ex.getint("n") if "n" in ex else None,
            sampling=ex.get("sampling", "trajectory").strip(),
            max_len=ex.getint("max_len", 200),
            timing=ex.getboolean("timing", False),
            front_cache=ex.get("front_cache"),
            experts=_list(ex["experts"]) if "experts" in ex else None,
        )
        if "env" in cp:
            kw["env_params"] = {k: _scalar(v) for k, v in cp["env"].items()}
        if "drone" in cp:
            dr = cp["drone"]
            for key, cast in (("alpha", float), ("horizon", int), ("noise", float),
                              ("ridge_lambda", float), ("delta", float), ("n_weights", int)):
                if key in dr:
                    kw[key] = cast(dr[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    if kw["sweep"] == "N":
        kw["grid"] = tuple(int(v) if float(v).is_integer() else v for v in kw["grid"])
    for key in ("output", "front_cache"):
        if kw[key] and base is not None and not Path(kw[key]).is_absolute():
            kw[key] = os.path.normpath(base / kw[key])
    return ExperimentConfig(**kw).validate()


@dataclass(frozen=True)
class ResultRow:
    env: str
    learner: str
    sweep: float
    expert: str
    seed: int
    distance: float
    wall_ms: float = 0.0

    def as_list(self) -> list:
        return [self.env, self.learner, _fmt(self.sweep), self.expert, self.seed,
                repr(float(self.distance)), f"{self.wall_ms:.3f}"]


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


# --- fronts ---------------------------------------------------------------------

def momdp_hash(m) -> str:
    return hashlib.sha256(dumps_momdp(m).encode()).hexdigest()


def cached_front(m, cache_dir=None) -> ParetoFront:
    """OLS front, memoized on disk under the hash of the MOMDP text."""
    if cache_dir is None:
        return ols_front(m)
    path = Path(cache_dir) / f"{momdp_hash(m)}.json"
    if path.exists():
        data = json.loads(path.read_text())
        return ParetoFront(np.array(data["vertices"]), np.array(data["weights"]))
    front = ols_front(m)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"vertices": front.vertices.tolist(),
                                "weights": front.supporting_weights.tolist()}))
    return front


# --- tabular trials -------------------------------------------------------------

def _sample_tabular(cfg, bundle, n_max, rng):
    """Per-expert sample lists long enough for every prefix size."""
    m = bundle.momdp
    if cfg.sampling == "occupancy":
        return [sample_occupancy_pairs(m, pi, n_max, rng) for pi in bundle.experts]
    return [sample_trajectories(m, pi, n_max, cfg.max_len, rng) for pi in bundle.experts]


def _split_prefix(cfg, samples, n, m) -> SplitDemos:
    if cfg.sampling == "occupancy":
        data = [s[:n] for s in samples]
    else:
        data = [np.concatenate(s[:n]) if n else np.zeros((0, 2), dtype=np.int64) for s in samples]
    return SplitDemos(data, m.num_states, m.num_actions)


def _sample_unsplit(cfg, bundle, n_max, rng):
    L = len(bundle.experts)
    labels = rng.integers(L, size=n_max)
    trajs = [None] * n_max
    for e, pi in enumerate(bundle.experts):
        idx = np.flatnonzero(labels == e)
        for i, t in zip(idx, sample_trajectories(bundle.momdp, pi, len(idx), cfg.max_len, rng)):
            trajs[i] = t
    return trajs


def _distance(front, m, pi) -> float:
    return linf_pareto_distance(front, evaluate_returns(m, pi)).delta


def _policy_rows(name, policies, distance_of, sweep, seed, wall, env, per_expert=True):
    ds = [distance_of(pi) for pi in policies]
    rows = []
    if per_expert:
        rows += [ResultRow(env, name, sweep, str(i), seed, d, wall) for i, d in enumerate(ds)]
    rows.append(ResultRow(env, name, sweep, "mean", seed, float(np.mean(ds)), wall))
    return rows


def _fit_tabular(cfg, name, split, unsplit_trajs, bundle):
    m = bundle.momdp
    if name == "naive":
        return [naive_bc(split)]
    if name == "isolated":
        return isolated_bc(split)
    if name == "mabc":
        return mabc(split)
    demos = UnsplitDemos(unsplit_trajs, m.num_states, m.num_actions)
    return unsplit_mabc(demos, len(bundle.experts))[0]


def _timed(cfg, fn):
    t0 = time.perf_counter()
    out = fn()
    return out, ((time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0)


def _run_tabular(cfg: ExperimentConfig) -> list[ResultRow]:
    rows = []
    if cfg.sweep == "N":
        settings = [(None, [int(v) for v in cfg.grid])]
    else:
        settings = [(v, [cfg.n]) for v in cfg.grid]
    for pos, (env_value, sizes) in enumerate(settings):
        params = dict(cfg.env_params)
        if env_value is not None:
            params[cfg.sweep] = env_value
        bundle = environments.build(cfg.env, **params)
        if cfg.experts is not None:
            bundle = bundle.select(cfg.experts)
        m = bundle.momdp
        front = cached_front(m, cfg.front_cache)
        n_max = max(sizes)
        for t in range(cfg.trials):
            seed = cfg.base_seed + t
            rng = np.random.default_rng([seed, pos, 0])
            samples = _sample_tabular(cfg, bundle, n_max, rng)
            unsplit = None
            if "unsplit_mabc" in cfg.learners:
                unsplit = _sample_unsplit(cfg, bundle, n_max, np.random.default_rng([seed, pos, 1]))
            for n in sizes:
                split = _split_prefix(cfg, samples, n, m)
                sweep = n if env_value is None else env_value
                for name in cfg.learners:
                    traj = unsplit[:n] if unsplit is not None else None
                    policies, wall = _timed(cfg, lambda: _fit_tabular(cfg, name, split, traj, bundle))
                    rows += _policy_rows(name, policies, lambda pi: _distance(front, m, pi),
                                         sweep, seed, wall, cfg.env, per_expert=name != "naive")
    return rows


# --- drone trials ---------------------------------------------------------------

def drone_demos(sys, K, n_pairs, horizon, noise, seed) -> lqr.ContinuousDemo:
    """n_pairs state-action pairs taken along ceil(n_pairs / horizon) rollouts."""
    n_traj = -(-n_pairs // horizon)
    return lqr.sample_demos(sys, K, n_traj, horizon, noise, seed).prefix(n_pairs)


def drone_distance(sys, front, K) -> float:
    """LP distance of a learned gain; unstable gains are infinitely far."""
    try:
        J = lqr.evaluate_controller(sys, K)
    except lqr.UnstableControllerError:
        return math.inf
    return linf_pareto_distance(front, J).delta


def _fit_drone(cfg, name, demos, Ks, delta):
    fit = lambda X, U: lqr.ridge_fit(X, U, cfg.ridge_lambda).K  # noqa: E731
    if name == "naive":
        X = np.concatenate([d.states for d in demos])
        U = np.concatenate([d.actions for d in demos])
        return [fit(X, U)]
    if name == "isolated":
        return [fit(d.states, d.actions) for d in demos]
    out = []
    for i, target in enumerate(demos):
        others = [d for j, d in enumerate(demos) if j != i]
        pooled = lqr.pool_compatible(target, others, delta, target_K=Ks[i])
        out.append(fit(pooled.states, pooled.actions))
    return out


def _run_drone(cfg: ExperimentConfig) -> list[ResultRow]:
    sys = lqr.build_drone()
    _, ctls = lqr.make_experts(cfg.alpha, sys)
    Ks = [c.K for c in ctls]
    front = lqr.continuous_front(sys, cfg.n_weights)
    sizes = [int(v) for v in cfg.grid] if cfg.sweep == "N" else [cfg.n]
    deltas = [cfg.delta] if cfg.sweep == "N" else list(cfg.grid)
    rows = []
    for t in range(cfg.trials):
        seed = cfg.base_seed + t
        full = [drone_demos(sys, K, max(sizes), cfg.horizon, cfg.noise, [seed, e])
                for e, K in enumerate(Ks)]
        for n in sizes:
            demos = [d.prefix(n) for d in full]
            for delta in deltas:
                sweep = n if cfg.sweep == "N" else delta
                for name in cfg.learners:
                    gains, wall = _timed(cfg, lambda: _fit_drone(cfg, name, demos, Ks, delta))
                    rows += _policy_rows(name, gains, lambda K: drone_distance(sys, front, K),
                                         sweep, seed, wall, DRONE, per_expert=name != "naive")
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    cfg.validate()
    rows = _run_drone(cfg) if cfg.env == DRONE else _run_tabular(cfg)
    if cfg.output:
        write_rows(rows, cfg.output)
    return rows


# --- CSV and summaries ----------------------------------------------------------

def write_rows(rows, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(HEADER)
        for r in rows:
            out.writerow(r.as_list())


def read_rows(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise ConfigError(f"unexpected CSV header {reader.fieldnames}")
        return [ResultRow(r["env"], r["learner"], float(r["sweep"]), r["expert"], int(r["seed"]),
                          float(r["distance"]), float(r["wall_ms"])) for r in reader]


@dataclass(frozen=True)
class Summary:
    env: str
    learner: str
    sweep: float
    expert: str
    trials: int
    mean: float
    sem: float
    single_trial: bool


def mean_sem(values) -> tuple[float, float]:
    """Mean and sd/sqrt(n); one value gives SEM 0.  Any infinite value makes
    both infinite."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("no values")
    if not np.isfinite(x).all():
        return math.inf, math.inf
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def summarize(rows) -> list[Summary]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.env, r.learner, float(r.sweep), r.expert), []).append(r.distance)
    out = []
    for (env, learner, sweep, expert), vals in groups.items():
        mean, sem = mean_sem(vals)
        out.append(Summary(env, learner, sweep, expert, len(vals), mean, sem, len(vals) == 1))
    return out


def write_summary(summaries, fh) -> None:
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(["env", "learner", "sweep", "expert", "trials", "mean", "sem", "flag"])
    for s in summaries:
        out.writerow([s.env, s.learner, _fmt(s.sweep), s.expert, s.trials, repr(s.mean), repr(s.sem),
                      "single_trial" if s.single_trial else ""])


def lookup(summaries, learner, sweep, expert="mean") -> Summary:
    for s in summaries:
        if s.learner == learner and s.sweep == float(sweep) and s.expert == expert:
            return s
    raise KeyError((learner, sweep, expert))

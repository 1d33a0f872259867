"""Training loop, evaluation protocol, and run artifacts.

A run directory holds

    metrics.csv      one row per evaluation (timestep 0 and every eval_interval)
    config.txt       the resolved configuration, in config-file syntax
    checkpoint.bin   final actor/critic parameters (see :mod:`acerac.mlp`)

and, if training diverges, ``diagnostics.json``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import ENVIRONMENTS, Env, make_env
from .learner import AceracLearner, LearnerConfig
from .mlp import Checkpoint, save_checkpoint
from .noise import reset_trial
from .replay import ReplayMemory, Transition

log = logging.getLogger("acerac")

METRICS_HEADER = ("timestep", "mean_return", "std_return", "actor_loss", "critic_loss", "mean_abs_ratio")


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class PlotDataError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str = "pendulum"
    total_timesteps: int = 200_000
    eval_interval: int = 5000
    eval_episodes: int = 5
    seeds: list[int] = field(default_factory=lambda: [0])
    out: Path = Path("runs/default")
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def validate(self) -> None:
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.total_timesteps < 0:
            raise ConfigError("total_timesteps must be >= 0")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        if self.total_timesteps and self.eval_interval > self.total_timesteps:
            raise ConfigError("eval_interval must not exceed total_timesteps")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


# -- config files -------------------------------------------------------------

_RUN_KEYS = {"env": str, "total_timesteps": int, "eval_interval": int, "eval_episodes": int}
_LEARNER_TYPES = {
    "gamma": float, "tau": int, "b": float, "sigma": float, "alpha": float,
    "actor_lr": float, "critic_lr": float, "minibatch": int, "gradient_steps": int,
    "learning_start": int, "memory_size": int, "bound_penalty_weight": float, "reward_scale": float,
    "hidden_layers": "ints", "action_low": "floats", "action_high": "floats",
}


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"not an integer: {text!r}") from None
        return int(value)


def _convert(key: str, kind, text: str):
    try:
        if kind is str:
            return text
        if kind is int:
            return _parse_int(text)
        if kind is float:
            return float(text)
        items = [t.strip() for t in text.split(",") if t.strip()]
        if kind == "ints":
            return tuple(_parse_int(t) for t in items)
        return np.array([float(t) for t in items])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines with ``#`` comments; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _RUN_KEYS:
            kind = _RUN_KEYS[key]
        elif key in _LEARNER_TYPES:
            kind = _LEARNER_TYPES[key]
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, kind, value)
    return values


def build_run_config(values: dict, **overrides) -> RunConfig:
    values = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    run_kw = {k: values.pop(k) for k in list(values) if k in _RUN_KEYS or k in ("seeds", "out")}
    try:
        learner = LearnerConfig(**values)
        cfg = RunConfig(learner=learner, **run_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if "out" in run_kw:
        cfg.out = Path(cfg.out)
    cfg.validate()
    return cfg


def load_run_config(path, **overrides) -> RunConfig:
    text = Path(path).read_text() if path is not None else ""
    return build_run_config(parse_config_text(text, str(path)), **overrides)


def format_config(cfg: RunConfig) -> str:
    lines = [f"{key} = {getattr(cfg, key)}" for key in _RUN_KEYS]
    for key in _LEARNER_TYPES:
        value = getattr(cfg.learner, key)
        if value is None:
            continue
        if isinstance(value, (tuple, list, np.ndarray)):
            value = ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- evaluation ---------------------------------------------------------------


def sample_std(values) -> float:
    """Sample standard deviation (n-1 denominator); 0 for a single value."""
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def run_episode(policy, env: Env, seed: int) -> float:
    s = env.reset(seed=seed)
    total = 0.0
    while True:
        s, r, terminal = env.step(policy(s))
        total += r
        if terminal:
            return total


def evaluate(policy, env: Env, episodes: int, seed: int) -> tuple[float, float]:
    """Mean and std of undiscounted returns of ``policy`` over seeded episodes.

    Episode ``k`` starts from ``env.reset(seed + k)``, so repeated calls see
    the same initial states.
    """
    returns = [run_episode(policy, env, seed + k) for k in range(episodes)]
    return float(np.mean(returns)), sample_std(returns)


def eval_seed(seed: int) -> int:
    return 1_000_003 * (seed + 1)


# -- training -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".10g")


def _learner_for(env: Env, cfg: LearnerConfig, rng) -> AceracLearner:
    spec = env.spec
    cfg = dataclasses.replace(
        cfg,
        action_low=spec.action_low if cfg.action_low is None else cfg.action_low,
        action_high=spec.action_high if cfg.action_high is None else cfg.action_high,
    )
    return AceracLearner(spec.state_dim, spec.action_dim, cfg, rng)


def train(cfg: RunConfig, seed: int, out_dir) -> Path:
    """One seeded training run; returns the path of its metrics file."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    init_ss, noise_ss, replay_ss, env_ss = np.random.SeedSequence(seed).spawn(4)
    env = make_env(cfg.env, seed=int(env_ss.generate_state(1)[0]))
    eval_env = make_env(cfg.env)
    learner = _learner_for(env, cfg.learner, np.random.default_rng(init_ss))
    noise_rng = np.random.default_rng(noise_ss)
    replay_rng = np.random.default_rng(replay_ss)
    lcfg = learner.cfg
    buffer = ReplayMemory(max(1, min(lcfg.memory_size, cfg.total_timesteps)), env.spec.state_dim, env.spec.action_dim)
    (out_dir / "config.txt").write_text(format_config(cfg))
    metrics_path = out_dir / "metrics.csv"
    fh = open(metrics_path, "w", newline="\n")
    fh.write(",".join(METRICS_HEADER) + "\n")

    acc = {k: 0.0 for k in METRICS_HEADER[3:]}
    n_updates = 0

    def emit(t: int) -> None:
        nonlocal acc, n_updates
        mean, std = evaluate(learner.act_greedy, eval_env, cfg.eval_episodes, eval_seed(seed))
        losses = [acc[k] / n_updates if n_updates else float("nan") for k in METRICS_HEADER[3:]]
        fh.write(",".join([str(t), _fmt(mean), _fmt(std), *map(_fmt, losses)]) + "\n")
        fh.flush()
        log.info("t=%d mean_return=%.3f std_return=%.3f updates=%d", t, mean, std, n_updates)
        acc = {k: 0.0 for k in acc}
        n_updates = 0

    try:
        emit(0)
        s = env.reset()
        noise = reset_trial(learner.noise)
        trial_id, step_in_trial = 0, 0
        for t in range(1, cfg.total_timesteps + 1):
            a, A, noise = learner.act(s, noise, noise_rng)
            s_next, r, terminal = env.step(a)
            buffer.push(Transition(s, A, a, r, s_next, terminal and not env.truncated, trial_id, step_in_trial))
            if terminal:
                s = env.reset()
                noise = reset_trial(learner.noise)
                trial_id += 1
                step_in_trial = 0
            else:
                s = s_next
                step_in_trial += 1
            if len(buffer) >= max(lcfg.learning_start, 1) and lcfg.gradient_steps > 0:
                try:
                    stats = learner.train_step(buffer, replay_rng)
                except FloatingPointError as exc:
                    stats = {"error": str(exc)}
                if not all(isinstance(v, float) and math.isfinite(v) for v in stats.values()):
                    raise TrainingDiverged(
                        f"non-finite training statistics at timestep {t}",
                        {
                            "timestep": t,
                            "stats": {k: repr(v) for k, v in stats.items()},
                            "theta_finite": bool(np.all(np.isfinite(learner.theta))),
                            "nu_finite": bool(np.all(np.isfinite(learner.nu))),
                            "theta_norm": float(np.linalg.norm(learner.theta)),
                            "nu_norm": float(np.linalg.norm(learner.nu)),
                        },
                    )
                for k in acc:
                    acc[k] += stats[k]
                n_updates += 1
            if t % cfg.eval_interval == 0:
                emit(t)
    except TrainingDiverged as exc:
        (out_dir / "diagnostics.json").write_text(json.dumps(exc.diagnostics, indent=2, sort_keys=True))
        raise
    finally:
        fh.close()

    save_checkpoint(
        out_dir / "checkpoint.bin",
        Checkpoint(
            {"actor": learner.actor, "critic": learner.critic},
            {"actor": learner.theta, "critic": learner.nu},
            {
                "env": cfg.env,
                "seed": seed,
                "timestep": cfg.total_timesteps,
                "actor_step": learner.actor_opt.t,
                "critic_step": learner.critic_opt.t,
                "action_low": learner.low.tolist(),
                "action_high": learner.high.tolist(),
            },
        ),
    )
    return metrics_path


def read_metrics(path) -> np.ndarray:
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.csv"
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != METRICS_HEADER:
            raise PlotDataError(f"{path}: unexpected header {header}")
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def aggregate_runs(run_dirs) -> np.ndarray:
    """(timestep, mean_return, std_return) across runs; std is the sample std over runs."""
    run_dirs = [Path(p) for p in run_dirs]
    if not run_dirs:
        raise PlotDataError("no runs given")
    tables = [read_metrics(p) for p in run_dirs]
    grid = tables[0][:, 0]
    bad = [str(p) for p, tab in zip(run_dirs, tables) if tab.shape[0] != grid.size or np.any(tab[:, 0] != grid)]
    if bad:
        raise PlotDataError(f"evaluation timesteps differ from {run_dirs[0]} in: {', '.join(bad)}")
    returns = np.stack([tab[:, 1] for tab in tables])
    std = returns.std(axis=0, ddof=1) if len(tables) > 1 else np.zeros(grid.size)
    return np.column_stack([grid, returns.mean(axis=0), std])


def emit_plot_data(run_dirs, out_file) -> np.ndarray:
    table = aggregate_runs(run_dirs)
    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    with open(out_file, "w") as fh:
        fh.write("# timestep mean_return std_return\n")
        for t, m, s in table:
            fh.write(f"{int(t)} {_fmt(m)} {_fmt(s)}\n")
    return table

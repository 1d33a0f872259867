"""Seedable continuous-control toy tasks.

pendulum
    Swing-up of a torque-limited pendulum.  Internal state is the angle
    ``th`` (0 = upright) and angular velocity ``thdot``; the observation is
    ``(cos th, sin th, thdot)``.  Torque ``u`` lies in [-2, 2].  One step of
    length dt = 0.05 is semi-implicit Euler on

        thdot' = 3 g / (2 l) sin th + 3 / (m l^2) (u - damping * thdot)

    with g = 10, m = l = 1, the velocity clipped to [-8, 8].  The reward for
    the step is ``-(wrap(th)^2 + 0.1 thdot^2 + 0.001 u^2)`` evaluated at the
    state the action is applied in.  Episodes last 200 steps; reset draws
    th ~ U(-pi, pi), thdot ~ U(-1, 1).

point_mass
    Planar double integrator driven towards a goal.  Observation is
    ``(x, y, vx, vy, gx, gy)``, action is a force in [-1, 1]^2, dt = 0.1,
    velocity clipped to [-2, 2] per axis.  Reward is ``-|p - g|^2`` at the
    state the action is applied in.  Episodes last 100 steps; reset draws
    position and goal uniformly from [-1, 1]^2 with zero velocity.

chain
    Two-state deterministic cycle s0 -> s1 -> s0 -> ... with one-hot
    observations, rewards ``r0`` in s0 and ``r1`` in s1, and an action that
    has no effect.  Episodes last 100 steps.  Used to check critic
    convergence against the analytic discounted return.

Every task signals ``terminal`` when its step limit is reached and sets
``truncated`` on that step, so callers can tell a time-out from a genuine
terminal state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    dt: float
    max_episode_steps: int


class Env:
    spec: EnvSpec

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.truncated = False

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.truncated = False
        self._reset_state()
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = np.asarray(action, dtype=float).reshape(self.spec.action_dim)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite action {a}")
        reward, failed = self._advance(a)
        self.steps += 1
        self.truncated = not failed and self.steps >= self.spec.max_episode_steps
        return self.observe(), reward, failed or self.truncated

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _advance(self, a: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError


def wrap_angle(x: float) -> float:
    return ((x + math.pi) % (2 * math.pi)) - math.pi


class Pendulum(Env):
    g = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0
    max_torque = 2.0

    def __init__(self, seed: int | None = None, damping: float = 0.0, max_episode_steps: int = 200):
        super().__init__(seed)
        self.damping = damping
        self.spec = EnvSpec(
            state_dim=3,
            action_dim=1,
            action_low=np.array([-self.max_torque]),
            action_high=np.array([self.max_torque]),
            dt=0.05,
            max_episode_steps=max_episode_steps,
        )
        self.th = 0.0
        self.thdot = 0.0

    def _reset_state(self):
        self.th = float(self.rng.uniform(-math.pi, math.pi))
        self.thdot = float(self.rng.uniform(-1.0, 1.0))

    def set_state(self, th: float, thdot: float) -> None:
        self.th, self.thdot = float(th), float(thdot)

    def observe(self):
        return np.array([math.cos(self.th), math.sin(self.th), self.thdot])

    def energy(self) -> float:
        """Mechanical energy per unit of the unforced, undamped dynamics."""
        return 0.5 * self.thdot**2 + 1.5 * self.g / self.length * math.cos(self.th)

    def _advance(self, a):
        u = float(np.clip(a[0], -self.max_torque, self.max_torque))
        th, thdot, dt = self.th, self.thdot, self.spec.dt
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2)
        acc = 1.5 * self.g / self.length * math.sin(th) + 3.0 / (self.mass * self.length**2) * (
            u - self.damping * thdot
        )
        thdot = min(max(thdot + acc * dt, -self.max_speed), self.max_speed)
        self.th = th + thdot * dt
        self.thdot = thdot
        return reward, False


class PointMass(Env):
    max_speed = 2.0

    def __init__(self, seed: int | None = None, max_episode_steps: int = 100):
        super().__init__(seed)
        self.spec = EnvSpec(
            state_dim=6,
            action_dim=2,
            action_low=-np.ones(2),
            action_high=np.ones(2),
            dt=0.1,
            max_episode_steps=max_episode_steps,
        )
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)

    def _reset_state(self):
        self.pos = self.rng.uniform(-1.0, 1.0, 2)
        self.vel = np.zeros(2)
        self.goal = self.rng.uniform(-1.0, 1.0, 2)

    def observe(self):
        return np.concatenate([self.pos, self.vel, self.goal])

    def _advance(self, a):
        a = np.clip(a, self.spec.action_low, self.spec.action_high)
        reward = -float(np.sum((self.pos - self.goal) ** 2))
        dt = self.spec.dt
        self.vel = np.clip(self.vel + a * dt, -self.max_speed, self.max_speed)
        self.pos = self.pos + self.vel * dt
        return reward, False


class Chain(Env):
    def __init__(
        self, seed: int | None = None, r0: float = 1.0, r1: float = 0.0, max_episode_steps: int = 100
    ):
        super().__init__(seed)
        self.r = (float(r0), float(r1))
        self.spec = EnvSpec(2, 1, -np.ones(1), np.ones(1), 1.0, max_episode_steps)
        self.state = 0

    def _reset_state(self):
        self.state = 0

    def observe(self):
        return np.eye(2)[self.state]

    def _advance(self, a):
        reward = self.r[self.state]
        self.state = 1 - self.state
        return reward, False

    def true_values(self, gamma: float) -> tuple[float, float]:
        v0 = (self.r[0] + gamma * self.r[1]) / (1.0 - gamma**2)
        v1 = (self.r[1] + gamma * self.r[0]) / (1.0 - gamma**2)
        return v0, v1


ENVIRONMENTS = {"pendulum": Pendulum, "point_mass": PointMass, "chain": Chain}


def make_env(name: str, seed: int | None = None, **kwargs) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(seed=seed, **kwargs)


def pendulum_energy_controller(
    obs, energy_gain: float = 10.0, kp: float = 10.0, kd: float = 2.0, switch_cos: float = 0.95
) -> np.ndarray:
    """Hand-tuned swing-up reference: energy pumping, then PD near the top.

    Energy is ``0.5 thdot^2 + 15 cos th`` (15 at rest upright).  Since
    dE/dt = 3 u thdot, pumping with ``u ~ (E* - E) thdot`` drives E to E*.
    """
    c, s, w = (float(v) for v in obs)
    th = math.atan2(s, c)
    if c > switch_cos:
        u = -(kp * th + kd * w)
    else:
        target = 1.5 * Pendulum.g / Pendulum.length
        u = energy_gain * (target - (0.5 * w * w + target * c)) * w
    return np.array([min(Pendulum.max_torque, max(-Pendulum.max_torque, u))])

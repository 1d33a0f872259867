"""Actor-critic with experience replay and autocorrelated actions.

Actions are ``a_t = clip(A(s_t; theta) + xi_t)`` where ``xi_t`` is the AR
noise of :mod:`acerac.noise`.  Each replayed index ``i`` contributes, for
every sub-horizon n = 1..tau', a temporal difference

    d_n = (sum_{j<n} gamma^j r_{i+j} + gamma^n V(s_{i+n}) - V(s_i))
          * psi_b(phi(a_n; A_n(theta) + eta_n, Omega_n) / phi(a_n; A_n + mu_n, Omega_n))

where the numerator is the density of the replayed action block under the
current actor and the denominator under the actor that collected it.  The
actor ascends ``mean_n grad ln phi(...) d_n - grad L`` and the critic
``grad V(s_i) mean_n d_n``; ``d_n`` is held constant in both.

Two code paths compute the same directions: the per-segment methods
(``temporal_difference``, ``actor_direction``, ...) build explicit Gaussian
specs one horizon at a time, while ``batch_directions`` evaluates a padded
minibatch with Kronecker/Hadamard algebra and is what ``train_step`` uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .gaussian import (
    GaussianSpec,
    grad_log_density_wrt_mean,
    log_density_ratio,
    truncated_ratio,
)
from .mlp import Adam, MlpSpec
from .noise import NoiseParams, NoiseState, conditional_mean_blocks, sample_step
from .replay import NotReadyError, ReplayMemory, Segment, SegmentBatch


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    tau: int = 4
    b: float = 2.0
    sigma: float = 0.4
    alpha: float = 0.5
    actor_lr: float = 3e-5
    critic_lr: float = 6e-5
    minibatch: int = 256
    gradient_steps: int = 1
    learning_start: int = 1000
    memory_size: int = 10**6
    bound_penalty_weight: float = 1.0
    reward_scale: float = 1.0
    hidden_layers: tuple[int, ...] = (256, 256)
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.b <= 1.0:
            raise ValueError("b must exceed 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ValueError("step sizes must be non-negative")
        if self.minibatch < 1 or self.gradient_steps < 0 or self.learning_start < 0:
            raise ValueError("minibatch must be >= 1; gradient_steps and learning_start >= 0")
        if self.memory_size < 1:
            raise ValueError("memory_size must be >= 1")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")
        if self.bound_penalty_weight < 0:
            raise ValueError("bound_penalty_weight must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True, eq=False)
class SegmentDistribution:
    """Stacked means and actions for a segment, flattened block-wise (length n d)."""

    mu_bar: np.ndarray
    eta_bar: np.ndarray
    a_bar: np.ndarray
    A_bar_behavior: np.ndarray
    A_bar_current: np.ndarray
    kind: str  # "marginal" at a trial start, otherwise "conditional"
    noise: NoiseParams = field(repr=False)

    @property
    def n(self) -> int:
        return self.a_bar.size // self.noise.dim

    def omega2(self, n: int) -> np.ndarray:
        lam = self.noise.structure(n, self.kind)[0]
        return np.kron(lam, self.noise.cov_c)

    def specs(self, n: int) -> tuple[GaussianSpec, GaussianSpec]:
        """(current-policy spec, behaviour-policy spec) of the first ``n`` blocks."""
        k = n * self.noise.dim
        num = stacked_gaussian(self.noise, n, self.kind, self.A_bar_current[:k] + self.eta_bar[:k])
        den = num.with_mean(self.A_bar_behavior[:k] + self.mu_bar[:k])
        return num, den


def stacked_gaussian(noise: NoiseParams, n: int, kind: str, mean) -> GaussianSpec:
    """GaussianSpec with covariance Lambda (x) C, using the cached factors of Lambda."""
    lam, lam_inv, lam_logdet = noise.structure(n, kind)
    d = noise.dim
    return GaussianSpec(
        np.asarray(mean, dtype=float),
        np.kron(lam, noise.cov_c),
        np.kron(lam_inv, noise.inv_c),
        d * lam_logdet + n * noise.logdet_c,
    )


def _padded_inverses(noise: NoiseParams, kind: str, tau: int) -> np.ndarray:
    """(tau, tau, tau) array; slice [n-1] holds Lambda_n^-1 in its top-left n x n block."""
    out = np.zeros((tau, tau, tau))
    for n in range(1, tau + 1):
        out[n - 1, :n, :n] = noise.structure(n, kind)[1]
    return out


class AceracLearner:
    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        cfg: LearnerConfig,
        rng: np.random.Generator,
    ):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        low = np.full(action_dim, -np.inf) if cfg.action_low is None else np.asarray(cfg.action_low, float)
        high = np.full(action_dim, np.inf) if cfg.action_high is None else np.asarray(cfg.action_high, float)
        if low.shape != (action_dim,) or high.shape != (action_dim,) or np.any(low >= high):
            raise ValueError("action bounds must be vectors of the action dimension with low < high")
        self.low, self.high = low, high
        self.noise = NoiseParams.isotropic(cfg.alpha, cfg.sigma, action_dim)
        self.actor = MlpSpec(state_dim, action_dim, cfg.hidden_layers)
        self.critic = MlpSpec(state_dim, 1, cfg.hidden_layers)
        self.theta = self.actor.init_params(rng)
        self.nu = self.critic.init_params(rng)
        self.actor_opt = Adam(cfg.actor_lr)
        self.critic_opt = Adam(cfg.critic_lr)
        self._pad_inv = {
            kind: _padded_inverses(self.noise, kind, cfg.tau) for kind in ("marginal", "conditional")
        }
        self._discounts = cfg.gamma ** np.arange(cfg.tau + 1)

    # -- acting ---------------------------------------------------------------

    def clip_action(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.low, self.high)

    def act(self, s, noise: NoiseState, rng: np.random.Generator, theta=None):
        """Exploring action; returns (executed action, actor output, next noise state)."""
        A = self.actor.forward(self.theta if theta is None else theta, s)
        xi, noise = sample_step(noise, self.noise, rng)
        return self.clip_action(A + xi), A, noise

    def act_greedy(self, s, theta=None) -> np.ndarray:
        return self.clip_action(self.actor.forward(self.theta if theta is None else theta, s))

    def value(self, s, nu=None):
        out = self.critic.forward(self.nu if nu is None else nu, s)
        return out[..., 0]

    # -- per-segment path ---------------------------------------------------

    def build_segment_distribution(self, seg: Segment, theta=None) -> SegmentDistribution:
        theta = self.theta if theta is None else theta
        A_cur = self.actor.forward(theta, seg.s)
        if seg.is_trial_start:
            mu = eta = np.zeros(seg.n * self.action_dim)
            kind = "marginal"
        else:
            xi_behavior = seg.prev_a - seg.prev_A
            xi_current = seg.prev_a - self.actor.forward(theta, seg.prev_s)
            mu = conditional_mean_blocks(self.noise.alpha, seg.n, xi_behavior).ravel()
            eta = conditional_mean_blocks(self.noise.alpha, seg.n, xi_current).ravel()
            kind = "conditional"
        return SegmentDistribution(
            mu_bar=mu,
            eta_bar=eta,
            a_bar=seg.a.ravel().copy(),
            A_bar_behavior=seg.A.ravel().copy(),
            A_bar_current=A_cur.ravel(),
            kind=kind,
            noise=self.noise,
        )

    def n_step_return(self, seg: Segment, n: int, nu=None) -> float:
        if not 1 <= n <= seg.n:
            raise ValueError(f"n must lie in 1..{seg.n}")
        gamma = self.cfg.gamma
        ret = self.cfg.reward_scale * sum(gamma**j * seg.r[j] for j in range(n))
        if not seg.terminal[n - 1]:
            ret += gamma**n * float(self.value(seg.s_next[n - 1], nu))
        return float(ret)

    def log_ratio(self, seg: Segment, n: int, dist: SegmentDistribution) -> float:
        num, den = dist.specs(n)
        return log_density_ratio(dist.a_bar[: n * self.action_dim], num, den)

    def temporal_difference(self, seg: Segment, n: int, dist: SegmentDistribution, nu=None) -> float:
        td = self.n_step_return(seg, n, nu) - float(self.value(seg.s[0], nu))
        return td * float(truncated_ratio(self.log_ratio(seg, n, dist), self.cfg.b))

    def bound_penalty(self, s, theta=None) -> tuple[float, np.ndarray]:
        """Quadratic penalty on actor outputs outside the action box, and its theta-gradient."""
        theta = self.theta if theta is None else theta
        A = self.actor.forward(theta, s)
        value, dA = self._penalty_terms(A)
        return float(value), self.actor.backward(theta, s, dA)

    def _penalty_terms(self, A):
        w = self.cfg.bound_penalty_weight
        over = np.maximum(A - self.high, 0.0)
        under = np.maximum(self.low - A, 0.0)
        value = w * np.sum(over**2 + under**2, axis=-1)
        return value, 2.0 * w * (over - under)

    def temporal_differences(self, seg: Segment, theta=None, nu=None) -> np.ndarray:
        dist = self.build_segment_distribution(seg, theta)
        return np.array([self.temporal_difference(seg, n, dist, nu) for n in range(1, seg.n + 1)])

    def actor_direction(self, seg: Segment, theta=None, nu=None, frozen_d=None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        dist = self.build_segment_distribution(seg, theta)
        d_vals = self.temporal_differences(seg, theta, nu) if frozen_d is None else np.asarray(frozen_d)
        n_max, dim = seg.n, self.action_dim
        upstream = np.zeros((n_max, dim))
        for n in range(1, n_max + 1):
            num, _ = dist.specs(n)
            g = grad_log_density_wrt_mean(dist.a_bar[: n * dim], num)
            upstream[:n] += g.reshape(n, dim) * d_vals[n - 1]
        direction = self.actor.backward(theta, seg.s, upstream / n_max)
        _, penalty_grad = self.bound_penalty(seg.s[0], theta)
        return direction - penalty_grad

    def critic_direction(self, seg: Segment, theta=None, nu=None) -> np.ndarray:
        nu = self.nu if nu is None else nu
        d_vals = self.temporal_differences(seg, theta, nu)
        return self.critic.backward(nu, seg.s[0], np.array([d_vals.mean()]))

    # -- batched path -------------------------------------------------------

    def batch_directions(self, batch: SegmentBatch, theta=None, nu=None):
        """Minibatch-averaged (actor direction, critic direction, stats)."""
        theta = self.theta if theta is None else theta
        nu = self.nu if nu is None else nu
        cfg, noise = self.cfg, self.noise
        B, T, d = batch.a.shape
        ds = batch.s.shape[2]
        h = batch.horizon
        if T != cfg.tau:
            raise ValueError(f"batch padded to {T}, learner tau is {cfg.tau}")

        A_cur_flat, actor_acts = self.actor.forward_cached(theta, batch.s.reshape(B * T, ds))
        A_cur = A_cur_flat.reshape(B, T, d)
        A_prev = self.actor.forward(theta, batch.prev_s)
        v_first, critic_acts = self.critic.forward_cached(nu, batch.s[:, 0])
        v_first = v_first[:, 0]
        v_boot = self.critic.forward(nu, batch.s_next.reshape(B * T, ds))[:, 0].reshape(B, T)

        hp = batch.has_prev[:, None]
        xi_behavior = np.where(hp, batch.prev_a - batch.prev_A, 0.0)
        xi_current = np.where(hp, batch.prev_a - A_prev, 0.0)
        powers = (noise.alpha ** np.arange(1, T + 1))[None, :, None]
        mu = powers * xi_behavior[:, None, :]
        eta = powers * xi_current[:, None, :]

        pos_valid = np.arange(T)[None, :] < h[:, None]
        mask = pos_valid[..., None]
        x_num = np.where(mask, batch.a - A_cur - eta, 0.0)
        x_den = np.where(mask, batch.a - batch.A - mu, 0.0)
        y_num = x_num @ noise.inv_c
        y_den = x_den @ noise.inv_c
        gram_num = np.einsum("bkd,bld->bkl", y_num, x_num)
        gram_den = np.einsum("bkd,bld->bkl", y_den, x_den)

        lam_inv = np.where(
            batch.has_prev[:, None, None, None],
            self._pad_inv["conditional"][None],
            self._pad_inv["marginal"][None],
        )
        q_num = np.einsum("bnkl,bkl->bn", lam_inv, gram_num)
        q_den = np.einsum("bnkl,bkl->bn", lam_inv, gram_den)
        log_ratio = -0.5 * (q_num - q_den)
        psi = truncated_ratio(log_ratio, cfg.b)

        disc = self._discounts
        returns = cfg.reward_scale * np.cumsum(batch.r * disc[None, :T], axis=1)
        returns += disc[None, 1 : T + 1] * np.where(batch.terminal, 0.0, v_boot)
        td = returns - v_first[:, None]
        d_vals = np.where(pos_valid, td * psi, 0.0)
        weights = d_vals / h[:, None]

        critic_up = weights.sum(axis=1)[:, None]
        g_nu = self.critic.backward_cached(nu, critic_acts, critic_up) / B

        mix = np.einsum("bn,bnkl->bkl", weights, lam_inv)
        actor_up = np.einsum("bkl,bld->bkd", mix, y_num)
        penalty, dpen = self._penalty_terms(A_cur[:, 0])
        actor_up[:, 0] -= dpen
        g_theta = self.actor.backward_cached(theta, actor_acts, actor_up.reshape(B * T, d)) / B

        n_valid = pos_valid.sum()
        stats = {
            "actor_loss": float(np.mean(0.5 * np.sum(weights * q_num, axis=1) + penalty)),
            "critic_loss": float(0.5 * np.sum(np.where(pos_valid, td, 0.0) ** 2) / n_valid),
            "mean_abs_ratio": float(np.sum(np.where(pos_valid, np.exp(np.clip(log_ratio, -30, 30)), 0.0)) / n_valid),
        }
        return g_theta, g_nu, stats

    def train_step(self, buffer: ReplayMemory, rng: np.random.Generator) -> dict:
        """``gradient_steps`` minibatch ascent steps on theta and nu."""
        if len(buffer) < max(self.cfg.learning_start, 1):
            raise NotReadyError(f"buffer holds {len(buffer)} < {self.cfg.learning_start} transitions")
        stats = {}
        for _ in range(self.cfg.gradient_steps):
            idx = buffer.sample_index(rng, size=self.cfg.minibatch)
            batch = buffer.extract_batch(idx, self.cfg.tau)
            g_theta, g_nu, stats = self.batch_directions(batch)
            if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_nu))):
                raise FloatingPointError("non-finite improvement direction")
            self.theta = self.actor_opt.step(self.theta, g_theta, sign=+1.0)
            self.nu = self.critic_opt.step(self.nu, g_nu, sign=+1.0)
        return stats


def monte_carlo_noise_value(
    env,
    learner: AceracLearner,
    reset_to,
    xi: np.ndarray | None,
    episodes: int,
    rng: np.random.Generator,
    max_steps: int = 1000,
    theta=None,
) -> float:
    """Average discounted return from the state set by ``reset_to(env)``.

    With ``xi`` given the noise process continues from that previous value;
    with ``xi=None`` it starts fresh, i.e. the previous value is drawn from
    the stationary distribution.  Rollouts stop on a genuine terminal or
    after ``max_steps``.
    """
    gamma = learner.cfg.gamma
    total = 0.0
    for _ in range(episodes):
        s = reset_to(env)
        if xi is None:
            noise = NoiseState(np.zeros(learner.action_dim), fresh=True)
        else:
            noise = NoiseState(np.asarray(xi, dtype=float), fresh=False)
        ret, disc = 0.0, 1.0
        for _ in range(max_steps):
            a, _, noise = learner.act(s, noise, rng, theta)
            s, r, terminal = env.step(a)
            ret += disc * r
            disc *= gamma
            if terminal and not env.truncated:
                break
        total += ret
    return total / episodes


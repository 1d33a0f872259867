"""Autoregressive exploration noise.

The process is

    xi_1 = eps_1
    xi_t = alpha * xi_{t-1} + sqrt(1 - alpha^2) * eps_t,   eps_t ~ N(0, C)

so every xi_t is N(0, C) and E xi_t xi_{t+k}^T = alpha^|k| C.  Blocks of
``n`` consecutive values are jointly normal with Kronecker-structured
covariance ``Lambda (x) C``; the n x n structure matrices depend only on
``(n, alpha)`` and are cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class NoiseState:
    """Last emitted value of the process; ``fresh`` marks the start of a trial."""

    xi: np.ndarray
    fresh: bool = True


@dataclass(frozen=True)
class StackedCov:
    n: int
    omega: np.ndarray
    lam: np.ndarray
    kind: Literal["marginal", "conditional"]


def marginal_structure(n: int, alpha: float) -> np.ndarray:
    """Lambda_0: entries alpha^|l-k|."""
    idx = np.arange(n)
    return float(alpha) ** np.abs(idx[:, None] - idx[None, :])


def conditional_structure(n: int, alpha: float) -> np.ndarray:
    """Lambda_1: entries alpha^|l-k| - alpha^(l+k+2), 0-indexed."""
    idx = np.arange(n)
    return marginal_structure(n, alpha) - float(alpha) ** (idx[:, None] + idx[None, :] + 2)


@dataclass(frozen=True, eq=False)
class NoiseParams:
    alpha: float
    cov_c: np.ndarray
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov_c, dtype=float))
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"cov_c must be square, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("cov_c must be symmetric")
        eig = np.linalg.eigvalsh(cov)
        if eig.min() <= 1e-12 * eig.max() or eig.max() <= 0:
            raise ValueError("cov_c must be positive definite")
        object.__setattr__(self, "cov_c", cov)

    @classmethod
    def isotropic(cls, alpha: float, sigma: float, dim: int) -> "NoiseParams":
        return cls(alpha, sigma**2 * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.cov_c.shape[0]

    @cached_property
    def chol_c(self) -> np.ndarray:
        return np.linalg.cholesky(self.cov_c)

    @cached_property
    def inv_c(self) -> np.ndarray:
        return np.linalg.inv(self.cov_c)

    @cached_property
    def logdet_c(self) -> float:
        return 2.0 * float(np.log(np.diag(self.chol_c)).sum())

    def structure(self, n: int, kind: str) -> tuple[np.ndarray, np.ndarray, float]:
        """Cached ``(Lambda, Lambda^-1, log det Lambda)`` for horizon ``n``."""
        key = (n, kind)
        if key not in self._cache:
            if kind == "marginal":
                lam = marginal_structure(n, self.alpha)
            elif kind == "conditional":
                lam = conditional_structure(n, self.alpha)
            else:
                raise ValueError(f"unknown kind {kind!r}")
            chol = np.linalg.cholesky(lam)
            inv = np.linalg.inv(lam)
            inv = 0.5 * (inv + inv.T)
            self._cache[key] = (lam, inv, 2.0 * float(np.log(np.diag(chol)).sum()))
        return self._cache[key]


def reset_trial(params: NoiseParams) -> NoiseState:
    return NoiseState(np.zeros(params.dim), fresh=True)


def sample_step(
    state: NoiseState, params: NoiseParams, rng: np.random.Generator
) -> tuple[np.ndarray, NoiseState]:
    eps = params.chol_c @ rng.standard_normal(params.dim)
    if state.fresh:
        xi = eps
    else:
        a = params.alpha
        xi = a * state.xi + np.sqrt(1.0 - a * a) * eps
    return xi, NoiseState(xi, fresh=False)


def simulate(params: NoiseParams, steps: int, rng: np.random.Generator) -> np.ndarray:
    """A whole trial of ``steps`` values, shape (steps, d).

    Consumes the generator exactly as ``steps`` calls of ``sample_step``
    starting from a fresh state would.
    """
    eps = rng.standard_normal((steps, params.dim)) @ params.chol_c.T
    a = params.alpha
    drive = np.sqrt(1.0 - a * a) * eps
    if steps:
        drive[0] = eps[0]
    return lfilter([1.0], [1.0, -a], drive, axis=0)


def autocovariance(params: NoiseParams, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("lag must be non-negative")
    return params.alpha**k * params.cov_c


def stacked_marginal_cov(params: NoiseParams, n: int) -> StackedCov:
    if n < 1:
        raise ValueError("horizon must be >= 1")
    lam = params.structure(n, "marginal")[0]
    return StackedCov(n, np.kron(lam, params.cov_c), lam, "marginal")


def conditional_mean_blocks(alpha: float, n: int, xi_prev: np.ndarray) -> np.ndarray:
    """Block j of the conditional mean is alpha^(j+1) * xi_prev; shape (n, d)."""
    powers = float(alpha) ** np.arange(1, n + 1)
    return powers[:, None] * np.asarray(xi_prev, dtype=float)[None, :]


def conditional_params(
    params: NoiseParams, n: int, xi_prev: np.ndarray
) -> tuple[np.ndarray, StackedCov]:
    """Mean and covariance of the next ``n`` values given the last one."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    xi_prev = np.asarray(xi_prev, dtype=float)
    if xi_prev.shape != (params.dim,):
        raise ValueError(f"xi_prev must have shape ({params.dim},), got {xi_prev.shape}")
    mean = conditional_mean_blocks(params.alpha, n, xi_prev).ravel()
    lam = params.structure(n, "conditional")[0]
    return mean, StackedCov(n, np.kron(lam, params.cov_c), lam, "conditional")


def transition_matrix(params: NoiseParams, n: int) -> np.ndarray:
    """B^n as an explicit (n d) x d matrix."""
    powers = params.alpha ** np.arange(1, n + 1)
    return np.kron(powers[:, None], np.eye(params.dim))

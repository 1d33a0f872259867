"""Multivariate normal log-densities and the soft-truncation map."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
LOG_RATIO_CLAMP = 30.0


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Normal distribution with its covariance factorized once."""

    mean: np.ndarray
    cov: np.ndarray
    inv: np.ndarray
    logdet: float

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        eig = np.linalg.eigvalsh(cov)
        if eig.max() <= 0 or eig.min() <= 1e-12 * eig.max():
            raise ValueError("covariance is not positive definite")
        chol = np.linalg.cholesky(cov)
        eye = np.eye(mean.size)
        inv = np.linalg.solve(chol.T, np.linalg.solve(chol, eye))
        inv = 0.5 * (inv + inv.T)
        logdet = 2.0 * float(np.log(np.diag(chol)).sum())
        return cls(mean, cov, inv, logdet)

    def with_mean(self, mean) -> "GaussianSpec":
        """Same covariance (and cached factorization), different mean."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if mean.shape != self.mean.shape:
            raise ValueError("mean length changed")
        return GaussianSpec(mean, self.cov, self.inv, self.logdet)

    @property
    def dim(self) -> int:
        return self.mean.size


def _residual(x, g: GaussianSpec) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != g.mean.shape:
        raise ValueError(f"x has shape {x.shape}, expected {g.mean.shape}")
    return x - g.mean


def log_density(x, g: GaussianSpec) -> float:
    r = _residual(x, g)
    return -0.5 * float(r @ g.inv @ r) - 0.5 * (g.dim * LOG_2PI + g.logdet)


def log_density_ratio(x, numerator: GaussianSpec, denominator: GaussianSpec) -> float:
    """log phi_num(x) - log phi_den(x)."""
    if numerator.dim != denominator.dim:
        raise ValueError("numerator and denominator dimensions differ")
    rn = _residual(x, numerator)
    rd = _residual(x, denominator)
    out = -0.5 * float(rn @ numerator.inv @ rn) + 0.5 * float(rd @ denominator.inv @ rd)
    if numerator.cov is not denominator.cov:
        out -= 0.5 * (numerator.logdet - denominator.logdet)
    return out


def grad_log_density_wrt_mean(x, g: GaussianSpec) -> np.ndarray:
    return g.inv @ _residual(x, g)


def soft_truncate(x, b: float):
    """b * tanh(x / b): odd, bounded by b, unit slope at zero."""
    return b * np.tanh(np.asarray(x) / b)


def truncated_ratio(log_ratio, b: float):
    """psi_b applied to exp(log_ratio), with the exponent clamped against overflow."""
    return soft_truncate(np.exp(np.clip(log_ratio, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)), b)

"""Plain expectation-maximization for bivariate Gaussian mixtures.

Kept free of any drone-specific modification so the constrained variant in
:mod:`uavclust.ducem` can be compared against it. Densities are handled in
the log domain; responsibilities are normalized with a per-sample
log-sum-exp so well separated clusters do not underflow.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import as_points

log = logging.getLogger(__name__)

COV_FLOOR = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


class NumericalUnderflowError(FloatingPointError):
    pass


class EmptyComponentError(ValueError):
    pass


@dataclass
class GmmParams:
    """Mixture parameters: weights (M,), means (M, 2), covs (M, 2, 2)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        m = self.weights.size
        self.means = np.asarray(self.means, dtype=float).reshape(m, 2)
        self.covs = np.asarray(self.covs, dtype=float).reshape(m, 2, 2)
        if m == 0:
            raise ValueError("a mixture needs at least one component")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixing proportions must be >= 0 and sum to 1, got {self.weights}")
        for cov in self.covs:
            _check_spd(cov)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @classmethod
    def spherical(cls, means, sigma, weights=None) -> "GmmParams":
        """Components with covariance ``sigma * I``; equal weights by default."""
        means = np.asarray(means, dtype=float).reshape(-1, 2)
        m = means.shape[0]
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (m,))
        if weights is None:
            weights = np.full(m, 1.0 / m)
        return cls(weights, means, sigma[:, None, None] * np.eye(2))


def _check_spd(cov: np.ndarray) -> None:
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    if np.linalg.eigvalsh(cov).min() <= 1e-12:
        raise ValueError("covariance must be positive definite")


def log_gaussian_density(x, mean, cov) -> np.ndarray:
    """Log bivariate normal density at each row of ``x``."""
    cov = np.asarray(cov, dtype=float)
    _check_spd(cov)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (x - np.asarray(mean, dtype=float)).T)
    with np.errstate(over="ignore"):
        maha = np.sum(z * z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (maha + log_det) - LOG_2PI


def gaussian_density(x, mean, cov):
    out = np.exp(log_gaussian_density(x, mean, cov))
    return float(out[0]) if np.ndim(x) == 1 else out


def _weighted_log_densities(points: np.ndarray, params: GmmParams) -> np.ndarray:
    """(M, n) matrix of log P(j) + log N(x_t; mu_j, Sigma_j)."""
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    return np.stack([
        log_w[j] + log_gaussian_density(points, params.means[j], params.covs[j])
        for j in range(params.n_components)
    ])


def e_step(data, params: GmmParams) -> np.ndarray:
    """Posterior responsibilities p(j | x_t), shape (M, n); columns sum to one."""
    points = as_points(data)
    lw = _weighted_log_densities(points, params)
    norm = logsumexp(lw, axis=0)
    if not np.all(np.isfinite(norm)):
        bad = np.flatnonzero(~np.isfinite(norm))
        raise NumericalUnderflowError(f"mixture density vanished for samples {bad[:10].tolist()}")
    return np.exp(lw - norm)


def floor_covariance(cov: np.ndarray, floor: float = COV_FLOOR) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def m_step(data, resp, cov_floor: float = COV_FLOOR) -> GmmParams:
    """Weighted-moment update of weights, means and full covariances.

    The covariance of each component is normalized by that component's own
    effective count and taken about the freshly updated mean. Eigenvalues
    below ``cov_floor`` are lifted to it.
    """
    points = as_points(data)
    resp = np.asarray(resp, dtype=float)
    n = points.shape[0]
    n_hat = resp.sum(axis=1)
    if np.any(n_hat < 1e-12):
        raise EmptyComponentError(f"components {np.flatnonzero(n_hat < 1e-12).tolist()} are empty")
    weights = n_hat / n
    weights = weights / weights.sum()
    means = (resp @ points) / n_hat[:, None]
    covs = np.empty((resp.shape[0], 2, 2))
    for j in range(resp.shape[0]):
        diff = points - means[j]
        cov = (resp[j][:, None] * diff).T @ diff / n_hat[j]
        covs[j] = floor_covariance(cov, cov_floor)
    return GmmParams(weights, means, covs)


def log_likelihood(data, params: GmmParams) -> float:
    points = as_points(data)
    lw = _weighted_log_densities(points, params)
    norm = logsumexp(lw, axis=0)
    if not np.all(np.isfinite(norm)):
        log.warning("log-likelihood underflow: %d samples have zero mixture density",
                    int(np.sum(~np.isfinite(norm))))
        return -np.inf
    return float(norm.sum())


def em_step(data, params: GmmParams, cov_floor: float = COV_FLOOR) -> GmmParams:
    return m_step(data, e_step(data, params), cov_floor)


def fit(data, params: GmmParams, n_iter: int = 100, tol: float = None):
    """Run up to ``n_iter`` EM iterations.

    Returns the final parameters and the log-likelihood trace (initial value
    first). Stops early once the likelihood gain drops below ``tol``.
    """
    trace = [log_likelihood(data, params)]
    for _ in range(n_iter):
        params = em_step(data, params)
        trace.append(log_likelihood(data, params))
        if tol is not None and trace[-1] - trace[-2] < tol:
            break
    return params, np.array(trace)

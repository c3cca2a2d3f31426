"""Linear-Gaussian (or exact) partial observation of the process state.

An observation of state ``x`` is ``y = P' x + noise`` with ``noise ~
N(0, sigma)``; ``P`` is ``u x p`` so ``y`` has length ``p``.  In error-free
mode the noise is identically zero and likelihood evaluations degenerate to
exact-hit indicators on ``P' x == y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .network import State


@dataclass(frozen=True)
class ObservationModel:
    P: np.ndarray
    sigma: np.ndarray
    error_free: bool = False

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        p = P.shape[1]
        if sigma.shape != (p, p):
            raise ValueError(
                f"sigma must be {p}x{p} to match P with {p} observed components"
            )
        if not np.allclose(sigma, sigma.T, atol=1e-12, rtol=0.0):
            raise ValueError("sigma must be symmetric")
        if self.error_free and np.any(sigma != 0.0):
            raise ValueError("error-free observation requires sigma == 0")
        sigma = 0.5 * (sigma + sigma.T)
        P.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "sigma", sigma)

    @property
    def u(self) -> int:
        return self.P.shape[0]

    @property
    def p(self) -> int:
        return self.P.shape[1]

    def project(self, x) -> np.ndarray:
        """P' x for a single state (vector or State)."""
        xv = x.x if isinstance(x, State) else np.asarray(x)
        return self.P.T @ xv

    def project_batch(self, X: np.ndarray) -> np.ndarray:
        """P' x for a (B, u) batch of states, returning (B, p)."""
        return X @ self.P

    def __eq__(self, other):
        if not isinstance(other, ObservationModel):
            return NotImplemented
        return (
            self.error_free == other.error_free
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.sigma, other.sigma)
        )


def error_free_observation(u: int, observed=None) -> ObservationModel:
    """Exact observation of all species (or a subset given by index)."""
    if observed is None:
        observed = range(u)
    observed = list(observed)
    P = np.zeros((u, len(observed)))
    for k, j in enumerate(observed):
        P[j, k] = 1.0
    return ObservationModel(P, np.zeros((len(observed), len(observed))), error_free=True)


def gaussian_loglik(y, x, obs: ObservationModel) -> float:
    """Log observation density log p(y | x).

    Gaussian mode returns ``log N(y; P' x, sigma)`` (a singular ``sigma`` is
    a usage error).  Error-free mode returns 0 when ``P' x`` equals ``y``
    exactly and -inf otherwise.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    mean = obs.project(x)
    if y.shape != mean.shape:
        raise ValueError(f"observation has shape {y.shape}, expected {mean.shape}")
    if obs.error_free:
        return 0.0 if np.array_equal(mean, y) else -np.inf
    try:
        cf = cho_factor(obs.sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma is singular; use error_free mode for exact data") from exc
    r = y - mean
    maha = float(r @ cho_solve(cf, r))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return -0.5 * (maha + logdet + obs.p * np.log(2.0 * np.pi))


def loglik_batch(y: np.ndarray, X: np.ndarray, obs: ObservationModel) -> np.ndarray:
    """Log observation density for a (B, u) batch of states."""
    mean = obs.project_batch(X)
    if obs.error_free:
        hit = np.all(mean == y[None, :], axis=1)
        out = np.full(X.shape[0], -np.inf)
        out[hit] = 0.0
        return out
    try:
        cf = cho_factor(obs.sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma is singular; use error_free mode for exact data") from exc
    r = y[None, :] - mean
    solved = cho_solve(cf, r.T).T
    maha = np.einsum("bp,bp->b", r, solved)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return -0.5 * (maha + logdet + obs.p * np.log(2.0 * np.pi))

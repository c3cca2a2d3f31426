"""Continuous approximations of the jump process.

Two Gaussian transition approximations are provided, both matching the
jump process's infinitesimal mean ``S h(x, c)`` and variance
``S diag(h) S'``:

* a single Euler-Maruyama step of the diffusion (Langevin) approximation,
  giving ``N(x + S h dt, S diag(h) S' dt)`` pushed through the observation
  map, and
* the linear-noise approximation, which integrates a deterministic mean
  path ``dz = S f(z, c) dt`` together with the covariance
  ``dV = J V + V J' + S diag(f) S'`` (``J`` the drift Jacobian) and the
  sensitivity ``dG = J G``.  The covariance is propagated directly in this
  form rather than through the inverse-sensitivity parameterisation; the
  endpoint is algebraically the same and no matrix inversions are needed
  along the way.

Rates at real-valued states use the mass-action falling-factorial
polynomials clamped at zero.  The ODE integrator is classical fixed-step
RK4 with step doubling until two successive refinements agree to 1e-8
relative, which favours robustness over adaptivity for these tiny systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import lna_rk4_batch
from .errors import InvariantViolation, NumericalFailure
from .network import ReactionNetwork, State, as_rates, hazards_batch
from .observe import ObservationModel

_REL_TOL = 1e-8
_BASE_STEPS = 32
_MAX_STEPS = 1 << 16


def _psd_clean(cov: np.ndarray, where: str) -> np.ndarray:
    """Symmetrise and clamp a covariance that should be PSD up to rounding."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    scale = max(1.0, float(np.max(np.abs(cov))))
    asym = float(np.max(np.abs(cov - cov.T)))
    if asym > 1e-12 * scale:
        raise InvariantViolation(f"{where}: covariance asymmetric by {asym}")
    cov = 0.5 * (cov + cov.T)
    evals, vecs = np.linalg.eigh(cov)
    if evals[0] < -1e-8 * scale:
        raise InvariantViolation(f"{where}: covariance has eigenvalue {evals[0]}")
    if evals[0] < 0.0:
        cov = (vecs * np.maximum(evals, 0.0)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return cov


@dataclass(frozen=True)
class GaussianApprox:
    """A Gaussian over the observed components: mean vector and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = _psd_clean(self.cov, "GaussianApprox")
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("mean/cov dimensions disagree")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def log_density(self, y) -> float:
        """Gaussian log density at y; degenerate directions act as exact constraints."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        r = y - self.mean
        evals, vecs = np.linalg.eigh(self.cov)
        scale = max(1.0, float(evals[-1]))
        pos = evals > 1e-12 * scale
        proj = vecs.T @ r
        if np.any(np.abs(proj[~pos]) > 1e-9 * max(1.0, float(np.max(np.abs(y))))):
            return -np.inf
        k = int(pos.sum())
        maha = float(np.sum(proj[pos] ** 2 / evals[pos]))
        logdet = float(np.sum(np.log(evals[pos])))
        return -0.5 * (maha + logdet + k * np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LnaSolution:
    """Endpoint of the moment ODEs: mean path, sensitivity matrix, covariance."""

    mean: np.ndarray
    sensitivity: np.ndarray
    cov: np.ndarray


def cle_predictive(net: ReactionNetwork, c, x_from: State, dt: float,
                   obs: ObservationModel) -> GaussianApprox:
    """One Euler-Maruyama step of the diffusion approximation, observed.

    Returns ``N(P'[x + S h dt], P' S diag(h) S' P dt + sigma)`` for the
    observation at horizon ``dt`` from state ``x_from``.
    """
    c = as_rates(net, c)
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = x_from.x.astype(np.float64)
    h = hazards_batch(net, x[None, :], c)[0]
    S = net._stoich_f
    mean = obs.P.T @ (x + S @ h * dt)
    PS = obs.P.T @ S
    cov = (PS * h) @ PS.T * dt + obs.sigma
    return GaussianApprox(mean, cov)


def _integrate_batch(net: ReactionNetwork, c, Z0: np.ndarray, V0: np.ndarray,
                     window: float, want_G: bool):
    """Batched LNA integration with step-doubling verification.

    Z0 is (B, u); V0 is (B, u, u).  Returns (z, V, G) at the end of the
    window, with G None unless requested.
    """
    B, u = Z0.shape
    if window == 0.0:
        G = np.broadcast_to(np.eye(u), (B, u, u)).copy() if want_G else None
        return Z0.copy(), V0.copy(), G
    _, sp, od, ptr = net._terms
    nsteps = _BASE_STEPS
    prev = None
    while nsteps <= _MAX_STEPS:
        z = Z0.copy()
        V = V0.copy()
        G = (np.broadcast_to(np.eye(u), (B, u, u)).copy() if want_G
             else np.empty((0, u, u)))
        ok = lna_rk4_batch(z, V, G, want_G, float(window), nsteps, c,
                           net._stoich_f, sp, od, ptr)
        if not ok:
            raise NumericalFailure("moment ODE integration produced non-finite values")
        if prev is not None:
            zp, Vp, Gp = prev
            scale = max(1.0, float(np.max(np.abs(z))), float(np.max(np.abs(V))))
            diff = max(float(np.max(np.abs(z - zp))), float(np.max(np.abs(V - Vp))))
            if want_G:
                diff = max(diff, float(np.max(np.abs(G - Gp))))
            if diff <= _REL_TOL * scale:
                return z, V, (G if want_G else None)
        prev = (z, V, G)
        nsteps *= 2
    raise NumericalFailure(
        f"moment ODEs failed to converge at {_MAX_STEPS} steps over window {window}"
    )


def lna_integrate(net: ReactionNetwork, c, z0, V0, dt: float) -> LnaSolution:
    """Integrate mean, sensitivity and covariance over a horizon ``dt``.

    ``dt = 0`` returns ``(z0, I, V0)`` exactly.  The covariance ODE is the
    direct form ``dV = J V + V J' + S diag(f) S'`` whose endpoint equals the
    sensitivity-factored propagation of ``V0``.
    """
    c = as_rates(net, c)
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    z0 = np.atleast_1d(np.asarray(z0, dtype=np.float64))
    if z0.shape != (net.u,):
        raise ValueError(f"z0 must have length {net.u}")
    if np.any(z0 < 0.0):
        raise ValueError("z0 must be elementwise non-negative")
    V0 = np.atleast_2d(np.asarray(V0, dtype=np.float64))
    if V0.shape != (net.u, net.u):
        raise ValueError(f"V0 must be {net.u}x{net.u}")
    z, V, G = _integrate_batch(net, c, z0[None, :], V0[None, :, :], float(dt), True)
    return LnaSolution(z[0], G[0], _psd_clean(V[0], "lna_integrate"))


def lna_predictive(net: ReactionNetwork, c, x_from: State, dt: float,
                   obs: ObservationModel) -> GaussianApprox:
    """Linear-noise transition density of the observation at horizon ``dt``.

    The mean path restarts at the current state (zero initial residual and
    covariance), so the observed law is ``N(P' z_dt, P' V_dt P + sigma)``.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    sol = lna_integrate(net, c, x_from.x.astype(np.float64), np.zeros((net.u, net.u)), dt)
    mean = obs.P.T @ sol.mean
    cov = obs.P.T @ sol.cov @ obs.P + obs.sigma
    return GaussianApprox(mean, cov)

"""Sampling jump-process trajectories conditioned on an end-point observation.

Three samplers target the law of the process on ``(t0, t]`` given a noisy
(or exact) observation ``y`` at ``t``:

* :func:`myopic_is` - forward simulation weighted by the observation
  density; simple, but weights degenerate as the observation becomes
  informative.
* :func:`conditioned_is` - proposes from an approximate conditioned process
  whose hazard is adjusted toward the observation: a Gaussian approximation
  of the remaining number of reaction events given ``y`` yields the
  conditioned hazard (truncated at zero), and paths are reweighted by the
  exact ratio of complete-data likelihoods times the observation density.
* :func:`bridge_pf` - a particle filter over an equispaced partition of the
  interval that reweights forward trajectories by ratios of a look-ahead
  transition approximation (Euler-Maruyama diffusion step or linear-noise)
  and prunes inconsistent ones by adaptive resampling.

All three return an equally-weighted (resampled) ensemble together with an
unbiased estimate of the observation's marginal likelihood given the start
state; in error-free mode that estimate is of the exact end-point hit
probability and the final reweighting needs no density evaluations at all.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._kernels import ch_batch, conditioned_hazard_single, gillespie_batch
from .approx import _integrate_batch
from .errors import InvariantViolation
from .network import ReactionNetwork, State, as_rates, hazards_batch
from .observe import ObservationModel, gaussian_loglik, loglik_batch
from .rng import _U_FLOOR, RngStream
from .simulate import DEFAULT_EVENT_CAP, Trajectory, simulate

log = logging.getLogger(__name__)

WEIGHT_FUNCTIONS = ("cle", "lna")
RESAMPLING_SCHEMES = ("multinomial", "systematic")


@dataclass(frozen=True)
class BridgeConfig:
    """Tuning knobs for :func:`bridge_pf`.

    ``n_intermediate`` intermediate points partition the interval
    equispaced; resampling triggers when the effective sample size drops
    below ``beta * N``; look-ahead weights are raised to ``gamma`` (a value
    below one fattens light-tailed approximations); ``weight_fn`` selects
    the transition approximation.  ``lna_shared_path`` evaluates the
    linear-noise weights around one deterministic path integrated from the
    interval start instead of restarting the mean at every particle
    (cheaper, one ODE solve per epoch instead of one per particle).
    """

    n_intermediate: int
    beta: float = 0.5
    gamma: float = 1.0
    weight_fn: str = "cle"
    resampling: str = "multinomial"
    lna_shared_path: bool = False

    def __post_init__(self):
        if not (isinstance(self.n_intermediate, (int, np.integer)) and self.n_intermediate >= 1):
            raise ValueError("n_intermediate must be a positive integer")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.weight_fn not in WEIGHT_FUNCTIONS:
            raise ValueError(f"weight_fn must be one of {WEIGHT_FUNCTIONS}")
        if self.resampling not in RESAMPLING_SCHEMES:
            raise ValueError(f"resampling must be one of {RESAMPLING_SCHEMES}")


@dataclass
class ParticleEnsemble:
    """Weighted trajectory ensemble at the end of an interval.

    ``states`` holds the (resampled, equally-weighted) end states;
    ``log_weights`` the per-particle unnormalised log-weights before the
    final resampling pass; ``ancestors`` one index array per resampling
    pass performed.  ``trajectories`` is populated only when a sampler was
    asked to record full paths.  ``resampled`` is False when every weight
    vanished and no resampling was possible.
    """

    states: np.ndarray
    log_weights: np.ndarray
    ancestors: list = field(default_factory=list)
    trajectories: list | None = None
    resampled: bool = True

    @property
    def n(self) -> int:
        return self.states.shape[0]


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of non-negative weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    s = w.sum()
    if s <= 0.0:
        return 0.0
    return float(s * s / np.sum(w * w))


def _ess_log(lw: np.ndarray) -> float:
    m = np.max(lw)
    if not np.isfinite(m):
        return 0.0
    return ess(np.exp(lw - m))


def resample_multinomial(weights, N: int, rng: RngStream) -> np.ndarray:
    """N iid draws from the normalised discrete distribution over indices."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if not (s > 0.0) or np.any(w < 0.0):
        raise ValueError("weights must be non-negative with positive sum")
    cdf = np.cumsum(w / s)
    cdf[-1] = 1.0
    u = rng.uniform(N)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def resample_systematic(weights, N: int, rng: RngStream) -> np.ndarray:
    """Systematic (stratified, single-uniform) resampling indices."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if not (s > 0.0) or np.any(w < 0.0):
        raise ValueError("weights must be non-negative with positive sum")
    cdf = np.cumsum(w / s)
    cdf[-1] = 1.0
    pts = (rng.uniform() + np.arange(N)) / N
    return np.searchsorted(cdf, pts, side="right").astype(np.int64)


def _resample_log(lw: np.ndarray, N: int, rng: RngStream, scheme: str) -> np.ndarray:
    w = np.exp(lw - np.max(lw))
    if scheme == "systematic":
        return resample_systematic(w, N, rng)
    return resample_multinomial(w, N, rng)


# -- conditioned hazard -----------------------------------------------------


def _obs_arrays(net: ReactionNetwork, obs: ObservationModel):
    if obs.u != net.u:
        raise ValueError(f"observation matrix is for {obs.u} species, network has {net.u}")
    PT = np.ascontiguousarray(obs.P.T)
    PS = np.ascontiguousarray(PT @ net._stoich_f)
    return PT, PS, obs.sigma


def conditioned_hazard(net: ReactionNetwork, c, x_s, y_t, ds: float,
                       obs: ObservationModel) -> np.ndarray:
    """Hazard adjusted toward hitting the observation ``y_t`` in time ``ds``.

    Approximating the remaining reaction counts as Gaussian with mean and
    variance proportional to the current hazard and conditioning on the
    observation gives

        h* = h + diag(h) S'P (P'S diag(h) S'P ds + sigma)^{-1}
                 (y - P'[x + S h ds]),

    truncated at zero componentwise.  When the projected-covariance system
    is singular (for instance exact observation of a state whose relevant
    hazards all vanish) the unconditioned hazard is returned instead.
    """
    c = as_rates(net, c)
    if not ds > 0.0:
        raise ValueError("ds must be positive")
    xv = (x_s.x if isinstance(x_s, State) else np.asarray(x_s)).astype(np.float64)
    if xv.shape != (net.u,):
        raise ValueError(f"state has shape {xv.shape}, expected ({net.u},)")
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    PT, PS, sigma = _obs_arrays(net, obs)
    if y.shape != (obs.p,):
        raise ValueError(f"observation has shape {y.shape}, expected ({obs.p},)")
    rx, sp, od, _ = net._terms
    hs, ok = conditioned_hazard_single(xv, c, float(ds), net._stoich_f, PT, PS,
                                       y, sigma, rx, sp, od)
    if not ok:
        log.debug("conditioned hazard: singular system at x=%s, ds=%g; "
                  "falling back to the unconditioned hazard", xv, ds)
    return hs


def sample_conditioned_path(net: ReactionNetwork, c, x0: State, y_t, t: float,
                            obs: ObservationModel, rng: RngStream,
                            event_cap: int = DEFAULT_EVENT_CAP) -> Trajectory:
    """Draw one path of the approximate conditioned process on (x0.time, t].

    The conditioned hazard is recomputed after every accepted event with
    the remaining horizon ``t - s``; waiting times are exponential at the
    current total conditioned hazard.  The overshooting final event is
    discarded, and a state where the conditioned hazard vanishes is held
    constant to ``t``.  Draws match :func:`conditioned_is`'s batch engine
    stream for stream.
    """
    c = as_rates(net, c)
    if not t > x0.time:
        raise ValueError("t must exceed the initial state's time")
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    PT, PS, sigma = _obs_arrays(net, obs)
    rx, sp, od, _ = net._terms
    gen = rng.generator
    x = x0.x.astype(np.float64)
    s = x0.time
    events = []
    while True:
        hs, _ = conditioned_hazard_single(x, c, t - s, net._stoich_f, PT, PS,
                                          y, sigma, rx, sp, od)
        hs0 = hs.sum()
        if hs0 <= 0.0:
            break
        u1 = max(gen.random(), _U_FLOOR)
        tau = -np.log1p(-u1) / hs0
        if s + tau > t:
            break
        r = gen.random() * hs0
        acc = 0.0
        idx = -1
        last = 0
        for i in range(net.v):
            if hs[i] > 0.0:
                acc += hs[i]
                last = i
                if r < acc:
                    idx = i
                    break
        if idx < 0:
            idx = last
        x += net._stoich_f[:, idx]
        s += tau
        events.append((s, idx))
        if len(events) >= event_cap:
            raise InvariantViolation(
                f"conditioned path exceeded {event_cap} events; check the model"
            )
    return Trajectory(x0, tuple(events), t)


def conditioned_is_logweight(net: ReactionNetwork, c, traj: Trajectory, y_t,
                             obs: ObservationModel) -> float:
    """Importance log-weight of a conditioned-hazard proposal path.

    Replays the trajectory, recomputing at each event the hazard and the
    truncated conditioned hazard that generated it (same discretely-updated
    remaining horizon), and returns

        log p(y | x_t) + sum_events [log h - log h*]
                       - integral (h0 - h*0) dt,

    the observation factor degenerating to a hit indicator in error-free
    mode.  A realised event with zero proposal hazard is impossible under
    the sampler and raises :class:`InvariantViolation`.
    """
    c = as_rates(net, c)
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    PT, PS, sigma = _obs_arrays(net, obs)
    rx, sp, od, _ = net._terms
    x = traj.x0.x.astype(np.float64)
    t_prev = traj.t_start
    lw = 0.0
    h = np.empty(net.v)
    for t_ev, j in traj.events:
        _hazards_np(net, x, c, h)
        hs, _ = conditioned_hazard_single(x, c, traj.t_end - t_prev, net._stoich_f,
                                          PT, PS, y, sigma, rx, sp, od)
        if hs[j] <= 0.0:
            raise InvariantViolation(
                f"event of type {j} at t={t_ev} has zero proposal hazard"
            )
        lw += (np.log(h[j]) if h[j] > 0.0 else -np.inf) - np.log(hs[j])
        lw -= (h.sum() - hs.sum()) * (t_ev - t_prev)
        x += net._stoich_f[:, j]
        t_prev = t_ev
    _hazards_np(net, x, c, h)
    hs, _ = conditioned_hazard_single(x, c, traj.t_end - t_prev, net._stoich_f,
                                      PT, PS, y, sigma, rx, sp, od)
    lw -= (h.sum() - hs.sum()) * (traj.t_end - t_prev)
    end = State(x.astype(np.int64), traj.t_end)
    return float(lw + gaussian_loglik(y, end, obs))


def _hazards_np(net, x, c, out):
    rx, sp, od, _ = net._terms
    out[:] = c
    for k in range(rx.shape[0]):
        xj = x[sp[k]]
        f = 1.0
        for q in range(od[k]):
            f *= (xj - q) / (q + 1.0)
        out[rx[k]] *= f


# -- importance samplers ----------------------------------------------------


def _tile_x0(x0: State, N: int) -> np.ndarray:
    return np.tile(x0.x.astype(np.float64), (N, 1))


def _finish_ensemble(X, lw, rng_res, scheme, trajectories=None):
    """Resample to an equally-weighted ensemble; signal if impossible."""
    if np.max(lw) == -np.inf:
        return ParticleEnsemble(
            states=X.astype(np.int64), log_weights=lw, ancestors=[],
            trajectories=trajectories, resampled=False,
        ), -np.inf
    logZ = float(logsumexp(lw) - np.log(lw.shape[0]))
    anc = _resample_log(lw, lw.shape[0], rng_res, scheme)
    ens = ParticleEnsemble(
        states=X[anc].astype(np.int64), log_weights=lw, ancestors=[anc],
        trajectories=[trajectories[i] for i in anc] if trajectories else None,
        resampled=True,
    )
    return ens, logZ


def _mis_lw(net, c, X, t0, t1, y, obs, rng_prop, event_cap):
    t = np.full(X.shape[0], float(t0))
    rx, sp, od, _ = net._terms
    _, capped = gillespie_batch(rng_prop.generator, X, t, float(t1), c,
                                net._stoich_f, rx, sp, od, event_cap)
    lw = loglik_batch(y, X, obs)
    lw[capped] = -np.inf
    return lw


def myopic_is(net: ReactionNetwork, c, x0: State, y_t, t: float,
              obs: ObservationModel, N: int, rng: RngStream,
              record_paths: bool = False,
              event_cap: int = DEFAULT_EVENT_CAP,
              resampling: str = "multinomial"):
    """Forward-simulation importance sampler (N paths weighted by p(y|x_t)).

    Returns ``(ensemble, logZ_hat)`` where ``logZ_hat`` is the log of the
    average unnormalised weight, an unbiased estimator of ``p(y | x0)`` on
    the natural scale.
    """
    c = as_rates(net, c)
    if N < 1:
        raise ValueError("N must be at least 1")
    if not t > x0.time:
        raise ValueError("t must exceed the initial state's time")
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    if record_paths:
        trajs = [simulate(net, c, x0, t, rng.substream(0, i), event_cap)
                 for i in range(N)]
        X = np.array([tr.end_state(net).x for tr in trajs], dtype=np.float64)
        lw = loglik_batch(y, X, obs)
        return _finish_ensemble(X, lw, rng.substream(1), resampling, trajs)
    X = _tile_x0(x0, N)
    lw = _mis_lw(net, c, X, x0.time, t, y, obs, rng.substream(0), event_cap)
    return _finish_ensemble(X, lw, rng.substream(1), resampling)


def _ch_lw(net, c, X, t0, t1, y, obs, rng_prop, event_cap):
    PT, PS, sigma = _obs_arrays(net, obs)
    rx, sp, od, _ = net._terms
    t = np.full(X.shape[0], float(t0))
    lw = np.zeros(X.shape[0])
    _, capped, nfall = ch_batch(rng_prop.generator, X, t, float(t1), c,
                                net._stoich_f, PT, PS, y, sigma,
                                rx, sp, od, lw, event_cap)
    if nfall:
        log.debug("conditioned-hazard propagation used %d singular fallbacks", nfall)
    lw[capped] = -np.inf
    lw += loglik_batch(y, X, obs)
    return lw


def conditioned_is(net: ReactionNetwork, c, x0: State, y_t, t: float,
                   obs: ObservationModel, N: int, rng: RngStream,
                   record_paths: bool = False,
                   event_cap: int = DEFAULT_EVENT_CAP,
                   resampling: str = "multinomial"):
    """Importance sampler proposing from the conditioned-hazard process."""
    c = as_rates(net, c)
    if N < 1:
        raise ValueError("N must be at least 1")
    if not t > x0.time:
        raise ValueError("t must exceed the initial state's time")
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    if record_paths:
        trajs = [sample_conditioned_path(net, c, x0, y, t, obs,
                                         rng.substream(0, i), event_cap)
                 for i in range(N)]
        X = np.array([tr.end_state(net).x for tr in trajs], dtype=np.float64)
        lw = np.array([conditioned_is_logweight(net, c, tr, y, obs) for tr in trajs])
        return _finish_ensemble(X, lw, rng.substream(1), resampling, trajs)
    X = _tile_x0(x0, N)
    lw = _ch_lw(net, c, X, x0.time, t, y, obs, rng.substream(0), event_cap)
    return _finish_ensemble(X, lw, rng.substream(1), resampling)


# -- bridge particle filter -------------------------------------------------


def _gauss_logpdf_batch(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """log N(y; mean_b, cov_b) for stacked means/covariances.

    Covariances here are Gram forms plus the observation noise, hence PSD;
    a tiny diagonal floor keeps the Cholesky well defined when they are
    numerically singular (the weight functions only need to be positive).
    """
    B, p = mean.shape
    if p == 1:
        var = np.maximum(cov[:, 0, 0], 1e-12)
        r = y[0] - mean[:, 0]
        return -0.5 * (r * r / var + np.log(2.0 * np.pi * var))
    cov = cov.copy()
    idx = np.arange(p)
    cov[:, idx, idx] += 1e-12
    L = np.linalg.cholesky(cov)
    r = y[None, :] - mean
    sol = np.linalg.solve(L, r[:, :, None])[:, :, 0]
    maha = np.sum(sol * sol, axis=1)
    logdet = 2.0 * np.sum(np.log(L[:, idx, idx]), axis=1)
    return -0.5 * (maha + logdet + p * np.log(2.0 * np.pi))


def _logq_cle(net, c, X, horizon, y, obs):
    h = hazards_batch(net, X, c)
    S = net._stoich_f
    mean = (X + (h @ S.T) * horizon) @ obs.P
    PS = obs.P.T @ S
    cov = np.einsum("ai,bi,ci->bac", PS, h, PS) * horizon + obs.sigma
    return _gauss_logpdf_batch(y, mean, cov)


def _logq_lna_restart(net, c, X, horizon, y, obs):
    V0 = np.zeros((X.shape[0], net.u, net.u))
    z, V, _ = _integrate_batch(net, c, X.copy(), V0, horizon, want_G=False)
    mean = z @ obs.P
    cov = np.einsum("ua,buw,wc->bac", obs.P, V, obs.P) + obs.sigma
    return _gauss_logpdf_batch(y, mean, cov)


class _SharedLnaPath:
    """Linear-noise weights around one deterministic path per interval.

    The mean path is integrated once from the interval's start state; each
    epoch then needs a single sensitivity/covariance solve over the
    remaining window, shared by every particle.
    """

    def __init__(self, net, c, z_start, knots):
        self.net = net
        self.c = c
        self.knots = knots
        zs = [np.asarray(z_start, dtype=np.float64)]
        V0 = np.zeros((1, net.u, net.u))
        for k in range(len(knots) - 1):
            z, _, _ = _integrate_batch(net, c, zs[-1][None, :], V0,
                                       knots[k + 1] - knots[k], want_G=False)
            zs.append(z[0])
        self.z_knots = zs

    def logq(self, X, k, y, obs):
        net = self.net
        window = self.knots[-1] - self.knots[k]
        zk = self.z_knots[k]
        if window == 0.0:
            mean = X @ obs.P
            cov = np.broadcast_to(obs.sigma, (X.shape[0], obs.p, obs.p))
            return _gauss_logpdf_batch(y, mean, np.array(cov))
        z, V, G = _integrate_batch(net, self.c, zk[None, :],
                                   np.zeros((1, net.u, net.u)), window, want_G=True)
        mean = (z[0][None, :] + (X - zk[None, :]) @ G[0].T) @ obs.P
        cov_shared = obs.P.T @ V[0] @ obs.P + obs.sigma
        cov = np.broadcast_to(cov_shared, (X.shape[0], obs.p, obs.p))
        return _gauss_logpdf_batch(y, mean, np.array(cov))


def _bpf_from_states(net, c, X, t0, t, y, obs, cfg: BridgeConfig, rng: RngStream,
                     event_cap, anchor=None, init=None):
    """Bridge-PF core starting from an explicit (N, u) particle array.

    ``init`` optionally supplies pre-computed ``(lw, lq)`` start weights;
    otherwise particles are pre-weighted by ``gamma * log q(y | x_0)``.
    Returns ``(logZ, lw_final, X_resampled, ancestors, ok)`` where ``lw``
    is the per-particle log-weight before the final resampling pass.
    """
    N = X.shape[0]
    X = np.array(X, dtype=np.float64)
    rs_prop = rng.substream(0)
    rs_res = rng.substream(1)
    n = cfg.n_intermediate
    knots = np.linspace(t0, t, n + 1)
    shared = None
    if cfg.weight_fn == "lna" and cfg.lna_shared_path:
        z0 = np.asarray(anchor, dtype=np.float64) if anchor is not None else X.mean(axis=0)
        shared = _SharedLnaPath(net, c, z0, knots)

    def logq(Xs, k):
        if shared is not None:
            return shared.logq(Xs, k, y, obs)
        horizon = float(t - knots[k])
        if cfg.weight_fn == "cle":
            return _logq_cle(net, c, Xs, horizon, y, obs)
        return _logq_lna_restart(net, c, Xs, horizon, y, obs)

    ancestors = []
    logZ = 0.0
    if init is None:
        lq = logq(X, 0)
        lw = cfg.gamma * lq
    else:
        lw, lq = init
        lw = np.array(lw, dtype=np.float64)
        lq = np.array(lq, dtype=np.float64)

    gen = rs_prop.generator
    rx, sp, od, _ = net._terms
    tarr = np.empty(N)
    for k in range(1, n + 1):
        if np.max(lw) == -np.inf:
            return logZ, lw, X, ancestors, False
        if _ess_log(lw) < cfg.beta * N:
            logZ += float(logsumexp(lw) - np.log(N))
            anc = _resample_log(lw, N, rs_res, cfg.resampling)
            X, lq = X[anc], lq[anc]
            lw = np.zeros(N)
            ancestors.append(anc)
        tarr[:] = knots[k - 1]
        _, capped = gillespie_batch(gen, X, tarr, float(knots[k]), c,
                                    net._stoich_f, rx, sp, od, event_cap)
        if k < n:
            lq_new = logq(X, k)
            lw += cfg.gamma * (lq_new - lq)
            lq = lq_new
        else:
            if obs.error_free:
                final = np.where(np.all(X @ obs.P == y[None, :], axis=1), 0.0, -np.inf)
            else:
                final = loglik_batch(y, X, obs)
            lw += final - cfg.gamma * lq
        lw[capped] = -np.inf

    if np.max(lw) == -np.inf:
        return logZ, lw, X, ancestors, False
    logZ += float(logsumexp(lw) - np.log(N))
    anc = _resample_log(lw, N, rs_res, cfg.resampling)
    ancestors.append(anc)
    return logZ, lw, X[anc], ancestors, True


def bridge_pf(net: ReactionNetwork, c, x0: State, y_t, t: float,
              obs: ObservationModel, cfg: BridgeConfig, N: int, rng: RngStream,
              x0_sampler=None, event_cap: int = DEFAULT_EVENT_CAP):
    """Bridge particle filter over an equispaced partition of the interval.

    Particles are propagated forward by the direct method between partition
    points and incrementally reweighted by the ratio of look-ahead weights
    ``q(y | x_k) / q(y | x_{k-1})`` raised to ``cfg.gamma``; resampling
    (multinomial by default, on a dedicated substream) triggers when the
    ESS falls below ``cfg.beta * N``.  The final epoch replaces the
    look-ahead numerator with the exact observation factor - the density
    ``p(y | x_t)``, or a hit indicator in error-free mode, in which case no
    density is evaluated on the last leg.  The per-particle incremental
    weights telescope so that with ``gamma = 1`` and no resampling the
    final unnormalised weight is exactly ``p(y | x_t)``.

    ``x0_sampler(rng, N) -> (N, u) int array`` replaces the fixed start
    state for the unknown-initial-state variant: particles are pre-weighted
    by ``q(y | x0)^gamma`` and an initial look-ahead resampling pass is
    performed (with no later resampling this is the auxiliary particle
    filter; with ``n_intermediate = 1`` or ``beta = 0`` the scheme reduces
    to myopic importance sampling).

    Returns ``(ensemble, logZ_hat)``; the estimator multiplies the average
    unnormalised weight accumulated between resampling passes, which is
    unbiased for ``p(y | x0)`` and reduces to the plain average final
    weight when no resampling occurs.
    """
    c = as_rates(net, c)
    if N < 1:
        raise ValueError("N must be at least 1")
    if not t > x0.time:
        raise ValueError("t must exceed the interval start time")
    y = np.atleast_1d(np.asarray(y_t, dtype=np.float64))
    logZ0 = 0.0
    init = None
    anchor = x0.x.astype(np.float64)
    init_ancestors = []
    if x0_sampler is None:
        X = _tile_x0(x0, N)
    else:
        if cfg.weight_fn == "lna" and cfg.lna_shared_path:
            raise ValueError("shared-path weights need a fixed start state")
        X = np.asarray(x0_sampler(rng.substream(2), N), dtype=np.float64)
        if X.shape != (N, net.u):
            raise ValueError(f"x0_sampler must return an (N, {net.u}) array")
        lq0 = (_logq_cle(net, c, X, float(t - x0.time), y, obs)
               if cfg.weight_fn == "cle"
               else _logq_lna_restart(net, c, X, float(t - x0.time), y, obs))
        lw0 = cfg.gamma * lq0
        if np.max(lw0) == -np.inf:
            return ParticleEnsemble(X.astype(np.int64), lw0, [], None, False), -np.inf
        logZ0 = float(logsumexp(lw0) - np.log(N))
        anc = _resample_log(lw0, N, rng.substream(3), cfg.resampling)
        X, lq0 = X[anc], lq0[anc]
        init = (np.zeros(N), lq0)
        init_ancestors.append(anc)
    logZ, lw, Xout, ancestors, ok = _bpf_from_states(
        net, c, X, x0.time, float(t), y, obs, cfg, rng, event_cap,
        anchor=anchor, init=init)
    ens = ParticleEnsemble(Xout.astype(np.int64), lw, init_ancestors + ancestors,
                           None, ok)
    return ens, (logZ0 + logZ if ok else -np.inf)

"""Experiment drivers shared by the CLI and the validation suite.

These wrap the single-interval samplers and the PMMH machinery into the
study designs used for benchmarking: repeated transition-probability
estimation with non-zero-count / ESS / MSE summaries, particle-count
tuning sweeps, synthetic-data generation, and the pilot-then-main PMMH
protocol.

Replicates always consume the substream derived from their own index, so
results are independent of how work is split across worker processes.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass

import numpy as np

from .bridge import BridgeConfig, bridge_pf, conditioned_is, ess, myopic_is
from .inference import ObservationSeries, Prior, PmmhChain, pmmh, run_filter
from .network import ReactionNetwork, State
from .observe import ObservationModel
from .rng import RngStream
from .simulate import DEFAULT_EVENT_CAP, simulate, state_at

METHODS = ("mis", "ch", "bpf-cle", "bpf-lna")


def split_method(method: str):
    """Map a CLI method name to (sampler, weight function or None)."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method.startswith("bpf-"):
        return "bpf", method[4:]
    return method, None


def make_bridge_config(method: str, t0: float, t1: float, dt_resample: float | None,
                       beta: float, gamma: float, lna_shared: bool = False):
    """BridgeConfig for one interval, with the partition from a resample step."""
    kind, weight_fn = split_method(method)
    if kind != "bpf":
        return None
    if dt_resample is None:
        dt_resample = 0.05
    n = max(1, int(np.ceil((t1 - t0) / dt_resample - 1e-12)))
    return BridgeConfig(n_intermediate=n, beta=beta, gamma=gamma,
                        weight_fn=weight_fn, lna_shared_path=lna_shared)


@dataclass(frozen=True)
class TransitionTask:
    """One cell of a transition-probability benchmark."""

    net: ReactionNetwork
    c: np.ndarray
    x0: State
    y: np.ndarray
    t: float
    obs: ObservationModel
    method: str
    N: int
    seed: int
    beta: float = 0.5
    gamma: float = 1.0
    dt_resample: float | None = None
    event_cap: int = DEFAULT_EVENT_CAP

    def estimate_once(self, rep: int) -> float:
        rng = RngStream(self.seed, (rep,))
        kind, _ = split_method(self.method)
        if kind == "mis":
            _, logz = myopic_is(self.net, self.c, self.x0, self.y, self.t,
                                self.obs, self.N, rng, event_cap=self.event_cap)
        elif kind == "ch":
            _, logz = conditioned_is(self.net, self.c, self.x0, self.y, self.t,
                                     self.obs, self.N, rng, event_cap=self.event_cap)
        else:
            cfg = make_bridge_config(self.method, self.x0.time, self.t,
                                     self.dt_resample, self.beta, self.gamma)
            _, logz = bridge_pf(self.net, self.c, self.x0, self.y, self.t,
                                self.obs, cfg, self.N, rng, event_cap=self.event_cap)
        return float(np.exp(logz))


def _transition_chunk(args):
    task, lo, hi = args
    return [task.estimate_once(r) for r in range(lo, hi)]


def transition_estimates(task: TransitionTask, reps: int, threads: int = 1) -> np.ndarray:
    """`reps` independent estimates of the end-point observation probability."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    threads = max(1, int(threads))
    if threads == 1 or reps < 4 * threads:
        return np.array(_transition_chunk((task, 0, reps)))
    bounds = np.linspace(0, reps, threads * 4 + 1).astype(int)
    chunks = [(task, int(lo), int(hi))
              for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with mp.get_context("fork").Pool(threads) as pool:
        parts = pool.map(_transition_chunk, chunks)
    return np.concatenate([np.array(p) for p in parts])


def summarize_estimates(estimates: np.ndarray, oracle: float | None = None) -> dict:
    """Benchmark metrics: non-zero count, ESS of the estimate set, MSE."""
    out = {
        "reps": int(estimates.shape[0]),
        "nonzero": int(np.sum(estimates > 0.0)),
        "ess": float(ess(estimates)) if np.any(estimates > 0) else 0.0,
        "mean": float(np.mean(estimates)),
    }
    if oracle is not None:
        out["oracle"] = float(oracle)
        out["mse"] = float(np.mean((estimates - oracle) ** 2))
    return out


def synthetic_series(net: ReactionNetwork, c, x0: State, times, obs: ObservationModel,
                     rng: RngStream, event_cap: int = DEFAULT_EVENT_CAP):
    """Simulate one latent path and observe it on a grid.

    Returns ``(series, latent)`` where ``latent`` is the (T+1, u) array of
    true states at the observation times (the first time must equal
    ``x0.time``).
    """
    times = np.asarray(times, dtype=np.float64)
    if times[0] != x0.time:
        raise ValueError("the first observation time must equal x0.time")
    traj = simulate(net, c, x0, float(times[-1]), rng.substream(0), event_cap)
    latent = np.array([state_at(traj, net, t).x for t in times])
    ys = latent @ obs.P
    if not obs.error_free:
        noise = rng.substream(1).normal((times.shape[0], obs.p))
        L = np.linalg.cholesky(obs.sigma + 1e-300 * np.eye(obs.p))
        ys = ys + noise @ L.T
    return ObservationSeries(times, ys, obs), latent


def tau2_sweep(method: str, net: ReactionNetwork, series: ObservationSeries,
               x0_spec, theta, particle_counts, reps: int, rng: RngStream,
               dt_resample: float | None = None, beta: float = 0.5,
               gamma: float = 1.0, rate_map=None,
               event_cap: int = DEFAULT_EVENT_CAP) -> list:
    """Variance of the estimated log-likelihood for each particle count."""
    from .inference import estimate_tau2

    kind, _ = split_method(method)
    cfg = (make_bridge_config(method, float(series.times[0]), float(series.times[1]),
                              dt_resample, beta, gamma)
           if series.times.shape[0] > 1 else None)
    out = []
    for j, N in enumerate(particle_counts):
        tau2 = estimate_tau2(kind, net, series, x0_spec, int(N), theta, reps,
                             rng.substream(j), cfg, rate_map, event_cap)
        out.append({"N": int(N), "tau2": float(tau2)})
    return out


def pmmh_with_pilot(method: str, net: ReactionNetwork, series: ObservationSeries,
                    prior: Prior, x0_spec, N: int, iterations: int, lam: float,
                    rng: RngStream, pilot_iterations: int = 0,
                    pilot_lam: float = 0.25, init_theta=None,
                    proposal_cov=None, dt_resample: float | None = None,
                    beta: float = 0.5, gamma: float = 1.0, rate_map=None,
                    event_cap: int = DEFAULT_EVENT_CAP):
    """Optionally run a pilot chain to estimate the proposal covariance.

    The pilot uses an identity-shaped random walk; the main run's proposal
    covariance is the pilot's post-burn-in sample covariance (regularised).
    Returns ``(chain, pilot_cov or None)``.
    """
    kind, _ = split_method(method)
    cfg = (make_bridge_config(method, float(series.times[0]), float(series.times[1]),
                              dt_resample, beta, gamma)
           if series.times.shape[0] > 1 else None)
    pilot_cov = None
    if pilot_iterations > 0 and proposal_cov is None:
        pilot = pmmh(kind, net, series, prior, x0_spec, N, pilot_iterations,
                     pilot_lam, rng.substream(1_000_000), init_theta=init_theta,
                     cfg=cfg, rate_map=rate_map, event_cap=event_cap)
        kept = pilot.thetas[pilot_iterations // 5:]
        pilot_cov = np.cov(kept.T)
        if pilot_cov.ndim == 0:
            pilot_cov = pilot_cov[None, None]
        pilot_cov = pilot_cov + 1e-8 * np.eye(prior.dim)
        proposal_cov = pilot_cov
        if init_theta is None:
            init_theta = np.median(kept, axis=0)
    chain = pmmh(kind, net, series, prior, x0_spec, N, iterations, lam, rng,
                 init_theta=init_theta, proposal_cov=proposal_cov, cfg=cfg,
                 rate_map=rate_map, event_cap=event_cap)
    return chain, pilot_cov


def subset_rate_map(base_rates: np.ndarray, indices) -> callable:
    """Rate map inferring only the reactions at ``indices`` (log scale)."""
    base = np.asarray(base_rates, dtype=np.float64).copy()
    idx = np.asarray(indices, dtype=np.int64)

    def rate_map(theta: np.ndarray) -> np.ndarray:
        c = base.copy()
        c[idx] = np.exp(theta)
        return c

    return rate_map

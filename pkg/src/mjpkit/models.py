"""Built-in example models and exact oracles on truncated state spaces.

The model builders return ``(network, rates, initial state)`` with the
standard literature constants; they feed both the CLI and the validation
suite.

For single-species networks the jump process restricted to ``{0..cap}``
has a computable generator, giving exact transition probabilities (via
uniformization of the matrix exponential) and an exact marginal likelihood
for a Gaussian observation series (discrete forward algorithm).  These are
the ground-truth references the Monte Carlo samplers are tested against;
every result is guarded by a bound on the probability mass lost to
truncation, with the cap doubled automatically until the bound holds.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm as _dense_expm
from scipy.stats import poisson

from .errors import NumericalFailure
from .network import ReactionNetwork, State, as_rates, hazards_batch, reaction
from .observe import ObservationModel
from .inference import ObservationSeries

_LEAK_TOL = 1e-10
_MAX_CAP = 1_048_576


def birth_death():
    """Linear birth-death model: X -> 2X and X -> 0, rates (0.5, 1), x0 = 100."""
    species = ("X",)
    rows = [reaction(species, {"X": 1}, {"X": 2}),
            reaction(species, {"X": 1}, {})]
    net = ReactionNetwork(species, [r[0] for r in rows], [r[1] for r in rows],
                          ("birth", "death"))
    return net, np.array([0.5, 1.0]), State(np.array([100]))


def lotka_volterra():
    """Predator-prey model with hazards (c1*X1, c2*X1*X2, c3*X2)."""
    species = ("X1", "X2")
    rows = [reaction(species, {"X1": 1}, {"X1": 2}),
            reaction(species, {"X1": 1, "X2": 1}, {"X2": 2}),
            reaction(species, {"X2": 1}, {})]
    net = ReactionNetwork(species, [r[0] for r in rows], [r[1] for r in rows],
                          ("prey-birth", "predation", "predator-death"))
    return net, np.array([0.5, 0.0025, 0.3]), State(np.array([71, 79]))


def motility():
    """Gene-regulation model of bacterial motility: 9 species, 12 reactions."""
    species = ("codY", "CodY", "flache", "SigD", "SigD_hag",
               "hag", "Hag", "CodY_flache", "CodY_hag")
    rows = [
        reaction(species, {"codY": 1}, {"codY": 1, "CodY": 1}),
        reaction(species, {"CodY": 1}, {}),
        reaction(species, {"flache": 1}, {"flache": 1, "SigD": 1}),
        reaction(species, {"SigD": 1}, {}),
        reaction(species, {"SigD_hag": 1}, {"SigD": 1, "hag": 1, "Hag": 1}),
        reaction(species, {"Hag": 1}, {}),
        reaction(species, {"SigD": 1, "hag": 1}, {"SigD_hag": 1}),
        reaction(species, {"SigD_hag": 1}, {"SigD": 1, "hag": 1}),
        reaction(species, {"CodY": 1, "flache": 1}, {"CodY_flache": 1}),
        reaction(species, {"CodY_flache": 1}, {"CodY": 1, "flache": 1}),
        reaction(species, {"CodY": 1, "hag": 1}, {"CodY_hag": 1}),
        reaction(species, {"CodY_hag": 1}, {"CodY": 1, "hag": 1}),
    ]
    net = ReactionNetwork(species, [r[0] for r in rows], [r[1] for r in rows])
    c = np.array([0.1, 0.0002, 1.0, 0.0002, 1.0, 0.0002,
                  0.01, 0.1, 0.02, 0.1, 0.01, 0.1])
    x0 = State(np.array([1, 10, 1, 10, 1, 1, 10, 1, 1]))
    return net, c, x0


BUILTIN_MODELS = {
    "birth-death": birth_death,
    "lotka-volterra": lotka_volterra,
    "motility": motility,
}


class TruncatedCtmc:
    """Generator of a one-species network truncated to states 0..cap.

    Transitions leaving the box are dropped while their rate stays on the
    diagonal, so rows sum to at most zero and the lost mass shows up as a
    deficit in ``exp(Q t)`` row sums - which is exactly the truncation
    error the callers bound.
    """

    def __init__(self, net: ReactionNetwork, c, cap: int):
        if net.u != 1:
            raise ValueError("state-space enumeration supports single-species networks")
        c = as_rates(net, c)
        self.net = net
        self.cap = int(cap)
        states = np.arange(self.cap + 1, dtype=np.float64)[:, None]
        self.rates = hazards_batch(net, states, c)          # (cap+1, v)
        self.offsets = net.stoich[0, :].astype(np.int64)    # state change per reaction
        self.h0 = self.rates.sum(axis=1)
        self.unif_rate = float(self.h0.max())

    def _mul_B(self, w: np.ndarray) -> np.ndarray:
        """w (I + Q / unif_rate) for a row vector w."""
        lam = self.unif_rate
        out = w * (1.0 - self.h0 / lam)
        n = w.shape[0]
        for j, d in enumerate(self.offsets):
            flow = w * self.rates[:, j] / lam
            if d > 0:
                out[d:] += flow[: n - d]
            elif d < 0:
                out[:d] += flow[-d:]
            else:
                out += flow
        return out

    def propagate(self, w: np.ndarray, t: float) -> np.ndarray:
        """Row-vector action w exp(Q t) by uniformization."""
        if t < 0.0:
            raise ValueError("t must be non-negative")
        lam_t = self.unif_rate * t
        if lam_t == 0.0:
            return w.copy()
        kmax = int(lam_t + 12.0 * np.sqrt(lam_t + 25.0) + 30.0)
        while poisson.sf(kmax, lam_t) > 1e-13:
            kmax = int(1.5 * kmax) + 10
        pk = poisson.pmf(np.arange(kmax + 1), lam_t)
        acc = pk[0] * w
        v = w
        for k in range(1, kmax + 1):
            v = self._mul_B(v)
            acc = acc + pk[k] * v
        return acc

    def expm_matrix(self, t: float) -> np.ndarray:
        """Dense exp(Q t) via scaled squaring (independent of propagate)."""
        n = self.cap + 1
        Q = np.zeros((n, n))
        idx = np.arange(n)
        Q[idx, idx] = -self.h0
        for j, d in enumerate(self.offsets):
            rows = idx[(idx + d >= 0) & (idx + d <= self.cap)]
            Q[rows, rows + d] += self.rates[rows, j]
        P = _dense_expm(Q * t)
        return np.clip(P, 0.0, None)


def _state_index(x) -> int:
    xv = x.x if isinstance(x, State) else np.atleast_1d(np.asarray(x))
    if xv.shape != (1,):
        raise ValueError("oracle states are single-species")
    return int(xv[0])


def transition_distribution(net: ReactionNetwork, c, x0, t: float,
                            cap: int = 1000) -> np.ndarray:
    """Exact distribution of X_t given X_0, as a vector over 0..cap.

    The cap doubles until the truncation leak is below 1e-10; raises
    :class:`NumericalFailure` if that never happens.
    """
    i0 = _state_index(x0)
    cap = int(cap)
    while cap <= _MAX_CAP:
        if i0 <= cap:
            ctmc = TruncatedCtmc(net, c, cap)
            w = np.zeros(cap + 1)
            w[i0] = 1.0
            row = ctmc.propagate(w, t)
            leak = 1.0 - row.sum()
            if leak < _LEAK_TOL:
                return np.clip(row, 0.0, None)
        cap *= 2
    raise NumericalFailure(
        f"truncation leak above {_LEAK_TOL} even at cap {_MAX_CAP}"
    )


def ctmc_transition(net: ReactionNetwork, c, x0, x_t, t: float,
                    cap: int = 1000) -> float:
    """Exact transition probability P(X_t = x_t | X_0 = x0)."""
    row = transition_distribution(net, c, x0, t, cap)
    j = _state_index(x_t)
    return float(row[j]) if j < row.shape[0] else 0.0


def distribution_quantile(dist: np.ndarray, q: float) -> int:
    """Smallest state whose cumulative probability reaches q."""
    cdf = np.cumsum(dist)
    return int(np.searchsorted(cdf, q * cdf[-1]))


def _emission(ys_k: np.ndarray, obs: ObservationModel, states: np.ndarray) -> np.ndarray:
    scale = float(obs.P[0, 0])
    mean = scale * states
    if obs.error_free:
        return (mean == ys_k[0]).astype(np.float64)
    var = float(obs.sigma[0, 0])
    if var <= 0.0:
        raise ValueError("sigma must be positive definite unless error_free")
    return np.exp(-0.5 * (ys_k[0] - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def hmm_loglik(net: ReactionNetwork, c, series: ObservationSeries, x0,
               cap: int = 1000) -> float:
    """Exact log marginal likelihood of a series via the forward algorithm.

    ``x0`` is a known initial state or a probability vector over 0..K.
    Within each inter-observation interval the forward vector is pushed
    through the exact (truncated) transition law on an adaptively sized
    window; the truncation leak per interval must stay below 1e-10 or the
    cap doubles and the whole pass restarts.
    """
    if series.obs.p != 1 or net.u != 1:
        raise ValueError("the exact filter supports single-species models")
    cap = int(cap)
    while cap <= _MAX_CAP:
        out = _hmm_forward(net, c, series, x0, cap)
        if out is not None:
            return out
        cap *= 2
    raise NumericalFailure(
        f"truncation leak above {_LEAK_TOL} even at cap {_MAX_CAP}"
    )


def _hmm_forward(net, c, series, x0, cap):
    states = np.arange(cap + 1, dtype=np.float64)
    if isinstance(x0, State) or np.ndim(x0) == 0 or np.shape(x0) == (1,):
        i0 = _state_index(x0)
        if i0 > cap:
            return None
        alpha = np.zeros(cap + 1)
        alpha[i0] = 1.0
    else:
        alpha = np.asarray(x0, dtype=np.float64)
        if alpha.shape[0] > cap + 1:
            return None
        alpha = np.pad(alpha, (0, cap + 1 - alpha.shape[0]))
        alpha = alpha / alpha.sum()

    loglik = 0.0
    alpha = alpha * _emission(series.ys[0], series.obs, states)
    s = alpha.sum()
    if s <= 0.0:
        return -np.inf
    loglik += np.log(s)
    alpha /= s

    for k in range(1, series.times.shape[0]):
        dt = float(series.times[k] - series.times[k - 1])
        # Work on a window comfortably above the current support; widen on
        # demand, and give up on this cap if the window would exceed it.
        support = np.nonzero(alpha > 1e-16 * alpha.max())[0]
        hi = int(support[-1])
        pad = 64
        while True:
            win = min(cap, hi + pad)
            sub = TruncatedCtmc(net, c, win)
            moved = sub.propagate(alpha[: win + 1], dt)
            leak = 1.0 - moved.sum()
            if leak < _LEAK_TOL:
                break
            if win == cap:
                return None
            pad *= 2
        alpha = np.zeros(cap + 1)
        alpha[: win + 1] = np.clip(moved, 0.0, None)
        alpha = alpha * _emission(series.ys[k], series.obs, states)
        s = alpha.sum()
        if s <= 0.0:
            return -np.inf
        loglik += np.log(s)
        alpha /= s
    return float(loglik)

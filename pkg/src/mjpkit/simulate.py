"""Exact forward simulation and complete-data likelihood of trajectories.

A :class:`Trajectory` stores the initial state plus the ordered event list
``(time, reaction_index)`` over an interval; states in between are implied
(piecewise constant) and reconstructed on demand, which keeps memory
bounded when many trajectories are in flight.

:func:`simulate` is the scalar reference implementation of the direct
method.  It consumes its random stream in exactly the same order as the
compiled batch kernel (waiting-time uniform, then type uniform), so a
single-lane kernel run and a ``simulate`` call on the same substream
produce the same path.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import log, log1p

import numpy as np

from ._kernels import gillespie_batch
from .errors import NumericalFailure
from .network import ReactionNetwork, State, apply_reaction, as_rates, evaluate_hazards
from .rng import _U_FLOOR, RngStream

DEFAULT_EVENT_CAP = 1_000_000


@dataclass(frozen=True)
class Trajectory:
    """An initial state plus ordered reaction events on (t_start, t_end]."""

    x0: State
    events: tuple
    t_end: float

    def __post_init__(self):
        events = tuple((float(t), int(j)) for t, j in self.events)
        prev = self.x0.time
        for t, _ in events:
            if not t > prev:
                raise ValueError("event times must be strictly increasing from t_start")
            prev = t
        if events and events[-1][0] > self.t_end:
            raise ValueError("events extend past t_end")
        if not self.t_end >= self.x0.time:
            raise ValueError("t_end precedes the initial state's time")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def t_start(self) -> float:
        return self.x0.time

    @property
    def n_events(self) -> int:
        return len(self.events)

    def end_state(self, net: ReactionNetwork) -> State:
        return state_at(self, net, self.t_end)


def simulate(net: ReactionNetwork, c, x0: State, t_end: float, rng: RngStream,
             event_cap: int = DEFAULT_EVENT_CAP) -> Trajectory:
    """Draw one exact path of the jump process on (x0.time, t_end].

    Waiting times are Exp(total hazard) via inverse CDF, types are drawn
    proportional to their hazards, and the final overshooting event is
    discarded.  A state with zero total hazard is absorbed.
    """
    c = as_rates(net, c)
    if not t_end > x0.time:
        raise ValueError("t_end must exceed the initial state's time")
    gen = rng.generator
    x = x0.x.astype(np.float64)
    t = x0.time
    events = []
    h = np.empty(net.v)
    rx, sp, od, _ = net._terms
    while True:
        h[:] = c
        for k in range(rx.shape[0]):
            xj = x[sp[k]]
            f = 1.0
            for q in range(od[k]):
                f *= (xj - q) / (q + 1.0)
            h[rx[k]] *= f
        h0 = h.sum()
        if h0 <= 0.0:
            break
        u1 = max(gen.random(), _U_FLOOR)
        tau = -log1p(-u1) / h0
        if t + tau > t_end:
            break
        r = gen.random() * h0
        acc = 0.0
        idx = -1
        last = 0
        for i in range(net.v):
            if h[i] > 0.0:
                acc += h[i]
                last = i
                if r < acc:
                    idx = i
                    break
        if idx < 0:
            idx = last
        x += net._stoich_f[:, idx]
        t += tau
        events.append((t, idx))
        if len(events) >= event_cap:
            raise NumericalFailure(
                f"simulation exceeded {event_cap} events before t={t_end}"
            )
    return Trajectory(x0, tuple(events), t_end)


def simulate_end_states(net: ReactionNetwork, c, X0: np.ndarray, t0: float,
                        t_end: float, rng: RngStream,
                        event_cap: int = DEFAULT_EVENT_CAP):
    """End states of many independent paths (compiled batch; no event lists).

    Returns ``(X, capped)`` where ``X`` is the (B, u) float count array at
    ``t_end`` and ``capped`` flags lanes that blew the event budget.
    """
    c = as_rates(net, c)
    X = np.array(X0, dtype=np.float64, copy=True)
    t = np.full(X.shape[0], float(t0))
    rx, sp, od, _ = net._terms
    _, capped = gillespie_batch(rng.generator, X, t, float(t_end), c,
                                net._stoich_f, rx, sp, od, event_cap)
    return X, capped


def state_at(traj: Trajectory, net: ReactionNetwork, s: float) -> State:
    """The state of a trajectory at time s (after all events with t <= s)."""
    if not traj.t_start <= s <= traj.t_end:
        raise ValueError(f"time {s} outside trajectory interval "
                         f"[{traj.t_start}, {traj.t_end}]")
    st = State(traj.x0.x, s)
    for t, j in traj.events:
        if t > s:
            break
        st = State(apply_reaction(st, net, j).x, s)
    return st


def complete_data_loglik(net: ReactionNetwork, c, traj: Trajectory) -> float:
    """Log density of a full event path under the jump process.

    Sums the log hazard of each event at its pre-event state and subtracts
    the integral of the total hazard over the whole interval (the hazard is
    piecewise constant between events).  An event whose hazard vanishes at
    its pre-event state makes the path impossible: returns -inf.
    """
    c = as_rates(net, c)
    x = State(traj.x0.x, traj.x0.time)
    t_prev = traj.t_start
    ll = 0.0
    for t, j in traj.events:
        h = evaluate_hazards(net, x, c)
        ll -= h.sum() * (t - t_prev)
        if h[j] <= 0.0:
            return -np.inf
        ll += log(h[j])
        x = apply_reaction(x, net, j)
        t_prev = t
    h = evaluate_hazards(net, x, c)
    ll -= h.sum() * (traj.t_end - t_prev)
    return ll


def write_trajectory_csv(traj: Trajectory, file) -> None:
    """Write the event list as CSV with header ``time,reaction_index``."""
    own = isinstance(file, (str, bytes))
    f = open(file, "w", encoding="utf-8", newline="\n") if own else file
    try:
        f.write("time,reaction_index\n")
        for t, j in traj.events:
            f.write(f"{t!r},{j}\n")
    finally:
        if own:
            f.close()


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()

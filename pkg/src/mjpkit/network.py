"""Reaction networks, states and mass-action hazards.

A network couples ``v`` reactions over ``u`` species.  Reaction ``i``
consumes ``pre[i, j]`` and produces ``post[i, j]`` molecules of species
``j``; its state change is column ``i`` of the ``u x v`` stoichiometry
matrix ``stoich = (post - pre)^T``.  Under mass-action kinetics the hazard
of reaction ``i`` at integer state ``x`` is

    h_i(x, c_i) = c_i * prod_j C(x_j, pre[i, j])

with the convention C(n, 0) = 1 and C(n, k) = 0 for n < k.  Reaction
indices are 0-based throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import InvariantViolation

# Counts are stored as 64-bit integers; anything this large signals either an
# exploding parameter regime or a bug, and hazards would overflow doubles
# soon after.
_COUNT_CAP = 2 ** 62


@dataclass(frozen=True)
class State:
    """Integer molecule counts at a point in time."""

    x: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x))
        if x.ndim != 1:
            raise ValueError("state must be a 1-D vector of counts")
        if not np.issubdtype(x.dtype, np.integer):
            xi = np.asarray(x, dtype=np.int64)
            if np.any(xi != x):
                raise ValueError("molecule counts must be integers")
            x = xi
        else:
            x = x.astype(np.int64, copy=True)
        if np.any(x < 0):
            raise ValueError(f"molecule counts must be non-negative, got {x}")
        if np.any(x >= _COUNT_CAP):
            raise OverflowError("molecule count exceeds the 2**62 storage cap")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if not (self.time >= 0.0):
            raise ValueError(f"state time must be non-negative, got {self.time}")
        object.__setattr__(self, "time", float(self.time))

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.time == other.time and np.array_equal(self.x, other.x)


@dataclass(frozen=True)
class ReactionNetwork:
    """A stochastic kinetic model: species, reactions and stoichiometry.

    Parameters
    ----------
    species_names : sequence of str
        Labels for the ``u`` species.
    pre : (v, u) array of int
        Reactant multiplicities (left-hand sides).
    post : (v, u) array of int
        Product multiplicities (right-hand sides).
    reaction_names : sequence of str, optional
        Labels for the ``v`` reactions; defaults to ``R1..Rv``.

    The ``u x v`` stoichiometry matrix ``stoich`` is derived and validated.
    Instances are immutable and safe to share between threads.
    """

    species_names: tuple
    pre: np.ndarray
    post: np.ndarray
    reaction_names: tuple = ()
    stoich: np.ndarray = field(init=False)

    def __post_init__(self):
        names = tuple(str(s) for s in self.species_names)
        pre = np.asarray(self.pre, dtype=np.int64)
        post = np.asarray(self.post, dtype=np.int64)
        if pre.ndim != 2 or post.shape != pre.shape:
            raise ValueError("pre and post must be matrices of identical shape")
        v, u = pre.shape
        if u < 1 or v < 1:
            raise ValueError("need at least one species and one reaction")
        if len(names) != u:
            raise ValueError(f"{len(names)} species names for {u} species columns")
        if np.any(pre < 0) or np.any(post < 0):
            raise ValueError("pre/post multiplicities must be non-negative")
        rnames = tuple(str(r) for r in self.reaction_names) or tuple(
            f"R{i + 1}" for i in range(v)
        )
        if len(rnames) != v:
            raise ValueError(f"{len(rnames)} reaction names for {v} reactions")
        stoich = (post - pre).T.copy()
        for a in (pre, post, stoich):
            a.setflags(write=False)
        object.__setattr__(self, "species_names", names)
        object.__setattr__(self, "reaction_names", rnames)
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)
        object.__setattr__(self, "stoich", stoich)
        # Flattened mass-action terms (reaction, species, order) with order >= 1,
        # grouped by reaction, consumed by the vectorised/compiled evaluators.
        rx, sp, od = [], [], []
        ptr = [0]
        for i in range(v):
            for j in range(u):
                if pre[i, j] > 0:
                    rx.append(i)
                    sp.append(j)
                    od.append(int(pre[i, j]))
            ptr.append(len(rx))
        terms = (
            np.array(rx, dtype=np.int64),
            np.array(sp, dtype=np.int64),
            np.array(od, dtype=np.int64),
            np.array(ptr, dtype=np.int64),
        )
        for a in terms:
            a.setflags(write=False)
        object.__setattr__(self, "_terms", terms)
        sf = stoich.astype(np.float64)
        sf.setflags(write=False)
        object.__setattr__(self, "_stoich_f", sf)

    @property
    def u(self) -> int:
        """Number of species."""
        return self.pre.shape[1]

    @property
    def v(self) -> int:
        """Number of reactions."""
        return self.pre.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (
            self.species_names == other.species_names
            and self.reaction_names == other.reaction_names
            and np.array_equal(self.pre, other.pre)
            and np.array_equal(self.post, other.post)
        )


def reaction(net_species, reactants: dict, products: dict):
    """Build one (pre, post) row pair from species-count mappings."""
    u = len(net_species)
    index = {s: j for j, s in enumerate(net_species)}
    pre = np.zeros(u, dtype=np.int64)
    post = np.zeros(u, dtype=np.int64)
    for s, n in reactants.items():
        pre[index[s]] = n
    for s, n in products.items():
        post[index[s]] = n
    return pre, post


def as_rates(net: ReactionNetwork, c) -> np.ndarray:
    """Validate a rate-constant vector against a network.

    Rates must be finite and non-negative (a zero switches a reaction off,
    which several degenerate test models rely on); inference works on the
    log scale and is therefore restricted to strictly positive rates.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (net.v,):
        raise ValueError(f"expected {net.v} rate constants, got shape {c.shape}")
    if np.any(~np.isfinite(c)) or np.any(c < 0.0):
        raise ValueError("rate constants must be finite and non-negative")
    return c


def evaluate_hazards(net: ReactionNetwork, x, c) -> np.ndarray:
    """Mass-action hazards of every reaction at an integer state.

    Returns the length-``v`` vector ``h`` with
    ``h[i] = c[i] * prod_j C(x_j, pre[i, j])``.
    """
    c = as_rates(net, c)
    xv = x.x if isinstance(x, State) else np.asarray(x)
    if xv.shape != (net.u,):
        raise ValueError(f"state has {xv.shape} entries, network has {net.u} species")
    h = c.copy()
    for i in range(net.v):
        for j in range(net.u):
            p = net.pre[i, j]
            if p > 0:
                h[i] *= comb(int(xv[j]), int(p))
    if np.any(~np.isfinite(h)):
        raise OverflowError("hazard evaluation overflowed double precision")
    return h


def hazards_batch(net: ReactionNetwork, X: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Hazards for a batch of states.

    `X` is a (B, u) float array of counts; returns (B, v).  Uses the same
    falling-factorial polynomials as :func:`evaluate_hazards`, which agree
    with the binomial form at integer states.
    """
    B = X.shape[0]
    H = np.broadcast_to(c, (B, net.v)).copy()
    rx, sp, od, _ = net._terms
    for k in range(rx.shape[0]):
        xj = X[:, sp[k]]
        p = od[k]
        if p == 1:
            H[:, rx[k]] *= xj
        else:
            f = np.ones_like(xj)
            for q in range(p):
                f = f * (xj - q) / (q + 1.0)
            H[:, rx[k]] *= f
    return H


def total_hazard(h) -> float:
    """Sum of a hazard vector (the rate of the next event of any type)."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0.0):
        raise ValueError("hazards must be non-negative")
    return float(h.sum())


def apply_reaction(x: State, net: ReactionNetwork, j: int) -> State:
    """Advance a state by one firing of reaction ``j`` (0-based).

    Raises :class:`InvariantViolation` if the update would drive a count
    negative: that can only happen when the caller fires a reaction whose
    hazard was zero, i.e. a hazard/stoichiometry bug.
    """
    if not 0 <= j < net.v:
        raise ValueError(f"reaction index {j} out of range [0, {net.v})")
    new_x = x.x + net.stoich[:, j]
    if np.any(new_x < 0):
        raise InvariantViolation(
            f"reaction {j} at state {x.x} would produce negative counts {new_x}"
        )
    if np.any(new_x >= _COUNT_CAP):
        raise OverflowError("molecule count exceeds the 2**62 storage cap")
    return State(new_x, x.time)

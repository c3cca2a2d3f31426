"""Model documents: a reaction network, rates, observation block and start state.

The on-disk format is JSON:

    {
      "name": "lotka-volterra",
      "species": ["X1", "X2"],
      "reactions": [
        {"name": "prey-birth", "pre": {"X1": 1}, "post": {"X1": 2}, "rate": 0.5},
        ...
      ],
      "observation": {"P": [[1.0, 0.0], [0.0, 1.0]],
                      "sigma": [[25.0, 0.0], [0.0, 25.0]]},
      "initial_state": {"X1": 71, "X2": 79}
    }

``P`` is the u x p observation matrix in row-major nested lists; ``sigma``
is either a p x p noise covariance or the string ``"error_free"``.
``initial_state`` is optional.  ``parse_model(emit_model(m)) == m`` holds
for every valid document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .models import BUILTIN_MODELS, birth_death, lotka_volterra, motility
from .network import ReactionNetwork, State
from .observe import ObservationModel


class ModelFileError(ValueError):
    """A model document failed to parse or validate."""


@dataclass(frozen=True)
class Model:
    """A fully-specified model: network, rates, observation law, start state."""

    name: str
    net: ReactionNetwork
    rates: np.ndarray
    obs: ObservationModel
    x0: State | None = None

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.shape != (self.net.v,):
            raise ModelFileError(
                f"model '{self.name}': {rates.shape[0]} rates for {self.net.v} reactions"
            )
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        if self.obs.u != self.net.u:
            raise ModelFileError(
                f"model '{self.name}': observation matrix is {self.obs.u}-species, "
                f"network has {self.net.u}"
            )
        if self.x0 is not None and self.x0.x.shape != (self.net.u,):
            raise ModelFileError(f"model '{self.name}': initial state has wrong length")

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return (
            self.name == other.name
            and self.net == other.net
            and np.array_equal(self.rates, other.rates)
            and self.obs == other.obs
            and ((self.x0 is None and other.x0 is None)
                 or (self.x0 is not None and other.x0 is not None
                     and np.array_equal(self.x0.x, other.x0.x)))
        )


def _need(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ModelFileError(f"{where}: missing required field '{key}'")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise ModelFileError(f"{where}: field '{key}' has wrong type")
    return val


def _species_counts(mapping, species, where: str) -> np.ndarray:
    if not isinstance(mapping, dict):
        raise ModelFileError(f"{where}: expected a species->count mapping")
    row = np.zeros(len(species), dtype=np.int64)
    index = {s: j for j, s in enumerate(species)}
    for s, n in mapping.items():
        if s not in index:
            raise ModelFileError(f"{where}: unknown species '{s}'")
        if not isinstance(n, int) or n < 0:
            raise ModelFileError(f"{where}: count for '{s}' must be a non-negative integer")
        row[index[s]] = n
    return row


def parse_model(text: str) -> Model:
    """Parse a model document; raises :class:`ModelFileError` with location."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(
            f"line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ModelFileError("document root must be an object")
    name = doc.get("name", "model")
    species = _need(doc, "species", list, name)
    if not species or not all(isinstance(s, str) for s in species):
        raise ModelFileError(f"{name}: 'species' must be a non-empty list of names")
    if len(set(species)) != len(species):
        raise ModelFileError(f"{name}: duplicate species names")
    reactions = _need(doc, "reactions", list, name)
    if not reactions:
        raise ModelFileError(f"{name}: need at least one reaction")
    pre, post, rates, rnames = [], [], [], []
    for k, r in enumerate(reactions):
        where = f"{name}.reactions[{k}]"
        if not isinstance(r, dict):
            raise ModelFileError(f"{where}: expected an object")
        rnames.append(_need(r, "name", str, where))
        pre.append(_species_counts(_need(r, "pre", dict, where), species, where + ".pre"))
        post.append(_species_counts(_need(r, "post", dict, where), species, where + ".post"))
        rate = _need(r, "rate", (int, float), where)
        if rate < 0:
            raise ModelFileError(f"{where}: rate must be non-negative")
        rates.append(float(rate))
    net = ReactionNetwork(tuple(species), np.array(pre), np.array(post), tuple(rnames))

    ob = _need(doc, "observation", dict, name)
    P = np.asarray(_need(ob, "P", list, f"{name}.observation"), dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != net.u:
        raise ModelFileError(
            f"{name}.observation: P must be a {net.u}-row matrix (row-major)"
        )
    sig = _need(ob, "sigma", None, f"{name}.observation")
    if sig == "error_free":
        obs = ObservationModel(P, np.zeros((P.shape[1], P.shape[1])), error_free=True)
    else:
        sigma = np.asarray(sig, dtype=np.float64)
        try:
            obs = ObservationModel(P, sigma)
        except ValueError as exc:
            raise ModelFileError(f"{name}.observation: {exc}") from exc

    x0 = None
    if "initial_state" in doc and doc["initial_state"] is not None:
        counts = _species_counts(doc["initial_state"], species, f"{name}.initial_state")
        x0 = State(counts)
    return Model(name, net, np.array(rates), obs, x0)


def emit_model(model: Model) -> str:
    """Serialise a model to its canonical document text."""
    species = list(model.net.species_names)
    reactions = []
    for i in range(model.net.v):
        reactions.append({
            "name": model.net.reaction_names[i],
            "pre": {s: int(model.net.pre[i, j]) for j, s in enumerate(species)
                    if model.net.pre[i, j] > 0},
            "post": {s: int(model.net.post[i, j]) for j, s in enumerate(species)
                     if model.net.post[i, j] > 0},
            "rate": float(model.rates[i]),
        })
    ob = {"P": [[float(v) for v in row] for row in model.obs.P]}
    if model.obs.error_free:
        ob["sigma"] = "error_free"
    else:
        ob["sigma"] = [[float(v) for v in row] for row in model.obs.sigma]
    doc = {"name": model.name, "species": species, "reactions": reactions,
           "observation": ob}
    if model.x0 is not None:
        doc["initial_state"] = {s: int(model.x0.x[j]) for j, s in enumerate(species)}
    return json.dumps(doc, indent=2) + "\n"


def load_model(path_or_name: str) -> Model:
    """Load a model from a file path or by built-in name."""
    if path_or_name in BUILTIN_MODELS:
        return builtin_model(path_or_name)
    try:
        with open(path_or_name, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read model '{path_or_name}': {exc}") from exc
    return parse_model(text)


def builtin_model(name: str) -> Model:
    """A built-in model with its conventional observation block.

    birth-death observes the single species exactly (error-free);
    lotka-volterra observes both species with independent N(0, 25) noise;
    motility observes SigD only, error-free.
    """
    if name == "birth-death":
        net, c, x0 = birth_death()
        obs = ObservationModel(np.ones((1, 1)), np.zeros((1, 1)), error_free=True)
    elif name == "lotka-volterra":
        net, c, x0 = lotka_volterra()
        obs = ObservationModel(np.eye(2), 25.0 * np.eye(2))
    elif name == "motility":
        net, c, x0 = motility()
        P = np.zeros((9, 1))
        P[net.species_names.index("SigD"), 0] = 1.0
        obs = ObservationModel(P, np.zeros((1, 1)), error_free=True)
    else:
        raise ModelFileError(
            f"unknown model '{name}'; built-ins: {', '.join(sorted(BUILTIN_MODELS))}"
        )
    return Model(name, net, c, obs, x0)

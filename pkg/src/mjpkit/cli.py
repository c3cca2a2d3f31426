"""Command-line harness.

Subcommands:

* ``simulate``   - forward paths; writes per-path event and state CSVs.
* ``transition`` - repeated end-point probability estimation with
                   non-zero/ESS/MSE metrics.
* ``filter``     - one marginal-likelihood estimate for an observed series.
* ``pmmh``       - posterior sampling of log rate constants; chain CSV plus
                   summary JSON (optionally after a pilot run).
* ``bench-bd``   - the transition benchmark grid over methods, particle
                   counts and horizons on the built-in birth-death model.
* ``tune``       - variance of the estimated log-likelihood over a particle
                   count sweep.

Every run writes ``<out>.manifest.json`` recording the full configuration,
seed, content hashes of input files and the produced outputs; result files
are bit-reproducible given the seed (the manifest also carries wall-clock
timings, which is why timing lives there and not in the result files).
Exit codes: 0 success, 2 usage or parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import BridgeConfig
from .errors import NumericalFailure
from .experiments import (
    METHODS,
    TransitionTask,
    make_bridge_config,
    pmmh_with_pilot,
    split_method,
    subset_rate_map,
    summarize_estimates,
    tau2_sweep,
    transition_estimates,
)
from .inference import ObservationSeries, Prior, chain_ess, run_filter
from .modelfile import Model, ModelFileError, builtin_model, emit_model, load_model
from .models import BUILTIN_MODELS, ctmc_transition, distribution_quantile, transition_distribution
from .network import State
from .rng import RngStream
from .simulate import DEFAULT_EVENT_CAP, simulate, write_trajectory_csv


def _float_repr(x: float) -> str:
    return repr(float(x))


def _parse_vector(text: str, dtype=float) -> np.ndarray:
    try:
        return np.array([dtype(tok) for tok in text.split(",") if tok.strip() != ""])
    except ValueError as exc:
        raise ValueError(f"cannot parse '{text}' as a comma-separated vector") from exc


def _read_series(path: str, model: Model) -> ObservationSeries:
    """Read a data CSV with header time,y1,...,yp."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        cols = header.split(",")
        p = model.obs.p
        expected = ["time"] + [f"y{i + 1}" for i in range(p)]
        if cols != expected:
            raise ValueError(
                f"data header must be '{','.join(expected)}', got '{header}'"
            )
        rows = []
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != p + 1:
                raise ValueError(f"{path}:{line_no}: expected {p + 1} fields")
            rows.append([float(v) for v in parts])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    return ObservationSeries(arr[:, 0], arr[:, 1:], model.obs)


def _write_series_csv(series: ObservationSeries, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        cols = ",".join(f"y{i + 1}" for i in range(series.obs.p))
        f.write(f"time,{cols}\n")
        for k in range(series.times.shape[0]):
            ys = ",".join(_float_repr(v) for v in series.ys[k])
            f.write(f"{_float_repr(series.times[k])},{ys}\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


class _Manifest:
    """Collects run metadata; written next to the outputs."""

    def __init__(self, command: str, args: argparse.Namespace):
        skip = {"func", "threads"}
        self.doc = {
            "tool": f"mjpkit {__version__}",
            "command": command,
            "config": {k: v for k, v in sorted(vars(args).items())
                       if k not in skip and not callable(v)},
            "inputs": {},
            "outputs": [],
        }
        self._t0 = time.perf_counter()

    def add_input(self, path: str) -> None:
        self.doc["inputs"][str(path)] = _sha256(path)

    def add_output(self, path: Path) -> None:
        self.doc["outputs"].append(str(path))

    def timing(self, **kv) -> None:
        self.doc.setdefault("timing", {}).update(kv)

    def write(self, out_base: Path) -> None:
        self.doc.setdefault("timing", {})["wall_clock_s"] = (
            time.perf_counter() - self._t0
        )
        path = out_base.with_suffix(out_base.suffix + ".manifest.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.doc, f, indent=2, sort_keys=True, default=str)
            f.write("\n")


def _load_model_arg(args, manifest: _Manifest) -> Model:
    model = load_model(args.model)
    if args.model not in BUILTIN_MODELS:
        manifest.add_input(args.model)
    return model


def _model_x0(model: Model, override: str | None) -> State:
    if override:
        return State(_parse_vector(override, int))
    if model.x0 is None:
        raise ValueError(f"model '{model.name}' has no initial state; pass --x0")
    return model.x0


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    manifest = _Manifest("simulate", args)
    model = _load_model_arg(args, manifest)
    x0 = _model_x0(model, args.x0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rng = RngStream(args.seed)
    names = ",".join(model.net.species_names)
    for k in range(args.n_paths):
        traj = simulate(model.net, model.rates, x0, args.t_end,
                        rng.substream(k), args.event_cap)
        ev_path = Path(f"{out}_events_{k:03d}.csv")
        write_trajectory_csv(traj, ev_path)
        manifest.add_output(ev_path)
        st_path = Path(f"{out}_states_{k:03d}.csv")
        with open(st_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"time,{names}\n")
            x = traj.x0.x.copy()
            f.write(f"{_float_repr(traj.t_start)},{','.join(str(v) for v in x)}\n")
            for t, j in traj.events:
                x += model.net.stoich[:, j]
                f.write(f"{_float_repr(t)},{','.join(str(v) for v in x)}\n")
            f.write(f"{_float_repr(traj.t_end)},{','.join(str(v) for v in x)}\n")
        manifest.add_output(st_path)
    manifest.write(out)
    return 0


def cmd_transition(args) -> int:
    manifest = _Manifest("transition", args)
    model = _load_model_arg(args, manifest)
    x0 = _model_x0(model, args.x0)
    y = _parse_vector(args.y)
    dt = args.dt_resample
    if dt is None:
        dt = 0.02 if args.t <= 0.2 else 0.05
    task = TransitionTask(model.net, model.rates, x0, y, args.t, model.obs,
                          args.method, args.particles, args.seed,
                          beta=args.beta, gamma=args.gamma, dt_resample=dt,
                          event_cap=args.event_cap)
    estimates = transition_estimates(task, args.reps, args.threads)
    oracle = None
    if model.net.u == 1 and model.obs.error_free and float(model.obs.P[0, 0]) == 1.0:
        oracle = ctmc_transition(model.net, model.rates, x0, State(y.astype(int)), args.t)
    stats = summarize_estimates(estimates, oracle)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        cols = ["method", "N", "t", "reps", "nonzero", "ess", "mean"]
        vals = [args.method, str(args.particles), _float_repr(args.t),
                str(stats["reps"]), str(stats["nonzero"]),
                _float_repr(stats["ess"]), _float_repr(stats["mean"])]
        if oracle is not None:
            cols += ["oracle", "mse"]
            vals += [_float_repr(stats["oracle"]), _float_repr(stats["mse"])]
        f.write(",".join(cols) + "\n")
        f.write(",".join(vals) + "\n")
    manifest.add_output(out)
    manifest.write(out)
    return 0


def cmd_filter(args) -> int:
    manifest = _Manifest("filter", args)
    model = _load_model_arg(args, manifest)
    manifest.add_input(args.data)
    series = _read_series(args.data, model)
    x0 = _model_x0(model, args.x0)
    kind, _ = split_method(args.method)
    cfg = (make_bridge_config(args.method, float(series.times[0]),
                              float(series.times[1]), args.dt_resample,
                              args.beta, args.gamma)
           if series.times.shape[0] > 1 else None)
    loglik, _ = run_filter(kind, model.net, model.rates, series, x0,
                           args.particles, RngStream(args.seed), cfg,
                           args.event_cap)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {"method": args.method, "N": args.particles,
           "loglik_hat": None if loglik == -np.inf else loglik,
           "observations": int(series.times.shape[0])}
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest.add_output(out)
    manifest.write(out)
    return 0


def _parse_prior(text: str, d: int) -> Prior:
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * d
    if len(parts) != d:
        raise ValueError(f"prior needs 1 or {d} 'lo:hi' ranges, got {len(parts)}")
    lo, hi = [], []
    for part in parts:
        a, _, b = part.partition(":")
        lo.append(float(a))
        hi.append(float(b))
    return Prior(np.array(lo), np.array(hi))


def cmd_pmmh(args) -> int:
    manifest = _Manifest("pmmh", args)
    model = _load_model_arg(args, manifest)
    manifest.add_input(args.data)
    series = _read_series(args.data, model)
    x0 = _model_x0(model, args.x0)

    if args.infer:
        wanted = [s.strip() for s in args.infer.split(",")]
        indices = []
        for name in wanted:
            if name not in model.net.reaction_names:
                raise ValueError(f"unknown reaction '{name}' in --infer")
            indices.append(model.net.reaction_names.index(name))
        rate_map = subset_rate_map(model.rates, indices)
        d = len(indices)
        inferred = wanted
    else:
        rate_map = None
        d = model.net.v
        inferred = list(model.net.reaction_names)
    prior = _parse_prior(args.prior, d)
    init_theta = _parse_vector(args.init_theta) if args.init_theta else None
    proposal_cov = None
    if args.proposal_cov:
        manifest.add_input(args.proposal_cov)
        with open(args.proposal_cov, "r", encoding="utf-8") as f:
            proposal_cov = np.array(json.load(f)["proposal_cov"])

    t_start = time.perf_counter()
    chain, pilot_cov = pmmh_with_pilot(
        args.method, model.net, series, prior, x0, args.particles, args.iters,
        args.lam, RngStream(args.seed), pilot_iterations=args.pilot_iters,
        init_theta=init_theta, proposal_cov=proposal_cov,
        dt_resample=args.dt_resample, beta=args.beta, gamma=args.gamma,
        rate_map=rate_map, event_cap=args.event_cap)
    elapsed = time.perf_counter() - t_start

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    chain_path = Path(f"{out}_chain.csv")
    chain.write_csv(chain_path)
    manifest.add_output(chain_path)

    summary = chain.summary(args.burn_in)
    summary["method"] = args.method
    summary["N"] = args.particles
    summary["parameters"] = inferred
    summary_path = Path(f"{out}_summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest.add_output(summary_path)

    if pilot_cov is not None:
        pilot_path = Path(f"{out}_pilot.json")
        with open(pilot_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump({"proposal_cov": pilot_cov.tolist()}, f, indent=2)
            f.write("\n")
        manifest.add_output(pilot_path)

    ess_vals = [c["ess"] for c in summary["coordinates"]]
    if all(np.isfinite(e) for e in ess_vals):
        manifest.timing(pmmh_seconds=elapsed,
                        ess_min_per_s=float(min(ess_vals) / elapsed))
    manifest.write(out)
    return 0


def cmd_bench_bd(args) -> int:
    manifest = _Manifest("bench-bd", args)
    model = builtin_model("birth-death")
    x0 = _model_x0(model, args.x0)
    ts = _parse_vector(args.t)
    ns = _parse_vector(args.particles, int)
    methods = [m.strip() for m in args.methods.split(",")]
    for m in methods:
        split_method(m)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for t in ts:
        dist = transition_distribution(model.net, model.rates, x0, float(t))
        target = distribution_quantile(dist, args.quantile)
        oracle = float(dist[target])
        dt = args.dt_resample if args.dt_resample else (0.02 if t <= 0.2 else 0.05)
        for method in methods:
            for N in ns:
                task = TransitionTask(model.net, model.rates, x0,
                                      np.array([float(target)]), float(t),
                                      model.obs, method, int(N), args.seed,
                                      beta=args.beta, gamma=args.gamma,
                                      dt_resample=dt, event_cap=args.event_cap)
                est = transition_estimates(task, args.reps, args.threads)
                stats = summarize_estimates(est, oracle)
                rows.append((method, int(N), float(t), target, stats))
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("method,N,t,target,reps,nonzero,ess,mean,oracle,mse\n")
        for method, N, t, target, s in rows:
            f.write(f"{method},{N},{_float_repr(t)},{target},{s['reps']},"
                    f"{s['nonzero']},{_float_repr(s['ess'])},{_float_repr(s['mean'])},"
                    f"{_float_repr(s['oracle'])},{_float_repr(s['mse'])}\n")
    manifest.add_output(out)
    manifest.write(out)
    return 0


def cmd_tune(args) -> int:
    manifest = _Manifest("tune", args)
    model = _load_model_arg(args, manifest)
    manifest.add_input(args.data)
    series = _read_series(args.data, model)
    x0 = _model_x0(model, args.x0)
    theta = (_parse_vector(args.theta) if args.theta
             else np.log(np.asarray(model.rates)))
    ns = _parse_vector(args.particles, int)
    rows = tau2_sweep(args.method, model.net, series, x0, theta, list(ns),
                      args.reps, RngStream(args.seed),
                      dt_resample=args.dt_resample, beta=args.beta,
                      gamma=args.gamma, event_cap=args.event_cap)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("N,tau2\n")
        for row in rows:
            f.write(f"{row['N']},{_float_repr(row['tau2'])}\n")
    manifest.add_output(out)
    manifest.write(out)
    return 0


def cmd_emit_model(args) -> int:
    model = builtin_model(args.model)
    text = emit_model(model)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


# -- argument wiring ---------------------------------------------------------


def _add_common(p, data: bool = False):
    p.add_argument("--model", required=True,
                   help="model file path or built-in name "
                        f"({', '.join(sorted(BUILTIN_MODELS))})")
    if data:
        p.add_argument("--data", required=True, help="observation CSV (time,y1,...)")
    p.add_argument("--x0", help="override initial state, comma-separated counts")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for replicate-parallel commands "
                        "(never affects results)")
    p.add_argument("--event-cap", type=int, default=DEFAULT_EVENT_CAP)
    p.add_argument("--out", required=True)


def _add_sampler_opts(p):
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--particles", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.5,
                   help="resample when ESS falls below beta*N (bridge PF)")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="tempering exponent on look-ahead weights (bridge PF)")
    p.add_argument("--dt-resample", type=float, default=None,
                   help="spacing of intermediate resampling times (bridge PF)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mjpkit",
        description="Simulation, conditioned-trajectory sampling and PMMH "
                    "inference for Markov jump process kinetics",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw forward trajectories")
    _add_common(p)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--n-paths", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transition", help="repeated end-point probability estimates")
    _add_common(p)
    _add_sampler_opts(p)
    p.add_argument("--y", required=True, help="observed end point, comma-separated")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--reps", type=int, default=100)
    p.set_defaults(func=cmd_transition)

    p = sub.add_parser("filter", help="one marginal-likelihood estimate")
    _add_common(p, data=True)
    _add_sampler_opts(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("pmmh", help="posterior sampling of log rate constants")
    _add_common(p, data=True)
    _add_sampler_opts(p)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="scale on the proposal covariance")
    p.add_argument("--prior", default="-8:8",
                   help="log-rate prior box(es), 'lo:hi[,lo:hi,...]'")
    p.add_argument("--infer", default=None,
                   help="comma-separated reaction names to infer (default: all)")
    p.add_argument("--init-theta", default=None)
    p.add_argument("--pilot-iters", type=int, default=0,
                   help="iterations of an identity-proposal pilot run used to "
                        "estimate the proposal covariance")
    p.add_argument("--proposal-cov", default=None,
                   help="JSON file with a persisted pilot covariance")
    p.add_argument("--burn-in", type=int, default=None)
    p.set_defaults(func=cmd_pmmh)

    p = sub.add_parser("bench-bd", help="benchmark grid on the birth-death model")
    p.add_argument("--t", default="0.1,0.5,1.0")
    p.add_argument("--particles", default="10,50,100,500")
    p.add_argument("--methods", default="mis,ch,bpf-cle,bpf-lna")
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--quantile", type=float, default=0.99,
                   help="target quantile of the end-point distribution")
    p.add_argument("--x0", default=None)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--dt-resample", type=float, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--event-cap", type=int, default=DEFAULT_EVENT_CAP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_bd)

    p = sub.add_parser("tune", help="log-likelihood variance over particle counts")
    _add_common(p, data=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--particles", default="10,50,100,500",
                   help="comma-separated particle counts to sweep")
    p.add_argument("--theta", default=None,
                   help="log rates at which to evaluate (default: model rates)")
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--dt-resample", type=float, default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("emit-model", help="print a built-in model document")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_emit_model)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ModelFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

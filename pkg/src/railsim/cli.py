"""Command-line front end for measurements, protocols, and trajectories.

Runs are configured by flags, optionally seeded from a JSON file given
with --config (flags override the file).  Trial i draws its randomness
from (master seed, i), so per-trial records are byte-identical no
matter how many workers run them.  Each command prints a summary JSON
on standard output that validates against schemas/summary.json; per
trial records go to --jsonl as one JSON object per line.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import math
import sys
from collections import Counter
from functools import partial

import jsonschema
import numpy as np

from .fock import PureState, TruncationError, single_photon, vacuum
from .optics import (BeamsplitterSpec, HADAMARD, IDENTITY, PAULI_X, PAULI_Z,
                     beamsplitter, dual_rail_bell, single_rail_bell)
from .povm import (OverOccupiedError, apm_density, apm_sample, homodyne_cdf,
                   photon_count)
from .protocols import PrepSpec, run_protocol_trial
from .runner import chunk_ranges, map_chunks, trial_rng, worker_count
from .stats import chi2_gof_pvalue, ks_statistic
from .trajectory import (FeedbackPolicy, TrajectoryDivergedError, make_pulse,
                         run_dyne_ensemble, simulate_dyne)

SCHEMA_VERSION = 1
SAMPLE_CHUNK = 4096
PROTOCOL_CHUNK = 256
THETA_EDGES = np.linspace(0.0, 2.0 * math.pi, 33)
QUAD_EDGES = np.linspace(-8.0, 8.0, 33)
NAMED_UNITARIES = {
    "identity": IDENTITY,
    "hadamard": HADAMARD,
    "x": PAULI_X,
    "z": PAULI_Z,
}


class ConfigError(ValueError):
    """Invalid flag, config file, or state specification."""


def named_state(name: str):
    """Resolve a built-in state name to (state, canonical name)."""
    key = name.strip().lower()
    if key == "vacuum":
        return vacuum(1), key
    if key == "one":
        return single_photon(0, 1), key
    if key == "plus":
        return PureState(1, {(0,): 1.0, (1,): 1.0}).normalized(), key
    if key in ("plus-split", "babichev"):
        # single photon split 50:50 across two modes
        return beamsplitter(single_photon(0, 2), BeamsplitterSpec(0, 1, 0.5)), key
    if key == "bell-single":
        return single_rail_bell(), key
    if key == "bell-dual":
        return dual_rail_bell(), key
    if key.startswith("qubit:"):
        alpha, phi = _two_floats(key[len("qubit:"):])
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"qubit amplitude must lie in [0, 1], got {alpha}")
        beta = math.sqrt(max(0.0, 1.0 - alpha * alpha))
        c1 = beta * complex(math.cos(phi), -math.sin(phi))
        return PureState(1, {(0,): alpha, (1,): c1}).normalized(), key
    raise ConfigError(f"unknown state {name!r}")


def _two_floats(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_input_qubit(spec: str):
    """Logical amplitudes (c0, c1) for a gate input specification."""
    key = spec.strip().lower()
    r = 1.0 / math.sqrt(2.0)
    table = {"0": (1.0, 0.0), "1": (0.0, 1.0),
             "plus": (r, r), "minus": (r, -r)}
    if key in table:
        return tuple(complex(c) for c in table[key])
    if key.startswith("qubit:"):
        alpha, phi = _two_floats(key[len("qubit:"):])
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"qubit amplitude must lie in [0, 1], got {alpha}")
        beta = math.sqrt(max(0.0, 1.0 - alpha * alpha))
        return complex(alpha), beta * complex(math.cos(phi), -math.sin(phi))
    raise ConfigError(f"unknown input qubit {spec!r}")


def parse_unitary(spec: str) -> np.ndarray:
    """Named 2x2 unitary or file:PATH; file entries are re or [re, im]."""
    key = spec.strip()
    if key.lower() in NAMED_UNITARIES:
        return NAMED_UNITARIES[key.lower()]
    if key.lower().startswith("file:"):
        with open(key[len("file:"):]) as fh:
            raw = json.load(fh)
        try:
            u = np.array([[_entry(c) for c in row] for row in raw], dtype=complex)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad unitary file: {exc}") from None
        if u.shape != (2, 2):
            raise ConfigError(f"unitary must be 2x2, got shape {u.shape}")
        if not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-10):
            raise ConfigError("matrix is not unitary within 1e-10")
        return u
    raise ConfigError(f"unknown unitary {spec!r}")


def _entry(c) -> complex:
    if isinstance(c, (int, float)):
        return complex(c)
    re, im = c
    return complex(float(re), float(im))


def parse_policy(spec: str, loop_delay: float) -> FeedbackPolicy:
    key = spec.strip().lower()
    if key == "adaptive":
        return FeedbackPolicy.adaptive(loop_delay=loop_delay)
    if loop_delay:
        raise ConfigError("--delay applies to the adaptive policy only")
    if key.startswith("homodyne"):
        phi = float(key.split(":", 1)[1]) if ":" in key else 0.0
        return FeedbackPolicy.homodyne(phi)
    if key.startswith("heterodyne"):
        ramp = float(key.split(":", 1)[1]) if ":" in key else 50.0
        return FeedbackPolicy.heterodyne(ramp)
    raise ConfigError(f"unknown policy {spec!r}")


def _load_schema() -> dict:
    path = importlib.resources.files("railsim").joinpath("schemas/summary.json")
    return json.loads(path.read_text())


def _emit(command: str, config: dict, results: dict, args) -> int:
    summary = {"schema_version": SCHEMA_VERSION, "command": command,
               "config": config, "results": results}
    jsonschema.validate(summary, _load_schema(),
                        cls=jsonschema.Draft202012Validator)
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _write_jsonl(path: str | None, records) -> None:
    if path is None:
        return
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _histogram(values, edges) -> dict:
    counts, _ = np.histogram(np.asarray(values), bins=edges)
    return {"edges": [float(e) for e in edges],
            "counts": [int(c) for c in counts]}


def _moments(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "variance": float(v.var()),
            "mean_sq": float(np.mean(v * v))}


# chunk workers; module level so the fork pool can pickle them

def _apm_chunk(bounds, state, mode, seed):
    start, stop = bounds
    out = []
    for i in range(start, stop):
        o = apm_sample(state, mode, trial_rng(seed, i))
        out.append((float(o.value), float(o.density)))
    return out


def _homodyne_chunk(bounds, xs, pdf, cdf, seed):
    start, stop = bounds
    out = []
    for i in range(start, stop):
        u = trial_rng(seed, i).random() * cdf[-1]
        x = float(np.interp(u, cdf, xs))
        out.append((x, float(np.interp(x, xs, pdf))))
    return out


def _count_chunk(bounds, state, modes, seed):
    start, stop = bounds
    out = []
    for i in range(start, stop):
        o = photon_count(state, modes, trial_rng(seed, i))
        out.append(([int(c) for c in o.value], float(o.density)))
    return out


def _protocol_chunk(bounds, protocol, params, seed):
    start, stop = bounds
    return [run_protocol_trial(protocol, params, seed, i)
            for i in range(start, stop)]


def _run_chunked(fn, n, threads, chunk):
    rows = []
    for part in map_chunks(fn, chunk_ranges(n, chunk), threads):
        rows.extend(part)
    return rows


def _common_ints(args):
    n = int(args.n)
    if n < 1:
        raise ConfigError(f"--n must be at least 1, got {n}")
    seed = int(args.seed)
    if seed < 0:
        raise ConfigError(f"--seed must be non-negative, got {seed}")
    threads = worker_count(None if args.threads is None else int(args.threads))
    return n, seed, threads


def cmd_sample(args):
    kind = args.kind
    state, state_name = named_state(args.state)
    mode = int(args.mode)
    n, seed, threads = _common_ints(args)
    backend = args.backend
    config = {"kind": kind, "state": state_name, "n": n, "seed": seed}

    if kind == "count":
        if backend == "trajectory":
            raise ConfigError("count sampling has no trajectory backend")
        modes = tuple(range(state.n_modes))

        def run_count():
            rows = _run_chunked(partial(_count_chunk, state=state, modes=modes,
                                        seed=seed), n, threads, SAMPLE_CHUNK)
            records = [{"trial": i, "counts": c, "probability": p}
                       for i, (c, p) in enumerate(rows)]
            _write_jsonl(args.jsonl, records)
            by_outcome = Counter(",".join(map(str, c)) for c, _ in rows)
            results = {"n_trials": n,
                       "counts_by_outcome": dict(sorted(by_outcome.items()))}
            return _emit("sample-count", config, results, args)

        return run_count

    if not 0 <= mode < state.n_modes:
        raise ConfigError(f"mode {mode} out of range for state {state_name!r}")
    config.update({"mode": mode, "backend": backend})

    if kind == "apm":
        dens = apm_density(state, mode)
        if backend == "trajectory":
            pulse = make_pulse(args.pulse, dt=float(args.dt))
            policy = FeedbackPolicy.adaptive(loop_delay=float(args.delay))
            config.update({"pulse": pulse.kind, "dt": pulse.dt,
                           "delay": policy.loop_delay})

        def run_apm():
            if backend == "analytic":
                rows = _run_chunked(partial(_apm_chunk, state=state, mode=mode,
                                            seed=seed), n, threads, SAMPLE_CHUNK)
                thetas = np.array([t for t, _ in rows])
                densities = [d for _, d in rows]
            else:
                res = run_dyne_ensemble(state, mode, pulse, policy, seed, n,
                                        threads=threads)
                thetas = res.theta
                densities = [float(d) for d in dens(thetas)]
            records = [{"trial": i, "theta": float(t), "density": d}
                       for i, (t, d) in enumerate(zip(thetas, densities))]
            _write_jsonl(args.jsonl, records)
            results = {"n_trials": n,
                       "ks_theta": float(ks_statistic(thetas, dens.cdf)),
                       "histogram": _histogram(thetas, THETA_EDGES)}
            results.update(_moments(thetas))
            return _emit("sample-apm", config, results, args)

        return run_apm

    # homodyne
    phi = float(args.phi)
    xs, pdf, cdf = homodyne_cdf(state, mode, phi)
    config["phi"] = phi
    if backend == "trajectory":
        pulse = make_pulse(args.pulse, dt=float(args.dt))
        policy = FeedbackPolicy.homodyne(phi)
        config.update({"pulse": pulse.kind, "dt": pulse.dt})

    def run_homodyne():
        if backend == "analytic":
            rows = _run_chunked(partial(_homodyne_chunk, xs=xs, pdf=pdf,
                                        cdf=cdf, seed=seed),
                                n, threads, SAMPLE_CHUNK)
            values = np.array([x for x, _ in rows])
            densities = [d for _, d in rows]
        else:
            res = run_dyne_ensemble(state, mode, pulse, policy, seed, n,
                                    threads=threads)
            values = res.x
            densities = [float(d) for d in np.interp(values, xs, pdf)]
        records = [{"trial": i, "x": float(x), "density": d}
                   for i, (x, d) in enumerate(zip(values, densities))]
        _write_jsonl(args.jsonl, records)
        results = {"n_trials": n,
                   "ks_x": float(ks_statistic(
                       values, lambda v: np.interp(v, xs, cdf) / cdf[-1])),
                   "histogram": _histogram(values, QUAD_EDGES)}
        if n >= 400:
            results["chi2_p"] = float(chi2_gof_pvalue(values, xs, pdf))
        results.update(_moments(values))
        return _emit("sample-homodyne", config, results, args)

    return run_homodyne


def cmd_prep(args):
    if args.alpha is None:
        raise ConfigError("prep requires --alpha")
    spec = PrepSpec(alpha=float(args.alpha), phi=float(args.phi))
    n, seed, threads = _common_ints(args)
    backend = args.backend
    params = {"alpha": spec.alpha, "phi": spec.phi, "backend": backend}
    config = {"alpha": spec.alpha, "phi": spec.phi, "backend": backend,
              "n": n, "seed": seed}
    if backend == "trajectory":
        pulse = make_pulse(args.pulse, dt=float(args.dt))
        params.update({"dt": pulse.dt, "pulse": pulse.kind})
        config.update({"dt": pulse.dt, "pulse": pulse.kind})

    def run():
        records = _run_chunked(partial(_protocol_chunk, protocol="prepare",
                                       params=params, seed=seed),
                               n, threads, PROTOCOL_CHUNK)
        _write_jsonl(args.jsonl, records)
        fids = [r["fidelity"] for r in records]
        results = {"n_trials": n,
                   "success_rate": sum(r["success"] for r in records) / n,
                   "fidelity_min": float(min(fids)),
                   "fidelity_mean": float(np.mean(fids))}
        return _emit("prep", config, results, args)

    return run


def cmd_gate(args):
    u = parse_unitary(args.u)
    c0, c1 = parse_input_qubit(args.input)
    n, seed, threads = _common_ints(args)
    backend = args.backend
    params = {"input": [[c0.real, c0.imag], [c1.real, c1.imag]],
              "u": [[[z.real, z.imag] for z in row] for row in u],
              "backend": backend}
    config = {"u": args.u.strip().lower(), "input": args.input.strip().lower(),
              "backend": backend, "n": n, "seed": seed}
    if backend == "trajectory":
        pulse = make_pulse(args.pulse, dt=float(args.dt))
        params.update({"dt": pulse.dt, "pulse": pulse.kind})
        config.update({"dt": pulse.dt, "pulse": pulse.kind})

    def run():
        records = _run_chunked(partial(_protocol_chunk, protocol="gate",
                                       params=params, seed=seed),
                               n, threads, PROTOCOL_CHUNK)
        _write_jsonl(args.jsonl, records)
        succ = [r for r in records if r["success"]]
        by_counts = Counter(",".join(map(str, r["counts"])) for r in records)
        results = {"n_trials": n, "success_rate": len(succ) / n,
                   "collapsed_zero_rate":
                       sum(r["collapsed"] == 0 for r in records) / n,
                   "collapsed_one_rate":
                       sum(r["collapsed"] == 1 for r in records) / n,
                   "counts_by_outcome": dict(sorted(by_counts.items()))}
        if succ:
            fids = [r["fidelity"] for r in succ]
            results["fidelity_min"] = float(min(fids))
            results["fidelity_mean"] = float(np.mean(fids))
        return _emit("gate", config, results, args)

    return run


def cmd_trajectory(args):
    state, state_name = named_state(args.state)
    mode = int(args.mode)
    if not 0 <= mode < state.n_modes:
        raise ConfigError(f"mode {mode} out of range for state {state_name!r}")
    n, seed, threads = _common_ints(args)
    pulse = make_pulse(args.pulse, dt=float(args.dt))
    policy = parse_policy(args.policy, float(args.delay))
    adaptive = policy.kind == "adaptive"
    config = {"state": state_name, "mode": mode, "n": n, "seed": seed,
              "pulse": pulse.kind, "dt": pulse.dt,
              "policy": args.policy.strip().lower(), "delay": policy.loop_delay}
    density = None
    if adaptive:
        try:
            density = apm_density(state, mode)
        except OverOccupiedError:
            density = None  # theta still recorded; no analytic reference

    def run():
        res = run_dyne_ensemble(state, mode, pulse, policy, seed, n,
                                want_fidelity=adaptive, threads=threads)
        records = [{"trial": i, "theta": float(th), "x": float(x),
                    "residual_weight": float(w)}
                   for i, (th, x, w) in enumerate(
                       zip(res.theta, res.x, res.residual_weight))]
        _write_jsonl(args.jsonl, records)
        results = {"n_trials": n,
                   "mean_residual_weight": float(res.residual_weight.mean())}
        results.update(_moments(res.x))
        if density is not None:
            results["ks_theta"] = float(ks_statistic(res.theta, density.cdf))
        if res.fidelity is not None:
            results["fidelity_min"] = float(res.fidelity.min())
            results["fidelity_mean"] = float(res.fidelity.mean())
        results["histogram"] = _histogram(res.theta if adaptive else res.x,
                                          THETA_EDGES if adaptive else QUAD_EDGES)
        if args.full_record:
            record, _ = simulate_dyne(state, mode, pulse, policy,
                                      trial_rng(seed, 0), keep_series=True)
            table = np.column_stack([record.t, record.phases,
                                     record.i_dt / pulse.dt,
                                     record.j_dt / pulse.dt,
                                     record.dw])
            np.savetxt(args.full_record, table, delimiter=",",
                       header="t,phi,i,j,dw", comments="")
        return _emit("trajectory", config, results, args)

    return run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="railsim",
        description="Adaptive phase measurements and teleported gates on "
                    "optical rail qubits.")
    sub = parser.add_subparsers(dest="cmd", required=True, metavar="command")
    sub_map = {}

    def common(p):
        p.add_argument("--n", type=int, default=1000, help="number of trials")
        p.add_argument("--seed", type=int, default=0,
                       help="master seed; trial i draws from (seed, i)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: RAILSIM_THREADS or 1)")
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults; flags override it")
        p.add_argument("--jsonl", default=None,
                       help="write per-trial records to this path")
        p.add_argument("--summary", default=None,
                       help="also write the summary JSON to this path")

    ps = sub.add_parser("sample", help="draw measurement outcomes")
    ps.add_argument("kind", choices=["apm", "homodyne", "count"])
    ps.add_argument("--state", default="plus", help="built-in state name")
    ps.add_argument("--mode", type=int, default=0, help="measured mode")
    ps.add_argument("--phi", type=float, default=0.0,
                    help="local-oscillator phase (homodyne)")
    ps.add_argument("--backend", choices=["analytic", "trajectory"],
                    default="analytic")
    ps.add_argument("--dt", type=float, default=1e-4,
                    help="trajectory time step")
    ps.add_argument("--pulse", default="flat",
                    help="flat, raised-cosine, or expdecay[:rate]")
    ps.add_argument("--delay", type=float, default=0.0,
                    help="feedback loop delay (trajectory apm)")
    common(ps)
    sub_map["sample"] = ps

    pp = sub.add_parser("prep", help="deterministic state preparation")
    pp.add_argument("--alpha", type=float, default=None,
                    help="target amplitude of |0>")
    pp.add_argument("--phi", type=float, default=0.0, help="target phase")
    pp.add_argument("--backend", choices=["analytic", "trajectory"],
                    default="analytic")
    pp.add_argument("--dt", type=float, default=1e-4)
    pp.add_argument("--pulse", default="flat")
    common(pp)
    sub_map["prep"] = pp

    pg = sub.add_parser("gate", help="teleportation-based single-qubit gate")
    pg.add_argument("--u", default="identity",
                    help="identity|hadamard|x|z|file:PATH")
    pg.add_argument("--input", default="0",
                    help="0|1|plus|minus|qubit:alpha,phi")
    pg.add_argument("--backend", choices=["analytic", "trajectory"],
                    default="analytic")
    pg.add_argument("--dt", type=float, default=1e-4)
    pg.add_argument("--pulse", default="flat")
    common(pg)
    sub_map["gate"] = pg

    pt = sub.add_parser("trajectory", help="dyne trajectory ensembles")
    pt.add_argument("--state", default="plus")
    pt.add_argument("--mode", type=int, default=0)
    pt.add_argument("--pulse", default="flat")
    pt.add_argument("--policy", default="adaptive",
                    help="adaptive, homodyne[:phi], or heterodyne[:ramp]")
    pt.add_argument("--dt", type=float, default=1e-4)
    pt.add_argument("--delay", type=float, default=0.0,
                    help="feedback loop delay (adaptive)")
    pt.add_argument("--full-record", dest="full_record", default=None,
                    help="write t,phi,i,j,dw of trial 0 to this CSV")
    common(pt)
    sub_map["trajectory"] = pt

    return parser, sub_map


def _load_config_file(path: str, sub: argparse.ArgumentParser) -> dict:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return raw


HANDLERS = {"sample": cmd_sample, "prep": cmd_prep, "gate": cmd_gate,
            "trajectory": cmd_trajectory}


def main(argv=None) -> int:
    parser, sub_map = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            file_cfg = _load_config_file(args.config, sub_map[args.cmd])
            sub_map[args.cmd].set_defaults(**file_cfg)
            args = parser.parse_args(argv)
        plan = HANDLERS[args.cmd](args)
    except (ConfigError, OverOccupiedError, ValueError, OSError) as exc:
        print(f"railsim: {exc}", file=sys.stderr)
        return 2
    try:
        return plan()
    except (OverOccupiedError, TruncationError, TrajectoryDivergedError,
            ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"railsim: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""State preparation and teleported-gate protocols on optical qubits.

Every protocol takes a measurement backend so the same procedure can
run against the analytic phase POVM or the time-domain trajectory
simulation.  Phase-measurement outcomes feed forward into phase
shifters; detector outcomes select teleportation branches.

Conventions fixed here (derived under the package's beamsplitter
convention and frozen):

* Bell measurement on modes (m1, m2): after the 50:50 beamsplitter,
  counts (1,0) herald the projection onto (|01>+|10>)/sqrt(2) and need
  no correction; counts (0,1) herald (|01>-|10>)/sqrt(2) and need a
  logical Z (phase pi on rail0).  No photons collapse the output qubit
  to logical 1; two photons collapse it to logical 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import PureState, apply_phase, fidelity, single_photon, tensor
from .optics import (BeamsplitterSpec, DualRailQubit, SingleRailQubit,
                     beamsplitter, dual_rail_bell, dual_rail_unitary)
from .povm import (MeasurementOutcome, OverOccupiedError, QuadratureGrid,
                   apm_density, apm_sample, homodyne_density, homodyne_sample,
                   photon_count)
from .runner import trial_rng
from .trajectory import FeedbackPolicy, PulseShape, make_pulse, simulate_dyne


@dataclass(frozen=True)
class PrepSpec:
    """Target state alpha |0> + e^{-i phi} sqrt(1 - alpha^2) |1>."""

    alpha: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def target(self) -> PureState:
        beta = math.sqrt(max(0.0, 1.0 - self.alpha ** 2))
        c1 = beta * complex(math.cos(self.phi), -math.sin(self.phi))
        return PureState(1, {(0,): self.alpha, (1,): c1})


@dataclass
class AnalyticBackend:
    """Measurements sampled from their exact outcome distributions."""

    grid: QuadratureGrid | None = None

    def apm(self, state: PureState, mode: int, rng) -> MeasurementOutcome:
        return apm_sample(state, mode, rng)

    def homodyne(self, state: PureState, mode: int, phi: float, rng) -> MeasurementOutcome:
        return homodyne_sample(state, mode, phi, rng, self.grid)


@dataclass
class TrajectoryBackend:
    """Measurements realized by simulated dyne trajectories."""

    pulse: PulseShape
    loop_delay: float = 0.0

    def apm(self, state: PureState, mode: int, rng) -> MeasurementOutcome:
        # The trajectory realizes the phase POVM only on the <=1 photon
        # subspace; enforce the same precondition as the analytic path.
        dens = apm_density(state, mode)
        policy = FeedbackPolicy.adaptive(loop_delay=self.loop_delay)
        record, posterior = simulate_dyne(state, mode, self.pulse, policy, rng,
                                          keep_series=False)
        return MeasurementOutcome(kind="apm", value=record.theta,
                                  posterior=posterior,
                                  density=float(dens(record.theta)))

    def homodyne(self, state: PureState, mode: int, phi: float, rng) -> MeasurementOutcome:
        policy = FeedbackPolicy.homodyne(phi)
        record, posterior = simulate_dyne(state, mode, self.pulse, policy, rng,
                                          keep_series=False)
        grid_x, pdf = homodyne_density(state, mode, phi)
        return MeasurementOutcome(kind="homodyne", value=record.x,
                                  posterior=posterior,
                                  density=float(np.interp(record.x, grid_x, pdf)),
                                  lo_phase=phi)


def make_backend(name: str, dt: float = 1e-4, pulse_shape: str = "flat",
                 loop_delay: float = 0.0):
    """Backend factory for the CLI and tests."""
    name = name.strip().lower()
    if name == "analytic":
        return AnalyticBackend()
    if name == "trajectory":
        return TrajectoryBackend(pulse=make_pulse(pulse_shape, dt=dt),
                                 loop_delay=loop_delay)
    raise ValueError(f"unknown backend {name!r}")


class _RecordingBackend:
    """Delegating wrapper that keeps the phase outcomes of a trial."""

    def __init__(self, inner):
        self.inner = inner
        self.theta_values: list = []

    def apm(self, state, mode, rng):
        out = self.inner.apm(state, mode, rng)
        self.theta_values.append(float(out.value))
        return out

    def homodyne(self, state, mode, phi, rng):
        return self.inner.homodyne(state, mode, phi, rng)


def prepare_plus(backend, rng) -> PureState:
    """Split a photon 50:50, phase-measure one arm, undo the random phase.

    Deterministically yields (|0> + |1>)/sqrt(2) up to a global phase.
    """
    state = single_photon(0, 2)
    state = beamsplitter(state, BeamsplitterSpec(0, 1, 0.5))
    out = backend.apm(state, 0, rng)
    return apply_phase(out.posterior, 0, -out.value)


def prepare_arbitrary(spec: PrepSpec, backend, rng) -> PureState:
    """Produce alpha |0> + e^{-i phi} sqrt(1-alpha^2) |1> deterministically.

    A single photon hits a beamsplitter of transmittance alpha^2; the
    port that keeps amplitude alpha is phase-measured and the outcome,
    together with the target phase, feeds forward onto the free port.
    """
    state = single_photon(0, 2)
    state = beamsplitter(state, BeamsplitterSpec(0, 1, spec.alpha ** 2))
    out = backend.apm(state, 0, rng)
    return apply_phase(out.posterior, 0, -(out.value + spec.phi))


def homodyne_prep_comparison(rng, grid: QuadratureGrid | None = None):
    """Split a photon and homodyne one arm instead of phase-measuring it.

    Returns (x, posterior): the conditional state is (x|0> + |1>) up to
    normalization — a known phase but a random amplitude.
    """
    state = single_photon(0, 2)
    state = beamsplitter(state, BeamsplitterSpec(0, 1, 0.5))
    out = homodyne_sample(state, 0, 0.0, rng, grid)
    return float(out.value), out.posterior


def _check_dual_occupancy(state: PureState, q: DualRailQubit):
    total = state.norm_sq()
    bad = sum(abs(a) ** 2 for occ, a in state.items()
              if occ[q.rail0] + occ[q.rail1] >= 2) / total
    if bad > 1e-12:
        raise OverOccupiedError(
            f"rails ({q.rail0}, {q.rail1}) carry weight {bad:.3g} on >= 2 photons"
        )


def dual_to_single(state: PureState, q: DualRailQubit, backend, rng):
    """Convert a dual-rail qubit to single-rail, deterministically.

    Phase-measures rail1 (outcome theta) and applies -theta to rail0;
    logical amplitudes carry over exactly.  Returns (state, qubit); mode
    indices above the removed rail shift down by one.
    """
    _check_dual_occupancy(state, q)
    out = backend.apm(state, q.rail1, rng)
    new_mode = q.rail0 - 1 if q.rail0 > q.rail1 else q.rail0
    post = apply_phase(out.posterior, new_mode, -out.value)
    return post, SingleRailQubit(new_mode)


def hybrid_bell(backend, rng):
    """Entangle a single-rail qubit with a dual-rail qubit.

    Converts one half of a dual-rail Bell pair to single rail, leaving
    (|0>|10> + |1>|01>)/sqrt(2) on three modes.  Returns
    (state, SingleRailQubit, DualRailQubit).
    """
    bell = dual_rail_bell()
    state, single = dual_to_single(bell, DualRailQubit(0, 1), backend, rng)
    return state, single, DualRailQubit(1, 2)


@dataclass(frozen=True)
class BsmOutcome:
    """Result of a single-rail Bell measurement.

    kind: bell_plus | bell_minus | fail_zero | fail_two, with the raw
    detector counts on (m1, m2) and the branch probability.
    """

    kind: str
    counts: tuple
    probability: float


@dataclass
class GateOutcome:
    """Result of a teleportation-based operation.

    On success ``qubit`` points at the output qubit inside ``state``.
    On failure ``collapsed_logical`` records the logical value the
    output qubit was projected onto.
    """

    success: bool
    state: PureState
    qubit: object
    bsm: BsmOutcome | None = None
    collapsed_logical: int | None = None


def bell_measurement_single_rail(state: PureState, m1: int, m2: int, rng):
    """50:50 beamsplitter across (m1, m2) followed by photon counting.

    Count patterns map to outcomes per the table frozen in the module
    docstring; the posterior has both modes removed.
    """
    mixed = beamsplitter(state, BeamsplitterSpec(m1, m2, 0.5))
    out = photon_count(mixed, (m1, m2), rng)
    by_mode = dict(zip(sorted((m1, m2)), out.value))
    counts = (by_mode[m1], by_mode[m2])
    total = counts[0] + counts[1]
    if total == 0:
        kind = "fail_zero"
    elif total >= 2:
        kind = "fail_two"
    elif counts == (1, 0):
        kind = "bell_plus"
    else:
        kind = "bell_minus"
    return BsmOutcome(kind=kind, counts=counts, probability=out.density), out.posterior


def teleport_single_to_dual(state: PureState, q: SingleRailQubit, backend, rng) -> GateOutcome:
    """Teleport a single-rail qubit onto a dual-rail qubit.

    Builds the hybrid Bell resource, Bell-measures the input against
    its single-rail half, and applies the heralded correction.  Succeeds
    with probability 1/2; failures collapse the output to a logical
    basis state (no photon detected -> logical 1, two -> logical 0).
    """
    if not 0 <= q.mode < state.n_modes:
        raise ValueError(f"qubit mode {q.mode} out of range")
    resource, s_half, _ = hybrid_bell(backend, rng)
    offset = state.n_modes
    joint = tensor(state, resource)
    bsm, post = bell_measurement_single_rail(joint, q.mode, offset + s_half.mode, rng)
    dual = DualRailQubit(offset - 1, offset)
    if bsm.kind == "bell_plus":
        return GateOutcome(success=True, state=post, qubit=dual, bsm=bsm)
    if bsm.kind == "bell_minus":
        corrected = apply_phase(post, dual.rail0, math.pi)
        return GateOutcome(success=True, state=corrected, qubit=dual, bsm=bsm)
    collapsed = 1 if bsm.kind == "fail_zero" else 0
    return GateOutcome(success=False, state=post, qubit=dual, bsm=bsm,
                       collapsed_logical=collapsed)


def apply_single_rail_unitary(state: PureState, q: SingleRailQubit,
                              u: np.ndarray, backend, rng) -> GateOutcome:
    """Arbitrary single-qubit rotation by teleport, rotate, convert back.

    The dual-rail rotation itself is deterministic; the only
    non-deterministic step is the Bell measurement, so the pipeline
    succeeds with probability 1/2.
    """
    tele = teleport_single_to_dual(state, q, backend, rng)
    if not tele.success:
        return tele
    rotated = dual_rail_unitary(tele.state, tele.qubit, u)
    final, single = dual_to_single(rotated, tele.qubit, backend, rng)
    return GateOutcome(success=True, state=final, qubit=single, bsm=tele.bsm)


def qubit_state(c0: complex, c1: complex) -> PureState:
    """Single-rail qubit c0 |0> + c1 |1> on one mode (normalized)."""
    return PureState(1, {(0,): c0, (1,): c1}).normalized()


def logical_target_fidelity(state: PureState, qubit, c0: complex, c1: complex) -> float:
    """Fidelity of ``state`` with the target qubit embedded in vacuum.

    Builds c0 |0>_L + c1 |1>_L on the handle's mode(s), vacuum
    elsewhere, so weight outside the logical subspace counts against
    the fidelity.
    """
    occ0 = [0] * state.n_modes
    occ1 = [0] * state.n_modes
    if isinstance(qubit, SingleRailQubit):
        occ1[qubit.mode] = 1
    else:
        occ0[qubit.rail1] = 1
        occ1[qubit.rail0] = 1
    target = PureState(state.n_modes, {tuple(occ0): c0, tuple(occ1): c1},
                       n_max=state.n_max, n_total_max=state.n_total_max)
    return fidelity(state, target)


def run_protocol_trial(protocol: str, params: dict, master_seed: int,
                       trial_index: int) -> dict:
    """Run one protocol trial and return a JSON-serializable record."""
    rng = trial_rng(master_seed, trial_index)
    backend = _RecordingBackend(make_backend(
        params.get("backend", "analytic"),
        dt=float(params.get("dt", 1e-4)),
        pulse_shape=params.get("pulse", "flat"),
    ))
    record = {
        "protocol": protocol,
        "seed": [master_seed, trial_index],
        "success": True,
        "collapsed": None,
        "counts": None,
        "fidelity": None,
    }
    if protocol == "prepare":
        spec = PrepSpec(alpha=float(params["alpha"]), phi=float(params["phi"]))
        out = prepare_arbitrary(spec, backend, rng)
        record["fidelity"] = float(fidelity(out, spec.target()))
    elif protocol == "prepare-plus":
        out = prepare_plus(backend, rng)
        target = PureState(1, {(0,): 1.0, (1,): 1.0}).normalized()
        record["fidelity"] = float(fidelity(out, target))
    elif protocol in ("teleport", "gate"):
        c0, c1 = (complex(re, im) for re, im in params["input"])
        state = qubit_state(c0, c1)
        if protocol == "teleport":
            out = teleport_single_to_dual(state, SingleRailQubit(0), backend, rng)
            t0, t1 = c0, c1
        else:
            u = np.array([[complex(re, im) for re, im in row]
                          for row in params["u"]])
            out = apply_single_rail_unitary(state, SingleRailQubit(0), u,
                                            backend, rng)
            t0, t1 = u @ np.array([c0, c1])
        record["success"] = bool(out.success)
        record["counts"] = [int(c) for c in out.bsm.counts] if out.bsm else None
        record["collapsed"] = out.collapsed_logical
        if out.success:
            record["fidelity"] = float(logical_target_fidelity(
                out.state, out.qubit, t0, t1))
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    record["theta_values"] = backend.theta_values
    return record

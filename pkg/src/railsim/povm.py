"""Measurement effects and samplers: photon counting, homodyne, and the
analytic adaptive phase measurement (APM).

Quadrature convention: X = a e^{-i phi} + a+ e^{i phi}, so the vacuum
has unit variance and the number-state wavefunctions obey

    psi_0(x) = (2 pi)^(-1/4) exp(-x^2 / 4)
    psi_{n+1}(x) = (x psi_n(x) - sqrt(n) psi_{n-1}(x)) / sqrt(n + 1).

The APM acts on a mode holding at most one photon.  Its effects are
|theta><theta| / 2 pi with the unnormalized phase eigenkets
|theta> = |0> + e^{i theta} |1>, theta in [0, 2 pi).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fock import PureState, project_mode

GRID_X_MIN = -8.0
GRID_X_MAX = 8.0
GRID_POINTS = 4001

# Tolerated squared-magnitude weight on occupations >= 2 for the APM.
APM_OCCUPATION_TOL = 1e-12


class OverOccupiedError(Exception):
    """The APM was asked to measure a mode with support on n >= 2."""


@dataclass
class MeasurementOutcome:
    """One sampled measurement result.

    ``kind`` is "count", "homodyne" or "apm"; ``value`` is the count
    tuple, the quadrature value, or the phase estimate respectively.
    ``density`` is the probability (mass or density) of the outcome and
    ``posterior`` the normalized conditional state with the measured
    mode(s) removed.
    """

    kind: str
    value: object
    posterior: PureState
    density: float
    lo_phase: float | None = None


def quad_psi(n: int, x) -> np.ndarray:
    """Wavefunction <x|n> for the unit-variance vacuum convention."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = (2.0 * math.pi) ** (-0.25) * np.exp(-0.25 * x * x)
    for k in range(n):
        prev, cur = cur, (x * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
    return cur


@dataclass
class QuadratureGrid:
    """Tabulated number-state wavefunctions on a uniform x grid."""

    x: np.ndarray
    psi: np.ndarray  # shape (n_levels, n_points); row n is psi_n(x)

    @property
    def n_levels(self) -> int:
        return self.psi.shape[0]

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


@lru_cache(maxsize=8)
def make_grid(n_max: int, x_min: float = GRID_X_MIN, x_max: float = GRID_X_MAX,
              n_points: int = GRID_POINTS) -> QuadratureGrid:
    """Build (and cache) the quadrature grid for occupations 0..n_max.

    Raises if the grid does not hold essentially all of the highest
    level's probability, which would silently bias sampling.
    """
    if n_points < 2 or x_max <= x_min:
        raise ValueError("bad grid parameters")
    x = np.linspace(x_min, x_max, n_points)
    psi = np.stack([quad_psi(n, x) for n in range(n_max + 1)])
    dx = x[1] - x[0]
    for n in range(n_max + 1):
        total = float(np.trapezoid(psi[n] ** 2, dx=dx))
        if abs(total - 1.0) > 1e-6:
            raise ValueError(
                f"quadrature grid too narrow for n={n}: integral {total:.8f}"
            )
    return QuadratureGrid(x=x, psi=psi)


def _mode_groups(state: PureState, mode: int) -> dict:
    """Group amplitudes by the occupation of ``mode``.

    Returns {rest_occupation: complex array indexed by n}.
    """
    groups = {}
    for occ, amp in state.items():
        rest = occ[:mode] + occ[mode + 1:]
        vec = groups.get(rest)
        if vec is None:
            vec = np.zeros(state.n_max + 1, dtype=complex)
            groups[rest] = vec
        vec[occ[mode]] += amp
    return groups


def photon_count(state: PureState, modes, rng: np.random.Generator) -> MeasurementOutcome:
    """Sample photon counts on ``modes`` (sorted ascending) jointly.

    The posterior has the measured modes removed.
    """
    modes = sorted(set(int(m) for m in modes))
    if not modes:
        raise ValueError("no modes to measure")
    for m in modes:
        if not 0 <= m < state.n_modes:
            raise ValueError(f"mode {m} out of range for {state.n_modes} modes")
    total = state.norm_sq()
    probs = {}
    for occ, amp in state.items():
        key = tuple(occ[m] for m in modes)
        probs[key] = probs.get(key, 0.0) + abs(amp) ** 2 / total
    outcomes = sorted(probs.items())
    u = rng.random()
    acc = 0.0
    counts = outcomes[-1][0]
    for key, p in outcomes:
        acc += p
        if u < acc:
            counts = key
            break
    posterior = state
    weight = 1.0
    for m, c in sorted(zip(modes, counts), reverse=True):
        bra = [0.0] * (posterior.n_max + 1)
        bra[c] = 1.0
        w, posterior = project_mode(posterior, m, bra)
        weight *= w
    return MeasurementOutcome(kind="count", value=counts, posterior=posterior,
                              density=probs[counts])


def homodyne_density(state: PureState, mode: int, phi: float = 0.0,
                     grid: QuadratureGrid | None = None):
    """Tabulated marginal density of the quadrature X_phi of one mode.

    Returns (x, pdf) on the grid; the input state is normalized
    internally.
    """
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode {mode} out of range for {state.n_modes} modes")
    if grid is None:
        grid = make_grid(state.n_max)
    if grid.n_levels < state.n_max + 1:
        raise ValueError("grid truncation below the state's n_max")
    groups = _mode_groups(state, mode)
    phases = np.exp(-1j * phi * np.arange(state.n_max + 1))
    density = np.zeros_like(grid.x)
    for rest in sorted(groups):
        wave = (groups[rest] * phases) @ grid.psi[: state.n_max + 1]
        density += np.abs(wave) ** 2
    return grid.x, density / state.norm_sq()


def homodyne_cdf(state: PureState, mode: int, phi: float = 0.0,
                 grid: QuadratureGrid | None = None):
    """Tabulated (x, pdf, cdf) of the quadrature X_phi of one mode.

    The cdf is the trapezoid integral of the pdf; its last entry is the
    total weight (1 up to grid truncation).  ``np.interp(u * cdf[-1],
    cdf, x)`` inverts it.
    """
    if grid is None:
        grid = make_grid(state.n_max)
    grid_x, density = homodyne_density(state, mode, phi, grid)
    cdf = np.concatenate(
        ([0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * grid.dx)))
    return grid_x, density, cdf


def homodyne_sample(state: PureState, mode: int, phi: float,
                    rng: np.random.Generator,
                    grid: QuadratureGrid | None = None) -> MeasurementOutcome:
    """Sample the quadrature X_phi of one mode by inverse-CDF lookup.

    The marginal density is tabulated on the grid, integrated with the
    trapezoid rule, and inverted by linear interpolation.  The posterior
    follows by projecting the mode onto the bra with coefficients
    psi_n(x) e^{-i n phi}.
    """
    if grid is None:
        grid = make_grid(state.n_max)
    grid_x, density, cdf = homodyne_cdf(state, mode, phi, grid)
    phases = np.exp(-1j * phi * np.arange(state.n_max + 1))
    x_val = float(np.interp(rng.random() * cdf[-1], cdf, grid_x))
    bra = quad_psi_vector(state.n_max, x_val) * phases
    _, posterior = project_mode(state, mode, bra)
    p_val = float(np.interp(x_val, grid.x, density))
    return MeasurementOutcome(kind="homodyne", value=x_val, posterior=posterior,
                              density=p_val, lo_phase=phi)


def quad_psi_vector(n_max: int, x: float) -> np.ndarray:
    """psi_n(x) for n = 0..n_max at one point."""
    out = np.empty(n_max + 1)
    prev = 0.0
    cur = (2.0 * math.pi) ** (-0.25) * math.exp(-0.25 * x * x)
    out[0] = cur
    for k in range(n_max):
        prev, cur = cur, (x * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
        out[k + 1] = cur
    return out


@dataclass
class ApmDensity:
    """Analytic outcome density of the APM on a given mode.

    p(theta) = (1 + 2 Re(z e^{-i theta})) / 2 pi on [0, 2 pi), where z
    is the overlap <rho_0|rho_1> between the conditional states of the
    rest of the system given 0 or 1 photons in the measured mode.
    """

    z: complex

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return (1.0 + 2.0 * (self.z * np.exp(-1j * theta)).real) / (2.0 * math.pi)

    def cdf(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        osc = 2.0 * (self.z * (1.0 - np.exp(-1j * theta))).imag
        return (theta + osc) / (2.0 * math.pi)

    @property
    def max_density(self) -> float:
        return (1.0 + 2.0 * abs(self.z)) / (2.0 * math.pi)


def _apm_overlap(state: PureState, mode: int) -> complex:
    """Compute z = <rho_0|rho_1> after validating the occupation support."""
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode {mode} out of range for {state.n_modes} modes")
    total = state.norm_sq()
    over = sum(abs(amp) ** 2 for occ, amp in state.items() if occ[mode] >= 2) / total
    if over > APM_OCCUPATION_TOL:
        raise OverOccupiedError(
            f"mode {mode} carries weight {over:.3g} on occupations >= 2"
        )
    z = 0.0 + 0.0j
    groups = _mode_groups(state, mode)
    for rest in sorted(groups):
        vec = groups[rest]
        z += vec[0].conjugate() * vec[1]
    return z / total


def apm_density(state: PureState, mode: int) -> ApmDensity:
    """Analytic APM outcome density for ``mode``."""
    return ApmDensity(z=_apm_overlap(state, mode))


def apm_sample(state: PureState, mode: int, rng: np.random.Generator) -> MeasurementOutcome:
    """Sample the APM by rejection against a flat envelope.

    The envelope is the density maximum, so acceptance is at least
    1/2 per iteration (|z| <= 1/2).
    """
    dens = apm_density(state, mode)
    bound = dens.max_density
    while True:
        theta = rng.random() * 2.0 * math.pi
        p = float(dens(theta))
        if rng.random() * bound <= p:
            break
    bra = np.array([1.0, cmath.exp(-1j * theta)])
    _, posterior = project_mode(state, mode, bra)
    return MeasurementOutcome(kind="apm", value=theta, posterior=posterior, density=p)


def apm_completeness(n_points: int = 4096) -> np.ndarray:
    """Numerical integral of |theta><theta| / 2 pi over the outcome circle.

    Returns the 2x2 matrix on span(|0>, |1>); equals the identity when
    the effects resolve to a proper POVM.
    """
    theta = 2.0 * math.pi * np.arange(n_points) / n_points
    e = np.exp(1j * theta)
    return np.array([
        [np.mean(np.ones_like(theta)), np.mean(e.conjugate())],
        [np.mean(e), np.mean(np.ones_like(theta))],
    ])

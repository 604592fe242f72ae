"""Closed-loop simulation of leader-following consensus and the distributed observer.

Two independent solvers share one scenario description:

* :func:`propagate_exact` advances the stacked error ``x_bar = x - 1 (x) x_0``
  phase by phase with ``Xi_j(s) = P (x) e^{As} + Gamma_bar e^{M_j s} Gamma_bar^T``,
  where ``P`` projects onto ``ker H`` and ``M_j`` is block diagonal in the
  nonzero eigenvalues of ``H``.
* :func:`integrate_rk4` integrates the raw agent dynamics of leader and
  followers with classical Runge-Kutta on a switch-aligned grid.

Both are parameterized by the coupling matrix ``G``: ``B K`` for consensus and
``L C`` for the observer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .netgraph import TIME_RTOL, SwitchingSchedule, leader_follower_matrix
from .numkit import matrix_exp
from .spectral import SpectralSplit, topology_split
from .synthesis import GainDesign, PlantModel

MODES = ("consensus", "observer")
# Internal RK4 substeps keep h * spectral_radius(generator) below this.
RK4_STABILITY_TARGET = 0.1


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to simulate one closed loop.

    ``initial_followers`` holds follower states in consensus mode and
    observer states in observer mode.
    """

    plant: PlantModel
    schedule: SwitchingSchedule
    design: GainDesign
    initial_leader: np.ndarray
    initial_followers: np.ndarray
    horizon: float
    sample_step: float
    mode: str = "consensus"

    def __post_init__(self):
        n = self.plant.n
        N = self.schedule.n_followers
        x0 = np.array(self.initial_leader, dtype=float).reshape(-1)
        xf = np.array(self.initial_followers, dtype=float)
        if x0.shape != (n,):
            raise ValidationError(f"initial_leader must have {n} entries, got {x0.shape}")
        if xf.shape != (N, n):
            raise ValidationError(f"initial_followers must be {N}x{n}, got {xf.shape}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        shortest = min(d for _, d in self.schedule.phases)
        if not 0 < self.sample_step <= shortest * (1 + TIME_RTOL):
            raise ValidationError(
                f"sample_step must lie in (0, {shortest:.6g}] (shortest phase), "
                f"got {self.sample_step}"
            )
        x0.setflags(write=False)
        xf.setflags(write=False)
        object.__setattr__(self, "initial_leader", x0)
        object.__setattr__(self, "initial_followers", xf)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "sample_step", float(self.sample_step))

    @property
    def coupling(self) -> np.ndarray:
        return self.design.coupling(self.plant, self.mode)

    @property
    def n_samples(self) -> int:
        """Number of sample intervals; samples sit at ``k * sample_step``."""
        return int(math.floor(self.horizon / self.sample_step + 1e-9))

    def with_mode(self, mode: str) -> "Scenario":
        return Scenario(
            self.plant,
            self.schedule,
            self.design,
            self.initial_leader,
            self.initial_followers,
            self.horizon,
            self.sample_step,
            mode,
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled leader and agent states plus the stacked error norm."""

    times: np.ndarray
    leader_states: np.ndarray
    agent_states: np.ndarray
    mode: str
    error_norms: np.ndarray

    def __post_init__(self):
        for name in ("times", "leader_states", "agent_states", "error_norms"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def errors(self) -> np.ndarray:
        """Per-sample ``x_i - x_0`` blocks, shape (samples, N, n)."""
        return self.agent_states - self.leader_states[:, None, :]

    @property
    def n_agents(self) -> int:
        return self.agent_states.shape[1] if self.agent_states.ndim == 3 else 0

    @classmethod
    def from_errors(cls, times, leader, errors, mode):
        errors = np.asarray(errors, dtype=float)
        leader = np.asarray(leader, dtype=float)
        norms = np.linalg.norm(errors.reshape(len(times), -1), axis=1)
        return cls(np.asarray(times, dtype=float), leader, errors + leader[:, None, :], mode, norms)


def phase_sequence(schedule: SwitchingSchedule, horizon: float):
    """``(phase_index, start, duration)`` for every phase intersecting ``[0, horizon]``.

    The schedule repeats with its period; the final phase is truncated at the
    horizon.
    """
    out = []
    t = 0.0
    k = 0
    n_phases = len(schedule.phases)
    # Accumulate from integer period counts to avoid drifting start times.
    offsets = np.concatenate([[0.0], np.cumsum([d for _, d in schedule.phases])])
    period = offsets[-1]
    while True:
        cycle, j = divmod(k, n_phases)
        t = cycle * period + offsets[j]
        if t >= horizon - TIME_RTOL * max(1.0, horizon):
            break
        d = schedule.phases[j][1]
        out.append((j, t, min(d, horizon - t)))
        k += 1
    return out


def _sample_layout(scenario: Scenario):
    """Sample times and the phase each sample falls into."""
    h = scenario.sample_step
    times = np.arange(scenario.n_samples + 1) * h
    phases = phase_sequence(scenario.schedule, scenario.horizon)
    starts = np.array([t for _, t, _ in phases])
    slack = TIME_RTOL * max(1.0, scenario.horizon)
    owner = np.searchsorted(starts, times + slack, side="right") - 1
    return times, phases, owner


def _mode_blocks(A, G, split: SpectralSplit, s):
    """``e^{(A - lambda_p G) s}`` for every nonzero eigenvalue ``lambda_p``."""
    return np.array([matrix_exp((A - lam * G) * s) for lam in split.range_eigenvalues])


def phase_transition(A, G, split: SpectralSplit, s):
    """``(Psi, Phi)`` as explicit ``Nn x Nn`` matrices for offset ``s`` in a phase."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    Psi = np.kron(split.projector, matrix_exp(A * s))
    r = split.range_basis.shape[1]
    Gamma_bar = np.kron(split.range_basis, np.eye(n))
    M = np.zeros((r * n, r * n))
    for p, lam in enumerate(split.range_eigenvalues):
        M[p * n : (p + 1) * n, p * n : (p + 1) * n] = A - lam * G
    Phi = Gamma_bar @ matrix_exp(M * s) @ Gamma_bar.T if r else np.zeros_like(Psi)
    return Psi, Phi


class _PhasePropagator:
    """Applies ``Xi_j(s)`` to an ``N x n`` error block, caching exponentials per offset."""

    def __init__(self, A, G, schedule: SwitchingSchedule):
        self.A = A
        self.G = G
        self.splits = {}
        for k in {k for k, _ in schedule.phases}:
            self.splits[k] = topology_split(schedule.topologies[k])
        self._cache = {}

    def _exps(self, k, s):
        key = (k, round(s, 12))
        hit = self._cache.get(key)
        if hit is None:
            hit = (matrix_exp(self.A * s), _mode_blocks(self.A, self.G, self.splits[k], s))
            self._cache[key] = hit
        return hit

    def leader(self, k, s, x0):
        return self._exps(k, s)[0] @ x0

    def apply(self, k, s, X):
        split = self.splits[k]
        EA, blocks = self._exps(k, s)
        out = split.projector @ X @ EA.T
        if len(blocks):
            Y = split.range_basis.T @ X
            Z = np.einsum("pij,pj->pi", blocks, Y)
            out = out + split.range_basis @ Z
        return out


def propagate_exact(scenario: Scenario) -> Trajectory:
    """Closed-form piecewise solution sampled every ``sample_step``.

    Within a phase each sample uses exponentials evaluated at its offset from
    the phase start; the state handed to the next phase uses the full-phase
    transition.
    """
    A = scenario.plant.A
    propagator = _PhasePropagator(A, scenario.coupling, scenario.schedule)
    times, phases, owner = _sample_layout(scenario)
    N, n = scenario.initial_followers.shape
    leader = np.empty((len(times), n))
    errors = np.empty((len(times), N, n))

    X = scenario.initial_followers - scenario.initial_leader
    x0 = scenario.initial_leader.copy()
    for idx, (j, start, duration) in enumerate(phases):
        k = scenario.schedule.phases[j][0]
        for i in np.flatnonzero(owner == idx):
            s = max(0.0, times[i] - start)
            errors[i] = propagator.apply(k, s, X)
            leader[i] = propagator.leader(k, s, x0)
        X = propagator.apply(k, duration, X)
        x0 = propagator.leader(k, duration, x0)
    return Trajectory.from_errors(times, leader, errors, scenario.mode)


def simulate_observer(scenario: Scenario) -> Trajectory:
    """Exact propagation of the estimation error ``eta_i - x_0`` driven by ``L C``."""
    if scenario.mode != "observer":
        scenario = scenario.with_mode("observer")
    return propagate_exact(scenario)


def agent_generator(A, G, H, leader_links) -> np.ndarray:
    """Generator of the stacked leader-plus-agents system for one topology.

    Agent ``i`` obeys ``x_i' = A x_i + G (sum_j a_ij (x_j - x_i) + d_i (x_0 - x_i))``;
    the leader obeys ``x_0' = A x_0``.
    """
    N = H.shape[0]
    L_bar = np.zeros((N + 1, N + 1))
    L_bar[1:, 1:] = H
    L_bar[1:, 0] = -np.asarray(leader_links)
    return np.kron(np.eye(N + 1), A) - np.kron(L_bar, G)


def rk4_substeps(F, h) -> int:
    rho = float(np.max(np.abs(np.linalg.eigvals(F)))) if F.size else 0.0
    return max(1, math.ceil(h * rho / RK4_STABILITY_TARGET))


def integrate_rk4(scenario: Scenario, substeps: Optional[int] = None) -> Trajectory:
    """Classical RK4 on the raw agent dynamics, switching exactly at phase boundaries.

    Each sample interval is split into ``substeps`` equal RK4 steps. By
    default the count is chosen per topology so that the step times the
    spectral radius of the generator stays at or below 0.1, which keeps
    high-gain designs inside the accurate region of the method.
    """
    h = scenario.sample_step
    slack = 1e-9
    times, phases, owner = _sample_layout(scenario)
    for _, start, _ in phases:
        ratio = start / h
        if abs(ratio - round(ratio)) > slack * max(1.0, ratio):
            raise ValidationError(
                f"phase boundary t = {start:.12g} is not a multiple of sample_step {h:.12g}"
            )

    A = scenario.plant.A
    G = scenario.coupling
    schedule = scenario.schedule
    gens = {}
    for k in {k for k, _ in schedule.phases}:
        topo = schedule.topologies[k]
        F = agent_generator(A, G, leader_follower_matrix(topo), topo.leader_links)
        gens[k] = (F, substeps if substeps is not None else rk4_substeps(F, h))

    N, n = scenario.initial_followers.shape
    z = np.concatenate([scenario.initial_leader, scenario.initial_followers.reshape(-1)])
    states = np.empty((len(times), N + 1, n))
    states[0] = z.reshape(N + 1, n)
    for i in range(1, len(times)):
        # The interval [t_{i-1}, t_i] lies inside the phase that owns t_{i-1}.
        k = schedule.phases[phases[owner[i - 1]][0]][0]
        F, m = gens[k]
        dt = h / m
        for _ in range(m):
            k1 = F @ z
            k2 = F @ (z + 0.5 * dt * k1)
            k3 = F @ (z + 0.5 * dt * k2)
            k4 = F @ (z + dt * k3)
            z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i] = z.reshape(N + 1, n)
    leader = states[:, 0, :]
    return Trajectory.from_errors(times, leader, states[:, 1:, :] - leader[:, None, :], scenario.mode)


def max_normalized_deviation(exact: Trajectory, other: Trajectory) -> float:
    """``max_t ||x_bar_exact - x_bar_other|| / (1 + ||x_bar_exact||)``."""
    if exact.times.shape != other.times.shape:
        raise ValidationError("trajectories have different sample grids")
    diff = (exact.errors - other.errors).reshape(len(exact.times), -1)
    return float(np.max(np.linalg.norm(diff, axis=1) / (1.0 + exact.error_norms)))

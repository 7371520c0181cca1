"""Double-integrator UAV dynamics, fixed-wing propulsion energy and EE accounting.

States stack velocity and position, ``x = [vx, vy, qx, qy]``. Per axis the
step is ``x' = W x + Z a`` with ``W = [[1, 0], [dt, 1]]`` and
``Z = [dt, dt^2 / 2]``.

Bits and propulsion energy are left Riemann sums over the S control
intervals, each multiplied by ``dt`` so the totals are in bits and joules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .channel import build_channels
from .errors import InfeasibleError, ModelDomainError, StallError
from .phase import optimal_phases, snr_closed_form
from .scenario import ScenarioConfig, UserSet, Violation

__all__ = [
    "State",
    "TrajectoryLog",
    "StepRecord",
    "transition_matrices",
    "step",
    "rollout",
    "rollout_closed_form",
    "propulsion_power",
    "propulsion_energies",
    "kinetic_term",
    "total_energy",
    "step_rates",
    "total_bits",
    "energy_efficiency",
    "baseline_constant_acceleration",
    "check_constraints",
    "evaluate_trajectory",
]


class State(NamedTuple):
    velocity: np.ndarray
    position: np.ndarray

    @classmethod
    def initial(cls, config: ScenarioConfig) -> "State":
        return cls(np.array(config.initial_velocity, dtype=float), np.array(config.start_pos, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.position])

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        return cls(x[:2].copy(), x[2:].copy())


def transition_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Full 4-state ``(W, Z)`` for the stacked state ``[v, q]``."""
    w = np.array([[1.0, 0.0], [dt, 1.0]])
    z = np.array([[dt], [0.5 * dt * dt]])
    eye = np.eye(2)
    return np.kron(w, eye), np.kron(z, eye)


def step(x: State, a, dt: float) -> State:
    a = np.asarray(a, dtype=float)
    v, q = x
    return State(v + a * dt, q + v * dt + 0.5 * a * dt * dt)


def rollout(x0: State, controls, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocities and positions, each (S + 1, 2), by step recursion."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    if len(controls) < 1:
        raise ValueError("rollout needs at least one control")
    vel = np.empty((len(controls) + 1, 2))
    pos = np.empty_like(vel)
    vel[0], pos[0] = x0
    for s, a in enumerate(controls):
        vel[s + 1] = vel[s] + a * dt
        pos[s + 1] = pos[s] + vel[s] * dt + 0.5 * a * dt * dt
    return vel, pos


def rollout_closed_form(x0: State, controls, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``x[s] = W^s x0 + sum_{k<s} W^k Z a[s-1-k]`` evaluated independently of :func:`rollout`."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    w, z = transition_matrices(dt)
    x0v = np.asarray(x0.as_vector() if isinstance(x0, State) else x0, dtype=float)
    n = len(controls)
    powers = [np.eye(4)]
    for _ in range(n):
        powers.append(powers[-1] @ w)
    states = np.empty((n + 1, 4))
    for s in range(n + 1):
        x = powers[s] @ x0v
        for k in range(s):
            x = x + powers[k] @ z @ controls[s - 1 - k]
        states[s] = x
    return states[:, :2], states[:, 2:]


def propulsion_power(v, a, config: ScenarioConfig) -> float:
    """Fixed-wing propulsion power in watts."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    speed = float(np.hypot(*v))
    if speed < config.v_min:
        raise StallError(f"speed {speed:.6g} m/s below v_min = {config.v_min}")
    lateral = a @ a - (a @ v) ** 2 / speed**2
    return float(config.energy_c1 * speed**3
                 + config.energy_c2 / speed * (1.0 + lateral / config.gravity**2))


def propulsion_energies(velocities, controls, config: ScenarioConfig) -> np.ndarray:
    """Per-interval propulsion energy ``dt * P(v[s], a[s])`` in joules."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    return np.array([config.dt * propulsion_power(velocities[s], a, config) for s, a in enumerate(controls)])


def kinetic_term(velocities, config: ScenarioConfig) -> float:
    v = np.asarray(velocities, dtype=float)
    return float(0.5 * config.uav_mass * (v[-1] @ v[-1] - v[0] @ v[0]))


def total_energy(velocities, controls, config: ScenarioConfig, time_weighted: bool = True) -> float:
    """Propulsion energy plus kinetic change.

    With ``time_weighted=False`` the whole energy is expressed per unit step
    (divided by ``dt``), the convention that leaves EE unchanged.
    """
    e = float(propulsion_energies(velocities, controls, config).sum()) + kinetic_term(velocities, config)
    return e if time_weighted else e / config.dt


PhaseRule = Callable[[np.ndarray], np.ndarray]


def step_rates(position, users: UserSet, config: ScenarioConfig, phase_rule: PhaseRule | None = None,
               seed: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-user (rate in bit/s, SNR, phases) at one position."""
    seed = config.rng_seed if seed is None else seed
    q = np.asarray(position, dtype=float)
    ch = build_channels(q, users, config, seed)
    theta = optimal_phases(q, ch, users, config) if phase_rule is None else np.asarray(phase_rule(q))
    snr = np.array([snr_closed_form(q, theta, k, ch, config) for k in range(len(users))])
    rate = config.bandwidth / len(users) * np.log1p(snr) / np.log(2.0)
    return rate, snr, theta


def total_bits(positions, users: UserSet, config: ScenarioConfig, phase_rule: PhaseRule | None = None,
               time_weighted: bool = True) -> tuple[float, np.ndarray]:
    """Total bits over the S intervals and the per-user breakdown."""
    positions = np.asarray(positions, dtype=float)
    per_user = np.zeros(len(users))
    for q in positions[:-1]:
        rate, _, _ = step_rates(q, users, config, phase_rule)
        per_user += rate
    if time_weighted:
        per_user *= config.dt
    return float(per_user.sum()), per_user


def energy_efficiency(velocities, positions, controls, users: UserSet, config: ScenarioConfig,
                      phase_rule: PhaseRule | None = None, time_weighted: bool = True) -> float:
    """Bits per joule over the whole trajectory."""
    bits, _ = total_bits(positions, users, config, phase_rule, time_weighted)
    energy = total_energy(velocities, controls, config, time_weighted)
    if not energy > 0:
        raise ModelDomainError(f"non-positive total energy {energy:.6g} J")
    return bits / energy


def baseline_constant_acceleration(config: ScenarioConfig) -> np.ndarray:
    """Constant acceleration reaching the target at T = S dt, as S copies.

    Raises InfeasibleError when the resulting flight breaks the speed or
    acceleration limits.
    """
    t = config.mission_time
    u0, ut = np.array(config.start_pos), np.array(config.target_pos)
    v0 = np.array(config.initial_velocity)
    a = 2.0 * (ut - u0 - v0 * t) / t**2
    controls = np.tile(a, (config.num_steps, 1))
    vel, pos = rollout(State(v0, u0), controls, config.dt)
    bad = [v for v in check_constraints(vel, pos, controls, config) if v.field != "target_pos"]
    if bad:
        raise InfeasibleError("constant-acceleration baseline violates limits: "
                              + "; ".join(str(v) for v in bad),
                              residuals={v.field: v.message for v in bad})
    return controls


def check_constraints(velocities, positions, controls, config: ScenarioConfig) -> list[Violation]:
    s = config.solver
    tol_v = s.eps_limit * config.v_max
    tol_a = s.eps_limit * config.a_max
    out = []
    speeds = np.hypot(velocities[:, 0], velocities[:, 1])
    for i, sp in enumerate(speeds):
        if sp > config.v_max + tol_v:
            out.append(Violation(f"v[{i}]", f"|v| = {sp:.9g} > v_max = {config.v_max}", "feasibility"))
        if sp < config.v_min - s.eps_limit * config.v_min:
            out.append(Violation(f"v[{i}]", f"|v| = {sp:.9g} < v_min = {config.v_min}", "feasibility"))
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    for i, acc in enumerate(np.hypot(controls[:, 0], controls[:, 1])):
        if acc > config.a_max + tol_a:
            out.append(Violation(f"a[{i}]", f"|a| = {acc:.9g} > a_max = {config.a_max}", "feasibility"))
    if not np.allclose(positions[0], config.start_pos, rtol=0, atol=1e-9):
        out.append(Violation("start_pos", f"q[0] = {positions[0].tolist()} != start", "feasibility"))
    miss = float(np.linalg.norm(positions[-1] - np.asarray(config.target_pos)))
    if miss > s.eps_pos:
        out.append(Violation("target_pos", f"|q[S] - u_T| = {miss:.6g} m > eps_pos = {s.eps_pos}",
                             "feasibility"))
    return out


@dataclass
class StepRecord:
    step: int
    velocity: np.ndarray
    position: np.ndarray
    accel: np.ndarray
    phases: np.ndarray
    snr: np.ndarray
    bits: np.ndarray       # per user, over this interval
    step_energy: float     # propulsion energy of this interval


@dataclass
class TrajectoryLog:
    velocities: np.ndarray
    positions: np.ndarray
    controls: np.ndarray
    steps: list[StepRecord]
    terminal_snr: np.ndarray
    kinetic_energy: float
    total_bits: float
    total_energy: float
    ee: float
    config: ScenarioConfig = field(repr=False)

    @property
    def terminal_error(self) -> float:
        return float(np.linalg.norm(self.positions[-1] - np.asarray(self.config.target_pos)))

    def per_user_bits(self) -> np.ndarray:
        return np.sum([s.bits for s in self.steps], axis=0)

    def step_bits(self) -> np.ndarray:
        return np.array([s.bits.sum() for s in self.steps])


def evaluate_trajectory(controls, users: UserSet, config: ScenarioConfig,
                        phase_rule: PhaseRule | None = None) -> TrajectoryLog:
    """Roll out ``controls`` from the scenario's initial state and account every step."""
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    vel, pos = rollout(State.initial(config), controls, config.dt)
    steps = []
    for s, a in enumerate(controls):
        rate, snr, theta = step_rates(pos[s], users, config, phase_rule)
        energy = config.dt * propulsion_power(vel[s], a, config)
        steps.append(StepRecord(s, vel[s].copy(), pos[s].copy(), a.copy(), theta, snr, rate * config.dt, energy))
    _, terminal_snr, _ = step_rates(pos[-1], users, config, phase_rule)
    bits = float(sum(r.bits.sum() for r in steps))
    kin = kinetic_term(vel, config)
    energy = float(sum(r.step_energy for r in steps)) + kin
    if not energy > 0:
        raise ModelDomainError(f"non-positive total energy {energy:.6g} J")
    return TrajectoryLog(vel, pos, controls, steps, terminal_snr, kin, bits, energy, bits / energy, config)

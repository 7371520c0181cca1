"""Receding-horizon (economic MPC) trajectory design for the aerial RIS.

At every closed-loop step the controller maximizes the energy efficiency of a
finite horizon over the acceleration sequence, with RIS phases eliminated
through the least-squares phase map, applies the first acceleration and
re-solves from the new state.

Each horizon problem is solved by projected gradient ascent:

* accelerations are projected onto the ``a_max`` ball after every step;
* ``v_max`` and the terminal condition enter as quadratic penalties with
  first-order multiplier updates (an augmented Lagrangian); a weight grows
  by ``penalty_growth`` whenever its residual stalls;
* ``v_min`` and a positive energy denominator are hard (the line search
  rejects violating points);
* gradients come from central finite differences, step sizes from
  Barzilai-Borwein with Armijo backtracking, so every accepted iterate
  increases the penalized objective;
* a last Gauss-Newton restoration removes residual violations that the
  ascent left just above tolerance.

Mid-flight, the terminal condition becomes two reachability inequalities
over the ``L`` steps left after the horizon: the target must lie within
``v_max * L * dt`` of the horizon end point, and within
``margin * a_max * dt^2 * L^2 / 2`` of the point reached by coasting at the
horizon-end velocity. Both are necessary for arrival; the margin keeps
later horizons from inheriting a boundary case. Once the horizon reaches
the end of the mission the condition is an arrival equality.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InfeasibleError, ModelDomainError, StallError
from .flight import State, TrajectoryLog, check_constraints, evaluate_trajectory, step
from .scenario import ScenarioConfig, SolverSettings, UserSet

__all__ = [
    "HorizonProblem",
    "IterationLog",
    "horizon_objective",
    "horizon_terms",
    "penalized_objective",
    "fd_gradient",
    "solve_horizon",
    "run_receding_horizon",
    "project_ball",
]

log = logging.getLogger(__name__)

_ARMIJO = 1e-4
_LINE_SEARCH_STEPS = 30
_MAX_PENALTY_RATIO = 1e12
_INNER_ITERS = 40
_LINE_SEARCH_CHUNK = 6
_RESIDUAL_DROP = 0.25
_REACH_MARGIN = 0.8


@dataclass(frozen=True)
class HorizonProblem:
    state: State
    steps_remaining: int
    horizon: int
    config: ScenarioConfig
    users: UserSet

    @property
    def horizon_eff(self) -> int:
        return min(self.horizon, self.steps_remaining)

    @property
    def slack_steps(self) -> int:
        return self.steps_remaining - self.horizon_eff

    @property
    def target(self) -> np.ndarray:
        return np.asarray(self.config.target_pos, dtype=float)


@dataclass
class IterationLog:
    objective: list = field(default_factory=list)   # EE of the iterate, bits/J
    penalized: list = field(default_factory=list)   # scaled penalized objective
    grad_norm: list = field(default_factory=list)   # projected-gradient norm
    penalty: list = field(default_factory=list)     # terminal penalty weight
    residual_terminal: list = field(default_factory=list)  # meters
    residual_speed: list = field(default_factory=list)     # m/s over v_max
    outer: list = field(default_factory=list)  # multiplier-update round; penalized is monotone within one

    def append(self, objective, penalized, grad_norm, penalty, res_t, res_v, outer=0):
        self.outer.append(int(outer))
        self.objective.append(float(objective))
        self.penalized.append(float(penalized))
        self.grad_norm.append(float(grad_norm))
        self.penalty.append(float(penalty))
        self.residual_terminal.append(float(res_t))
        self.residual_speed.append(float(res_v))

    def __len__(self):
        return len(self.objective)

    @property
    def best_objective(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.objective)) if self.objective else np.zeros(0)


class _Evaluator:
    """Kernel constants for one scenario; evaluates candidate batches."""

    def __init__(self, config: ScenarioConfig, users: UserSet):
        self.config = config
        self.users_xy = np.ascontiguousarray(users.xy)
        self.psi = 2.0 * np.pi * config.elem_sep_ris / config.wavelength
        self.unit_phase = np.asarray(_kernels.unit_phase_direction(config.num_ris_elements))
        self.coef = (config.num_bs_antennas * config.tx_power_per_user / config.noise_power
                     * config.ref_path_loss**2)
        self.bw_user = config.bandwidth / len(users)

    def __call__(self, x0, controls):
        c = self.config
        return _kernels.evaluate_batch(
            x0, controls, c.dt, self.users_xy, c.altitude, self.psi, self.unit_phase, self.coef,
            self.bw_user, c.energy_c1, c.energy_c2, c.gravity, c.uav_mass)


_EVALUATORS: dict = {}


def _evaluator(problem: HorizonProblem) -> _Evaluator:
    key = (id(problem.config), id(problem.users))
    ev = _EVALUATORS.get(key)
    if ev is None or ev.config is not problem.config:
        if len(_EVALUATORS) > 32:
            _EVALUATORS.clear()
        ev = _EVALUATORS[key] = _Evaluator(problem.config, problem.users)
    return ev


def _check_controls(problem: HorizonProblem, controls) -> np.ndarray:
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    if len(controls) != problem.horizon_eff:
        raise ValueError(f"expected {problem.horizon_eff} controls, got {len(controls)}")
    return controls


def horizon_terms(problem: HorizonProblem, controls) -> dict:
    """Bits, propulsion and kinetic energy, speeds and end position of one candidate."""
    controls = _check_controls(problem, controls)
    bits, prop, kin, speeds, q_end = _evaluator(problem)(problem.state.as_vector(), controls[None])
    return {"bits": bits[0], "propulsion": prop[0], "kinetic": kin[0], "speeds": speeds[0], "q_end": q_end[0]}


def horizon_objective(problem: HorizonProblem, controls) -> float:
    """Energy efficiency (bits/J) of the predicted horizon trajectory; to be maximized."""
    t = horizon_terms(problem, controls)
    v_min = problem.config.v_min
    low = t["speeds"][:-1].min()
    if low < v_min:
        raise StallError(f"predicted speed {low:.6g} m/s below v_min = {v_min}")
    energy = t["propulsion"] + t["kinetic"]
    if not energy > 0:
        raise ModelDomainError(f"non-positive horizon energy {energy:.6g} J")
    return float(t["bits"] / energy)


def project_ball(controls, radius: float) -> np.ndarray:
    """Project every row onto the Euclidean ball of ``radius``."""
    controls = np.array(controls, dtype=float)
    norms = np.hypot(controls[..., 0], controls[..., 1])
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return controls * scale[..., None]


@dataclass
class _Multipliers:
    """Augmented-Lagrangian state: penalty weights and first-order multipliers.

    With zero multipliers the terms reduce to the plain quadratic penalties
    ``rho / 2 * residual^2``. Residuals are normalized: terminal by
    ``eps_pos``, speed excess by ``v_max``.
    """
    terminal: float
    speed: float
    lam_terminal: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mu_reach: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mu_speed: np.ndarray | None = None


def _end_velocity(problem, batch):
    return problem.state.velocity + problem.config.dt * np.asarray(batch).sum(axis=1)


def _reach_excess(problem, q_end, v_end):
    cfg = problem.config
    lag, dt = problem.slack_steps, cfg.dt
    miss = np.linalg.norm(q_end - problem.target, axis=1)
    coast = np.linalg.norm(q_end + lag * dt * v_end - problem.target, axis=1)
    return (miss - cfg.v_max * lag * dt,
            coast - _REACH_MARGIN * 0.5 * cfg.a_max * dt * dt * lag * lag)


def _constraint_values(problem, speeds, q_end, v_end):
    """Normalized constraint functions for a batch.

    Returns ``(terminal, speed)``. ``terminal`` is (P, 2): arrival offsets when
    no slack remains, else the speed-reach and acceleration-reach excesses;
    ``speed`` is (P, S0).
    """
    cfg = problem.config
    eps = cfg.solver.eps_pos
    if problem.slack_steps == 0:
        term = (q_end - problem.target) / eps
    else:
        term = np.column_stack(_reach_excess(problem, q_end, v_end)) / eps
    return term, (speeds[:, 1:] - cfg.v_max) / cfg.v_max


def _penalty(problem, term, speed, mult: _Multipliers):
    if problem.slack_steps == 0:
        pen = term @ mult.lam_terminal + 0.5 * mult.terminal * np.sum(term**2, axis=1)
    else:
        r = mult.terminal
        pen = np.sum(np.maximum(0.0, mult.mu_reach + r * term) ** 2 - mult.mu_reach**2, axis=1) / (2 * r)
    mu_v = np.zeros(speed.shape[1]) if mult.mu_speed is None else mult.mu_speed
    r = mult.speed
    pen = pen + np.sum(np.maximum(0.0, mu_v + r * speed) ** 2 - mu_v**2, axis=1) / (2 * r)
    return pen


def _batch_values(problem, batch, scale, mult: _Multipliers):
    """Penalized objective, EE and residuals (m, m/s) for a batch of candidates."""
    cfg = problem.config
    bits, prop, kin, speeds, q_end = _evaluator(problem)(problem.state.as_vector(), batch)
    energy = prop + kin
    with np.errstate(divide="ignore", invalid="ignore"):
        ee = np.where(energy > 0, bits / energy, -np.inf)
    term, speed = _constraint_values(problem, speeds, q_end, _end_velocity(problem, batch))
    value = ee / scale - _penalty(problem, term, speed, mult)
    hard = (speeds.min(axis=1) < cfg.v_min) | ~(energy > 0) | ~np.isfinite(energy)
    value = np.where(hard, -np.inf, value)
    eps = cfg.solver.eps_pos
    if problem.slack_steps == 0:
        res_t = np.linalg.norm(term, axis=1) * eps
    else:
        res_t = np.maximum(0.0, term.max(axis=1)) * eps
    res_v = np.maximum(0.0, speed.max(axis=1)) * cfg.v_max
    return value, ee, res_t, res_v


def _default_multipliers(settings: SolverSettings) -> _Multipliers:
    return _Multipliers(settings.penalty_weight_terminal, settings.penalty_weight_speed)


def penalized_objective(problem: HorizonProblem, controls, scale: float = 1.0,
                        weight_terminal: float | None = None, weight_speed: float | None = None) -> float:
    """Quadratic-penalty objective (zero multipliers) of one candidate."""
    s = problem.config.solver
    m = _Multipliers(s.penalty_weight_terminal if weight_terminal is None else weight_terminal,
                     s.penalty_weight_speed if weight_speed is None else weight_speed)
    controls = _check_controls(problem, controls)
    value, _, _, _ = _batch_values(problem, controls[None], scale, m)
    return float(value[0])


def _fd_probes(controls, eps):
    flat = controls.ravel()
    n = flat.size
    plus = np.tile(flat, (n, 1)) + eps * np.eye(n)
    minus = np.tile(flat, (n, 1)) - eps * np.eye(n)
    return np.vstack([plus, minus]).reshape(2 * n, *controls.shape)


def _fd_from_values(center, vals, eps):
    n = vals.size // 2
    fp, fm = vals[:n], vals[n:]
    g = (fp - fm) / (2 * eps)
    # One-sided where a probe hit the hard floor.
    g = np.where(np.isfinite(fp) & ~np.isfinite(fm), (fp - center) / eps, g)
    g = np.where(~np.isfinite(fp) & np.isfinite(fm), (center - fm) / eps, g)
    return np.where(np.isfinite(g), g, 0.0)


def fd_gradient(problem: HorizonProblem, controls, eps: float | None = None, scale: float = 1.0,
                weights: _Multipliers | None = None) -> np.ndarray:
    """Central finite-difference gradient of the penalized objective."""
    s = problem.config.solver
    eps = s.fd_epsilon if eps is None else eps
    weights = weights or _default_multipliers(s)
    controls = _check_controls(problem, controls)
    center, _, _, _ = _batch_values(problem, controls[None], scale, weights)
    vals, _, _, _ = _batch_values(problem, _fd_probes(controls, eps), scale, weights)
    return _fd_from_values(center[0], vals, eps).reshape(controls.shape)


def _update_multipliers(problem, a, mult: _Multipliers):
    _, _, _, speeds, q_end = _evaluator(problem)(problem.state.as_vector(), a[None])
    term, speed = _constraint_values(problem, speeds, q_end, _end_velocity(problem, a[None]))
    if problem.slack_steps == 0:
        mult.lam_terminal = mult.lam_terminal + mult.terminal * term[0]
    else:
        mult.mu_reach = np.maximum(0.0, mult.mu_reach + mult.terminal * term[0])
    mu_v = np.zeros(speed.shape[1]) if mult.mu_speed is None else mult.mu_speed
    mult.mu_speed = np.maximum(0.0, mu_v + mult.speed * speed[0])


def _restore(problem, a, tol_t, tol_v, residuals, iters: int = 20):
    """Gauss-Newton feasibility restoration for the end of an ascent.

    Arrival offsets are linear in the controls and speeds are norms of
    linear maps, so the minimum-norm correction of the violated constraints
    converges in a few steps. Returns the original controls when it fails.
    """
    cfg = problem.config
    dt, s0 = cfg.dt, problem.horizon_eff
    v0, q0 = problem.state
    # q_end = q0 + s0 dt v0 + sum_k lever_k a_k;  v_s = v0 + dt sum_{k<s} a_k
    lever = dt * dt * (s0 - np.arange(s0) - 0.5)
    lag = problem.slack_steps
    reach = cfg.v_max * lag * dt
    accel_reach = _REACH_MARGIN * 0.5 * cfg.a_max * dt * dt * lag * lag
    x = a.copy()
    for _ in range(iters):
        vel = v0 + dt * np.vstack([np.zeros(2), np.cumsum(x, axis=0)])
        q_end = q0 + s0 * dt * v0 + lever @ x
        rows, rhs = [], []
        off = q_end - problem.target
        miss = float(np.hypot(*off))
        if problem.slack_steps == 0:
            if miss > 0.5 * tol_t:
                for axis in range(2):
                    row = np.zeros((s0, 2))
                    row[:, axis] = lever
                    rows.append(row.ravel())
                    rhs.append(-off[axis])
        else:
            if miss > reach:
                rows.append((lever[:, None] * off / miss).ravel())
                rhs.append(reach - miss)
            # Coasting offset: d(q_end + lag dt v_end)/d a_k = lever_k + lag dt^2.
            coast = off + lag * dt * vel[-1]
            dist = float(np.hypot(*coast))
            if dist > accel_reach:
                rows.append(((lever + lag * dt * dt)[:, None] * coast / dist).ravel())
                rhs.append(accel_reach - dist)
        speeds = np.hypot(vel[:, 0], vel[:, 1])
        for s in range(1, s0 + 1):
            if speeds[s] > cfg.v_max - 0.5 * tol_v:
                row = np.zeros((s0, 2))
                row[:s] = dt * vel[s] / speeds[s]
                rows.append(row.ravel())
                rhs.append(cfg.v_max - 0.5 * tol_v - speeds[s])
        if not rows:
            break
        jac = np.asarray(rows)
        x = project_ball(x + (np.linalg.pinv(jac) @ np.asarray(rhs)).reshape(s0, 2), cfg.a_max)
    mult = _default_multipliers(cfg.solver)
    value, _, rt, rv = _batch_values(problem, x[None], 1.0, mult)
    if np.isfinite(value[0]) and rt[0] <= tol_t and rv[0] <= tol_v:
        return x, float(rt[0]), float(rv[0])
    return (a, *residuals)


def solve_horizon(problem: HorizonProblem, settings: SolverSettings | None = None, warm_start=None):
    """Locally maximize the horizon EE; returns ``(controls, IterationLog)``.

    Inner loop: projected gradient ascent on the augmented objective with
    fixed multipliers. Whenever it stalls (or runs ``_INNER_ITERS``
    iterations) the multipliers take a first-order update, and a penalty
    weight grows by ``penalty_growth`` if its residual did not shrink by
    ``_RESIDUAL_DROP``. Stops once feasible and stationary.

    Raises InfeasibleError when the residuals stay above ``eps_pos`` /
    ``eps_limit * v_max`` after ``max_iters`` iterations.
    """
    cfg = problem.config
    settings = settings or cfg.solver
    s0 = problem.horizon_eff
    a = np.zeros((s0, 2)) if warm_start is None else np.array(warm_start, dtype=float).reshape(s0, 2)
    a = project_ball(a, cfg.a_max)
    mult = _default_multipliers(settings)
    tol_t, tol_v = settings.eps_pos, settings.eps_limit * cfg.v_max

    value, ee, res_t, res_v = _batch_values(problem, a[None], 1.0, mult)
    if not np.isfinite(value[0]):
        a = np.zeros((s0, 2))
        value, ee, res_t, res_v = _batch_values(problem, a[None], 1.0, mult)
        if not np.isfinite(value[0]):
            raise InfeasibleError("no admissible warm start (stall or non-positive energy)",
                                  residuals={"terminal": float(res_t[0]), "speed": float(res_v[0])})
    scale = abs(float(ee[0])) or 1.0
    res_t, res_v, ee = float(res_t[0]), float(res_v[0]), float(ee[0])
    f = float(_batch_values(problem, a[None], scale, mult)[0][0])

    itlog = IterationLog()
    prev_a = prev_g = None
    t = None
    it = inner = rounds = 0
    last_t, last_v = res_t, res_v
    while it < settings.max_iters:
        vals, _, _, _ = _batch_values(problem, _fd_probes(a, settings.fd_epsilon), scale, mult)
        g = _fd_from_values(f, vals, settings.fd_epsilon).reshape(a.shape)
        pg = float(np.linalg.norm(project_ball(a + g, cfg.a_max) - a))
        itlog.append(ee, f, pg, mult.terminal, res_t, res_v, rounds)
        it += 1
        inner += 1

        accepted = False
        if pg >= settings.grad_tol:
            if prev_a is not None:
                ds, dy = (a - prev_a).ravel(), (g - prev_g).ravel()
                curv = -float(ds @ dy)
                if curv > 0:
                    t = float(np.clip(ds @ ds / curv, 1e-12, 1e12))
                else:
                    t = min(t * 4.0, 1e12)
            else:
                # step_init is the length (m/s^2) of the first trial move.
                t = settings.step_init / max(float(np.linalg.norm(g)), 1e-300)
            steps = t * 0.5 ** np.arange(_LINE_SEARCH_STEPS)
            for lo in range(0, _LINE_SEARCH_STEPS, _LINE_SEARCH_CHUNK):
                chunk = steps[lo:lo + _LINE_SEARCH_CHUNK]
                trials = project_ball(a[None] + chunk[:, None, None] * g[None], cfg.a_max)
                tv, tee, tres_t, tres_v = _batch_values(problem, trials, scale, mult)
                gain = np.einsum("ijk,jk->i", trials - a, g)
                ok = np.flatnonzero((tv > f) & (tv >= f + _ARMIJO * gain))
                if ok.size:
                    j = int(ok[0])
                    prev_a, prev_g = a, g
                    a, f, ee = trials[j], float(tv[j]), float(tee[j])
                    res_t, res_v = float(tres_t[j]), float(tres_v[j])
                    t = float(chunk[j])
                    accepted = True
                    break

        feasible = res_t <= tol_t and res_v <= tol_v
        if accepted and inner < _INNER_ITERS:
            continue
        if not accepted and feasible:
            break
        # Outer update: multipliers, then weights where progress stalled.
        _update_multipliers(problem, a, mult)
        if res_t > tol_t and res_t > _RESIDUAL_DROP * last_t:
            mult.terminal *= settings.penalty_growth
        if res_v > tol_v and res_v > _RESIDUAL_DROP * last_v:
            mult.speed *= settings.penalty_growth
        if max(mult.terminal / settings.penalty_weight_terminal,
               mult.speed / settings.penalty_weight_speed) > _MAX_PENALTY_RATIO:
            break
        last_t, last_v = res_t, res_v
        f = float(_batch_values(problem, a[None], scale, mult)[0][0])
        prev_a = prev_g = None
        inner = 0
        rounds += 1

    if settings.max_iters > 0 and not (res_t <= tol_t and res_v <= tol_v):
        a, res_t, res_v = _restore(problem, a, tol_t, tol_v, (res_t, res_v))
    if settings.max_iters > 0 and not (res_t <= tol_t and res_v <= tol_v):
        raise InfeasibleError(
            f"horizon problem infeasible after penalty escalation "
            f"(terminal residual {res_t:.4g} m, speed excess {res_v:.4g} m/s)",
            residuals={"terminal": res_t, "speed": res_v})
    return a, itlog


def _warm_start(prev, plan, l, s0):
    if prev is None:
        if plan is not None:
            seg = np.asarray(plan, dtype=float)[l:l + s0]
            return np.vstack([seg, np.zeros((s0 - len(seg), 2))])
        return np.zeros((s0, 2))
    shifted = prev[1:1 + s0]
    fill_idx = l + len(shifted)
    fill = []
    for i in range(s0 - len(shifted)):
        if plan is not None and fill_idx + i < len(plan):
            fill.append(np.asarray(plan[fill_idx + i], dtype=float))
        else:
            fill.append(np.zeros(2))
    return np.vstack([shifted.reshape(-1, 2)] + [np.asarray(fill).reshape(-1, 2)])


def run_receding_horizon(config: ScenarioConfig, users: UserSet | None = None, initial_plan=None,
                         settings: SolverSettings | None = None):
    """Closed-loop EMPC flight; returns ``(TrajectoryLog, [IterationLog per step])``.

    ``initial_plan`` (S x 2) seeds the warm starts; with ``max_iters = 0`` the
    closed loop reproduces the plan exactly. When ``horizon >= num_steps``
    a single open-loop solve is applied wholesale.
    """
    users = config.users() if users is None else users
    settings = settings or config.solver
    total = config.num_steps
    x = State.initial(config)
    applied, logs = [], []
    prev = None

    if config.horizon >= total:
        problem = HorizonProblem(x, total, config.horizon, config, users)
        try:
            sol, itlog = solve_horizon(problem, settings, _warm_start(None, initial_plan, 0, total))
        except InfeasibleError as exc:
            exc.step = 0
            raise
        applied = list(sol)
        logs.append(itlog)
    else:
        for l in range(total):
            problem = HorizonProblem(x, total - l, config.horizon, config, users)
            warm = _warm_start(prev, initial_plan, l, problem.horizon_eff)
            try:
                sol, itlog = solve_horizon(problem, settings, warm)
            except InfeasibleError as exc:
                exc.step = l
                raise
            log.debug("step %d: %d iterations, EE %.6g", l, len(itlog), itlog.objective[-1] if len(itlog) else float("nan"))
            applied.append(sol[0])
            logs.append(itlog)
            x = step(x, sol[0], config.dt)
            prev = sol

    controls = np.asarray(applied)
    traj = evaluate_trajectory(controls, users, config)
    violations = check_constraints(traj.velocities, traj.positions, controls, config)
    if violations:
        raise InfeasibleError("closed-loop trajectory violates constraints: "
                              + "; ".join(str(v) for v in violations),
                              residuals={v.field: v.message for v in violations}, step=total)
    return traj, logs

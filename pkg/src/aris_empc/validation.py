"""Fast self-checks behind ``aris-empc validate``.

Each check compares a production routine with an independent route to the
same number: literal matrix arithmetic for the closed-form SNR, exhaustive
grid search for the least-squares phases, and the matrix-power form of the
dynamics for the step recursion. Geometry draws use a fixed generator; the
``seed`` only feeds the random channel phases, to which every check is
invariant.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import build_channels, snr_direct
from .flight import State, rollout, rollout_closed_form
from .phase import optimal_phases, snr_closed_form, snr_scale, surrogate_objective
from .scenario import ScenarioConfig, UserSet

__all__ = ["CheckResult", "run_checks", "check_snr_closed_form", "check_phase_grid",
           "check_alignment", "check_rollout", "paper_literal_gap", "grid_search_phases"]

_GEOMETRY_SEED = 20240611


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _random_scene(rng, n, m, k, spread=None):
    cfg = ScenarioConfig(num_ris_elements=n, num_bs_antennas=m, num_users=k)
    q = rng.uniform([0.0, 0.0], [1300.0, 1100.0])
    if spread is None:
        xy = rng.uniform([0.0, 0.0], [1300.0, 1100.0], size=(k, 2))
    else:
        xy = rng.uniform([0.0, 0.0], [1300.0, 1100.0]) + spread * rng.standard_normal((k, 2))
    users = UserSet(np.column_stack([xy, np.zeros(k)]))
    return cfg, q, users


def check_snr_closed_form(seed: int = 0, trials: int = 100, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(_GEOMETRY_SEED)
    worst = 0.0
    combos = list(itertools.product((2, 4, 8), (1, 4)))
    for i in range(trials):
        n, m = combos[i % len(combos)]
        cfg, q, users = _random_scene(rng, n, m, 3)
        ch = build_channels(q, users, cfg, seed)
        theta = rng.uniform(0.0, 2 * np.pi, n)
        k = int(rng.integers(3))
        ref = snr_direct(q, theta, k, ch, cfg)
        got = snr_closed_form(q, theta, k, ch, cfg)
        worst = max(worst, abs(got - ref) / abs(ref))
    return CheckResult("snr closed form vs direct", worst <= tol,
                       f"{trials} cases, max rel err {worst:.3e} (tol {tol:g})")


def grid_search_phases(q, channels, users, config, points: int):
    """Minimum of the wrapped surrogate over a uniform grid, first phase pinned at 0.

    The wrapped surrogate is 2 pi periodic and depends only on phase
    differences, so the grid covers the whole search space. Returns
    ``(best_value, spacing)``.
    """
    n = config.num_ris_elements
    h = 2 * np.pi / points
    axis = np.arange(points) * h
    best = np.inf
    for rest in itertools.product(axis, repeat=n - 1):
        val = surrogate_objective(q, np.array((0.0, *rest)), channels, users, config)
        best = min(best, val)
    return best, h


def _grid_points(n: int) -> int:
    return {2: 360, 3: 120, 4: 24}.get(n, 12)


def check_phase_grid(seed: int = 0, sizes=(2, 3, 4), user_counts=(1, 3)) -> CheckResult:
    """Least-squares phases never lose to a grid search on the surrogate."""
    rng = np.random.default_rng(_GEOMETRY_SEED + 1)
    lines, ok = [], True
    for n in sizes:
        points = _grid_points(n)
        for k in user_counts:
            cfg, q, users = _random_scene(rng, n, 4, k, spread=40.0)
            ch = build_channels(q, users, cfg, seed)
            theta = optimal_phases(q, ch, users, cfg)
            val = surrogate_objective(q, theta, ch, users, cfg)
            best, _ = grid_search_phases(q, ch, users, cfg, points)
            slack = 1e-9 * max(abs(best), 1e-300)
            good = val <= best + slack
            ok &= good
            lines.append(f"N={n} K={k} ls={val:.6g} grid={best:.6g}")
    return CheckResult("least-squares phases vs grid search", ok, "; ".join(lines))


def check_alignment(seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Single user: the optimal phases reach the coherent SNR gain * C * N^2."""
    rng = np.random.default_rng(_GEOMETRY_SEED + 2)
    worst = 0.0
    for n in (2, 3, 4, 8, 32):
        cfg, q, users = _random_scene(rng, n, 4, 1)
        ch = build_channels(q, users, cfg, seed)
        theta = optimal_phases(q, ch, users, cfg)
        expect = snr_scale(ch, cfg)[0] * n**2
        got = snr_direct(q, theta, 0, ch, cfg)
        worst = max(worst, abs(got - expect) / expect)
    return CheckResult("single-user coherent alignment", worst <= tol,
                       f"max rel err {worst:.3e} (tol {tol:g})")


def check_rollout(tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(_GEOMETRY_SEED + 3)
    x0 = State(rng.uniform(-30, 30, 2), rng.uniform(0, 1000, 2))
    controls = rng.uniform(-10, 10, (10, 2))
    v1, q1 = rollout(x0, controls, 3.0)
    v2, q2 = rollout_closed_form(x0, controls, 3.0)
    err = max(np.abs(v1 - v2).max(), np.abs(q1 - q2).max())
    return CheckResult("rollout recursion vs closed form", err <= tol,
                       f"S=10, max abs err {err:.3e} (tol {tol:g})")


def paper_literal_gap(seed: int = 0, cases: int = 5) -> CheckResult:
    """Surrogate excess of the textbook target vectors (no BS-side angle term)."""
    rng = np.random.default_rng(_GEOMETRY_SEED + 4)
    gaps = []
    for _ in range(cases):
        cfg, q, users = _random_scene(rng, 8, 4, 3, spread=40.0)
        ch = build_channels(q, users, cfg, seed)
        derived = optimal_phases(q, ch, users, cfg, wrap=False)
        literal = optimal_phases(q, ch, users, cfg, wrap=False, paper_literal_b=True)
        gaps.append(surrogate_objective(q, literal, ch, users, cfg, wrap=False)
                    - surrogate_objective(q, derived, ch, users, cfg, wrap=False))
    gaps = np.array(gaps)
    return CheckResult("literal vs derived target vectors (diagnostic)", bool(np.all(gaps >= 0)),
                       "surrogate gap per case: " + ", ".join(f"{g:.4g}" for g in gaps))


def run_checks(seed: int = 0, paper_literal_b: bool = False) -> list[CheckResult]:
    results = [check_snr_closed_form(seed), check_phase_grid(seed), check_alignment(seed),
               check_rollout()]
    if paper_literal_b:
        results.append(paper_literal_gap(seed))
    return results

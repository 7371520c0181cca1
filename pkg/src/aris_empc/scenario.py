"""Scenario configuration: loading, validation, serialization and user layout.

A scenario is a TOML document whose top-level keys are the field names of
:class:`ScenarioConfig`. User clusters live in ``[[cluster]]`` tables and the
trajectory-solver knobs in a ``[solver]`` table::

    num_ris_elements = 32
    v_max = 50.0
    start_pos = [500.0, 500.0]

    [[cluster]]
    center = [300.0, 850.0]
    count = 16
    spread = 50.0

    [solver]
    max_iters = 400

Every key is optional; missing keys take the defaults below.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import tomli
import tomli_w

from .errors import InfeasibleScenario, ScenarioError

__all__ = [
    "SolverSettings",
    "ClusterSpec",
    "UserSet",
    "ScenarioConfig",
    "Violation",
    "load_config",
    "load_config_file",
    "dump_config",
    "validate",
    "generate_users",
    "builtin_scenario_path",
]

_SCENARIO_DIR = Path(__file__).parent / "scenarios"


@dataclass(frozen=True)
class SolverSettings:
    """Knobs of the projected-gradient horizon solver.

    ``eps_limit`` is a fraction of ``v_max``/``a_max``; ``eps_pos`` is in
    meters. ``max_iters`` may be 0, which returns the warm start untouched.
    """

    max_iters: int = 400
    grad_tol: float = 1e-7
    step_init: float = 1.0
    penalty_weight_terminal: float = 0.01
    penalty_weight_speed: float = 100.0
    penalty_growth: float = 10.0
    fd_epsilon: float = 1e-4
    eps_pos: float = 1.0
    eps_limit: float = 1e-6


@dataclass(frozen=True)
class ClusterSpec:
    centers: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    spreads: tuple[float, ...]

    @classmethod
    def from_lists(cls, centers, counts, spread) -> "ClusterSpec":
        centers = tuple((float(c[0]), float(c[1])) for c in centers)
        counts = tuple(int(n) for n in counts)
        if np.ndim(spread) == 0:
            spreads = (float(spread),) * len(centers)
        else:
            spreads = tuple(float(s) for s in spread)
        return cls(centers, counts, spreads)

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def dominant_index(self) -> int:
        return int(np.argmax(self.counts))


@dataclass(frozen=True)
class UserSet:
    """Fixed ground-user positions, shape (K, 3) with z = 0."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.positions[:, :2]


# Illustrative layout inside the 1300 m x 1100 m area; one dominant cluster.
_DEFAULT_CLUSTERS = ClusterSpec(
    centers=((300.0, 850.0), (1000.0, 600.0), (900.0, 1250.0)),
    counts=(16, 7, 7),
    spreads=(50.0, 50.0, 50.0),
)


@dataclass(frozen=True)
class ScenarioConfig:
    num_ris_elements: int = 32
    num_bs_antennas: int = 8
    num_users: int = 30
    wavelength: float = 0.1
    elem_sep_ris: float = 0.05
    elem_sep_bs: float = 0.05
    ref_path_loss: float = (0.1 / (4.0 * math.pi)) ** 2
    tx_power_per_user: float = 1.0
    bandwidth: float = 10e6
    noise_power: float = 1e-13
    energy_c1: float = 9.26e-4
    energy_c2: float = 2250.0
    gravity: float = 9.81
    uav_mass: float = 0.1
    altitude: float = 150.0
    v_max: float = 50.0
    a_max: float = 10.0
    v_min: float = 1.0
    dt: float = 3.0
    num_steps: int = 10
    horizon: int = 5
    start_pos: tuple[float, float] = (500.0, 500.0)
    target_pos: tuple[float, float] = (500.0, 1200.0)
    initial_velocity: tuple[float, float] = (0.0, 30.0)
    rng_seed: int = 0
    clusters: ClusterSpec = _DEFAULT_CLUSTERS
    solver: SolverSettings = field(default_factory=SolverSettings)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def mission_time(self) -> float:
        return self.num_steps * self.dt

    def users(self, seed: int | None = None) -> UserSet:
        return generate_users(self.clusters, self.rng_seed if seed is None else seed)


@dataclass(frozen=True)
class Violation:
    """One violated invariant. ``kind`` is 'domain' or 'feasibility'."""

    field: str
    message: str
    kind: str = "domain"

    def __str__(self):
        return f"{self.field}: {self.message}"


_INT_FIELDS = {"num_ris_elements", "num_bs_antennas", "num_users", "num_steps", "horizon", "rng_seed"}
_VEC_FIELDS = {"start_pos", "target_pos", "initial_velocity"}
_POSITIVE_FIELDS = (
    "wavelength", "elem_sep_ris", "elem_sep_bs", "ref_path_loss", "tx_power_per_user",
    "bandwidth", "noise_power", "energy_c1", "energy_c2", "gravity", "uav_mass",
    "altitude", "v_max", "a_max", "v_min", "dt",
)
_SOLVER_INT_FIELDS = {"max_iters"}


def validate(config: ScenarioConfig) -> list[Violation]:
    """Return every violated invariant of ``config`` (empty when valid)."""
    out: list[Violation] = []

    def bad(name, msg, kind="domain"):
        out.append(Violation(name, msg, kind))

    if config.num_ris_elements < 2:
        bad("num_ris_elements", f"requires num_ris_elements >= 2, got {config.num_ris_elements}")
    if config.num_bs_antennas < 1:
        bad("num_bs_antennas", f"requires num_bs_antennas >= 1, got {config.num_bs_antennas}")
    if config.num_users < 1:
        bad("num_users", f"requires num_users >= 1, got {config.num_users}")
    if config.num_steps < 1:
        bad("num_steps", f"requires num_steps >= 1, got {config.num_steps}")
    if config.horizon < 1:
        bad("horizon", f"requires horizon >= 1, got {config.horizon}")
    if config.horizon > config.num_steps:
        bad("horizon", f"requires horizon <= num_steps ({config.horizon} > {config.num_steps})")
    for name in _POSITIVE_FIELDS:
        value = getattr(config, name)
        if not (math.isfinite(value) and value > 0):
            bad(name, f"requires {name} > 0, got {value!r}")
    for name in _VEC_FIELDS:
        if not all(math.isfinite(x) for x in getattr(config, name)):
            bad(name, "entries must be finite")

    if config.v_min > 0 and config.v_max > 0:
        if config.v_min >= config.v_max:
            bad("v_min", f"requires v_min < v_max ({config.v_min} >= {config.v_max})", "feasibility")
        speed0 = math.hypot(*config.initial_velocity)
        if speed0 < config.v_min:
            bad("initial_velocity", f"requires v_min <= |initial_velocity| ({speed0:.6g} < {config.v_min})",
                "feasibility")
        if speed0 > config.v_max:
            bad("initial_velocity", f"requires |initial_velocity| <= v_max ({speed0:.6g} > {config.v_max})",
                "feasibility")
    if config.v_max > 0 and config.dt > 0 and config.num_steps >= 1:
        dist = math.dist(config.start_pos, config.target_pos)
        reach = config.v_max * config.num_steps * config.dt
        if dist > reach:
            bad("target_pos",
                f"requires |target_pos - start_pos| <= v_max*num_steps*dt ({dist:.6g} > {reach:.6g})",
                "feasibility")

    cl = config.clusters
    if not (len(cl.centers) == len(cl.counts) == len(cl.spreads)):
        bad("cluster", "centers, counts and spreads must have equal length")
    if len(cl.counts) == 0:
        bad("cluster", "at least one cluster is required")
    if any(n < 1 for n in cl.counts):
        bad("cluster", f"requires every count >= 1, got {list(cl.counts)}")
    if any(not (s >= 0 and math.isfinite(s)) for s in cl.spreads):
        bad("cluster", f"requires every spread >= 0, got {list(cl.spreads)}")
    if cl.total != config.num_users:
        bad("num_users", f"requires sum of cluster counts == num_users ({cl.total} != {config.num_users})")

    s = config.solver
    if s.max_iters < 0:
        bad("solver.max_iters", f"requires max_iters >= 0, got {s.max_iters}")
    for name in ("grad_tol", "step_init", "penalty_weight_terminal", "penalty_weight_speed",
                 "fd_epsilon", "eps_pos", "eps_limit"):
        value = getattr(s, name)
        if not (math.isfinite(value) and value > 0):
            bad(f"solver.{name}", f"requires {name} > 0, got {value!r}")
    if not s.penalty_growth > 1:
        bad("solver.penalty_growth", f"requires penalty_growth > 1, got {s.penalty_growth!r}")
    return out


def _check_violations(config: ScenarioConfig) -> ScenarioConfig:
    violations = validate(config)
    if violations:
        text = "; ".join(str(v) for v in violations)
        if all(v.kind == "feasibility" for v in violations):
            raise InfeasibleScenario(f"infeasible scenario: {text}")
        raise ScenarioError(f"invalid scenario: {text}")
    return config


def _as_number(name: str, value, integer: bool):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"field {name!r}: expected a number, got {value!r}")
    if integer:
        if isinstance(value, float):
            if not value.is_integer():
                raise ScenarioError(f"field {name!r}: expected an integer, got {value!r}")
            value = int(value)
        return int(value)
    return float(value)


def _as_vec2(name: str, value) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"field {name!r}: expected a 2-element array, got {value!r}")
    return (_as_number(name, value[0], False), _as_number(name, value[1], False))


def _parse_solver(table) -> SolverSettings:
    if not isinstance(table, dict):
        raise ScenarioError("field 'solver': expected a table")
    known = {f.name for f in dataclasses.fields(SolverSettings)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ScenarioError(f"unknown field 'solver.{key}'")
        kwargs[key] = _as_number(f"solver.{key}", value, key in _SOLVER_INT_FIELDS)
    return SolverSettings(**kwargs)


def _parse_clusters(blocks) -> ClusterSpec:
    if not isinstance(blocks, list) or not blocks:
        raise ScenarioError("field 'cluster': expected one or more [[cluster]] tables")
    centers, counts, spreads = [], [], []
    for i, block in enumerate(blocks):
        if not isinstance(block, dict):
            raise ScenarioError(f"cluster #{i}: expected a table")
        extra = set(block) - {"center", "count", "spread"}
        if extra:
            raise ScenarioError(f"unknown field 'cluster.{sorted(extra)[0]}' in cluster #{i}")
        for key in ("center", "count"):
            if key not in block:
                raise ScenarioError(f"cluster #{i}: missing field {key!r}")
        centers.append(_as_vec2(f"cluster[{i}].center", block["center"]))
        counts.append(_as_number(f"cluster[{i}].count", block["count"], True))
        spreads.append(_as_number(f"cluster[{i}].spread", block.get("spread", 0.0), False))
    return ClusterSpec(tuple(centers), tuple(counts), tuple(spreads))


def load_config(text: str) -> ScenarioConfig:
    """Parse a scenario document and return a validated :class:`ScenarioConfig`.

    Raises :class:`ScenarioError` for syntax/type/domain problems and its
    subclass :class:`InfeasibleScenario` when only the boundary conditions
    (initial speed, reachability) are violated.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from exc

    known = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"clusters", "solver"}
    kwargs = {}
    for key, value in doc.items():
        if key == "cluster":
            kwargs["clusters"] = _parse_clusters(value)
        elif key == "solver":
            kwargs["solver"] = _parse_solver(value)
        elif key in _VEC_FIELDS:
            kwargs[key] = _as_vec2(key, value)
        elif key in known:
            kwargs[key] = _as_number(key, value, key in _INT_FIELDS)
        else:
            raise ScenarioError(f"unknown field {key!r}")

    # Fields whose defaults depend on other fields.
    wavelength = kwargs.get("wavelength", ScenarioConfig.wavelength)
    if wavelength > 0:
        kwargs.setdefault("elem_sep_ris", wavelength / 2)
        kwargs.setdefault("elem_sep_bs", wavelength / 2)
        kwargs.setdefault("ref_path_loss", (wavelength / (4.0 * math.pi)) ** 2)
    if "num_users" not in kwargs:
        kwargs["num_users"] = kwargs.get("clusters", _DEFAULT_CLUSTERS).total
    if "initial_velocity" not in kwargs:
        start = np.asarray(kwargs.get("start_pos", ScenarioConfig.start_pos))
        target = np.asarray(kwargs.get("target_pos", ScenarioConfig.target_pos))
        heading = target - start
        norm = float(np.hypot(*heading))
        if norm > 0:
            v0 = 30.0 * heading / norm
            kwargs["initial_velocity"] = (float(v0[0]), float(v0[1]))
        else:
            kwargs["initial_velocity"] = (30.0, 0.0)
    return _check_violations(ScenarioConfig(**kwargs))


def load_config_file(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {str(path)!r}: {exc.strerror}") from exc
    return load_config(text)


def dump_config(config: ScenarioConfig) -> str:
    """Serialize to the scenario document format; ``load_config`` inverts it exactly."""
    doc = {}
    for f in dataclasses.fields(ScenarioConfig):
        if f.name in ("clusters", "solver"):
            continue
        value = getattr(config, f.name)
        doc[f.name] = list(value) if f.name in _VEC_FIELDS else value
    doc["solver"] = dataclasses.asdict(config.solver)
    cl = config.clusters
    doc["cluster"] = [
        {"center": list(c), "count": n, "spread": s}
        for c, n, s in zip(cl.centers, cl.counts, cl.spreads)
    ]
    return tomli_w.dumps(doc)


def generate_users(spec: ClusterSpec, seed: int) -> UserSet:
    """Draw ``spec.counts[c]`` isotropic Gaussian points around each center (z = 0)."""
    if not (len(spec.centers) == len(spec.counts) == len(spec.spreads)):
        raise ScenarioError("cluster centers, counts and spreads must have equal length")
    if any(n < 1 for n in spec.counts):
        raise ScenarioError("every cluster count must be >= 1")
    rng = np.random.default_rng(seed)
    blocks = []
    for center, count, spread in zip(spec.centers, spec.counts, spec.spreads):
        xy = np.asarray(center) + spread * rng.standard_normal((count, 2))
        blocks.append(np.column_stack([xy, np.zeros(count)]))
    return UserSet(np.vstack(blocks))


def cluster_labels(spec: ClusterSpec) -> np.ndarray:
    return np.repeat(np.arange(len(spec.counts)), spec.counts)


def builtin_scenario_path(name: str) -> Path | None:
    """Path of a shipped scenario by bare name (``paper_fig3``), or None."""
    candidate = _SCENARIO_DIR / f"{name}.toml"
    return candidate if candidate.is_file() else None


def builtin_scenarios() -> Sequence[str]:
    return sorted(p.stem for p in _SCENARIO_DIR.glob("*.toml"))

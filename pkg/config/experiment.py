"""
Experiment configuration: JSON documents parsed into frozen dataclasses.

Every validation failure raises ConfigurationError with a message of the form
"path:line: what is wrong", where line points at the offending key.
"""
import sys
import os
import json
import re
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

from config.config import (CONV_TOL, FSM_MAX_ROUNDS, MAX_ITERS, MEMORY_BUDGET_MB, ORACLE_MARGIN,
                           OUTPUT_DIR, REFERENCE_MAX_ROUNDS, SLOWNESS_CATALOG, THETA_DEFAULTS,
                           UPDATE_ROUNDS, WORKERS)
from models.boundary import make_boundary
from models.grid import GridSpec
from models.slowness import make_catalog_field
from utils.errors import ConfigurationError
from utils.theta import POLICIES, ThetaParams, ThetaPolicy

BYTES_PER_FINE_NODE = 96

SECTIONS = {
    "problem": ("dimension", "N", "M", "slowness", "boundary"),
    "solver": ("max_iters", "conv_tol", "max_rounds", "reference_max_rounds", "update_rounds", "workers"),
    "theta": ("policy", "value", "x0", "gamma", "delta", "omega", "bootstrap", "denom_guard_factor", "margin"),
    "outputs": ("directory", "snapshot_every"),
    "model": ("N", "M", "max_k"),
    "speedup": ("N", "M", "d", "C"),
}
TOP_LEVEL = tuple(SECTIONS) + ("seed", "trials")


@dataclass(frozen=True)
class ProblemConfig:
    dimension: int
    N: int
    M: int
    slowness: dict
    boundary: dict

    def grid_spec(self):
        return GridSpec(d=self.dimension, N=self.N, M=self.M)

    def make_slowness(self, seed=0):
        params = dict(self.slowness.get("params", {}))
        if self.slowness.get("kind") == "squares" and "line_tol" not in params:
            params["line_tol"] = 0.5 * self.grid_spec().h
        return make_catalog_field(self.slowness.get("kind"), params, seed)

    def make_boundary(self):
        return make_boundary(self.boundary)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = MAX_ITERS
    conv_tol: float = CONV_TOL
    max_rounds: int = FSM_MAX_ROUNDS
    reference_max_rounds: int = REFERENCE_MAX_ROUNDS
    update_rounds: int = UPDATE_ROUNDS
    workers: int = WORKERS


@dataclass(frozen=True)
class ThetaConfig:
    policy: str = "estimated"
    value: float = 0.0
    x0: float = THETA_DEFAULTS["x0"]
    gamma: float = THETA_DEFAULTS["gamma"]
    delta: float = THETA_DEFAULTS["delta"]
    omega: Tuple[float, float, float] = THETA_DEFAULTS["omega"]
    bootstrap: float = THETA_DEFAULTS["bootstrap"]
    denom_guard_factor: float = THETA_DEFAULTS["denom_guard_factor"]
    margin: float = ORACLE_MARGIN

    def to_policy(self):
        params = ThetaParams(x0=self.x0, gamma=self.gamma, delta=self.delta, omega=tuple(self.omega),
                             bootstrap=self.bootstrap, denom_guard_factor=self.denom_guard_factor)
        return ThetaPolicy(kind=self.policy, value=self.value, params=params, margin=self.margin)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = OUTPUT_DIR
    snapshot_every: int = 0


@dataclass(frozen=True)
class ModelConfig:
    N: int = 20
    M: int = 50
    max_k: int = 20


@dataclass(frozen=True)
class SpeedupConfig:
    N: Tuple[int, ...] = (20,)
    M: Tuple[int, ...] = (100,)
    d: int = 2
    C: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    problem: Optional[ProblemConfig] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    theta: ThetaConfig = field(default_factory=ThetaConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    speedup: SpeedupConfig = field(default_factory=SpeedupConfig)
    seed: int = 0
    trials: int = 1
    source: str = "<config>"

    def resolved(self):
        """Fully expanded config, enough to re-run the experiment."""
        payload = asdict(self)
        payload.pop("source")
        return payload

    def require_problem(self):
        if self.problem is None:
            raise ConfigurationError(f"{self.source}:1: config has no 'problem' section")
        return self.problem


class _Locator:
    """Maps a key name to the first line mentioning it inside a span of the JSON text."""

    def __init__(self, path, lines, span=None):
        self.path = path
        self.lines = lines
        self.first, self.last = span or (1, max(len(lines), 1))

    def _find(self, key):
        needle = f'"{key}"'
        for number in range(self.first, min(self.last, len(self.lines)) + 1):
            if needle in self.lines[number - 1]:
                return number
        return None

    def line(self, key):
        found = self._find(key)
        return self.first if found is None else found

    def within(self, name):
        """Locator restricted to the lines of the object stored under `name`."""
        start = self._find(name)
        if start is None:
            return self
        depth, opened = 0, False
        for number in range(start, min(self.last, len(self.lines)) + 1):
            text = re.sub(r'"(?:\\.|[^"\\])*"', '""', self.lines[number - 1])
            if number == start:
                text = text.split(":", 1)[-1]
            for ch in text:
                if ch == "{":
                    depth, opened = depth + 1, True
                elif ch == "}":
                    depth -= 1
            if opened and depth <= 0:
                return _Locator(self.path, self.lines, (start, number))
        return _Locator(self.path, self.lines, (start, self.last))

    def error(self, key, message):
        return ConfigurationError(f"{self.path}:{self.line(key)}: {message}")


def _section(raw, name, locator):
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise locator.error(name, f"'{name}' must be an object")
    scoped = locator.within(name)
    unknown = sorted(set(value) - set(SECTIONS[name]))
    if unknown:
        raise scoped.error(unknown[0], f"unknown key '{unknown[0]}' in '{name}'")
    return value, scoped


def _int(section, key, default, locator, minimum=None):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise locator.error(key, f"'{key}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise locator.error(key, f"'{key}' must be >= {minimum}, got {value}")
    return value


def _float(section, key, default, locator, positive=False):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise locator.error(key, f"'{key}' must be a number, got {value!r}")
    if positive and not value > 0:
        raise locator.error(key, f"'{key}' must be positive, got {value}")
    return float(value)


def _problem(raw, locator):
    section, locator = _section(raw, "problem", locator)
    for key in ("N", "M", "slowness", "boundary"):
        if key not in section:
            raise locator.error("problem", f"'problem' is missing '{key}'")
    problem = ProblemConfig(
        dimension=_int(section, "dimension", 2, locator),
        N=_int(section, "N", None, locator, minimum=2),
        M=_int(section, "M", None, locator, minimum=2),
        slowness=dict(section["slowness"]) if isinstance(section["slowness"], dict) else None,
        boundary=dict(section["boundary"]) if isinstance(section["boundary"], dict) else None,
    )
    if problem.dimension not in (1, 2):
        raise locator.error("dimension", f"'dimension' must be 1 or 2, got {problem.dimension}")
    if problem.slowness is None:
        raise locator.error("slowness", "'slowness' must be an object with 'kind' and 'params'")
    if problem.boundary is None:
        raise locator.error("boundary", "'boundary' must be an object with a 'kind'")
    if problem.slowness.get("kind") not in SLOWNESS_CATALOG:
        raise locator.error("slowness", f"unknown slowness kind {problem.slowness.get('kind')!r}")

    nodes = (problem.N * problem.M + 1) ** problem.dimension
    needed_mb = nodes * BYTES_PER_FINE_NODE / 2 ** 20
    if needed_mb > MEMORY_BUDGET_MB:
        raise locator.error("N", f"grid needs about {needed_mb:.0f} MB, over the {MEMORY_BUDGET_MB:.0f} MB budget")

    try:
        problem.make_slowness()
    except ConfigurationError as e:
        raise locator.error("slowness", str(e))
    try:
        problem.make_boundary()
    except (ConfigurationError, TypeError, ValueError) as e:
        raise locator.error("boundary", str(e))
    return problem


def from_dict(raw, path="<config>", text=""):
    """Validate a parsed config mapping."""
    locator = _Locator(path, text.splitlines())
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}:1: config must be a JSON object")
    unknown = sorted(set(raw) - set(TOP_LEVEL))
    if unknown:
        raise locator.error(unknown[0], f"unknown top-level key '{unknown[0]}'")

    problem = _problem(raw, locator) if "problem" in raw else None

    s, scoped = _section(raw, "solver", locator)
    solver = SolverConfig(
        max_iters=_int(s, "max_iters", MAX_ITERS, scoped, minimum=1),
        conv_tol=_float(s, "conv_tol", CONV_TOL, scoped, positive=True),
        max_rounds=_int(s, "max_rounds", FSM_MAX_ROUNDS, scoped, minimum=1),
        reference_max_rounds=_int(s, "reference_max_rounds", REFERENCE_MAX_ROUNDS, scoped, minimum=1),
        update_rounds=_int(s, "update_rounds", UPDATE_ROUNDS, scoped, minimum=1),
        workers=_int(s, "workers", WORKERS, scoped, minimum=1),
    )

    t, scoped = _section(raw, "theta", locator)
    policy = t.get("policy", "estimated")
    if policy not in POLICIES:
        raise scoped.error("policy", f"'policy' must be one of {POLICIES}, got {policy!r}")
    omega = t.get("omega", THETA_DEFAULTS["omega"])
    if not isinstance(omega, (list, tuple)) or len(omega) != 3:
        raise scoped.error("omega", "'omega' must be a list of three weights")
    theta = ThetaConfig(
        policy=policy,
        value=_float(t, "value", 0.0, scoped),
        x0=_float(t, "x0", THETA_DEFAULTS["x0"], scoped),
        gamma=_float(t, "gamma", THETA_DEFAULTS["gamma"], scoped),
        delta=_float(t, "delta", THETA_DEFAULTS["delta"], scoped),
        omega=tuple(float(w) for w in omega),
        bootstrap=_float(t, "bootstrap", THETA_DEFAULTS["bootstrap"], scoped),
        denom_guard_factor=_float(t, "denom_guard_factor", THETA_DEFAULTS["denom_guard_factor"], scoped),
        margin=_float(t, "margin", ORACLE_MARGIN, scoped),
    )
    try:
        theta.to_policy()
    except ConfigurationError as e:
        raise scoped.error("theta", str(e))

    o, scoped = _section(raw, "outputs", locator)
    outputs = OutputConfig(directory=str(o.get("directory", OUTPUT_DIR)),
                           snapshot_every=_int(o, "snapshot_every", 0, scoped, minimum=0))

    m, scoped = _section(raw, "model", locator)
    model = ModelConfig(N=_int(m, "N", 20, scoped, minimum=2), M=_int(m, "M", 50, scoped, minimum=2),
                        max_k=_int(m, "max_k", 20, scoped, minimum=1))

    sp, scoped = _section(raw, "speedup", locator)
    Ns, Ms = sp.get("N", [20]), sp.get("M", [100])
    Ns = Ns if isinstance(Ns, list) else [Ns]
    Ms = Ms if isinstance(Ms, list) else [Ms]
    for key, values in (("N", Ns), ("M", Ms)):
        if not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in values):
            raise scoped.error(key, f"speedup '{key}' must be positive integers, got {values!r}")
    speedup = SpeedupConfig(N=tuple(Ns), M=tuple(Ms), d=_int(sp, "d", 2, scoped, minimum=1),
                            C=_int(sp, "C", 10, scoped, minimum=1))

    return ExperimentConfig(problem=problem, solver=solver, theta=theta, outputs=outputs, model=model,
                            speedup=speedup, seed=_int(raw, "seed", 0, locator, minimum=0),
                            trials=_int(raw, "trials", 1, locator, minimum=1), source=path)


def load_config(path):
    """
    Read and validate a JSON experiment config.

    Raises:
        ConfigurationError: malformed JSON or invalid content, anchored to a line
        OSError: the file cannot be read
    """
    with open(path) as handle:
        text = handle.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: {e.msg}")
    return from_dict(raw, path=path, text=text)


def apply_overrides(config, workers=None, seed=None, out=None, snapshot_every=None):
    """CLI flags take precedence over the file."""
    if workers is not None:
        if workers < 1:
            raise ConfigurationError(f"--workers must be >= 1, got {workers}")
        config = replace(config, solver=replace(config.solver, workers=workers))
    if seed is not None:
        config = replace(config, seed=seed)
    if out is not None:
        config = replace(config, outputs=replace(config.outputs, directory=out))
    if snapshot_every is not None:
        config = replace(config, outputs=replace(config.outputs, snapshot_every=snapshot_every))
    return config

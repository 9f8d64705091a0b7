"""Run configuration: an INI file with sections [model], [grid], [solver], [dynamics], [output].

Every key has a default, so an empty file is a valid configuration. Unknown sections and
keys are errors. ``emit_config`` writes every key back, and parsing its output gives the
same configuration.
"""
import configparser
import logging
import math
import typing
from dataclasses import dataclass, field, fields, replace

from manevkit import settings
from manevkit.exc import ConfigError
from manevkit.ground_state import SolverOptions
from manevkit.phase_space import (CasimirSpec, ConstraintPair, CutoffSpec, ModelParams, PowerLaw,
                                  SumOfPowers)

logger = logging.getLogger(__name__)

PERTURBATIONS = ("dilation", "shear", "amplitude")
DISTANCE_MODES = ("plain", "scaled")


def _option(default, kind, optional=False):
    return field(default=default, metadata={"kind": kind, "optional": optional})


@dataclass(frozen=True)
class ModelSection:
    delta: float = _option(0.0, float)
    kappa: float = _option(1.0, float)
    p: float = _option(4.0, float)
    q: typing.Optional[float] = _option(None, float, True)
    m1: typing.Optional[float] = _option(None, float, True)
    mj: typing.Optional[float] = _option(None, float, True)


@dataclass(frozen=True)
class GridSection:
    size: int = _option(settings.GRID_SIZE, int)
    extent_factor: float = _option(settings.EXTENT_FACTOR, float)
    inner: typing.Optional[int] = _option(None, int, True)
    energy_nodes: int = _option(settings.ENERGY_NODES, int)


@dataclass(frozen=True)
class SolverSection:
    damping: float = _option(settings.DAMPING, float)
    tolerance: float = _option(settings.TOLERANCE, float)
    max_iterations: int = _option(settings.MAX_ITERATIONS, int)
    b: typing.Optional[float] = _option(None, float, True)
    ladder_depth: int = _option(settings.B_LADDER_DEPTH, int)
    r_chi: typing.Optional[float] = _option(None, float, True)
    relax_iterations: int = _option(settings.RELAX_ITERATIONS, int)
    relax_tolerance: float = _option(settings.RELAX_TOLERANCE, float)
    blowup_time: float = _option(10.0, float)
    family_size: int = _option(settings.TRIAL_FAMILY_SIZE, int)
    kernel_scale: float = _option(1.0, float)


@dataclass(frozen=True)
class DynamicsSection:
    particles: int = _option(100000, int)
    dt: typing.Optional[float] = _option(None, float, True)
    steps: int = _option(1000, int)
    horizon: typing.Optional[float] = _option(None, float, True)
    cadence: int = _option(1, int)
    sample_every: int = _option(10, int)
    bandwidth: int = _option(settings.BANDWIDTH, int)
    deposit_size: int = _option(settings.DEPOSIT_SIZE, int)
    epsilon: float = _option(0.0, float)
    perturbation: str = _option("dilation", str)
    mode: str = _option("plain", str)
    seed: int = _option(settings.DEFAULT_SEED, int)


@dataclass(frozen=True)
class OutputSection:
    directory: str = _option("manev-out", str)


SECTIONS = (("model", ModelSection), ("grid", GridSection), ("solver", SolverSection),
            ("dynamics", DynamicsSection), ("output", OutputSection))


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    output: OutputSection = field(default_factory=OutputSection)
    command: typing.Optional[str] = None

    def __post_init__(self):
        validate(self)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.model.delta, self.model.kappa)

    @property
    def casimir(self) -> CasimirSpec:
        m = self.model
        if m.q is None or m.q == m.p:
            return PowerLaw(m.p)
        return SumOfPowers([(1.0, m.p), (1.0, m.q)])

    @property
    def targets(self) -> typing.Optional[ConstraintPair]:
        if self.model.m1 is None:
            return None
        return ConstraintPair(self.model.m1, self.model.mj)

    @property
    def options(self) -> SolverOptions:
        return SolverOptions(size=self.grid.size, extent_factor=self.grid.extent_factor,
                             inner=self.grid.inner, energy_nodes=self.grid.energy_nodes,
                             damping=self.solver.damping, tolerance=self.solver.tolerance,
                             max_iterations=self.solver.max_iterations)

    @property
    def cutoff(self) -> typing.Optional[CutoffSpec]:
        return None if self.solver.r_chi is None else CutoffSpec(self.solver.r_chi)

    @property
    def seed(self) -> int:
        return self.dynamics.seed

    def with_seed(self, seed: typing.Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        return replace(self, dynamics=replace(self.dynamics, seed=seed))

    def with_output(self, directory: str) -> "RunConfig":
        return replace(self, output=replace(self.output, directory=directory))

    def with_command(self, command: str) -> "RunConfig":
        return replace(self, command=command)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def validate(config: RunConfig) -> None:
    m, g, s, d = config.model, config.grid, config.solver, config.dynamics
    _require(m.delta >= 0 and m.kappa >= 0 and m.delta + m.kappa > 0,
             "[model] needs delta, kappa >= 0 and delta + kappa > 0")
    _require(m.p > 3, "[model] p must exceed 3, got %r" % m.p)
    _require(m.q is None or m.q >= m.p, "[model] q must not be below p")
    _require((m.m1 is None) == (m.mj is None), "[model] m1 and mj must be given together")
    _require(m.m1 is None or (m.m1 > 0 and m.mj > 0), "[model] targets must be positive")
    _require(g.size >= 5 and g.energy_nodes >= 2, "[grid] too few nodes")
    _require(g.extent_factor > 1, "[grid] extent_factor must exceed 1")
    _require(0 < s.damping <= 1, "[solver] damping must lie in (0, 1]")
    _require(s.tolerance > 0 and s.relax_tolerance > 0, "[solver] tolerances must be positive")
    _require(s.max_iterations > 0 and s.relax_iterations > 0,
             "[solver] iteration caps must be positive")
    _require(s.b is None or s.b >= 0, "[solver] b must be nonnegative")
    _require(s.r_chi is None or s.r_chi > 0, "[solver] r_chi must be positive")
    _require(s.ladder_depth >= 0 and s.family_size > 0, "[solver] counts must be positive")
    _require(s.blowup_time > 0 and s.kernel_scale > 0,
             "[solver] blowup_time and kernel_scale must be positive")
    _require(d.particles >= settings.MIN_PARTICLES,
             "[dynamics] at least %d particles" % settings.MIN_PARTICLES)
    _require(d.dt is None or d.dt > 0, "[dynamics] dt must be positive")
    _require(d.horizon is None or d.horizon > 0, "[dynamics] horizon must be positive")
    _require(min(d.steps, d.cadence, d.sample_every, d.bandwidth) >= 1,
             "[dynamics] step counts must be positive")
    _require(d.deposit_size >= 5, "[dynamics] deposit grid too small")
    _require(d.perturbation in PERTURBATIONS,
             "[dynamics] perturbation must be one of %s" % ", ".join(PERTURBATIONS))
    _require(d.mode in DISTANCE_MODES,
             "[dynamics] mode must be one of %s" % ", ".join(DISTANCE_MODES))
    _require(0 <= d.seed < 2 ** 64, "[dynamics] seed must be an unsigned 64-bit integer")
    _require(bool(config.output.directory), "[output] directory must not be empty")


def _convert(section: str, key: str, raw: str, meta: dict):
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        if meta["optional"]:
            return None
        raise ConfigError("[%s] %s needs a value" % (section, key))
    kind = meta["kind"]
    try:
        if kind is int:
            return int(raw, 0)
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        return raw
    except ValueError:
        raise ConfigError("[%s] %s: cannot read %r as %s" % (section, key, raw, kind.__name__))


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("malformed config: %s" % e)
    known = dict(SECTIONS)
    unknown = [name for name in parser.sections() if name not in known]
    if unknown:
        raise ConfigError("unknown section(s): %s" % ", ".join(unknown))
    parts = {}
    for name, cls in SECTIONS:
        if not parser.has_section(name):
            parts[name] = cls()
            continue
        spec = {f.name: f.metadata for f in fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in spec:
                raise ConfigError("unknown key %r in [%s]" % (key, name))
            values[key] = _convert(name, key, raw, spec[key])
        parts[name] = cls(**values)
    return RunConfig(**parts)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e))
    config = parse_config(text)
    logger.debug("loaded config from %s", path)
    return config


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: RunConfig) -> str:
    lines = []
    for name, _ in SECTIONS:
        section = getattr(config, name)
        lines.append("[%s]" % name)
        for f in fields(section):
            lines.append("%s = %s" % (f.name, _format(getattr(section, f.name))))
        lines.append("")
    return "\n".join(lines)

"""Run configuration: one JSON document per run.

Sites are 1-based in configuration files and output tables and 0-based
everywhere in the library.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .linalg import KrylovConfig, TruncationPolicy
from .mpo import Model, ModelSpec
from .parallel.engine import StabilityConfig

SCHEMA_VERSION = 1

OBSERVABLES = ("zz_connected", "x_deviation", "dynamical_zz", "sz", "energy")
INITIAL_KINDS = ("product", "dmrg_ground", "file", "random")
PERTURBATIONS = ("sz", "rot_y")


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    model: str = "IsingNN"
    n_sites: int = 10
    alpha: float = math.inf
    field_B: float = 0.0
    delta_B: float = 0.0
    n_exps: int = 0
    fit_range: int | None = None

    def spec(self) -> ModelSpec:
        return ModelSpec(Model(self.model), self.n_sites, self.alpha, self.field_B,
                         self.delta_B, self.n_exps)

    @property
    def effective_fit_range(self) -> int:
        return self.fit_range if self.fit_range is not None else max(self.n_sites - 1, self.n_exps)


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 0.02
    n_steps: int = 100
    measure_every: int = 1
    checkpoint_every: int = 0


@dataclass(frozen=True)
class TruncationConfig:
    chi_max: int = 64
    w_max: float = 0.0


@dataclass(frozen=True)
class ParallelConfig:
    n_workers: int = 1
    mode: str = "uniform"
    sizes: tuple[int, ...] | None = None
    transport: str = "thread"
    debug: bool = False


@dataclass(frozen=True)
class DmrgConfig:
    max_sweeps: int = 30
    chi_max: int = 64
    energy_tol: float = 1e-10


@dataclass(frozen=True)
class InitialStateConfig:
    """How to build the state at t = 0.

    ``product``: every site in ``local_state`` ("up", "down", "x+") or the
    basis string ``bits`` (e.g. "1101").  ``dmrg_ground``: the ground state of
    the run's model with the fields in ``ground_overrides`` replaced (the
    pre-quench Hamiltonian).  ``file``: a saved MPS.  ``random``: a random
    chi=8 state.  ``perturbation`` is then applied at ``perturbation_site``.
    """

    kind: str = "product"
    local_state: str = "up"
    bits: str | None = None
    path: str | None = None
    ground_overrides: dict = field(default_factory=dict)
    dmrg: DmrgConfig = DmrgConfig()
    perturbation: str | None = None
    perturbation_angle: float = math.pi / 4
    perturbation_site: int | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = ModelConfig()
    evolution: EvolutionConfig = EvolutionConfig()
    truncation: TruncationConfig = TruncationConfig()
    stability: StabilityConfig = StabilityConfig()
    krylov: KrylovConfig = KrylovConfig()
    parallel: ParallelConfig = ParallelConfig()
    initial_state: InitialStateConfig = InitialStateConfig()
    observables: tuple[str, ...] = ("sz",)
    reference_site: int | None = None
    output_dir: str | None = None
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.truncation.chi_max, self.truncation.w_max,
                                self.stability.epsilon)

    @property
    def reference_index(self) -> int:
        """0-based reference site; defaults to the central site."""
        if self.reference_site is None:
            return (self.model.n_sites - 1) // 2
        return self.reference_site - 1

    def validate(self) -> "RunConfig":
        try:
            self.model.spec()
            self.policy()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        ev = self.evolution
        if not ev.dt > 0 or ev.n_steps < 1 or ev.measure_every < 1 or ev.checkpoint_every < 0:
            raise ConfigError("need dt > 0, n_steps >= 1, measure_every >= 1, "
                              "checkpoint_every >= 0")
        unknown = set(self.observables) - set(OBSERVABLES)
        if unknown:
            raise ConfigError(f"unknown observables {sorted(unknown)}")
        if not 0 <= self.reference_index < self.model.n_sites:
            raise ConfigError(f"reference_site {self.reference_site} outside the chain")
        ini = self.initial_state
        if ini.kind not in INITIAL_KINDS:
            raise ConfigError(f"unknown initial state kind {ini.kind!r}")
        if ini.kind == "file" and not ini.path:
            raise ConfigError("initial_state.path is required for kind 'file'")
        if ini.bits is not None and (len(ini.bits) != self.model.n_sites
                                     or set(ini.bits) - {"0", "1"}):
            raise ConfigError("initial_state.bits must be a 0/1 string of length n_sites")
        if ini.perturbation is not None and ini.perturbation not in PERTURBATIONS:
            raise ConfigError(f"unknown perturbation {ini.perturbation!r}")
        par = self.parallel
        if par.n_workers != 1:
            from .parallel.partition import plan_partitions
            try:
                plan_partitions(self.model.n_sites, par.n_workers, par.mode, par.sizes)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if par.transport not in ("thread", "process"):
            raise ConfigError(f"unknown transport {par.transport!r}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["alpha"] = _encode_float(self.model.alpha)
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            return _build(cls, data).validate()
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def with_updates(self, **sections) -> "RunConfig":
        """Copy with whole sections or nested fields replaced, e.g.
        ``cfg.with_updates(parallel={"n_workers": 2})``."""
        changes = {}
        for name, value in sections.items():
            current = getattr(self, name)
            if isinstance(value, dict) and hasattr(current, "__dataclass_fields__"):
                changes[name] = replace(current, **value)
            else:
                changes[name] = value
        return replace(self, **changes).validate()


def _encode_float(x: float):
    return "inf" if math.isinf(x) else x


_NESTED = {
    "RunConfig": {"model": ModelConfig, "evolution": EvolutionConfig,
                  "truncation": TruncationConfig, "stability": StabilityConfig,
                  "krylov": KrylovConfig, "parallel": ParallelConfig,
                  "initial_state": InitialStateConfig},
    "InitialStateConfig": {"dmrg": DmrgConfig},
}


def _build(cls, data: dict) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {cls.__name__}")
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(extra)}")
    nested = _NESTED.get(cls.__name__, {})
    kwargs = {}
    for key, value in data.items():
        if key in nested:
            value = _build(nested[key], value)
        elif key == "alpha":
            value = float(value)
        elif key in ("observables", "sizes") and value is not None:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

"""Scenario files: YAML documents with units spelled out in every key.

Frequencies are ordinary frequencies (``_mhz``, ``_ghz``, ``_hz``) and are
converted to angular frequencies once, when the scenario is resolved. Times
carry ``_us`` or ``_ns``. Unknown keys are rejected.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .model import GHz, MHz, CouplingSpec, QubitParams
from .noise import NoiseModel, sigma_from_t2star, amplitude_from_t2star

__all__ = [
    "ConfigError",
    "Scenario",
    "validate_config",
    "load_scenario",
    "dump_scenario",
    "list_fixtures",
    "fixture_path",
    "EXPERIMENTS",
]

EXPERIMENTS = (
    "coherence",
    "storage_qpt",
    "gate_populations",
    "gate_qpt",
    "rb",
    "error_budget",
    "predict",
    "idler",
    "dispersive",
)

US = 1e-6
NS = 1e-9


class ConfigError(ValueError):
    """Invalid scenario document; the message names every offending path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class QubitCfg(_Strict):
    """Omitted ``t1_us`` / ``tphi_us`` mean no relaxation / no pure dephasing."""

    t1_us: Optional[float] = Field(None, gt=0)
    tphi_us: Optional[float] = Field(None, gt=0)
    anharmonicity_ghz: float = Field(0.0, ge=0)
    levels: Literal[2, 3] = 2
    g_mhz: float = 0.0

    def resolve(self) -> QubitParams:
        return QubitParams(
            t1=self.t1_us * US if self.t1_us is not None else math.inf,
            tphi=self.tphi_us * US if self.tphi_us is not None else math.inf,
            anharmonicity=self.anharmonicity_ghz * GHz,
            levels=self.levels,
            g=self.g_mhz * MHz,
        )


class CouplingCfg(_Strict):
    lambda_mhz: Optional[float] = None
    g1_mhz: Optional[float] = None
    g2_mhz: Optional[float] = None
    delta_mhz: Optional[float] = None
    direct_mhz: float = 0.0

    @model_validator(mode="after")
    def _one_form(self):
        resonator = (self.g1_mhz, self.g2_mhz, self.delta_mhz)
        if self.lambda_mhz is None and any(v is None for v in resonator):
            raise ValueError("give lambda_mhz or all of g1_mhz, g2_mhz, delta_mhz")
        if self.lambda_mhz is not None and any(v is not None for v in resonator):
            raise ValueError("give lambda_mhz or the resonator parameters, not both")
        if self.lambda_mhz is not None and self.direct_mhz != 0:
            raise ValueError("direct_mhz only applies to the resonator form")
        if self.delta_mhz == 0:
            raise ValueError("delta_mhz must be non-zero")
        return self

    def resolve(self) -> CouplingSpec:
        if self.lambda_mhz is not None:
            return CouplingSpec(lam=self.lambda_mhz * MHz)
        return CouplingSpec(g1=self.g1_mhz * MHz, g2=self.g2_mhz * MHz, delta=self.delta_mhz * MHz)


class SystemCfg(_Strict):
    qubits: list[QubitCfg] = Field(min_length=1, max_length=2)
    coupling: Optional[CouplingCfg] = None
    model: Literal["full", "effective"] = "full"


class DrivesCfg(_Strict):
    rabi_mhz: list[float] = Field(min_length=1, max_length=2)
    phase_rad: float = 0.0

    @model_validator(mode="after")
    def _positive(self):
        if any(r <= 0 for r in self.rabi_mhz):
            raise ValueError("rabi_mhz entries must be positive")
        return self


class NoiseCfg(_Strict):
    kind: Literal["none", "quasistatic_gaussian", "one_over_f"] = "none"
    t2star_us: Optional[float] = Field(None, gt=0)
    f_min_hz: float = Field(1e2, gt=0)
    f_max_hz: float = Field(1e6, gt=0)

    @model_validator(mode="after")
    def _needs_strength(self):
        if self.kind != "none" and self.t2star_us is None:
            raise ValueError(f"noise kind {self.kind!r} needs t2star_us")
        if self.f_max_hz <= self.f_min_hz:
            raise ValueError("f_max_hz must exceed f_min_hz")
        return self

    def resolve(self, seed: int) -> NoiseModel:
        if self.kind == "none":
            return NoiseModel("none", seed=seed)
        t2 = self.t2star_us * US
        if self.kind == "quasistatic_gaussian":
            return NoiseModel("quasistatic_gaussian", sigma=sigma_from_t2star(t2), seed=seed)
        amp = amplitude_from_t2star(t2, self.f_min_hz, self.f_max_hz)
        return NoiseModel("one_over_f", amplitude=amp, f_min=self.f_min_hz, f_max=self.f_max_hz, seed=seed)


Variant = Literal["free_decay", "spin_echo", "one_q_dd"]


class ProtocolCfg(_Strict):
    """Experiment knobs; each experiment reads the subset it needs."""

    variants: list[Variant] = ["free_decay", "spin_echo", "one_q_dd"]
    tau_max_us: float = Field(14.0, gt=0)
    tau_points: int = Field(141, ge=2)
    omega_r_mhz: float = 1.0
    tphi_markov_us: dict[Variant, float] = {}
    storage_times_us: list[float] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0]
    chi_at_us: Optional[float] = 5.0
    initial_states: list[Literal["00", "01", "10", "11"]] = ["00", "01"]
    gate_tau_max_ns: Optional[float] = Field(None, gt=0)
    ramsey_2qdd: bool = False
    ramsey_2qdd_tphi_us: Optional[list[float]] = None
    calibrate: bool = True
    gate_sets: list[Literal["pauli", "clifford"]] = ["pauli", "clifford"]
    m_grid: list[int] = [1, 2, 4, 8, 16, 32, 64]
    sequences_per_length: int = Field(30, ge=1)
    idler_fidelities: list[float] = []
    idler_t1_us: list[float] = []
    idler_names: Optional[list[str]] = None
    gate_len_ns: Optional[float] = Field(None, gt=0)
    delta_doublings: int = Field(2, ge=0)
    resonator_levels: int = Field(2, ge=2)

    @model_validator(mode="after")
    def _consistent(self):
        if any(m < 1 for m in self.m_grid):
            raise ValueError("m_grid entries must be >= 1")
        if len(self.idler_fidelities) != len(self.idler_t1_us):
            raise ValueError("idler_fidelities and idler_t1_us differ in length")
        if any(not 0 < f < 1 for f in self.idler_fidelities):
            raise ValueError("idler_fidelities must lie in (0, 1)")
        if any(t < 0 for t in self.storage_times_us):
            raise ValueError("storage_times_us must be non-negative")
        return self


class Expectation(_Strict):
    """Acceptance bound on a named scalar of the result bundle."""

    value: Optional[float] = None
    tol: Optional[float] = Field(None, ge=0)
    rel_tol: Optional[float] = Field(None, ge=0)
    min: Optional[float] = None
    max: Optional[float] = None

    def check(self, x: float) -> bool:
        ok = math.isfinite(x)
        if self.value is not None:
            band = max(self.tol or 0.0, (self.rel_tol or 0.0) * abs(self.value))
            ok &= abs(x - self.value) <= band
        if self.min is not None:
            ok &= x >= self.min
        if self.max is not None:
            ok &= x <= self.max
        return bool(ok)


class OutputCfg(_Strict):
    dir: str = "results"
    format: Literal["csv", "structured"] = "csv"


class Scenario(_Strict):
    experiment: Literal[EXPERIMENTS]
    label: str = ""
    seed: int = Field(0, ge=0)
    trajectories: int = Field(200, ge=1)
    system: SystemCfg
    drives: Optional[DrivesCfg] = None
    noise: NoiseCfg = NoiseCfg()
    protocol: ProtocolCfg = ProtocolCfg()
    expect: dict[str, Expectation] = {}
    output: OutputCfg = OutputCfg()

    @model_validator(mode="after")
    def _needs(self):
        two_qubit = {"gate_populations", "gate_qpt", "rb", "error_budget", "predict"}
        if self.experiment in two_qubit:
            if len(self.system.qubits) != 2:
                raise ValueError(f"experiment {self.experiment!r} needs two qubits")
            if self.system.coupling is None:
                raise ValueError(f"experiment {self.experiment!r} needs system.coupling")
            if self.drives is None or len(self.drives.rabi_mhz) != 2:
                raise ValueError(f"experiment {self.experiment!r} needs drives.rabi_mhz for both qubits")
        if self.experiment in ("coherence", "storage_qpt") and self.drives is None:
            raise ValueError(f"experiment {self.experiment!r} needs drives.rabi_mhz for the 1Q-DD drive")
        if self.experiment == "dispersive":
            c = self.system.coupling
            if c is None or c.delta_mhz is None:
                raise ValueError("experiment 'dispersive' needs g1_mhz, g2_mhz and delta_mhz")
        if self.experiment == "idler" and (not self.protocol.idler_fidelities or self.protocol.gate_len_ns is None):
            raise ValueError("experiment 'idler' needs protocol.idler_fidelities, idler_t1_us and gate_len_ns")
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "missing":
            msg = "required key missing"
        elif err["type"] == "extra_forbidden":
            msg = "unknown key"
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def validate_config(document) -> Scenario:
    """Validate a parsed document (mapping) or YAML text into a :class:`Scenario`."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<root>: not valid YAML ({exc})") from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("<root>: expected a mapping at the top level")
    try:
        return Scenario.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def dump_scenario(s: Scenario) -> str:
    doc = s.model_dump(mode="json", exclude_defaults=False)
    return yaml.safe_dump(doc, sort_keys=True)


def _fixture_dir():
    return resources.files("dressed_dd") / "fixtures"


def list_fixtures() -> list[str]:
    return sorted(p.name[: -len(".yaml")] for p in _fixture_dir().iterdir() if p.name.endswith(".yaml"))


def fixture_path(name: str) -> Path:
    p = _fixture_dir() / f"{name}.yaml"
    if not p.is_file():
        raise ConfigError(f"<root>: no fixture named {name!r} (have: {', '.join(list_fixtures())})")
    return Path(str(p))


def load_scenario(name_or_path: str) -> Scenario:
    """Load a fixture by name or a scenario file by path."""
    p = Path(name_or_path)
    if not p.is_file():
        p = fixture_path(name_or_path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"<root>: cannot read {p}: {exc}") from exc
    return validate_config(text)

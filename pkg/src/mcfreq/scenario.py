"""Scenario parameters for the microfluidic channel / graphene bioFET receiver.

Every quantity is stored in SI units. Parameter records are frozen
dataclasses; invariants are checked by :func:`validate_scenario`, which
returns a report instead of raising, so that broken scenarios can still be
inspected. Loading a config file raises :class:`ConfigError` on any failed
check.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

# CODATA 2018
BOLTZMANN = 1.380649e-23  # J/K
AVOGADRO = 6.02214076e23  # 1/mol
ELEMENTARY_CHARGE = 1.602176634e-19  # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m

# Graphene mobility values quoted for the reference device (m^2/V/s).
MOBILITY_LOW = 200e-4
MOBILITY_HIGH = 2e3 * 1e-4

PECLET_WARN = 100.0

HOLE = "hole"
ELECTRON = "electron"


class ConfigError(ValueError):
    """Invalid configuration file or scenario."""


@dataclass(frozen=True)
class ChannelGeometry:
    height: float  # m
    width: float  # m
    length: float  # m
    receiver_position: float  # m, distance from the inlet


@dataclass(frozen=True)
class FlowField:
    velocity: float  # m/s, along +x


@dataclass(frozen=True)
class LigandSpecies:
    diffusion_coefficient: float  # m^2/s
    electrons_per_ligand: float
    binding_rate: float  # m^3/s
    unbinding_rate: float  # 1/s


@dataclass(frozen=True)
class ReceptorPopulation:
    count: int
    receptor_length: float  # m
    patch_origin: float  # m, upstream x edge of the receptor patch
    patch_extent: tuple[float, float]  # m, (along x, along y)

    @property
    def patch_center(self) -> float:
        return self.patch_origin + 0.5 * self.patch_extent[0]


@dataclass(frozen=True)
class ElectrolyteMedium:
    ionic_concentration: float  # mol/m^3
    relative_permittivity: float
    temperature: float  # K

    @property
    def permittivity(self) -> float:
        return self.relative_permittivity * VACUUM_PERMITTIVITY


@dataclass(frozen=True)
class CPEParams:
    """Constant phase element ``Z = 1 / (q0 (j 2 pi f)^alpha)``.

    ``q0`` is in F s^(alpha-1), or F s^(alpha-1)/m^2 when ``per_area`` is set.
    """

    q0: float
    alpha: float
    per_area: bool = False

    def absolute(self, area: float) -> CPEParams:
        """Same element with the admittance scaled to a device of ``area`` m^2."""
        if not self.per_area:
            return self
        return CPEParams(self.q0 * area, self.alpha, per_area=False)


@dataclass(frozen=True)
class BioFETParams:
    graphene_width: float  # m
    graphene_length: float  # m
    mobility: float  # m^2/(V s)
    drain_source_voltage: float  # V
    regime: str  # "hole" or "electron"
    cpe_ge: CPEParams
    cpe_par: CPEParams
    cpe_le: CPEParams
    # Share of the direct gate capacitive current that reaches the drain.
    # 1.0 uses the full capacitive admittance, 0.5 splits it evenly between
    # drain and source.
    capacitive_fraction: float = 1.0

    @property
    def area(self) -> float:
        return self.graphene_width * self.graphene_length

    @property
    def sign(self) -> float:
        return -1.0 if self.regime == HOLE else 1.0


@dataclass(frozen=True)
class PulseInput:
    amplitude: float  # 1/m^3
    width: float  # s


@dataclass(frozen=True)
class SimSettings:
    timestep: float  # s
    slab_length: float | None = None  # m; None selects the default rule


@dataclass(frozen=True)
class Scenario:
    geometry: ChannelGeometry
    flow: FlowField
    ligand: LigandSpecies
    receptors: ReceptorPopulation
    medium: ElectrolyteMedium
    biofet: BioFETParams
    input: PulseInput
    sim: SimSettings

    @property
    def dt(self) -> float:
        return self.sim.timestep

    @property
    def peclet(self) -> float:
        d = self.ligand.diffusion_coefficient
        num = self.flow.velocity * self.geometry.receiver_position
        return math.inf if d == 0 else num / d

    @property
    def f_valid(self) -> float:
        """Upper frequency of the convergent-series regime, u^2 / (8 pi D)."""
        d = self.ligand.diffusion_coefficient
        return math.inf if d == 0 else self.flow.velocity**2 / (8 * math.pi * d)

    @property
    def delay(self) -> float:
        """Advective transmitter-receiver delay x_r / u."""
        return self.geometry.receiver_position / self.flow.velocity

    @property
    def linearization_margin(self) -> float:
        return self.ligand.binding_rate * self.input.amplitude / self.ligand.unbinding_rate

    def replace(self, **changes: Any) -> Scenario:
        return dataclasses.replace(self, **changes)


def scenario_from_table_defaults() -> Scenario:
    """Default parameter set of the reference study, in SI units."""
    um = 1e-6
    return Scenario(
        geometry=ChannelGeometry(height=3 * um, width=3 * um, length=200 * um,
                                 receiver_position=100 * um),
        flow=FlowField(velocity=2e-3),
        ligand=LigandSpecies(diffusion_coefficient=1e-11, electrons_per_ligand=3.0,
                             binding_rate=1e-18, unbinding_rate=500.0),
        receptors=ReceptorPopulation(count=500, receptor_length=2e-9,
                                     patch_origin=98.5 * um, patch_extent=(3 * um, 1 * um)),
        medium=ElectrolyteMedium(ionic_concentration=0.5, relative_permittivity=80.0,
                                 temperature=300.0),
        biofet=BioFETParams(
            graphene_width=1 * um,
            graphene_length=3 * um,
            mobility=MOBILITY_LOW,
            drain_source_voltage=0.1,
            regime=HOLE,
            # 1.6 uF s^(a-1) / cm^2
            cpe_ge=CPEParams(q0=1.6e-6 / 1e-4, alpha=0.905, per_area=True),
            cpe_par=CPEParams(q0=8e-9, alpha=0.6),
            cpe_le=CPEParams(q0=5.4e-15, alpha=1.0),
        ),
        input=PulseInput(amplitude=3.3e20, width=0.5e-3),
        sim=SimSettings(timestep=50e-6),
    )


# ---------------------------------------------------------------- validation

PASS, WARN, FAIL = "pass", "warn", "fail"


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    peclet: float
    f_valid: float
    linearization_margin: float
    checks: tuple[Check, ...]

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if c.status == WARN]

    @property
    def ok(self) -> bool:
        return not self.failures

    def raise_if_failed(self) -> None:
        if self.failures:
            msg = "; ".join(f"{c.name}: {c.detail}" for c in self.failures)
            raise ConfigError(msg)


def validate_scenario(s: Scenario) -> ValidationReport:
    checks: list[Check] = []

    def require(name: str, cond: bool, detail: str) -> None:
        checks.append(Check(name, PASS if cond else FAIL, "" if cond else detail))

    g = s.geometry
    for attr in ("height", "width", "length", "receiver_position"):
        v = getattr(g, attr)
        require(f"geometry.{attr}", v > 0, f"must be > 0, got {v!r}")
    require("geometry.receiver_position", g.receiver_position < g.length,
            "receiver must lie inside the channel")

    r = s.receptors
    ex, ey = r.patch_extent
    require("receptors.count", r.count >= 1, f"must be >= 1, got {r.count!r}")
    require("receptors.receptor_length", r.receptor_length > 0,
            f"must be > 0, got {r.receptor_length!r}")
    require("receptors.patch_extent", ex > 0 and ey > 0, "extent must be positive")
    require("receptors.patch_origin",
            r.patch_origin >= 0 and r.patch_origin + ex <= g.length and ey <= g.width,
            "receptor patch must fit on the channel floor")

    require("flow.velocity", s.flow.velocity > 0,
            f"flow must be > 0 along +x, got {s.flow.velocity!r}")

    lig = s.ligand
    d = lig.diffusion_coefficient
    if d < 0:
        checks.append(Check("ligand.diffusion_coefficient", FAIL, f"must be >= 0, got {d!r}"))
    elif d == 0:
        checks.append(Check("ligand.diffusion_coefficient", WARN, "pure advection limit"))
    else:
        checks.append(Check("ligand.diffusion_coefficient", PASS))
    require("ligand.binding_rate", lig.binding_rate >= 0,
            f"must be >= 0, got {lig.binding_rate!r}")
    require("ligand.unbinding_rate", lig.unbinding_rate > 0,
            f"must be > 0, got {lig.unbinding_rate!r}")
    require("ligand.electrons_per_ligand", lig.electrons_per_ligand >= 0,
            f"must be >= 0, got {lig.electrons_per_ligand!r}")

    m = s.medium
    for attr in ("ionic_concentration", "relative_permittivity", "temperature"):
        v = getattr(m, attr)
        require(f"medium.{attr}", v > 0, f"must be > 0, got {v!r}")

    b = s.biofet
    for attr in ("graphene_width", "graphene_length", "mobility"):
        v = getattr(b, attr)
        require(f"biofet.{attr}", v > 0, f"must be > 0, got {v!r}")
    require("biofet.drain_source_voltage", b.drain_source_voltage != 0, "must be non-zero")
    require("biofet.regime", b.regime in (HOLE, ELECTRON),
            f"must be 'hole' or 'electron', got {b.regime!r}")
    require("biofet.capacitive_fraction", 0 < b.capacitive_fraction <= 1,
            f"must be in (0, 1], got {b.capacitive_fraction!r}")
    for name in ("cpe_ge", "cpe_par", "cpe_le"):
        p = getattr(b, name)
        require(f"biofet.{name}.q0", p.q0 > 0, f"must be > 0, got {p.q0!r}")
        require(f"biofet.{name}.alpha", 0 <= p.alpha <= 1, f"must be in [0, 1], got {p.alpha!r}")

    require("input.amplitude", s.input.amplitude > 0, f"must be > 0, got {s.input.amplitude!r}")
    require("input.width", s.input.width > 0, f"must be > 0, got {s.input.width!r}")
    require("sim.timestep", s.sim.timestep > 0, f"must be > 0, got {s.sim.timestep!r}")
    if s.sim.slab_length is not None:
        require("sim.slab_length", s.sim.slab_length > 0, "must be > 0")

    if s.flow.velocity > 0 and g.receiver_position > 0 and d >= 0:
        pe = s.peclet
        f_valid = s.f_valid
        if pe < 1:
            checks.append(Check("peclet", FAIL, f"Pe = {pe:.3g} < 1, 1D model invalid"))
        elif pe < PECLET_WARN:
            checks.append(Check("peclet", WARN, f"Pe = {pe:.3g} < {PECLET_WARN:g}"))
        else:
            checks.append(Check("peclet", PASS))
    else:
        pe = f_valid = math.nan

    margin = s.linearization_margin if lig.unbinding_rate > 0 else math.nan
    return ValidationReport(pe, f_valid, margin, tuple(checks))


# ------------------------------------------------------------------- config

_SECTIONS = {
    "geometry": ChannelGeometry,
    "flow": FlowField,
    "ligand": LigandSpecies,
    "receptors": ReceptorPopulation,
    "medium": ElectrolyteMedium,
    "biofet": BioFETParams,
    "input": PulseInput,
    "sim": SimSettings,
}
_CPE_KEYS = ("cpe_ge", "cpe_par", "cpe_le")


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    out = dataclasses.asdict(s)
    out["receptors"]["patch_extent"] = list(s.receptors.patch_extent)
    return out


def _check_keys(data: Any, allowed: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _number(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _build_cpe(data: Any, base: CPEParams, where: str) -> CPEParams:
    _check_keys(data, {"q0", "alpha", "per_area"}, where)
    per_area = data.get("per_area", base.per_area)
    if not isinstance(per_area, bool):
        raise ConfigError(f"{where}.per_area: expected a boolean")
    return CPEParams(
        q0=_number(data.get("q0", base.q0), f"{where}.q0"),
        alpha=_number(data.get("alpha", base.alpha), f"{where}.alpha"),
        per_area=per_area,
    )


def _build_section(name: str, data: Any, base: Any) -> Any:
    cls = _SECTIONS[name]
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(data, names, name)
    values = {}
    for key in names:
        where = f"{name}.{key}"
        current = getattr(base, key)
        if key not in data:
            values[key] = current
            continue
        v = data[key]
        if key in _CPE_KEYS:
            values[key] = _build_cpe(v, current, where)
        elif key == "regime":
            if v not in (HOLE, ELECTRON):
                raise ConfigError(f"{where}: expected 'hole' or 'electron', got {v!r}")
            values[key] = v
        elif key == "patch_extent":
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise ConfigError(f"{where}: expected [x_extent, y_extent]")
            values[key] = (_number(v[0], where), _number(v[1], where))
        elif key == "count":
            n = _number(v, where)
            if n != int(n):
                raise ConfigError(f"{where}: expected an integer, got {v!r}")
            values[key] = int(n)
        elif key == "slab_length" and v is None:
            values[key] = None
        else:
            values[key] = _number(v, where)
    return cls(**values)


def scenario_from_dict(data: dict[str, Any], base: Scenario | None = None,
                       validate: bool = True) -> Scenario:
    """Build a scenario from a config mapping.

    Sections and keys that are absent fall back to ``base`` (the default
    parameter set when omitted); unknown keys are rejected.
    """
    base = base or scenario_from_table_defaults()
    _check_keys(data, set(_SECTIONS), "config")
    parts = {name: _build_section(name, data.get(name, {}), getattr(base, name))
             for name in _SECTIONS}
    s = Scenario(**parts)
    if validate:
        validate_scenario(s).raise_if_failed()
    return s


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(data)


def canonical_json(data: Any) -> str:
    # json uses repr() for floats, which is the shortest round-trip form
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def scenario_hash(s: Scenario | dict[str, Any]) -> str:
    data = scenario_to_dict(s) if isinstance(s, Scenario) else s
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def set_path(data: dict[str, Any], path: str, value: Any) -> dict[str, Any]:
    """Return a deep copy of ``data`` with the dotted ``path`` set to ``value``."""
    out = json.loads(json.dumps(data))
    keys = path.split(".")
    node = out
    for i, k in enumerate(keys[:-1]):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"parameter path {path!r} does not resolve at {'.'.join(keys[:i + 1])!r}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"parameter path {path!r} does not resolve")
    node[keys[-1]] = value
    return out


def with_param(s: Scenario, path: str, value: Any) -> Scenario:
    """Scenario with one dotted parameter replaced, e.g. ``ligand.binding_rate``."""
    return scenario_from_dict(set_path(scenario_to_dict(s), path, value), base=s)

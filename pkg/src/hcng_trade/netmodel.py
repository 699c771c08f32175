"""Scenario model for coupled gas/power day-ahead scheduling.

Holds the immutable domain types (gas network with hydrogen blending, radial
distribution network, device fleet, market data, algorithm knobs), the
blending arithmetic, and the versioned YAML scenario schema with full
validation. Everything downstream (entity model builders, bargaining,
robust loop, CLI) consumes a validated ``Scenario`` and never re-parses.

Unit conventions, declared once here:

* electrical power in kW, energy in kWh, prices in $/kWh
* gas quantities in m3 per period (rates x dt), prices in $/m3
* pressures in bar; Weymouth constants in m3/(h*bar), scaled by dt internally
* heat values are volumetric figures (labelled MJ/m3); the declared
  conversion base treats one heat unit as one kWh in the electrolyzer and
  fuel-cell conversion arithmetic, so round-trip energy accounting closes
  with the efficiency factors only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

SCHEMA_VERSION = 1

#: declared conversion base: heat-value units per kWh (see module docstring)
HEAT_UNITS_PER_KWH = 1.0

Series = tuple[float, ...]


class ScenarioFormatError(Exception):
    """Raised when a scenario file is structurally unreadable (missing or
    mistyped fields, unsupported schema version, bad YAML)."""


class ScenarioValidationError(Exception):
    """Raised after parsing when domain invariants fail. Carries every
    violation found, not just the first."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__(
            "scenario validation failed:\n  " + "\n  ".join(self.violations)
        )


# ---------------------------------------------------------------------------
# blending arithmetic
# ---------------------------------------------------------------------------

def hydrogen_fraction(h2_m3: float, ch4_m3: float) -> float:
    """Volumetric hydrogen fraction of an injected blend."""
    if h2_m3 < 0 or ch4_m3 < 0:
        raise ValueError(f"blend volumes must be nonnegative, got ({h2_m3}, {ch4_m3})")
    total = h2_m3 + ch4_m3
    if total == 0.0:
        raise ValueError("blend volumes are both zero; fraction undefined")
    return h2_m3 / total


def hhv_mix(omega: float, hhv_h2: float, hhv_ch4: float) -> float:
    """Volumetric heat value of a hydrogen/methane blend."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"hydrogen fraction must lie in [0, 1], got {omega}")
    if hhv_h2 <= 0 or hhv_ch4 <= 0:
        raise ValueError("heat values must be positive")
    return omega * hhv_h2 + (1.0 - omega) * hhv_ch4


def equivalent_gas_load(load_m3: float, hhv_mix_value: float, hhv_ch4: float) -> float:
    """Blend volume that delivers the same energy as ``load_m3`` of methane.

    Consumers are contracted in methane-equivalent volume; diluting the
    pipeline gas with hydrogen raises the volume actually drawn.
    """
    if load_m3 < 0:
        raise ValueError(f"gas load must be nonnegative, got {load_m3}")
    if hhv_mix_value <= 0 or hhv_ch4 <= 0:
        raise ValueError("heat values must be positive")
    return load_m3 * hhv_ch4 / hhv_mix_value


@dataclass(frozen=True)
class BlendConstants:
    hhv_ch4: float
    hhv_h2: float
    omega_max: float


@dataclass(frozen=True)
class BlendState:
    """Per-period blend bookkeeping shared by both entities during a solve.

    ``omega`` and ``hhv`` are consistent with the injected volumes; the
    fixed-point loop in the gas entity recomputes this state between solves.
    """

    h2_m3: Series
    ch4_m3: Series
    omega: Series
    hhv: Series
    constants: BlendConstants

    @classmethod
    def from_volumes(
        cls, h2_m3: Iterable[float], ch4_m3: Iterable[float], constants: BlendConstants
    ) -> "BlendState":
        h2 = tuple(float(v) for v in h2_m3)
        ch4 = tuple(float(v) for v in ch4_m3)
        if len(h2) != len(ch4):
            raise ValueError("blend volume series lengths differ")
        # idle periods (no injection at all) carry the pure-methane fraction
        om = tuple(
            hydrogen_fraction(a, b) if a + b > 0 else 0.0 for a, b in zip(h2, ch4)
        )
        hv = tuple(hhv_mix(o, constants.hhv_h2, constants.hhv_ch4) for o in om)
        return cls(h2, ch4, om, hv, constants)

    @classmethod
    def pure_methane(cls, horizon: int, constants: BlendConstants) -> "BlendState":
        zero = (0.0,) * horizon
        return cls.from_volumes(zero, zero, constants)

    @classmethod
    def pure_hydrogen(cls, horizon: int, constants: BlendConstants) -> "BlendState":
        return cls(
            (1.0,) * horizon,
            (0.0,) * horizon,
            (1.0,) * horizon,
            (constants.hhv_h2,) * horizon,
            constants,
        )

    def max_abs_omega_delta(self, other: "BlendState") -> float:
        return max(
            (abs(a - b) for a, b in zip(self.omega, other.omega)), default=0.0
        )


# ---------------------------------------------------------------------------
# network and device types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GasNode:
    id: str
    pressure_min: float
    pressure_max: float
    load_m3: Series


@dataclass(frozen=True)
class GasPipe:
    from_node: str
    to_node: str
    weymouth: float  # m3/(h*bar)


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple[GasNode, ...]
    pipes: tuple[GasPipe, ...]
    source: str

    def node_index(self) -> dict[str, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}


@dataclass(frozen=True)
class Bus:
    id: str
    v_min: float
    v_max: float
    p_load_kw: Series
    q_load_kvar: Series


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r_pu: float
    x_pu: float


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    slack: str
    base_kva: float

    def bus_index(self) -> dict[str, int]:
        return {b.id: k for k, b in enumerate(self.buses)}


@dataclass(frozen=True)
class Electrolyzer:
    """Power-to-gas unit: draws power at ``bus``, injects hydrogen at
    ``gas_node``. ``unit_cost`` is the installed cost prorated over
    ``lifetime_h`` of rated operation."""

    id: str
    bus: str
    gas_node: str
    rated_kw: float
    efficiency: float
    unit_cost: float
    lifetime_h: float


@dataclass(frozen=True)
class FuelCell:
    """Gas-to-power unit fuelled by blended pipeline gas drawn at
    ``gas_node``, injecting at ``bus``."""

    id: str
    bus: str
    gas_node: str
    rated_kw: float
    efficiency: float
    unit_cost: float
    lifetime_h: float


@dataclass(frozen=True)
class HydrogenTank:
    """Buffer between an electrolyzer's production and pipeline injection."""

    id: str
    electrolyzer: str
    gas_node: str
    capacity_m3: float
    unit_cost: float
    lifetime_h: float


@dataclass(frozen=True)
class Battery:
    id: str
    bus: str
    rated_kw: float
    capacity_kwh: float
    capacity_cost: float  # $/kWh installed
    power_cost: float  # $/kW installed
    soc_min: float
    soc_max: float
    cycle_a1: float
    cycle_b1: float
    cycle_a2: float
    cycle_b2: float
    depth_of_discharge: float


@dataclass(frozen=True)
class DerUnit:
    id: str
    bus: str
    p_forecast_kw: Series
    q_kvar: Series


@dataclass(frozen=True)
class DeviceFleet:
    electrolyzers: tuple[Electrolyzer, ...]
    fuel_cells: tuple[FuelCell, ...]
    tanks: tuple[HydrogenTank, ...]
    batteries: tuple[Battery, ...]
    ders: tuple[DerUnit, ...]

    def tank_for(self, et_id: str) -> HydrogenTank | None:
        for tank in self.tanks:
            if tank.electrolyzer == et_id:
                return tank
        return None


@dataclass(frozen=True)
class MarketData:
    power_price: Series  # $/kWh, upstream grid
    gas_price: Series  # $/m3, upstream gas source
    dt_h: float


@dataclass(frozen=True)
class UncertaintyBox:
    """Relative deviation radii for realized load and DER availability.

    ``orientation`` is ``symmetric`` (forecast +/- radius) or
    ``asymmetric-up`` (load may only exceed forecast, DER only fall short),
    kept as a compatibility mode.
    """

    phi_load: float = 0.05
    phi_der: float = 0.15
    orientation: str = "symmetric"


@dataclass(frozen=True)
class AlgorithmParams:
    # gas pressure-difference penalty; None derives 1e-3 x mean gas price
    pressure_penalty: float | None = None
    # relative weight of the branch-current penalty that keeps the power
    # cones tight when free DER curtailment would otherwise leave slack
    current_penalty_scale: float = 1e-6
    blend_tol: float = 1e-4
    blend_max_rounds: int = 20
    # consensus penalty scale factors (auto-scaled by variable magnitude)
    rho1: float = 1.0
    rho2: float = 1.0
    rho3: float = 1.0
    rho4: float = 1.0
    admm_tol: float = 1e-3  # x trade scale
    admm_max_iter: int = 500
    q2_mode: str = "exp-cone"  # or "transfer-bisection"
    price_cap_factor: float = 10.0
    price_anchor_weight: float = 1e-8
    log_margin_factor: float = 1e-6
    ccg_gap_tol: float = 1e-3
    ccg_max_outer: int = 15
    bcd_max_inner: int = 50
    seed: int = 0  # reserved for tie-break shuffles; no default path uses it


VARIANTS = ("model1", "model2", "model3")


@dataclass(frozen=True)
class Scenario:
    name: str
    schema_version: int
    power: PowerNetwork
    gas: GasNetwork
    devices: DeviceFleet
    market: MarketData
    blend: BlendConstants
    uncertainty: UncertaintyBox
    algorithm: AlgorithmParams
    variant: str = "model1"

    @property
    def horizon(self) -> int:
        return len(self.market.power_price)

    def pressure_penalty(self) -> float:
        if self.algorithm.pressure_penalty is not None:
            return self.algorithm.pressure_penalty
        mean_price = sum(self.market.gas_price) / len(self.market.gas_price)
        return 1e-3 * mean_price


# ---------------------------------------------------------------------------
# topology helpers
# ---------------------------------------------------------------------------

def orient_radial(
    node_ids: Sequence[str],
    edges: Sequence[tuple[str, str]],
    root: str,
) -> list[tuple[int, int, int]]:
    """Orient the edges of a radial network away from ``root``.

    Returns (upstream node index, downstream node index, edge index) per
    edge. Raises ValueError if the edge set is not a spanning tree reachable
    from the root; callers validate first, so this is a safety net.
    """
    index = {n: k for k, n in enumerate(node_ids)}
    adjacency: dict[int, list[tuple[int, int]]] = {k: [] for k in range(len(node_ids))}
    for e, (a, b) in enumerate(edges):
        adjacency[index[a]].append((index[b], e))
        adjacency[index[b]].append((index[a], e))
    oriented: list[tuple[int, int, int]] = []
    seen = {index[root]}
    frontier = [index[root]]
    while frontier:
        here = frontier.pop(0)
        for neighbour, e in adjacency[here]:
            if neighbour in seen:
                continue
            seen.add(neighbour)
            oriented.append((here, neighbour, e))
            frontier.append(neighbour)
    if len(seen) != len(node_ids) or len(edges) != len(node_ids) - 1:
        raise ValueError("network is not a radial tree rooted at " + root)
    oriented.sort(key=lambda item: item[2])
    return oriented


def _is_radial(node_ids: Sequence[str], edges: Sequence[tuple[str, str]], root: str) -> bool:
    try:
        orient_radial(node_ids, edges, root)
    except (ValueError, KeyError):
        return False
    return True


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_scenario(sc: Scenario) -> list[str]:
    """Check every domain invariant; returns the full list of violations."""
    bad: list[str] = []
    T = sc.horizon

    def series(path: str, values: Series, nonneg: bool = True) -> None:
        if len(values) != T:
            bad.append(f"{path}: length {len(values)} != horizon {T}")
        if nonneg and any(v < 0 for v in values):
            bad.append(f"{path}: negative entries")

    if sc.schema_version != SCHEMA_VERSION:
        bad.append(f"schema_version: {sc.schema_version} unsupported (expected {SCHEMA_VERSION})")
    if T < 1:
        bad.append("market.power_price: horizon must be >= 1")
    if sc.market.dt_h <= 0:
        bad.append("market.dt_h: must be positive")
    series("market.power_price", sc.market.power_price)
    series("market.gas_price", sc.market.gas_price)

    if not 0 < sc.blend.hhv_h2 < sc.blend.hhv_ch4:
        bad.append("blend: requires 0 < hhv_h2 < hhv_ch4")
    if not 0 <= sc.blend.omega_max < 1:
        bad.append(f"blend.omega_max: {sc.blend.omega_max} outside [0, 1)")

    # --- gas network
    gas_ids = [n.id for n in sc.gas.nodes]
    if len(set(gas_ids)) != len(gas_ids):
        bad.append("gas_network.nodes: duplicate ids")
    if sc.gas.source not in gas_ids:
        bad.append(f"gas_network.source: {sc.gas.source!r} not a node")
    for k, node in enumerate(sc.gas.nodes):
        if not 0 < node.pressure_min < node.pressure_max:
            bad.append(f"gas_network.nodes[{k}]: pressure bounds must satisfy 0 < min < max")
        series(f"gas_network.nodes[{k}].load_m3", node.load_m3)
    for k, pipe in enumerate(sc.gas.pipes):
        if pipe.from_node not in gas_ids or pipe.to_node not in gas_ids:
            bad.append(f"gas_network.pipes[{k}]: endpoint not a node")
        if pipe.weymouth <= 0:
            bad.append(f"gas_network.pipes[{k}].weymouth: must be positive")
    gas_edges = [(p.from_node, p.to_node) for p in sc.gas.pipes]
    if sc.gas.source in gas_ids and not _is_radial(gas_ids, gas_edges, sc.gas.source):
        bad.append("gas_network: pipes do not form a radial tree reachable from the source")

    # --- power network
    bus_ids = [b.id for b in sc.power.buses]
    if len(set(bus_ids)) != len(bus_ids):
        bad.append("power_network.buses: duplicate ids")
    if sc.power.slack not in bus_ids:
        bad.append(f"power_network.slack: {sc.power.slack!r} not a bus")
    if sc.power.base_kva <= 0:
        bad.append("power_network.base_kva: must be positive")
    for k, bus in enumerate(sc.power.buses):
        if not 0 < bus.v_min < bus.v_max:
            bad.append(f"power_network.buses[{k}]: voltage bounds must satisfy 0 < min < max")
        series(f"power_network.buses[{k}].p_load_kw", bus.p_load_kw)
        series(f"power_network.buses[{k}].q_load_kvar", bus.q_load_kvar, nonneg=False)
    for k, br in enumerate(sc.power.branches):
        if br.from_bus not in bus_ids or br.to_bus not in bus_ids:
            bad.append(f"power_network.branches[{k}]: endpoint not a bus")
        if br.r_pu < 0 or br.x_pu < 0:
            bad.append(f"power_network.branches[{k}]: negative impedance")
    power_edges = [(b.from_bus, b.to_bus) for b in sc.power.branches]
    if sc.power.slack in bus_ids and not _is_radial(bus_ids, power_edges, sc.power.slack):
        bad.append("power_network: branches do not form a radial tree reachable from the slack bus")

    # --- devices
    all_dev_ids: list[str] = []
    for k, et in enumerate(sc.devices.electrolyzers):
        all_dev_ids.append(et.id)
        if et.bus not in bus_ids:
            bad.append(f"devices.electrolyzers[{k}].bus: {et.bus!r} not a bus")
        if et.gas_node not in gas_ids:
            bad.append(f"devices.electrolyzers[{k}].gas_node: {et.gas_node!r} not a gas node")
        if et.rated_kw <= 0 or not 0 < et.efficiency <= 1:
            bad.append(f"devices.electrolyzers[{k}]: rating/efficiency out of range")
        if et.unit_cost < 0 or et.lifetime_h <= 0:
            bad.append(f"devices.electrolyzers[{k}]: cost/lifetime out of range")
    for k, fc in enumerate(sc.devices.fuel_cells):
        all_dev_ids.append(fc.id)
        if fc.bus not in bus_ids:
            bad.append(f"devices.fuel_cells[{k}].bus: {fc.bus!r} not a bus")
        if fc.gas_node not in gas_ids:
            bad.append(f"devices.fuel_cells[{k}].gas_node: {fc.gas_node!r} not a gas node")
        if fc.rated_kw <= 0 or not 0 < fc.efficiency <= 1:
            bad.append(f"devices.fuel_cells[{k}]: rating/efficiency out of range")
        if fc.unit_cost < 0 or fc.lifetime_h <= 0:
            bad.append(f"devices.fuel_cells[{k}]: cost/lifetime out of range")
    et_ids = {et.id for et in sc.devices.electrolyzers}
    for k, tank in enumerate(sc.devices.tanks):
        all_dev_ids.append(tank.id)
        if tank.electrolyzer not in et_ids:
            bad.append(f"devices.tanks[{k}].electrolyzer: {tank.electrolyzer!r} not an electrolyzer id")
        if tank.gas_node not in gas_ids:
            bad.append(f"devices.tanks[{k}].gas_node: {tank.gas_node!r} not a gas node")
        if tank.capacity_m3 <= 0 or tank.unit_cost < 0 or tank.lifetime_h <= 0:
            bad.append(f"devices.tanks[{k}]: capacity/cost/lifetime out of range")
    for k, bat in enumerate(sc.devices.batteries):
        all_dev_ids.append(bat.id)
        if bat.bus not in bus_ids:
            bad.append(f"devices.batteries[{k}].bus: {bat.bus!r} not a bus")
        if bat.rated_kw <= 0 or bat.capacity_kwh <= 0:
            bad.append(f"devices.batteries[{k}]: rating/capacity out of range")
        if not 0 <= bat.soc_min < bat.soc_max <= 1:
            bad.append(f"devices.batteries[{k}]: soc bounds must satisfy 0 <= min < max <= 1")
        if bat.cycle_a1 <= 0 or bat.cycle_a2 <= 0 or bat.cycle_b1 >= 0 or bat.cycle_b2 >= 0:
            bad.append(f"devices.batteries[{k}]: cycle fit requires a1,a2 > 0 and b1,b2 < 0")
        if not 0 < bat.depth_of_discharge <= 1:
            bad.append(f"devices.batteries[{k}].depth_of_discharge: outside (0, 1]")
        if bat.capacity_cost < 0 or bat.power_cost < 0:
            bad.append(f"devices.batteries[{k}]: negative installed cost")
    for k, der in enumerate(sc.devices.ders):
        all_dev_ids.append(der.id)
        if der.bus not in bus_ids:
            bad.append(f"devices.ders[{k}].bus: {der.bus!r} not a bus")
        series(f"devices.ders[{k}].p_forecast_kw", der.p_forecast_kw)
        series(f"devices.ders[{k}].q_kvar", der.q_kvar, nonneg=False)
    if len(set(all_dev_ids)) != len(all_dev_ids):
        bad.append("devices: duplicate device ids")

    # --- uncertainty / algorithm / variant
    if sc.uncertainty.phi_load < 0 or sc.uncertainty.phi_der < 0:
        bad.append("uncertainty: radii must be nonnegative")
    if sc.uncertainty.orientation not in ("symmetric", "asymmetric-up"):
        bad.append(f"uncertainty.box: {sc.uncertainty.orientation!r} not one of symmetric, asymmetric-up")
    if sc.variant not in VARIANTS:
        bad.append(f"variant: {sc.variant!r} not one of {VARIANTS}")
    alg = sc.algorithm
    if alg.pressure_penalty is not None and alg.pressure_penalty < 0:
        bad.append("algorithm.pressure_penalty: must be nonnegative")
    if alg.admm_max_iter < 1 or alg.blend_max_rounds < 1 or alg.ccg_max_outer < 1 or alg.bcd_max_inner < 1:
        bad.append("algorithm: iteration caps must be >= 1")
    if min(alg.rho1, alg.rho2, alg.rho3, alg.rho4) <= 0:
        bad.append("algorithm: consensus penalty scales must be positive")
    if alg.q2_mode not in ("exp-cone", "transfer-bisection"):
        bad.append(f"algorithm.q2_mode: {alg.q2_mode!r} unknown")
    if alg.price_cap_factor <= 0:
        bad.append("algorithm.price_cap_factor: must be positive")
    return bad


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _need(mapping: Mapping[str, Any], key: str, path: str) -> Any:
    if not isinstance(mapping, Mapping):
        raise ScenarioFormatError(f"{path}: expected a mapping")
    if key not in mapping:
        raise ScenarioFormatError(f"{path}.{key}: missing")
    return mapping[key]


def _series(raw: Any, path: str) -> Series:
    if not isinstance(raw, (list, tuple)):
        raise ScenarioFormatError(f"{path}: expected a list of numbers")
    out = []
    for k, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioFormatError(f"{path}[{k}]: expected a number, got {type(v).__name__}")
        out.append(float(v))
    return tuple(out)


def _num(raw: Any, path: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ScenarioFormatError(f"{path}: expected a number, got {type(raw).__name__}")
    return float(raw)


def _text(raw: Any, path: str) -> str:
    if not isinstance(raw, str) or not raw:
        raise ScenarioFormatError(f"{path}: expected a nonempty string")
    return raw


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    """Build a Scenario from the schema dictionary. Raises
    ScenarioFormatError for structure problems and ScenarioValidationError
    for domain violations."""
    if not isinstance(doc, Mapping):
        raise ScenarioFormatError("top level: expected a mapping")
    version = doc.get("schema_version")
    if not isinstance(version, int):
        raise ScenarioFormatError("schema_version: missing or not an integer")

    market_raw = _need(doc, "market", "")
    market = MarketData(
        power_price=_series(_need(market_raw, "power_price", "market"), "market.power_price"),
        gas_price=_series(_need(market_raw, "gas_price", "market"), "market.gas_price"),
        dt_h=_num(_need(market_raw, "dt_h", "market"), "market.dt_h"),
    )

    blend_raw = _need(doc, "blend", "")
    blend = BlendConstants(
        hhv_ch4=_num(_need(blend_raw, "hhv_ch4", "blend"), "blend.hhv_ch4"),
        hhv_h2=_num(_need(blend_raw, "hhv_h2", "blend"), "blend.hhv_h2"),
        omega_max=_num(_need(blend_raw, "omega_max", "blend"), "blend.omega_max"),
    )

    pw_raw = _need(doc, "power_network", "")
    buses = tuple(
        Bus(
            id=_text(_need(b, "id", f"power_network.buses[{k}]"), f"power_network.buses[{k}].id"),
            v_min=_num(_need(b, "v_min", f"power_network.buses[{k}]"), f"power_network.buses[{k}].v_min"),
            v_max=_num(_need(b, "v_max", f"power_network.buses[{k}]"), f"power_network.buses[{k}].v_max"),
            p_load_kw=_series(_need(b, "p_load_kw", f"power_network.buses[{k}]"), f"power_network.buses[{k}].p_load_kw"),
            q_load_kvar=_series(_need(b, "q_load_kvar", f"power_network.buses[{k}]"), f"power_network.buses[{k}].q_load_kvar"),
        )
        for k, b in enumerate(_need(pw_raw, "buses", "power_network"))
    )
    branches = tuple(
        Branch(
            from_bus=_text(_need(b, "from", f"power_network.branches[{k}]"), f"power_network.branches[{k}].from"),
            to_bus=_text(_need(b, "to", f"power_network.branches[{k}]"), f"power_network.branches[{k}].to"),
            r_pu=_num(_need(b, "r_pu", f"power_network.branches[{k}]"), f"power_network.branches[{k}].r_pu"),
            x_pu=_num(_need(b, "x_pu", f"power_network.branches[{k}]"), f"power_network.branches[{k}].x_pu"),
        )
        for k, b in enumerate(_need(pw_raw, "branches", "power_network"))
    )
    power = PowerNetwork(
        buses=buses,
        branches=branches,
        slack=_text(_need(pw_raw, "slack", "power_network"), "power_network.slack"),
        base_kva=_num(_need(pw_raw, "base_kva", "power_network"), "power_network.base_kva"),
    )

    gas_raw = _need(doc, "gas_network", "")
    nodes = tuple(
        GasNode(
            id=_text(_need(n, "id", f"gas_network.nodes[{k}]"), f"gas_network.nodes[{k}].id"),
            pressure_min=_num(_need(n, "pressure_min", f"gas_network.nodes[{k}]"), f"gas_network.nodes[{k}].pressure_min"),
            pressure_max=_num(_need(n, "pressure_max", f"gas_network.nodes[{k}]"), f"gas_network.nodes[{k}].pressure_max"),
            load_m3=_series(_need(n, "load_m3", f"gas_network.nodes[{k}]"), f"gas_network.nodes[{k}].load_m3"),
        )
        for k, n in enumerate(_need(gas_raw, "nodes", "gas_network"))
    )
    pipes = tuple(
        GasPipe(
            from_node=_text(_need(p, "from", f"gas_network.pipes[{k}]"), f"gas_network.pipes[{k}].from"),
            to_node=_text(_need(p, "to", f"gas_network.pipes[{k}]"), f"gas_network.pipes[{k}].to"),
            weymouth=_num(_need(p, "weymouth", f"gas_network.pipes[{k}]"), f"gas_network.pipes[{k}].weymouth"),
        )
        for k, p in enumerate(_need(gas_raw, "pipes", "gas_network"))
    )
    gas = GasNetwork(
        nodes=nodes,
        pipes=pipes,
        source=_text(_need(gas_raw, "source", "gas_network"), "gas_network.source"),
    )

    dev_raw = doc.get("devices", {}) or {}
    devices = DeviceFleet(
        electrolyzers=tuple(
            Electrolyzer(
                id=_text(_need(d, "id", f"devices.electrolyzers[{k}]"), "id"),
                bus=_text(_need(d, "bus", f"devices.electrolyzers[{k}]"), "bus"),
                gas_node=_text(_need(d, "gas_node", f"devices.electrolyzers[{k}]"), "gas_node"),
                rated_kw=_num(_need(d, "rated_kw", f"devices.electrolyzers[{k}]"), "rated_kw"),
                efficiency=_num(_need(d, "efficiency", f"devices.electrolyzers[{k}]"), "efficiency"),
                unit_cost=_num(_need(d, "unit_cost", f"devices.electrolyzers[{k}]"), "unit_cost"),
                lifetime_h=_num(_need(d, "lifetime_h", f"devices.electrolyzers[{k}]"), "lifetime_h"),
            )
            for k, d in enumerate(dev_raw.get("electrolyzers", []) or [])
        ),
        fuel_cells=tuple(
            FuelCell(
                id=_text(_need(d, "id", f"devices.fuel_cells[{k}]"), "id"),
                bus=_text(_need(d, "bus", f"devices.fuel_cells[{k}]"), "bus"),
                gas_node=_text(_need(d, "gas_node", f"devices.fuel_cells[{k}]"), "gas_node"),
                rated_kw=_num(_need(d, "rated_kw", f"devices.fuel_cells[{k}]"), "rated_kw"),
                efficiency=_num(_need(d, "efficiency", f"devices.fuel_cells[{k}]"), "efficiency"),
                unit_cost=_num(_need(d, "unit_cost", f"devices.fuel_cells[{k}]"), "unit_cost"),
                lifetime_h=_num(_need(d, "lifetime_h", f"devices.fuel_cells[{k}]"), "lifetime_h"),
            )
            for k, d in enumerate(dev_raw.get("fuel_cells", []) or [])
        ),
        tanks=tuple(
            HydrogenTank(
                id=_text(_need(d, "id", f"devices.tanks[{k}]"), "id"),
                electrolyzer=_text(_need(d, "electrolyzer", f"devices.tanks[{k}]"), "electrolyzer"),
                gas_node=_text(_need(d, "gas_node", f"devices.tanks[{k}]"), "gas_node"),
                capacity_m3=_num(_need(d, "capacity_m3", f"devices.tanks[{k}]"), "capacity_m3"),
                unit_cost=_num(_need(d, "unit_cost", f"devices.tanks[{k}]"), "unit_cost"),
                lifetime_h=_num(_need(d, "lifetime_h", f"devices.tanks[{k}]"), "lifetime_h"),
            )
            for k, d in enumerate(dev_raw.get("tanks", []) or [])
        ),
        batteries=tuple(
            Battery(
                id=_text(_need(d, "id", f"devices.batteries[{k}]"), "id"),
                bus=_text(_need(d, "bus", f"devices.batteries[{k}]"), "bus"),
                rated_kw=_num(_need(d, "rated_kw", f"devices.batteries[{k}]"), "rated_kw"),
                capacity_kwh=_num(_need(d, "capacity_kwh", f"devices.batteries[{k}]"), "capacity_kwh"),
                capacity_cost=_num(_need(d, "capacity_cost", f"devices.batteries[{k}]"), "capacity_cost"),
                power_cost=_num(_need(d, "power_cost", f"devices.batteries[{k}]"), "power_cost"),
                soc_min=_num(_need(d, "soc_min", f"devices.batteries[{k}]"), "soc_min"),
                soc_max=_num(_need(d, "soc_max", f"devices.batteries[{k}]"), "soc_max"),
                cycle_a1=_num(_need(d, "cycle_a1", f"devices.batteries[{k}]"), "cycle_a1"),
                cycle_b1=_num(_need(d, "cycle_b1", f"devices.batteries[{k}]"), "cycle_b1"),
                cycle_a2=_num(_need(d, "cycle_a2", f"devices.batteries[{k}]"), "cycle_a2"),
                cycle_b2=_num(_need(d, "cycle_b2", f"devices.batteries[{k}]"), "cycle_b2"),
                depth_of_discharge=_num(_need(d, "depth_of_discharge", f"devices.batteries[{k}]"), "depth_of_discharge"),
            )
            for k, d in enumerate(dev_raw.get("batteries", []) or [])
        ),
        ders=tuple(
            DerUnit(
                id=_text(_need(d, "id", f"devices.ders[{k}]"), "id"),
                bus=_text(_need(d, "bus", f"devices.ders[{k}]"), "bus"),
                p_forecast_kw=_series(_need(d, "p_forecast_kw", f"devices.ders[{k}]"), "p_forecast_kw"),
                q_kvar=_series(_need(d, "q_kvar", f"devices.ders[{k}]"), "q_kvar"),
            )
            for k, d in enumerate(dev_raw.get("ders", []) or [])
        ),
    )

    unc_raw = doc.get("uncertainty", {}) or {}
    uncertainty = UncertaintyBox(
        phi_load=_num(unc_raw.get("phi_load", 0.05), "uncertainty.phi_load"),
        phi_der=_num(unc_raw.get("phi_der", 0.15), "uncertainty.phi_der"),
        orientation=str(unc_raw.get("box", "symmetric")),
    )

    alg_raw = doc.get("algorithm", {}) or {}
    known = {f.name for f in fields(AlgorithmParams)}
    unknown = set(alg_raw) - known
    if unknown:
        raise ScenarioFormatError(f"algorithm: unknown keys {sorted(unknown)}")
    algorithm = AlgorithmParams(**alg_raw)

    sc = Scenario(
        name=_text(doc.get("name", "unnamed"), "name"),
        schema_version=version,
        power=power,
        gas=gas,
        devices=devices,
        market=market,
        blend=blend,
        uncertainty=uncertainty,
        algorithm=algorithm,
        variant=str(doc.get("variant", "model1")),
    )
    violations = validate_scenario(sc)
    if violations:
        raise ScenarioValidationError(violations)
    return sc


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    return {
        "schema_version": sc.schema_version,
        "name": sc.name,
        "variant": sc.variant,
        "market": {
            "dt_h": sc.market.dt_h,
            "power_price": list(sc.market.power_price),
            "gas_price": list(sc.market.gas_price),
        },
        "blend": {
            "hhv_ch4": sc.blend.hhv_ch4,
            "hhv_h2": sc.blend.hhv_h2,
            "omega_max": sc.blend.omega_max,
        },
        "power_network": {
            "base_kva": sc.power.base_kva,
            "slack": sc.power.slack,
            "buses": [
                {
                    "id": b.id,
                    "v_min": b.v_min,
                    "v_max": b.v_max,
                    "p_load_kw": list(b.p_load_kw),
                    "q_load_kvar": list(b.q_load_kvar),
                }
                for b in sc.power.buses
            ],
            "branches": [
                {"from": b.from_bus, "to": b.to_bus, "r_pu": b.r_pu, "x_pu": b.x_pu}
                for b in sc.power.branches
            ],
        },
        "gas_network": {
            "source": sc.gas.source,
            "nodes": [
                {
                    "id": n.id,
                    "pressure_min": n.pressure_min,
                    "pressure_max": n.pressure_max,
                    "load_m3": list(n.load_m3),
                }
                for n in sc.gas.nodes
            ],
            "pipes": [
                {"from": p.from_node, "to": p.to_node, "weymouth": p.weymouth}
                for p in sc.gas.pipes
            ],
        },
        "devices": {
            "electrolyzers": [
                {
                    "id": d.id, "bus": d.bus, "gas_node": d.gas_node,
                    "rated_kw": d.rated_kw, "efficiency": d.efficiency,
                    "unit_cost": d.unit_cost, "lifetime_h": d.lifetime_h,
                }
                for d in sc.devices.electrolyzers
            ],
            "fuel_cells": [
                {
                    "id": d.id, "bus": d.bus, "gas_node": d.gas_node,
                    "rated_kw": d.rated_kw, "efficiency": d.efficiency,
                    "unit_cost": d.unit_cost, "lifetime_h": d.lifetime_h,
                }
                for d in sc.devices.fuel_cells
            ],
            "tanks": [
                {
                    "id": d.id, "electrolyzer": d.electrolyzer, "gas_node": d.gas_node,
                    "capacity_m3": d.capacity_m3, "unit_cost": d.unit_cost,
                    "lifetime_h": d.lifetime_h,
                }
                for d in sc.devices.tanks
            ],
            "batteries": [
                {
                    "id": d.id, "bus": d.bus, "rated_kw": d.rated_kw,
                    "capacity_kwh": d.capacity_kwh, "capacity_cost": d.capacity_cost,
                    "power_cost": d.power_cost, "soc_min": d.soc_min,
                    "soc_max": d.soc_max, "cycle_a1": d.cycle_a1,
                    "cycle_b1": d.cycle_b1, "cycle_a2": d.cycle_a2,
                    "cycle_b2": d.cycle_b2,
                    "depth_of_discharge": d.depth_of_discharge,
                }
                for d in sc.devices.batteries
            ],
            "ders": [
                {
                    "id": d.id, "bus": d.bus,
                    "p_forecast_kw": list(d.p_forecast_kw),
                    "q_kvar": list(d.q_kvar),
                }
                for d in sc.devices.ders
            ],
        },
        "uncertainty": {
            "phi_load": sc.uncertainty.phi_load,
            "phi_der": sc.uncertainty.phi_der,
            "box": sc.uncertainty.orientation,
        },
        "algorithm": {
            f.name: getattr(sc.algorithm, f.name)
            for f in fields(AlgorithmParams)
            if getattr(sc.algorithm, f.name) != f.default
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    raw = Path(path).read_text()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as err:
        raise ScenarioFormatError(f"{path}: not valid YAML ({err})") from err
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)
    )


def scenario_content_hash(sc: Scenario) -> str:
    """Stable hash of the scenario content (canonical serialization), used
    to stamp every emitted result file."""
    canonical = yaml.safe_dump(scenario_to_dict(sc), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def bundled_scenario_names() -> list[str]:
    data = resources.files("hcng_trade").joinpath("data")
    return sorted(p.name[: -len(".yaml")] for p in data.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name: str) -> Scenario:
    ref = resources.files("hcng_trade").joinpath(f"data/{name}.yaml")
    if not ref.is_file():
        raise ScenarioFormatError(
            f"no bundled scenario {name!r}; available: {bundled_scenario_names()}"
        )
    return scenario_from_dict(yaml.safe_load(ref.read_text()))

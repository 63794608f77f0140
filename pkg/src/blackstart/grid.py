"""Grid, generator and instance types, plus instance I/O and validation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

BS = "BS"
NBS = "NBS"
TRANSSHIPMENT = "transshipment"

DEFAULT_PERIOD_MINUTES = 5


class InstanceError(ValueError):
    """Raised when an instance cannot be parsed or violates an invariant."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


@dataclass(frozen=True)
class NbsParams:
    """Startup parameters of a non-black-start unit.

    ``crank_mw`` is drawn for ``crank_periods`` periods after the start, then
    output ramps linearly over ``ramp_periods`` periods up to ``max_mw``.
    """

    crank_mw: float
    crank_periods: int
    ramp_periods: int
    max_mw: float


def capacity_at(params: NbsParams, offset: int) -> float:
    """Output of a unit ``offset`` periods into its startup (offset 1 = start period)."""
    tc, tr = params.crank_periods, params.ramp_periods
    if offset <= tc:
        return -params.crank_mw
    if offset <= tc + tr:
        return (offset - tc - 1) * params.max_mw / tr
    return params.max_mw


@dataclass(frozen=True)
class BsCurve:
    """Black-start capacity per period; the last value is held past the series end."""

    series: tuple[float, ...]

    @classmethod
    def constant(cls, mw: float) -> "BsCurve":
        return cls((float(mw),))

    @property
    def is_constant(self) -> bool:
        return len(set(self.series)) == 1

    def at(self, t: int) -> float:
        return self.series[min(t, len(self.series)) - 1]

    def values(self, horizon: int) -> np.ndarray:
        return np.array([self.at(t) for t in range(1, horizon + 1)], dtype=float)

    def __add__(self, other: "BsCurve") -> "BsCurve":
        n = max(len(self.series), len(other.series))
        return BsCurve(tuple(self.at(t) + other.at(t) for t in range(1, n + 1)))


@dataclass(frozen=True)
class CriticalLoad:
    bus: int
    demand_mw: float

    def as_params(self, horizon: int) -> NbsParams:
        # a load never produces power: it consumes its demand for the whole horizon
        return NbsParams(self.demand_mw, horizon, 0, 0.0)


@dataclass(frozen=True)
class Instance:
    """An immutable restoration instance.

    ``lines`` carry a fixed orientation with the lower bus id first.  Every
    non-BS bus carries at most one unit: an NBS generator or a critical load.
    """

    buses: tuple[int, ...]
    lines: tuple[tuple[int, int], ...]
    bs_generators: Mapping[int, BsCurve]
    nbs_generators: Mapping[int, NbsParams] = field(default_factory=dict)
    critical_loads: Mapping[int, CriticalLoad] = field(default_factory=dict)
    name: str = "instance"
    period_minutes: float = DEFAULT_PERIOD_MINUTES
    critical_windows: Mapping[int, tuple[int, int]] = field(default_factory=dict)
    balance_limit: float | None = None
    net_mw: Mapping[int, float] = field(default_factory=dict)

    # -- node sets ---------------------------------------------------------
    @property
    def bs_buses(self) -> list[int]:
        return sorted(self.bs_generators)

    @property
    def unit_buses(self) -> list[int]:
        """Buses of the set I: NBS generators and critical loads."""
        return sorted(set(self.nbs_generators) | set(self.critical_loads))

    @property
    def transshipment_buses(self) -> list[int]:
        taken = set(self.bs_generators) | set(self.nbs_generators) | set(self.critical_loads)
        return sorted(b for b in set(self.buses) if b not in taken)

    def role(self, bus: int) -> str:
        if bus in self.bs_generators:
            return BS
        if bus in self.nbs_generators or bus in self.critical_loads:
            return NBS
        return TRANSSHIPMENT

    def unit_params(self, bus: int, horizon: int) -> NbsParams:
        if bus in self.nbs_generators:
            return self.nbs_generators[bus]
        return self.critical_loads[bus].as_params(horizon)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(set(self.buses)))
        g.add_edges_from(self.lines)
        return g

    def aggregate_curve(self) -> BsCurve:
        curves = [self.bs_generators[j] for j in self.bs_buses]
        total = curves[0]
        for c in curves[1:]:
            total = total + c
        return total

    # -- derived instances ---------------------------------------------------
    def subinstance(self, buses: Iterable[int]) -> "Instance":
        """Induced sub-instance on ``buses``; options are restricted accordingly."""
        keep = set(buses)

        def restrict(m):
            return {k: v for k, v in m.items() if k in keep}

        return replace(
            self,
            buses=tuple(sorted(keep)),
            lines=tuple(e for e in self.lines if e[0] in keep and e[1] in keep),
            bs_generators=restrict(self.bs_generators),
            nbs_generators=restrict(self.nbs_generators),
            critical_loads=restrict(self.critical_loads),
            critical_windows=restrict(self.critical_windows),
            net_mw=restrict(self.net_mw),
        )

    def with_lines(self, lines: Iterable[tuple[int, int]]) -> "Instance":
        return replace(self, lines=normalize_lines(lines))

    def without_options(self, windows: bool = False, balance: bool = False) -> "Instance":
        """Copy with the critical-window and/or balance side constraints removed."""
        out = self
        if windows:
            out = replace(out, critical_windows={})
        if balance:
            out = replace(out, balance_limit=None)
        return out


def normalize_lines(lines: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted({(min(u, v), max(u, v)) for u, v in lines}))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_instance(instance: Instance) -> list[str]:
    """Return the violated invariants of ``instance`` (empty list when valid)."""
    v: list[str] = []
    ids = list(instance.buses)
    seen: set[int] = set()
    for b in ids:
        if b in seen:
            v.append(f"duplicate bus id {b}")
        seen.add(b)
    buses = set(ids)

    pairs: set[tuple[int, int]] = set()
    for u, w in instance.lines:
        if u == w:
            v.append(f"self-loop line ({u},{w})")
            continue
        if u not in buses or w not in buses:
            v.append(f"line ({u},{w}) references an unknown bus")
        key = (min(u, w), max(u, w))
        if key in pairs:
            v.append(f"duplicate line ({u},{w})")
        pairs.add(key)

    if not instance.bs_generators:
        v.append("no black-start bus")
    for name, m in (
        ("bs", instance.bs_generators),
        ("nbs", instance.nbs_generators),
        ("critical load", instance.critical_loads),
        ("critical window", instance.critical_windows),
        ("net generation", instance.net_mw),
    ):
        for b in m:
            if b not in buses:
                v.append(f"{name} entry on unknown bus {b}")

    bs, nbs, loads = set(instance.bs_generators), set(instance.nbs_generators), set(instance.critical_loads)
    for b in sorted(bs & (nbs | loads)):
        v.append(f"BS bus {b} also carries an NBS unit or critical load")
    for b in sorted(nbs & loads):
        v.append(f"bus {b} carries both an NBS generator and a critical load")

    for j, curve in instance.bs_generators.items():
        if not curve.series:
            v.append(f"BS curve at bus {j} is empty")
        elif any(not math.isfinite(x) or x < 0 for x in curve.series):
            v.append(f"BS curve at bus {j} has a negative or non-finite entry")
        elif any(b < a for a, b in zip(curve.series, curve.series[1:])):
            logger.warning("BS curve at bus %s decreases", j)

    for b, p in instance.nbs_generators.items():
        vals = (p.crank_mw, p.crank_periods, p.ramp_periods, p.max_mw)
        if not all(math.isfinite(x) for x in vals):
            v.append(f"NBS {b}: non-finite parameter")
            continue
        if p.crank_mw < 0:
            v.append(f"NBS {b}: negative crank_mw")
        if p.crank_periods < 0:
            v.append(f"NBS {b}: negative crank_periods")
        if p.ramp_periods < 1:
            v.append(f"NBS {b}: ramp_periods must be >= 1")
        if p.max_mw <= 0:
            v.append(f"NBS {b}: max_mw must be > 0")

    for b, load in instance.critical_loads.items():
        if not math.isfinite(load.demand_mw) or load.demand_mw <= 0:
            v.append(f"critical load {b}: demand_mw must be > 0")

    units = nbs | loads
    for b, (et, lt) in instance.critical_windows.items():
        if b in buses and b not in units:
            v.append(f"critical window on bus {b} which has no NBS unit or critical load")
        if et > lt:
            v.append(f"critical window on bus {b}: earliest {et} > latest {lt}")

    if instance.balance_limit is not None and instance.balance_limit < 0:
        v.append("balance limit must be >= 0")

    if buses and not any("unknown bus" in x for x in v):
        g = instance.graph()
        if not nx.is_connected(g):
            v.append(f"disconnected graph ({nx.number_connected_components(g)} components)")
    if not buses:
        v.append("no buses")
    return v


def check_instance(instance: Instance) -> Instance:
    violations = validate_instance(instance)
    if violations:
        raise InstanceError("invalid instance: " + "; ".join(violations), violations)
    return instance


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def _num(obj: Mapping, key: str, where: str, integer: bool = False):
    if key not in obj:
        raise InstanceError(f"{where}: missing field '{key}'")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InstanceError(f"{where}.{key}: expected a number, got {val!r}")
    if integer:
        if float(val) != int(val):
            raise InstanceError(f"{where}.{key}: expected an integer, got {val!r}")
        return int(val)
    return float(val)


def instance_from_dict(data: Mapping) -> Instance:
    """Build an instance from the parsed JSON schema without validating invariants."""
    if not isinstance(data, Mapping):
        raise InstanceError("instance: top level must be an object")
    buses = data.get("buses")
    if not isinstance(buses, list):
        raise InstanceError("instance: 'buses' must be a list of integers")
    bus_ids = []
    for k, b in enumerate(buses):
        if isinstance(b, Mapping):
            b = b.get("id")
        if isinstance(b, bool) or not isinstance(b, int):
            raise InstanceError(f"buses[{k}]: expected an integer bus id, got {b!r}")
        bus_ids.append(b)

    lines = []
    for k, e in enumerate(data.get("lines", [])):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)):
            raise InstanceError(f"lines[{k}]: expected a pair of bus ids, got {e!r}")
        lines.append((int(e[0]), int(e[1])))

    bs: dict[int, BsCurve] = {}
    for k, rec in enumerate(data.get("bs", [])):
        where = f"bs[{k}]"
        bus = _num(rec, "bus", where, integer=True)
        if bus in bs:
            raise InstanceError(f"{where}: second BS generator on bus {bus}")
        if "curve" in rec:
            curve = rec["curve"]
            if not isinstance(curve, list) or not curve or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in curve
            ):
                raise InstanceError(f"{where}.curve: expected a non-empty list of numbers")
            bs[bus] = BsCurve(tuple(float(x) for x in curve))
        else:
            bs[bus] = BsCurve.constant(_num(rec, "constant", where))

    nbs: dict[int, NbsParams] = {}
    for k, rec in enumerate(data.get("nbs", [])):
        where = f"nbs[{k}]"
        bus = _num(rec, "bus", where, integer=True)
        if bus in nbs:
            raise InstanceError(f"{where}: second NBS generator on bus {bus}")
        nbs[bus] = NbsParams(
            crank_mw=_num(rec, "crank_mw", where),
            crank_periods=_num(rec, "crank_periods", where, integer=True),
            ramp_periods=_num(rec, "ramp_periods", where, integer=True),
            max_mw=_num(rec, "max_mw", where),
        )

    loads: dict[int, CriticalLoad] = {}
    for k, rec in enumerate(data.get("critical_loads", [])):
        where = f"critical_loads[{k}]"
        bus = _num(rec, "bus", where, integer=True)
        if bus in loads:
            raise InstanceError(f"{where}: second critical load on bus {bus}")
        loads[bus] = CriticalLoad(bus, _num(rec, "demand_mw", where))

    windows: dict[int, tuple[int, int]] = {}
    for k, rec in enumerate(data.get("critical_windows", [])):
        where = f"critical_windows[{k}]"
        bus = _num(rec, "bus", where, integer=True)
        windows[bus] = (_num(rec, "earliest", where, integer=True), _num(rec, "latest", where, integer=True))

    limit = None
    net: dict[int, float] = {}
    balance = data.get("balance")
    if balance is not None:
        if not isinstance(balance, Mapping):
            raise InstanceError("balance: expected an object")
        limit = _num(balance, "limit_mw", "balance")
        for key, val in balance.get("net_mw", {}).items():
            try:
                net[int(key)] = float(val)
            except (TypeError, ValueError):
                raise InstanceError(f"balance.net_mw[{key!r}]: expected bus id -> number") from None

    period = data.get("period_minutes", DEFAULT_PERIOD_MINUTES)
    return Instance(
        buses=tuple(bus_ids),
        # orientation fixed here; duplicates are kept so validation can report them
        lines=tuple(sorted((min(u, v), max(u, v)) for u, v in lines)),
        bs_generators=bs,
        nbs_generators=nbs,
        critical_loads=loads,
        name=str(data.get("name", "instance")),
        period_minutes=float(period),
        critical_windows=windows,
        balance_limit=limit,
        net_mw=net,
    )


def load_instance(text: str) -> Instance:
    """Parse and validate an instance from its JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceError(f"parse error at line {e.lineno} column {e.colno}: {e.msg}") from None
    inst = instance_from_dict(data)
    return check_instance(inst)


def read_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return load_instance(fh.read())


def _clean(x: float):
    return int(x) if float(x).is_integer() else x


def instance_to_dict(instance: Instance) -> dict:
    out: dict = {
        "name": instance.name,
        "period_minutes": _clean(instance.period_minutes),
        "buses": sorted(instance.buses),
        "lines": [list(e) for e in instance.lines],
        "bs": [],
        "nbs": [],
        "critical_loads": [],
    }
    for j in instance.bs_buses:
        c = instance.bs_generators[j]
        if c.is_constant:
            out["bs"].append({"bus": j, "constant": _clean(c.series[0])})
        else:
            out["bs"].append({"bus": j, "curve": [_clean(x) for x in c.series]})
    for b in sorted(instance.nbs_generators):
        p = instance.nbs_generators[b]
        out["nbs"].append({
            "bus": b,
            "crank_mw": _clean(p.crank_mw),
            "crank_periods": p.crank_periods,
            "ramp_periods": p.ramp_periods,
            "max_mw": _clean(p.max_mw),
        })
    for b in sorted(instance.critical_loads):
        out["critical_loads"].append({"bus": b, "demand_mw": _clean(instance.critical_loads[b].demand_mw)})
    if instance.critical_windows:
        out["critical_windows"] = [
            {"bus": b, "earliest": et, "latest": lt}
            for b, (et, lt) in sorted(instance.critical_windows.items())
        ]
    if instance.balance_limit is not None:
        out["balance"] = {
            "limit_mw": _clean(instance.balance_limit),
            "net_mw": {str(b): _clean(d) for b, d in sorted(instance.net_mw.items())},
        }
    return out


def dump_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"

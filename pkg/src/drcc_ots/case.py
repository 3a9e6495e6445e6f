"""Grid case data model, JSON/MATPOWER ingestion and dc network operators.

Documents carry MW and $/MWh; :meth:`GridCase.arrays` exposes the
bus-indexed per-unit vectors that every formulation consumes.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DanglingLineEndpoint,
    DisconnectedBaseGraph,
    InfeasibleBounds,
    MalformedDocument,
)

CASE_SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class Bus:
    id: int
    theta_min: float = -0.6
    theta_max: float = 0.6


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    b: float  # susceptance, per unit
    f_max: float  # MW
    switchable: bool = True
    dtheta_max: float | None = None  # rad, overrides the endpoint spread


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float  # MW
    p_max: float
    r_min: float  # MW, reserve (<= 0)
    r_max: float
    cost: float  # $/MWh
    recourse_cost: float  # $/MWh


@dataclass(frozen=True)
class CaseArrays:
    """Bus/line indexed per-unit vectors derived from a :class:`GridCase`."""

    n_bus: int
    n_line: int
    base_mva: float
    slack: int
    from_idx: np.ndarray
    to_idx: np.ndarray
    b: np.ndarray
    f_max: np.ndarray
    switchable: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray
    g_min: np.ndarray
    g_max: np.ndarray
    r_min: np.ndarray
    r_max: np.ndarray
    cost: np.ndarray  # $/h per p.u.
    recourse_cost: np.ndarray
    demand: np.ndarray
    is_gen: np.ndarray


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: dict[int, float] = field(default_factory=dict)
    slack_bus: int = 1
    base_mva: float = 100.0
    name: str = ""

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    def bus_index(self) -> dict[int, int]:
        return {bus.id: k for k, bus in enumerate(self.buses)}

    def with_flow_limit_scale(self, scale: float) -> GridCase:
        """Uniformly scale every line flow limit."""
        if scale <= 0:
            raise InfeasibleBounds(f"flow_limit_scale must be positive, got {scale}")
        lines = tuple(replace(ln, f_max=ln.f_max * scale) for ln in self.lines)
        return replace(self, lines=lines)

    def arrays(self) -> CaseArrays:
        idx = self.bus_index()
        n, nl, base = self.n_bus, self.n_line, self.base_mva
        g_min = np.zeros(n)
        g_max = np.zeros(n)
        r_min = np.zeros(n)
        r_max = np.zeros(n)
        cost = np.zeros(n)
        qcost = np.zeros(n)
        is_gen = np.zeros(n, dtype=bool)
        for gen in self.generators:
            k = idx[gen.bus]
            is_gen[k] = True
            g_min[k] += gen.p_min
            g_max[k] += gen.p_max
            r_min[k] += gen.r_min
            r_max[k] += gen.r_max
            cost[k] = gen.cost
            qcost[k] = gen.recourse_cost
        demand = np.zeros(n)
        for bus, mw in self.loads.items():
            demand[idx[bus]] += mw
        return CaseArrays(
            n_bus=n,
            n_line=nl,
            base_mva=base,
            slack=idx[self.slack_bus],
            from_idx=np.array([idx[ln.from_bus] for ln in self.lines], dtype=int),
            to_idx=np.array([idx[ln.to_bus] for ln in self.lines], dtype=int),
            b=np.array([ln.b for ln in self.lines], dtype=float),
            f_max=np.array([ln.f_max for ln in self.lines], dtype=float) / base,
            switchable=np.array([ln.switchable for ln in self.lines], dtype=bool),
            theta_min=np.array([bus.theta_min for bus in self.buses], dtype=float),
            theta_max=np.array([bus.theta_max for bus in self.buses], dtype=float),
            g_min=g_min / base,
            g_max=g_max / base,
            r_min=r_min / base,
            r_max=r_max / base,
            cost=cost * base,
            recourse_cost=qcost * base,
            demand=demand / base,
            is_gen=is_gen,
        )


@dataclass(frozen=True)
class NetworkOperators:
    """Incidence matrix ``A`` (N x L), branch matrix ``K`` (L x N), big-M ``M`` (L)."""

    A: np.ndarray
    K: np.ndarray
    M: np.ndarray


def _require(doc, key, kind=None):
    if key not in doc:
        raise MalformedDocument(f"missing key {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise MalformedDocument(f"key {key!r} has wrong type {type(value).__name__}")
    return value


def _num(item, key, default=None):
    if key not in item:
        if default is None:
            raise MalformedDocument(f"missing field {key!r} in {item!r}")
        return float(default)
    value = item[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedDocument(f"field {key!r} must be numeric, got {value!r}")
    return float(value)


def is_connected(n_bus: int, from_idx, to_idx, closed=None) -> bool:
    """True when the closed-line graph spans all buses in one component."""
    from_idx = np.asarray(from_idx)
    to_idx = np.asarray(to_idx)
    if closed is not None:
        mask = np.asarray(closed) > 0.5
        from_idx, to_idx = from_idx[mask], to_idx[mask]
    if n_bus <= 1:
        return True
    graph = csr_matrix((np.ones(len(from_idx)), (from_idx, to_idx)), shape=(n_bus, n_bus))
    n_comp, _ = connected_components(graph, directed=False)
    return n_comp == 1


def validate_case(case: GridCase) -> GridCase:
    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        raise MalformedDocument("duplicate bus ids")
    if not case.buses:
        raise MalformedDocument("case has no buses")
    known = set(ids)
    if case.slack_bus not in known:
        raise DanglingLineEndpoint(f"slack bus {case.slack_bus} does not exist")
    if case.base_mva <= 0:
        raise InfeasibleBounds("base_mva must be positive")
    for bus in case.buses:
        if not bus.theta_min < bus.theta_max:
            raise InfeasibleBounds(f"bus {bus.id}: theta_min >= theta_max")
    for k, ln in enumerate(case.lines):
        for end in (ln.from_bus, ln.to_bus):
            if end not in known:
                raise DanglingLineEndpoint(f"line {k} ({ln.from_bus},{ln.to_bus}) references bus {end}")
        if ln.from_bus == ln.to_bus:
            raise MalformedDocument(f"line {k} is a self loop")
        if not ln.b > 0:
            raise InfeasibleBounds(f"line {k}: susceptance must be positive")
        if ln.f_max < 0:
            raise InfeasibleBounds(f"line {k}: negative flow limit")
        if ln.dtheta_max is not None and not ln.dtheta_max > 0:
            raise InfeasibleBounds(f"line {k}: dtheta_max must be positive")
    for gen in case.generators:
        if gen.bus not in known:
            raise DanglingLineEndpoint(f"generator references bus {gen.bus}")
        if gen.p_min > gen.p_max:
            raise InfeasibleBounds(f"generator at bus {gen.bus}: p_min > p_max")
        if not gen.r_min <= 0 <= gen.r_max:
            raise InfeasibleBounds(f"generator at bus {gen.bus}: reserve limits must bracket 0")
    costs: dict[int, tuple[float, float]] = {}
    for gen in case.generators:
        prev = costs.setdefault(gen.bus, (gen.cost, gen.recourse_cost))
        if prev != (gen.cost, gen.recourse_cost):
            raise MalformedDocument(f"generators at bus {gen.bus} have different costs")
    for bus in case.loads:
        if bus not in known:
            raise DanglingLineEndpoint(f"load references bus {bus}")
    idx = case.bus_index()
    fr = [idx[ln.from_bus] for ln in case.lines]
    to = [idx[ln.to_bus] for ln in case.lines]
    if not is_connected(case.n_bus, fr, to):
        raise DisconnectedBaseGraph("unswitched network is not connected")
    return case


def parse_case(document) -> GridCase:
    """Build a validated :class:`GridCase` from the JSON case format.

    ``document`` may be a mapping, a JSON string or a path.
    """
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith(("{", "["))):
        document = Path(document).read_text()
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise MalformedDocument("case document must be a JSON object")
    try:
        buses = tuple(
            Bus(
                id=int(_num(item, "id")),
                theta_min=_num(item, "theta_min", -0.6),
                theta_max=_num(item, "theta_max", 0.6),
            )
            for item in _require(document, "buses", list)
        )
        lines = tuple(
            Line(
                from_bus=int(_num(item, "from")),
                to_bus=int(_num(item, "to")),
                b=_num(item, "b"),
                f_max=_num(item, "f_max"),
                switchable=bool(item.get("switchable", True)),
                dtheta_max=None if item.get("dtheta_max") is None else _num(item, "dtheta_max"),
            )
            for item in _require(document, "lines", list)
        )
        generators = []
        for item in _require(document, "generators", list):
            p_max = _num(item, "p_max")
            generators.append(
                Generator(
                    bus=int(_num(item, "bus")),
                    p_min=_num(item, "p_min", 0.0),
                    p_max=p_max,
                    r_min=_num(item, "r_min", -p_max),
                    r_max=_num(item, "r_max", p_max),
                    cost=_num(item, "cost"),
                    recourse_cost=_num(item, "recourse_cost", _num(item, "cost")),
                )
            )
        raw_loads = document.get("loads", {})
        if not isinstance(raw_loads, dict):
            raise MalformedDocument("loads must map bus id to MW")
        loads = {}
        for key, value in raw_loads.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise MalformedDocument(f"load at bus {key} must be numeric")
            loads[int(key)] = float(value)
        slack = int(_num(document, "slack_bus", buses[0].id if buses else 1))
        base = _num(document, "base_mva", 100.0)
    except (TypeError, ValueError, AttributeError) as exc:
        raise MalformedDocument(str(exc)) from exc
    case = GridCase(
        buses=buses,
        lines=lines,
        generators=tuple(generators),
        loads=loads,
        slack_bus=slack,
        base_mva=base,
        name=str(document.get("name", "")),
    )
    return validate_case(case)


def case_to_document(case: GridCase) -> dict:
    lines = []
    for ln in case.lines:
        item = {"from": ln.from_bus, "to": ln.to_bus, "b": ln.b, "f_max": ln.f_max, "switchable": ln.switchable}
        if ln.dtheta_max is not None:
            item["dtheta_max"] = ln.dtheta_max
        lines.append(item)
    return {
        "schema_version": CASE_SCHEMA_VERSION,
        "name": case.name,
        "base_mva": case.base_mva,
        "slack_bus": case.slack_bus,
        "buses": [{"id": b.id, "theta_min": b.theta_min, "theta_max": b.theta_max} for b in case.buses],
        "lines": lines,
        "generators": [
            {
                "bus": g.bus,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "r_min": g.r_min,
                "r_max": g.r_max,
                "cost": g.cost,
                "recourse_cost": g.recourse_cost,
            }
            for g in case.generators
        ],
        "loads": {str(k): v for k, v in case.loads.items()},
    }


def serialize_case(case: GridCase) -> str:
    return json.dumps(case_to_document(case), indent=2)


def load_case(path) -> GridCase:
    path = Path(path)
    if path.suffix == ".m":
        return from_matpower(path.read_text())
    return parse_case(path.read_text())


def bundled_case(name: str) -> GridCase:
    """Load one of the shipped fixtures: ``"case3"`` or ``"case14"``."""
    text = resources.files("drcc_ots.data").joinpath(f"{name}.json").read_text()
    return parse_case(text)


def line_angle_spread(case: GridCase) -> np.ndarray:
    """Default per-line angle spread: widest endpoint difference allowed by the bus limits."""
    idx = case.bus_index()
    spread = np.empty(case.n_line)
    for k, ln in enumerate(case.lines):
        bi, bj = case.buses[idx[ln.from_bus]], case.buses[idx[ln.to_bus]]
        default = max(bi.theta_max - bj.theta_min, bj.theta_max - bi.theta_min)
        spread[k] = default if ln.dtheta_max is None else ln.dtheta_max
    return spread


def build_operators(case: GridCase, dtheta_max=None) -> NetworkOperators:
    arr = case.arrays()
    spread = line_angle_spread(case) if dtheta_max is None else np.broadcast_to(
        np.asarray(dtheta_max, dtype=float), (case.n_line,)
    ).copy()
    if np.any(spread <= 0):
        raise InfeasibleBounds("angle spread must be positive on every line")
    cols = np.arange(case.n_line)
    A = np.zeros((case.n_bus, case.n_line))
    A[arr.from_idx, cols] = 1.0
    A[arr.to_idx, cols] = -1.0
    K = arr.b[:, None] * A.T
    return NetworkOperators(A=A, K=K, M=arr.b * spread)


# ---------------------------------------------------------------------------
# MATPOWER subset importer

_MATRIX_RE = r"mpc\.{name}\s*=\s*\[(.*?)\];"


def _matpower_table(text: str, name: str) -> np.ndarray | None:
    match = re.search(_MATRIX_RE.format(name=name), text, re.S)
    if match is None:
        return None
    rows = []
    for raw in match.group(1).split("\n"):
        raw = raw.split("%")[0].strip().rstrip(";").strip()
        if not raw:
            continue
        for chunk in raw.split(";"):
            chunk = chunk.strip()
            if chunk:
                rows.append([float(v) for v in chunk.replace(",", " ").split()])
    return np.array(rows)


def from_matpower(
    text: str,
    theta_limit: float = 0.6,
    default_rate: float = 9999.0,
    reserve_fraction: float = 0.5,
    recourse_markup: float = 1.0,
) -> GridCase:
    """Import the bus/branch/gen/gencost subset of a MATPOWER case file.

    Linear cost is taken from the linear term of polynomial ``gencost``
    rows. Branch susceptance is ``1 / (x * tap)`` as in MATPOWER's dc model.
    """
    base_match = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text)
    bus_t = _matpower_table(text, "bus")
    gen_t = _matpower_table(text, "gen")
    br_t = _matpower_table(text, "branch")
    if base_match is None or bus_t is None or gen_t is None or br_t is None:
        raise MalformedDocument("MATPOWER text lacks baseMVA/bus/gen/branch")
    cost_t = _matpower_table(text, "gencost")
    base = float(base_match.group(1))
    buses = tuple(Bus(int(r[0]), -theta_limit, theta_limit) for r in bus_t)
    slack = next((int(r[0]) for r in bus_t if int(r[1]) == 3), buses[0].id)
    loads = {int(r[0]): float(r[2]) for r in bus_t if r[2] != 0.0}
    lines = []
    for r in br_t:
        if len(r) > 10 and r[10] == 0:
            continue
        tap = r[8] if len(r) > 8 and r[8] != 0 else 1.0
        rate = r[5] if len(r) > 5 and r[5] > 0 else default_rate
        lines.append(Line(int(r[0]), int(r[1]), 1.0 / (r[3] * tap), float(rate)))
    gens = []
    for k, r in enumerate(gen_t):
        if len(r) > 7 and r[7] <= 0:
            continue
        lin = 0.0
        if cost_t is not None and k < len(cost_t) and int(cost_t[k][0]) == 2:
            n_coef = int(cost_t[k][3])
            coefs = cost_t[k][4 : 4 + n_coef]
            lin = float(coefs[-2]) if n_coef >= 2 else 0.0
        p_max = float(r[8])
        gens.append(
            Generator(
                bus=int(r[0]),
                p_min=max(float(r[9]), 0.0),
                p_max=p_max,
                r_min=-reserve_fraction * p_max,
                r_max=reserve_fraction * p_max,
                cost=lin,
                recourse_cost=lin * recourse_markup,
            )
        )
    case = GridCase(buses, tuple(lines), tuple(gens), loads, slack, base, name="matpower")
    return validate_case(case)


def reduced_susceptance(case: GridCase, z=None) -> np.ndarray:
    """Bus susceptance matrix ``A diag(z) K`` of the closed lines (N x N)."""
    ops = build_operators(case)
    zz = np.ones(case.n_line) if z is None else np.asarray(z, dtype=float)
    return ops.A @ (zz[:, None] * ops.K)


def angle_bound_magnitude(case: GridCase) -> float:
    """Upper bound on any entry of the angle recourse map for a connected topology.

    A unit transfer produces angles no larger than the effective resistance
    between its endpoints, which never exceeds the series sum of all reactances.
    """
    arr = case.arrays()
    return float(np.sum(1.0 / arr.b))

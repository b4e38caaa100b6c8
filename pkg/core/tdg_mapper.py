"""TDG mapping: place logical match-action tables onto physical stages.

Dependencies are reduced to the strictest kind per table pair, tables are
labelled with levels, and the placer walks the levels in order, filling a
stage x resource ledger first-fit. Non-exact tables go to TCAM; exact tables
go to SRAM hash units and spill to TCAM when a stage runs out of SRAM.
Tables that do not fit even an empty stage are split across consecutive
stages. Ingress and egress share one ledger.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product
from math import ceil
from typing import Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np

from config import POINTER_OVERHEAD_BITS
from core.errors import MappingRejected
from core.hsl import HardwareSpec, StageSpec
from core.ir_model import (
    PIPELINES,
    DependencyKind,
    ExternDecl,
    IrProgram,
    LogicalTable,
    Tdg,
    build_tdg,
    strictest,
)
from utils.logger import setup_logger

logger = setup_logger()

TCAM = "tcam"
SRAM = "sram"
COLOCATE = "colocate"
SERIALIZE = "serialize"
STATEFUL_POLICIES = (COLOCATE, SERIALIZE)

EXTERN_KINDS = ("register", "counter", "meter")
LEDGER_COLUMNS = (
    "tcam_blocks", "sram_blocks", "sram_match_blocks", "sram_action_blocks", "sram_stateful_blocks",
    "vliw_slots", "tcam_crossbar_bits", "sram_crossbar_bits", "action_crossbar_bits", "memory_ports",
) + tuple(f"{kind}_units" for kind in EXTERN_KINDS)
UNLIMITED = np.iinfo(np.int64).max // 4

ORACLE_MAX_TABLES = 4
ORACLE_MAX_STAGES = 3


# ---------------------------------------------------------------------------
# Options
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionMode:
    """How many action entries a table reserves: one per match entry, or a fixed k."""
    kind: str = "per-entry"
    k: int = 0

    @classmethod
    def parse(cls, text: str) -> "ActionMode":
        text = text.strip().lower()
        if text in ("per-entry", "per_entry"):
            return cls("per-entry")
        if text.startswith("fixed:") or text.startswith("fixed(") and text.endswith(")"):
            raw = text[6:].rstrip(")")
            try:
                k = int(raw)
            except ValueError as e:
                raise ValueError(f"invalid action mode '{text}': k must be an integer") from e
            if k < 1:
                raise ValueError(f"invalid action mode '{text}': k must be >= 1")
            return cls("fixed", k)
        raise ValueError(f"invalid action mode '{text}': expected 'per-entry' or 'fixed:k'")

    def entries(self, match_entries: int) -> int:
        return match_entries if self.kind == "per-entry" else self.k

    def __str__(self) -> str:
        return self.kind if self.kind == "per-entry" else f"fixed:{self.k}"


def parse_table_action_modes(text: str) -> dict[str, ActionMode]:
    """Parse per-table overrides written as 'table=mode' pairs, comma separated.

    Example: 'acl=fixed:2,ipv4_fib=per-entry'. An empty string gives no overrides.
    """
    modes: dict[str, ActionMode] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        table, sep, mode = item.partition("=")
        if not sep or not table.strip():
            raise ValueError(f"invalid table action mode '{item}': expected 'table=mode'")
        modes[table.strip()] = ActionMode.parse(mode)
    return modes


@dataclass(frozen=True)
class LatencyCosts:
    """Cycle cost of a stage boundary by the strictest dependency crossing it."""
    match: int = 12
    action: int = 3
    other: int = 1
    base: int = 12

    @classmethod
    def parse(cls, text: str) -> "LatencyCosts":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"latency costs need 4 values (match,action,other,base), got '{text}'")
        try:
            values = [int(p) for p in parts]
        except ValueError as e:
            raise ValueError(f"latency costs must be integers, got '{text}'") from e
        if min(values) < 0:
            raise ValueError(f"latency costs must be >= 0, got '{text}'")
        return cls(*values)

    def cost(self, kind: DependencyKind) -> int:
        if kind is DependencyKind.MATCH:
            return self.match
        if kind is DependencyKind.ACTION:
            return self.action
        return self.other

    def __str__(self) -> str:
        return f"{self.match},{self.action},{self.other},{self.base}"


@dataclass(frozen=True)
class PlacementOptions:
    packing_factor: int = 0  # 0 means the hardware spec's p_f
    action_mode: ActionMode = ActionMode()
    pointer_overhead_bits: int = POINTER_OVERHEAD_BITS
    stateful_policy: str = COLOCATE
    table_action_modes: Mapping[str, ActionMode] = field(default_factory=dict)  # per-table override

    def __post_init__(self):
        if self.stateful_policy not in STATEFUL_POLICIES:
            raise ValueError(f"stateful policy must be one of {STATEFUL_POLICIES}, got '{self.stateful_policy}'")
        if self.packing_factor < 0:
            raise ValueError(f"packing factor must be >= 0, got {self.packing_factor}")

    def resolved_packing(self, spec: HardwareSpec) -> int:
        return self.packing_factor or spec.packing_factor

    def action_mode_for(self, table: str) -> ActionMode:
        return self.table_action_modes.get(table, self.action_mode)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrictDag:
    """Table dependency DAG keeping only the strictest kind per pair."""
    pipeline: str
    tables: tuple[LogicalTable, ...]
    edges: dict[tuple[str, str], DependencyKind]
    stateful_groups: tuple[frozenset[str], ...] = ()

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(t.name for t in self.tables)
        for (a, b), kind in self.edges.items():
            g.add_edge(a, b, kind=kind)
        return g

    @cached_property
    def pred_map(self) -> dict[str, tuple[tuple[str, DependencyKind], ...]]:
        preds: dict[str, list[tuple[str, DependencyKind]]] = {t.name: [] for t in self.tables}
        for (a, b), kind in sorted(self.edges.items()):
            preds[b].append((a, kind))
        return {name: tuple(v) for name, v in preds.items()}

    def topological_order(self) -> list[str]:
        order = {t.name: t.tdg_order for t in self.tables}
        return list(nx.lexicographical_topological_sort(self.graph(), key=order.__getitem__))

    def table(self, name: str) -> LogicalTable:
        for table in self.tables:
            if table.name == name:
                return table
        raise KeyError(name)


@dataclass(frozen=True)
class LevelAssignment:
    dag: StrictDag
    level: dict[str, int]

    def by_level(self) -> dict[int, list[str]]:
        grouped: dict[int, list[str]] = {}
        for name in self.dag.topological_order():
            grouped.setdefault(self.level[name], []).append(name)
        return dict(sorted(grouped.items()))


@dataclass(frozen=True)
class MemoryFootprint:
    tcam_blocks: int = 0
    sram_match_blocks: int = 0
    sram_action_blocks: int = 0
    sram_stateful_blocks: int = 0
    vliw_slots: int = 0
    tcam_crossbar_bits: int = 0
    sram_crossbar_bits: int = 0
    action_crossbar_bits: int = 0
    memory_ports: int = 0
    extern_units: tuple[tuple[str, int], ...] = ()

    @property
    def sram_blocks(self) -> int:
        return self.sram_match_blocks + self.sram_action_blocks + self.sram_stateful_blocks

    @property
    def crossbar_bits(self) -> tuple[int, int, int]:
        return (self.tcam_crossbar_bits, self.sram_crossbar_bits, self.action_crossbar_bits)

    def vector(self) -> np.ndarray:
        units = dict(self.extern_units)
        return np.array([
            self.tcam_blocks, self.sram_blocks, self.sram_match_blocks, self.sram_action_blocks,
            self.sram_stateful_blocks, self.vliw_slots, self.tcam_crossbar_bits,
            self.sram_crossbar_bits, self.action_crossbar_bits, self.memory_ports,
        ] + [units.get(kind, 0) for kind in EXTERN_KINDS], dtype=np.int64)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "MemoryFootprint":
        values = [int(x) for x in v]
        units = tuple((kind, n) for kind, n in zip(EXTERN_KINDS, values[10:]) if n)
        return cls(
            tcam_blocks=values[0],
            sram_match_blocks=values[2],
            sram_action_blocks=values[3],
            sram_stateful_blocks=values[4],
            vliw_slots=values[5],
            tcam_crossbar_bits=values[6],
            sram_crossbar_bits=values[7],
            action_crossbar_bits=values[8],
            memory_ports=values[9],
            extern_units=units,
        )

    def __add__(self, other: "MemoryFootprint") -> "MemoryFootprint":
        return MemoryFootprint.from_vector(self.vector() + other.vector())


@dataclass(frozen=True)
class Portion:
    """Share of one table's entries held in one stage."""
    table: str
    stage: int
    mode: str
    entries: int
    footprint: MemoryFootprint


@dataclass(frozen=True)
class TdgMapping:
    placement: dict[str, tuple[Portion, ...]]
    per_stage: dict[int, MemoryFootprint]
    dags: tuple[StrictDag, ...]
    levels: dict[str, int]
    num_stages: int
    colocated: tuple[frozenset[str], ...] = ()
    latency_cycles: int = 0
    latency_by_pipeline: dict[str, int] = field(default_factory=dict)

    def stages_of(self, table: str) -> tuple[int, ...]:
        return tuple(p.stage for p in self.placement[table])

    def pipeline_stages(self, pipeline: str) -> list[int]:
        stages = set()
        for dag in self.dags:
            if dag.pipeline == pipeline:
                for table in dag.tables:
                    stages.update(self.stages_of(table.name))
        return sorted(stages)

    def stages_used_by(self, pipeline: str) -> int:
        stages = self.pipeline_stages(pipeline)
        return stages[-1] + 1 if stages else 0

    @property
    def stages_used(self) -> int:
        return max(self.per_stage) + 1 if self.per_stage else 0

    @property
    def table_count(self) -> int:
        return sum(len(d.tables) for d in self.dags)

    @property
    def edge_count(self) -> int:
        return sum(len(d.edges) for d in self.dags)

    @property
    def totals(self) -> MemoryFootprint:
        total = MemoryFootprint()
        for footprint in self.per_stage.values():
            total = total + footprint
        return total


@dataclass(frozen=True)
class StageRow:
    stage: int
    tables: tuple[str, ...]
    footprint: MemoryFootprint


@dataclass(frozen=True)
class MappingSummary:
    rows: tuple[StageRow, ...]
    totals: MemoryFootprint
    stages_used: int
    latency_cycles: int


# ---------------------------------------------------------------------------
# Dependency reduction and levels
# ---------------------------------------------------------------------------

def reduce_dependencies(t: Tdg) -> StrictDag:
    """Keep one edge per related pair, of the strictest kind detected."""
    edges = {pair: strictest(kinds) for pair, kinds in sorted(t.kinds.items()) if kinds}
    dag = StrictDag(pipeline=t.pipeline, tables=t.tables, edges=edges, stateful_groups=t.stateful_groups)
    if not nx.is_directed_acyclic_graph(dag.graph()):
        cycle = nx.find_cycle(dag.graph())
        raise MappingRejected("tdg", "acyclic dependencies", cycle[0][0])
    return dag


def apply_stateful_policy(d: StrictDag, policy: str) -> StrictDag:
    """Under ``serialize`` chain every stateful group with ACTION edges in topological order."""
    if policy == COLOCATE or not d.stateful_groups:
        return d
    order = d.topological_order()
    edges = dict(d.edges)
    for group in d.stateful_groups:
        members = [n for n in order if n in group]
        for a, b in zip(members, members[1:]):
            edges[(a, b)] = strictest([edges.get((a, b), DependencyKind.NONE), DependencyKind.ACTION])
    return replace(d, edges=dict(sorted(edges.items())))


def assign_levels(d: StrictDag) -> LevelAssignment:
    """level(v) = max(0, level(u)+1 over MATCH/ACTION preds, level(u) over the rest)."""
    level: dict[str, int] = {}
    for name in d.topological_order():
        level[name] = max(
            [0] + [level[u] + (1 if kind.separates_stages else 0) for u, kind in d.pred_map[name]]
        )
    return LevelAssignment(dag=d, level=level)


def align_stateful_levels(levels: LevelAssignment) -> LevelAssignment:
    """Raise the levels of every stateful group to a common value and re-propagate.

    Raises:
        MappingRejected: A group member depends on another through a match or action dependency
    """
    d = levels.dag
    if not d.stateful_groups:
        return levels
    level = dict(levels.level)
    order = d.topological_order()
    for _ in range(len(order) + 2):
        changed = False
        for group in d.stateful_groups:
            top = max(level[m] for m in group)
            for member in group:
                if level[member] != top:
                    level[member] = top
                    changed = True
        for name in order:
            floor = max([level[name]] + [
                level[u] + (1 if kind.separates_stages else 0) for u, kind in d.pred_map[name]
            ])
            if floor != level[name]:
                level[name] = floor
                changed = True
        if not changed:
            return LevelAssignment(dag=d, level=level)

    g = d.graph()
    for group in d.stateful_groups:
        for a in sorted(group):
            for b in sorted(group):
                if a != b and nx.has_path(g, a, b):
                    raise MappingRejected(
                        "tdg", "stateful co-location", b,
                        f"shares state with '{a}' but must follow it in a later stage",
                    )
    raise MappingRejected("tdg", "stateful co-location", sorted(d.stateful_groups[0])[0])


# ---------------------------------------------------------------------------
# Memory sizing
# ---------------------------------------------------------------------------

def tcam_blocks_needed(table: LogicalTable, s: StageSpec, entries: Optional[int] = None) -> int:
    n = table.max_entries if entries is None else entries
    if table.key_width == 0:
        return 0
    return ceil(table.key_width / s.tcam_width) * ceil(n / s.tcam_depth)


def _packed_blocks(entries: int, entry_width: int, s: StageSpec, p_f: int) -> int:
    """Blocks for ``entries`` words packed into units of p_f side-by-side blocks."""
    if entries == 0 or entry_width == 0:
        return 0
    per_unit = (p_f * s.sram_width) // entry_width * s.sram_depth
    return ceil(entries / per_unit) * p_f


def _stateful_bits(table: LogicalTable, extern: ExternDecl) -> int:
    if extern.bound_table == table.name:
        return table.max_entries * extern.bitwidth
    return extern.total_bits


def stateful_blocks_needed(table: LogicalTable, extern: ExternDecl, s: StageSpec) -> int:
    return ceil(_stateful_bits(table, extern) / (s.sram_width * s.sram_depth))


def _check_width(table: LogicalTable, what: str, width: int, s: StageSpec, p_f: int) -> None:
    if width > p_f * s.sram_width:
        raise MappingRejected(
            "tdg", "packing unit", table.name,
            f"{what} entry wider than packing unit: {width}b > {p_f}x{s.sram_width}b",
        )


def _check_ports(table: LogicalTable, externs: Sequence[ExternDecl], s: StageSpec) -> None:
    for extern in externs:
        if extern.bitwidth > s.port_width:
            raise MappingRejected(
                "tdg", "memory port width", table.name,
                f"'{extern.name}' cells are {extern.bitwidth}b, ports carry {s.port_width}b",
            )


def table_footprint(
    table: LogicalTable,
    mode: str,
    s: StageSpec,
    p_f: int,
    action_mode: ActionMode,
    pointer_overhead: int = POINTER_OVERHEAD_BITS,
    entries: Optional[int] = None,
    fresh_externs: Sequence[ExternDecl] = (),
) -> MemoryFootprint:
    """Resources one stage spends on ``entries`` entries of a table in ``mode``.

    Stateful memory, ports and extern units are charged only for
    ``fresh_externs`` (externs not yet resident in the stage).
    """
    n = table.max_entries if entries is None else entries
    tcam = sram_match = 0
    tcam_xbar = sram_xbar = 0
    if mode == TCAM:
        tcam = tcam_blocks_needed(table, s, n)
        tcam_xbar = table.key_width
    else:
        entry_width = table.key_width + pointer_overhead
        _check_width(table, "match", entry_width, s, p_f)
        sram_match = _packed_blocks(n, entry_width, s, p_f)
        sram_match = ceil(sram_match / s.hash_ways) * s.hash_ways
        sram_xbar = table.key_width

    action_width = table.action_arg_width
    _check_width(table, "action", action_width, s, p_f)
    action = _packed_blocks(action_mode.entries(n) if action_width else 0, action_width, s, p_f)

    _check_ports(table, fresh_externs, s)
    stateful = sum(stateful_blocks_needed(table, e, s) for e in fresh_externs)
    units: dict[str, int] = {}
    for extern in fresh_externs:
        units[extern.kind] = units.get(extern.kind, 0) + 1

    return MemoryFootprint(
        tcam_blocks=tcam,
        sram_match_blocks=sram_match,
        sram_action_blocks=action,
        sram_stateful_blocks=stateful,
        vliw_slots=table.vliw_slots,
        tcam_crossbar_bits=tcam_xbar,
        sram_crossbar_bits=sram_xbar,
        action_crossbar_bits=table.action_crossbar_bits,
        memory_ports=len(fresh_externs),
        extern_units=tuple(sorted(units.items())),
    )


def sram_blocks_needed(
    table: LogicalTable,
    s: StageSpec,
    p_f: int,
    action_mode: ActionMode,
    pointer_overhead: int = POINTER_OVERHEAD_BITS,
    externs: Optional[Mapping[str, ExternDecl]] = None,
) -> MemoryFootprint:
    """SRAM match, action and stateful blocks of a whole table held in hash units.

    Raises:
        MappingRejected: A match or action entry is wider than one packing unit
    """
    used = [externs[name] for name in sorted(table.extern_refs) if name in externs] if externs else []
    return table_footprint(table, SRAM, s, p_f, action_mode, pointer_overhead, fresh_externs=used)


def stage_limits(s: StageSpec) -> np.ndarray:
    parts = s.partitions
    roles = (parts.match, parts.action, parts.stateful) if parts else (UNLIMITED,) * 3
    units = [s.extern_units.get(kind, UNLIMITED) for kind in EXTERN_KINDS]
    return np.array([
        s.tcam_blocks, s.sram_blocks, *roles, s.vliw_slots, s.match_crossbar_tcam,
        s.match_crossbar_sram, s.action_crossbar, s.memory_ports, *units,
    ], dtype=np.int64)


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------

class StageLedger:
    """Per-stage resource usage (numpy stage x resource matrix) and resident externs."""

    def __init__(self, s: StageSpec, num_stages: int):
        self.limits = stage_limits(s)
        self.usage = np.zeros((num_stages, len(LEDGER_COLUMNS)), dtype=np.int64)
        self.externs: list[set[str]] = [set() for _ in range(num_stages)]
        self.tables: list[list[str]] = [[] for _ in range(num_stages)]

    @property
    def num_stages(self) -> int:
        return self.usage.shape[0]

    def fits(self, stage: int, need: MemoryFootprint) -> bool:
        return bool(np.all(self.usage[stage] + need.vector() <= self.limits))

    def fits_empty(self, need: MemoryFootprint) -> bool:
        return bool(np.all(need.vector() <= self.limits))

    def overflow(self, stage: Optional[int], need: MemoryFootprint) -> list[str]:
        base = self.usage[stage] if stage is not None else 0
        over = np.flatnonzero(base + need.vector() > self.limits)
        return [LEDGER_COLUMNS[i] for i in over]

    def fresh(self, stage: int, names) -> list[str]:
        return sorted(n for n in names if n not in self.externs[stage])

    def commit(self, stage: int, table: str, need: MemoryFootprint, externs) -> None:
        self.usage[stage] += need.vector()
        self.externs[stage].update(externs)
        self.tables[stage].append(table)

    def copy(self) -> "StageLedger":
        other = object.__new__(StageLedger)
        other.limits = self.limits
        other.usage = self.usage.copy()
        other.externs = [set(e) for e in self.externs]
        other.tables = [list(t) for t in self.tables]
        return other


class TablePlacer:
    """Greedy level-ordered placement of one or more pipelines onto a shared ledger."""

    def __init__(self, spec: HardwareSpec, opts: PlacementOptions,
                 externs: Optional[Mapping[str, ExternDecl]] = None):
        self.spec = spec
        self.stage = spec.stage
        self.opts = opts
        self.p_f = opts.resolved_packing(spec)
        self.externs = dict(externs or {})
        self.ledger = StageLedger(spec.stage, spec.num_stages)
        self.placement: dict[str, list[Portion]] = {}
        logger.debug(f"TablePlacer initialized: {spec.num_stages} stages, p_f={self.p_f}, "
                     f"action mode {opts.action_mode}, policy {opts.stateful_policy}")

    def footprint(self, table: LogicalTable, mode: str, stage: Optional[int],
                  entries: Optional[int] = None, ledger: Optional[StageLedger] = None) -> MemoryFootprint:
        ledger = ledger or self.ledger
        names = sorted(table.extern_refs) if stage is None else ledger.fresh(stage, table.extern_refs)
        return table_footprint(
            table, mode, self.stage, self.p_f, self.opts.action_mode_for(table.name),
            self.opts.pointer_overhead_bits, entries, [self.externs[n] for n in names if n in self.externs],
        )

    def modes(self, table: LogicalTable) -> list[str]:
        return [SRAM, TCAM] if table.is_exact else [TCAM]

    def _usable_modes(self, table: LogicalTable) -> list[str]:
        usable = []
        failure: Optional[MappingRejected] = None
        for mode in self.modes(table):
            try:
                self.footprint(table, mode, None, entries=1)
            except MappingRejected as e:
                failure = failure or e
                continue
            usable.append(mode)
        if not usable:
            raise failure
        return usable

    def last_stage(self, name: str) -> int:
        return max(p.stage for p in self.placement[name])

    def lower_bound(self, d: StrictDag, members: Sequence[str]) -> int:
        lo = 0
        for member in members:
            for u, kind in d.pred_map[member]:
                if u in members:
                    continue
                lo = max(lo, self.last_stage(u) + (1 if kind.separates_stages else 0))
        return lo

    def run(self, levels: Sequence[LevelAssignment]) -> None:
        for assignment in levels:
            self._place_pipeline(assignment)

    def _units(self, assignment: LevelAssignment) -> list[tuple[str, ...]]:
        d = assignment.dag
        order = {t.name: t.tdg_order for t in d.tables}
        groups = d.stateful_groups if self.opts.stateful_policy == COLOCATE else ()
        rep: dict[str, str] = {}
        members: dict[str, tuple[str, ...]] = {}
        for group in groups:
            ordered = tuple(sorted(group, key=order.__getitem__))
            for name in ordered:
                rep[name] = ordered[0]
            members[ordered[0]] = ordered
        for table in d.tables:
            if table.name not in rep:
                rep[table.name] = table.name
                members[table.name] = (table.name,)

        g = nx.DiGraph()
        g.add_nodes_from(members)
        for (a, b) in d.edges:
            if rep[a] != rep[b]:
                g.add_edge(rep[a], rep[b])

        def key(unit: str) -> tuple[int, int, int]:
            names = members[unit]
            exact = all(d.table(n).is_exact for n in names)
            return (max(assignment.level[n] for n in names), 1 if exact else 0, order[unit])

        try:
            return [members[u] for u in nx.lexicographical_topological_sort(g, key=key)]
        except nx.NetworkXUnfeasible as e:
            cycle = nx.find_cycle(g)
            raise MappingRejected(
                "tdg", "stateful co-location", cycle[0][0],
                "a table outside the stateful group sits between two of its members",
            ) from e

    def _place_pipeline(self, assignment: LevelAssignment) -> None:
        d = assignment.dag
        for unit in self._units(assignment):
            lo = self.lower_bound(d, unit)
            if len(unit) == 1:
                self._place_table(d.table(unit[0]), lo)
            else:
                self._place_group([d.table(n) for n in unit], lo)

    def _reject(self, table: LogicalTable, lo: int, mode: str) -> MappingRejected:
        if lo >= self.ledger.num_stages:
            resource = "stages"
        else:
            need = self.footprint(table, mode, self.ledger.num_stages - 1)
            resource = "+".join(self.ledger.overflow(self.ledger.num_stages - 1, need)) or "stages"
        return MappingRejected(
            "tdg", resource, table.name,
            f"pipeline exhausted: no room in stages {lo}..{self.ledger.num_stages - 1}",
        )

    def _place_table(self, table: LogicalTable, lo: int) -> None:
        modes = self._usable_modes(table)
        for stage in range(lo, self.ledger.num_stages):
            for mode in modes:
                need = self.footprint(table, mode, stage)
                if self.ledger.fits(stage, need):
                    self._commit(table, stage, mode, table.max_entries, need)
                    logger.debug(f"Placed '{table.name}' whole in stage {stage} ({mode})")
                    return

        oversized = not any(self.ledger.fits_empty(self.footprint(table, m, None)) for m in modes)
        if not oversized:
            raise self._reject(table, lo, modes[-1])
        if table.extern_refs:
            need = self.footprint(table, modes[0], None)
            raise MappingRejected(
                "tdg", "+".join(self.ledger.overflow(None, need)) or "stage", table.name,
                "stateful table larger than one stage cannot be split",
            )
        self._split_table(table, lo, modes)

    def _max_fit(self, table: LogicalTable, mode: str, stage: int, remaining: int, ledger: StageLedger) -> int:
        if not ledger.fits(stage, self.footprint(table, mode, stage, 1, ledger)):
            return 0
        low, high = 1, remaining
        while low < high:
            mid = (low + high + 1) // 2
            if ledger.fits(stage, self.footprint(table, mode, stage, mid, ledger)):
                low = mid
            else:
                high = mid - 1
        return low

    def _split_table(self, table: LogicalTable, lo: int, modes: list[str]) -> None:
        for start in range(lo, self.ledger.num_stages):
            trial = self.ledger.copy()
            portions = []
            remaining = table.max_entries
            stage = start
            while remaining > 0 and stage < trial.num_stages:
                best_mode, best = modes[0], 0
                for mode in modes:
                    k = self._max_fit(table, mode, stage, remaining, trial)
                    if k > best:
                        best_mode, best = mode, k
                if best == 0:
                    break
                need = self.footprint(table, best_mode, stage, best, trial)
                trial.commit(stage, table.name, need, table.extern_refs)
                portions.append(Portion(table.name, stage, best_mode, best, need))
                remaining -= best
                stage += 1
            if remaining == 0:
                self.ledger = trial
                self.placement[table.name] = portions
                logger.debug(f"Split '{table.name}' over stages {[p.stage for p in portions]}")
                return
        raise self._reject(table, lo, modes[-1])

    def _place_group(self, tables: list[LogicalTable], lo: int) -> None:
        usable = {t.name: self._usable_modes(t) for t in tables}
        for stage in range(lo, self.ledger.num_stages):
            trial = self.ledger.copy()
            portions = []
            for table in tables:
                for mode in usable[table.name]:
                    need = self.footprint(table, mode, stage, ledger=trial)
                    if trial.fits(stage, need):
                        trial.commit(stage, table.name, need, table.extern_refs)
                        portions.append(Portion(table.name, stage, mode, table.max_entries, need))
                        break
                else:
                    break
            if len(portions) == len(tables):
                self.ledger = trial
                for portion in portions:
                    self.placement[portion.table] = [portion]
                logger.debug(f"Colocated {[t.name for t in tables]} in stage {stage}")
                return
        names = ", ".join(t.name for t in tables)
        raise MappingRejected(
            "tdg", "stateful co-location", tables[0].name,
            f"pipeline exhausted: no single stage in {lo}..{self.ledger.num_stages - 1} holds {names}",
        )

    def _commit(self, table: LogicalTable, stage: int, mode: str, entries: int, need: MemoryFootprint) -> None:
        self.ledger.commit(stage, table.name, need, table.extern_refs)
        self.placement[table.name] = [Portion(table.name, stage, mode, entries, need)]


def _assemble(
    placement: Mapping[str, Sequence[Portion]],
    dags: Sequence[StrictDag],
    levels: Mapping[str, int],
    num_stages: int,
    colocated: tuple[frozenset[str], ...],
) -> TdgMapping:
    per_stage: dict[int, MemoryFootprint] = {}
    ordered: dict[str, tuple[Portion, ...]] = {}
    for dag in dags:
        for table in sorted(dag.tables, key=lambda t: t.tdg_order):
            portions = tuple(placement[table.name])
            ordered[table.name] = portions
            for portion in portions:
                per_stage[portion.stage] = per_stage.get(portion.stage, MemoryFootprint()) + portion.footprint
    return TdgMapping(
        placement=ordered,
        per_stage=dict(sorted(per_stage.items())),
        dags=tuple(dags),
        levels=dict(levels),
        num_stages=num_stages,
        colocated=colocated,
    )


def place_tables(
    levels: Union[LevelAssignment, Sequence[LevelAssignment]],
    spec: HardwareSpec,
    opts: PlacementOptions,
    externs: Optional[Mapping[str, ExternDecl]] = None,
) -> TdgMapping:
    """Place every table of the given pipelines (ingress first) on one stage ledger.

    Raises:
        MappingRejected: Some table cannot be placed within the stages left
    """
    if isinstance(levels, LevelAssignment):
        levels = [levels]
    placer = TablePlacer(spec, opts, externs)
    placer.run(levels)
    merged = {name: lvl for assignment in levels for name, lvl in assignment.level.items()}
    colocated = tuple(
        g for a in levels for g in a.dag.stateful_groups
    ) if opts.stateful_policy == COLOCATE else ()
    return _assemble(placer.placement, [a.dag for a in levels], merged, spec.num_stages, colocated)


# ---------------------------------------------------------------------------
# Latency, summary and validation
# ---------------------------------------------------------------------------

def _pipeline_latency(m: TdgMapping, d: StrictDag, costs: LatencyCosts) -> int:
    stages = m.pipeline_stages(d.pipeline)
    if not stages:
        return 0
    total = costs.base
    for here, after in zip(stages, stages[1:]):
        crossing = [
            kind for (u, v), kind in d.edges.items()
            if max(m.stages_of(u)) <= here and min(m.stages_of(v)) >= after
        ]
        total += costs.cost(strictest(crossing))
    return total


def compute_latency(m: TdgMapping, costs: LatencyCosts = LatencyCosts()) -> int:
    """Base cost plus the cost of the strictest dependency crossing each occupied-stage boundary.

    Ingress and egress are traversed one after the other, so their latencies add.
    """
    return sum(_pipeline_latency(m, d, costs) for d in m.dags)


def latency_by_pipeline(m: TdgMapping, costs: LatencyCosts = LatencyCosts()) -> dict[str, int]:
    return {d.pipeline: _pipeline_latency(m, d, costs) for d in m.dags}


def summarize(m: TdgMapping) -> MappingSummary:
    tables_by_stage: dict[int, list[str]] = {}
    for name, portions in m.placement.items():
        for portion in portions:
            tables_by_stage.setdefault(portion.stage, []).append(name)
    rows = tuple(
        StageRow(stage=s, tables=tuple(tables_by_stage.get(s, [])), footprint=fp)
        for s, fp in m.per_stage.items()
    )
    return MappingSummary(rows=rows, totals=m.totals, stages_used=m.stages_used, latency_cycles=m.latency_cycles)


def check_mapping(
    m: TdgMapping,
    spec: HardwareSpec,
    opts: PlacementOptions,
    externs: Optional[Mapping[str, ExternDecl]] = None,
) -> list[str]:
    """Recompute every stage's demand from scratch and list all violations."""
    externs = dict(externs or {})
    s = spec.stage
    p_f = opts.resolved_packing(spec)
    limits = stage_limits(s)
    violations: list[str] = []
    usage = np.zeros((spec.num_stages, len(LEDGER_COLUMNS)), dtype=np.int64)
    resident: list[set[str]] = [set() for _ in range(spec.num_stages)]
    tables = {t.name: t for d in m.dags for t in d.tables}

    for name, table in tables.items():
        portions = m.placement.get(name, ())
        if not portions:
            violations.append(f"table '{name}' is not placed")
            continue
        stages = [p.stage for p in portions]
        if stages != list(range(stages[0], stages[0] + len(stages))):
            violations.append(f"table '{name}' occupies non-consecutive stages {stages}")
        if sum(p.entries for p in portions) < table.max_entries:
            violations.append(f"table '{name}' holds fewer than {table.max_entries} entries")
        if table.extern_refs and len(portions) > 1:
            violations.append(f"stateful table '{name}' is split")
        for portion in portions:
            if not 0 <= portion.stage < spec.num_stages:
                violations.append(f"table '{name}' placed in missing stage {portion.stage}")
                continue
            if portion.mode == SRAM and not table.is_exact:
                violations.append(f"non-exact table '{name}' placed in SRAM")
            need = table_footprint(table, portion.mode, s, p_f, opts.action_mode_for(name),
                                   opts.pointer_overhead_bits, portion.entries)
            usage[portion.stage] += need.vector()
            resident[portion.stage].update(table.extern_refs)

    for stage, names in enumerate(resident):
        decls = [externs[n] for n in sorted(names) if n in externs]
        for decl in decls:
            owner = decl.bound_table if decl.bound_table in tables else None
            table = tables[owner] if owner else next(t for t in tables.values() if decl.name in t.extern_refs)
            usage[stage, LEDGER_COLUMNS.index("sram_blocks")] += stateful_blocks_needed(table, decl, s)
            usage[stage, LEDGER_COLUMNS.index("sram_stateful_blocks")] += stateful_blocks_needed(table, decl, s)
            usage[stage, LEDGER_COLUMNS.index(f"{decl.kind}_units")] += 1
            if decl.bitwidth > s.port_width:
                violations.append(f"stage {stage}: '{decl.name}' cells wider than a memory port")
        usage[stage, LEDGER_COLUMNS.index("memory_ports")] += len(decls)
        for i in np.flatnonzero(usage[stage] > limits):
            violations.append(f"stage {stage}: {LEDGER_COLUMNS[i]} {usage[stage, i]} > {limits[i]}")

    for d in m.dags:
        for (u, v), kind in d.edges.items():
            if u not in m.placement or v not in m.placement:
                continue
            last_u, first_v = max(m.stages_of(u)), min(m.stages_of(v))
            if kind.separates_stages and not last_u < first_v:
                violations.append(f"{kind.value} dependency {u} -> {v} needs a later stage ({last_u} vs {first_v})")
            elif not kind.separates_stages and not last_u <= first_v:
                violations.append(f"{kind.value} dependency {u} -> {v} runs backwards ({last_u} vs {first_v})")

    for group in m.colocated:
        stages = {st for n in group if n in m.placement for st in m.stages_of(n)}
        if len(stages) > 1:
            violations.append(f"stateful group {sorted(group)} spans stages {sorted(stages)}")
    return violations


def brute_force_place(
    dags: Sequence[StrictDag],
    spec: HardwareSpec,
    opts: PlacementOptions,
    externs: Optional[Mapping[str, ExternDecl]] = None,
) -> Optional[dict[str, tuple[int, str]]]:
    """Exhaustively search whole-table placements (table -> (stage, mode)).

    Only for tiny instances (test oracle). Returns the first valid placement
    in lexicographic order, or None.

    Raises:
        ValueError: More than 4 tables or more than 3 stages
    """
    tables = [t for d in dags for t in sorted(d.tables, key=lambda t: t.tdg_order)]
    if len(tables) > ORACLE_MAX_TABLES or spec.num_stages > ORACLE_MAX_STAGES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_TABLES} tables and {ORACLE_MAX_STAGES} stages")
    externs = dict(externs or {})
    p_f = opts.resolved_packing(spec)
    limits = stage_limits(spec.stage)
    colocated = tuple(g for d in dags for g in d.stateful_groups) if opts.stateful_policy == COLOCATE else ()
    position = {t.name: i for i, t in enumerate(tables)}
    ordering = [(position[u], position[v], kind.separates_stages) for d in dags for (u, v), kind in d.edges.items()]

    choices = []
    for table in tables:
        options = []
        for mode in ([SRAM, TCAM] if table.is_exact else [TCAM]):
            try:
                need = table_footprint(table, mode, spec.stage, p_f, opts.action_mode_for(table.name),
                                       opts.pointer_overhead_bits)
            except MappingRejected:
                continue
            options += [(stage, mode, need) for stage in range(spec.num_stages)]
        choices.append(sorted(options, key=lambda o: (o[0], o[1] != SRAM)))

    for combo in product(*choices):
        # necessary conditions first; check_mapping stays the judge
        if any(combo[v][0] < combo[u][0] + separates for u, v, separates in ordering):
            continue
        usage = np.zeros((spec.num_stages, len(LEDGER_COLUMNS)), dtype=np.int64)
        for stage, _, need in combo:
            usage[stage] += need.vector()
        if (usage > limits).any():
            continue
        placement = {
            t.name: [Portion(t.name, stage, mode, t.max_entries, need)]
            for t, (stage, mode, need) in zip(tables, combo)
        }
        candidate = _assemble(placement, dags, {}, spec.num_stages, colocated)
        if not check_mapping(candidate, spec, opts, externs):
            return {t.name: (stage, mode) for t, (stage, mode, _) in zip(tables, combo)}
    return None


# ---------------------------------------------------------------------------
# Whole program
# ---------------------------------------------------------------------------

def build_dags(program: IrProgram, policy: str = COLOCATE) -> list[StrictDag]:
    dags = []
    for pipeline in PIPELINES:
        if not program.pipeline_tables(pipeline):
            continue
        dags.append(apply_stateful_policy(reduce_dependencies(build_tdg(program, pipeline)), policy))
    return dags


def map_tdg(
    program: IrProgram,
    spec: HardwareSpec,
    opts: PlacementOptions = PlacementOptions(),
    costs: LatencyCosts = LatencyCosts(),
) -> TdgMapping:
    """Map every pipeline of the program and compute its latency.

    Raises:
        MappingRejected: Co-location or stage capacity fails
    """
    known = {t.name for t in program.tables.values()}
    for name in sorted(set(opts.table_action_modes) - known):
        logger.warning(f"Action mode override for unknown table '{name}' ignored")
    levels = []
    for dag in build_dags(program, opts.stateful_policy):
        assignment = assign_levels(dag)
        if opts.stateful_policy == COLOCATE:
            assignment = align_stateful_levels(assignment)
        levels.append(assignment)
    mapping = place_tables(levels, spec, opts, program.externs)
    mapping = replace(
        mapping,
        latency_cycles=compute_latency(mapping, costs),
        latency_by_pipeline=latency_by_pipeline(mapping, costs),
    )
    totals = mapping.totals
    logger.info(f"TDG mapping: {mapping.table_count} tables in {mapping.stages_used} stages, "
                f"{totals.tcam_blocks} TCAM / {totals.sram_blocks} SRAM blocks, "
                f"latency {mapping.latency_cycles} cycles")
    return mapping

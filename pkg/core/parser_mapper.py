"""Parse graph mapping: cluster parse states and emit the parser TCAM state table.

A cluster is the set of parse states the parser identifies in one cycle. It
is entered only through its root state, and every other member is reached
from inside the cluster by its single incoming transition, so the path from
the root to any member is unique. Transitions inside a cluster cost nothing;
every transition leaving a cluster (the accept sink included) costs one TCAM
entry keyed on the cluster's state id and the select values on that path.
"""
from dataclasses import dataclass
from math import ceil
from typing import Iterator, Optional

import networkx as nx

from core.errors import MappingRejected
from core.hsl import ParserSpec
from core.ir_model import ACCEPT, FieldRef, ParseGraph, ParseTransition
from utils.logger import setup_logger

logger = setup_logger()

ORACLE_MAX_NODES = 8


@dataclass(frozen=True)
class Cluster:
    id: int
    members: tuple[str, ...]  # root first, then in join order
    total_header_bits: int  # deepest root-to-member path
    lookup_fields_used: int
    lookup_key_bits: int

    @property
    def root(self) -> str:
        return self.members[0]


@dataclass(frozen=True)
class ClusterGraph:
    """Parse graph with a cluster assignment for every state."""
    graph: ParseGraph
    clusters: tuple[Cluster, ...]
    cluster_of: dict[str, int]

    def is_internal(self, edge: ParseTransition) -> bool:
        return edge.target != ACCEPT and self.cluster_of[edge.source] == self.cluster_of[edge.target]

    def outgoing(self) -> list[ParseTransition]:
        """Transitions that leave a cluster, in parse-graph order."""
        return [e for e in self.graph.edges if not self.is_internal(e)]

    def quotient(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(c.id for c in self.clusters)
        for edge in self.outgoing():
            if edge.target != ACCEPT:
                g.add_edge(self.cluster_of[edge.source], self.cluster_of[edge.target])
        return g


@dataclass(frozen=True)
class LookupValue:
    """One lookup-field slice of a TCAM key (at most ``lookup_field_width`` bits)."""
    field: str
    offset: int
    width: int
    value: str  # hex
    mask: str  # hex


@dataclass(frozen=True)
class StateTableEntry:
    state: str
    state_id: int
    lookup: tuple[LookupValue, ...]
    next_state: str
    next_state_id: Optional[int]  # None for the accept sink
    extract: tuple[str, ...]  # header instances deposited this cycle

    @property
    def lookup_bits(self) -> int:
        return sum(v.width for v in self.lookup)


@dataclass(frozen=True)
class StateTable:
    entries: tuple[StateTableEntry, ...]
    state_count: int

    @property
    def entry_count(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ParserVerdict:
    accepted: bool
    entry_count: int
    capacity: int
    utilization_percent: float
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class ParserMapping:
    cluster_graph: ClusterGraph
    state_table: StateTable
    verdict: ParserVerdict
    states: int = 0
    edges: int = 0


def _chunks(width: int, chunk: int) -> int:
    return ceil(width / chunk)


def _in_edges(graph: ParseGraph) -> dict[str, list[ParseTransition]]:
    incoming: dict[str, list[ParseTransition]] = {n: [] for n in graph.nodes}
    for edge in graph.edges:
        if edge.target != ACCEPT:
            incoming[edge.target].append(edge)
    return incoming


def _parents(members: tuple[str, ...], incoming: dict[str, list[ParseTransition]]) -> dict[str, ParseTransition]:
    """In-cluster parent transition of every non-root member."""
    return {m: incoming[m][0] for m in members[1:]}


def _path(member: str, parents: dict[str, ParseTransition]) -> list[ParseTransition]:
    path = []
    while member in parents:
        edge = parents[member]
        path.append(edge)
        member = edge.source
    return path[::-1]


def _select_fields(members, graph: ParseGraph) -> dict[FieldRef, int]:
    fields: dict[FieldRef, int] = {}
    for edge in graph.edges:
        if edge.source in members:
            for ref, width in zip(edge.key, edge.key_widths):
                fields[ref] = width
    return fields


def _measure(members: tuple[str, ...], graph: ParseGraph, incoming, p: ParserSpec) -> tuple[int, int, int]:
    """Return (deepest path bits, lookup fields used, lookup key bits) of a cluster."""
    parents = _parents(members, incoming)
    depth_bits = 0
    for member in members:
        bits = graph.node_bits[member] + sum(graph.node_bits[e.source] for e in _path(member, parents))
        depth_bits = max(depth_bits, bits)
    fields = _select_fields(set(members), graph)
    lookups = sum(_chunks(w, p.lookup_field_width) for w in fields.values())
    return depth_bits, lookups, sum(fields.values())


def _header_count(members: tuple[str, ...], graph: ParseGraph) -> int:
    """Headers the cluster identifies in one cycle; a state may extract several."""
    return sum(len(graph.node_headers.get(m, ())) for m in members)


def _violation(members: tuple[str, ...], graph: ParseGraph, incoming, p: ParserSpec) -> Optional[str]:
    """Name the per-cycle limit a candidate cluster breaks, or None."""
    if _header_count(members, graph) > p.max_headers_per_cycle:
        return "headers per cycle"
    member_set = set(members)
    for member in members[1:]:
        edges = incoming[member]
        if len(edges) != 1 or edges[0].source not in member_set:
            return "single cluster entry"
    depth_bits, lookups, key_bits = _measure(members, graph, incoming, p)
    if depth_bits > p.cycle_bits:
        return "extraction width"
    if lookups > p.lookup_fields_per_cycle:
        return "lookup fields"
    if p.state_id_bits + key_bits > p.tcam_entry_width:
        return "TCAM entry width"
    return None


def _node_label(graph: ParseGraph, node: str) -> str:
    headers = graph.node_headers.get(node, ())
    return "+".join(headers) if headers else node


def _make_cluster(index: int, members: tuple[str, ...], graph: ParseGraph, incoming, p: ParserSpec) -> Cluster:
    depth_bits, lookups, key_bits = _measure(members, graph, incoming, p)
    return Cluster(index, members, depth_bits, lookups, key_bits)


class ParserMapper:
    """Greedy path-walking clustering of a parse graph."""

    def __init__(self, p: ParserSpec):
        self.p = p
        logger.debug(f"ParserMapper initialized: H={p.max_headers_per_cycle}, "
                     f"cycle bits={p.cycle_bits}, lookups={p.lookup_fields_per_cycle}x{p.lookup_field_width}b")

    def cluster(self, g: ParseGraph) -> ClusterGraph:
        incoming = _in_edges(g)
        order = g.topological_order()
        position = {n: i for i, n in enumerate(order)}
        cluster_of: dict[str, int] = {}
        clusters: list[Cluster] = []

        for root in order:
            if root in cluster_of:
                continue
            reason = _violation((root,), g, incoming, self.p)
            if reason is not None:
                raise MappingRejected(
                    phase="parser",
                    resource=reason,
                    element=_node_label(g, root),
                    detail=f"state '{root}' alone exceeds one parser cycle",
                )
            members = [root]
            while True:
                candidates = sorted(
                    {e.target for e in g.edges
                     if e.source in members and e.target != ACCEPT and e.target not in cluster_of
                     and e.target not in members},
                    key=position.__getitem__,
                )
                joined = False
                for candidate in candidates:
                    trial = tuple(members + [candidate])
                    if _violation(trial, g, incoming, self.p) is None:
                        members.append(candidate)
                        joined = True
                        break
                if not joined:
                    break
            index = len(clusters)
            for member in members:
                cluster_of[member] = index
            clusters.append(_make_cluster(index, tuple(members), g, incoming, self.p))
            logger.debug(f"Parser cluster {index}: {members}")

        return ClusterGraph(graph=g, clusters=tuple(clusters), cluster_of=cluster_of)


def cluster_parse_graph(g: ParseGraph, p: ParserSpec) -> ClusterGraph:
    """Group parse states into clusters the parser can identify in one cycle.

    Raises:
        MappingRejected: A single state alone exceeds the per-cycle capacity
    """
    cg = ParserMapper(p).cluster(g)
    logger.info(f"Parse graph clustered: {len(g.nodes)} states into {len(cg.clusters)} clusters")
    return cg


def _split_value(edge: ParseTransition) -> list[tuple[FieldRef, int, int, int]]:
    """Split a transition's concatenated value/mask into per-field (ref, width, value, mask)."""
    parts = []
    remaining = edge.key_width
    for ref, width in zip(edge.key, edge.key_widths):
        remaining -= width
        full = (1 << width) - 1
        if edge.value is None:
            value, mask = 0, 0
        else:
            value = (edge.value >> remaining) & full
            mask = full if edge.mask is None else (edge.mask >> remaining) & full
        parts.append((ref, width, value, mask))
    return parts


def _slices(ref: FieldRef, width: int, value: int, mask: int, chunk: int) -> Iterator[LookupValue]:
    name = f"{ref[0]}.{ref[1]}"
    offset = 0
    while offset < width:
        size = min(chunk, width - offset)
        shift = width - offset - size
        full = (1 << size) - 1
        digits = max(1, ceil(size / 4))
        yield LookupValue(
            field=name,
            offset=offset,
            width=size,
            value=f"0x{(value >> shift) & full:0{digits}x}",
            mask=f"0x{(mask >> shift) & full:0{digits}x}",
        )
        offset += size


def emit_state_table(cg: ClusterGraph, p: ParserSpec) -> StateTable:
    """One entry per unique (cluster, outgoing transition) pair, accept sink included."""
    incoming = _in_edges(cg.graph)
    parents_by_cluster = {c.id: _parents(c.members, incoming) for c in cg.clusters}
    entries: list[StateTableEntry] = []
    seen = set()
    for edge in cg.outgoing():
        cluster = cg.clusters[cg.cluster_of[edge.source]]
        path = _path(edge.source, parents_by_cluster[cluster.id]) + [edge]
        lookup: list[LookupValue] = []
        for step in path:
            for ref, width, value, mask in _split_value(step):
                lookup.extend(_slices(ref, width, value, mask, p.lookup_field_width))
        if edge.target == ACCEPT:
            next_state, next_id = ACCEPT, None
        else:
            next_cluster = cg.clusters[cg.cluster_of[edge.target]]
            next_state, next_id = next_cluster.root, next_cluster.id
        extract = tuple(h for step in path[:-1] for h in cg.graph.node_headers[step.source])
        extract += cg.graph.node_headers[edge.source]
        entry = StateTableEntry(
            state=cluster.root,
            state_id=cluster.id,
            lookup=tuple(lookup),
            next_state=next_state,
            next_state_id=next_id,
            extract=extract,
        )
        if entry in seen:
            continue
        seen.add(entry)
        entries.append(entry)
    return StateTable(entries=tuple(entries), state_count=len(cg.clusters))


def check_capacity(t: StateTable, p: ParserSpec) -> ParserVerdict:
    """Accept iff every entry fits the lookup limits and the TCAM holds all entries."""
    reasons = []
    if t.entry_count > p.tcam_entries:
        reasons.append(f"{t.entry_count} state-table entries exceed parser TCAM depth {p.tcam_entries}")
    if t.state_count > 2 ** p.state_id_bits:
        reasons.append(f"{t.state_count} parser states need more than {p.state_id_bits} state-id bits")
    for entry in t.entries:
        if len(entry.lookup) > p.lookup_fields_per_cycle:
            reasons.append(f"entry from '{entry.state}' uses {len(entry.lookup)} lookup fields")
        if any(v.width > p.lookup_field_width for v in entry.lookup):
            reasons.append(f"entry from '{entry.state}' has a lookup field wider than {p.lookup_field_width}b")
        if p.state_id_bits + entry.lookup_bits > p.tcam_entry_width:
            reasons.append(f"entry from '{entry.state}' needs {p.state_id_bits + entry.lookup_bits}b "
                           f"of a {p.tcam_entry_width}b TCAM entry")
    utilization = 100.0 * t.entry_count / p.tcam_entries
    return ParserVerdict(
        accepted=not reasons,
        entry_count=t.entry_count,
        capacity=p.tcam_entries,
        utilization_percent=utilization,
        reasons=tuple(reasons),
    )


def map_parser(g: ParseGraph, p: ParserSpec) -> ParserMapping:
    """Cluster, emit and capacity-check in one go.

    Raises:
        MappingRejected: Per-cycle or TCAM capacity exceeded
    """
    cg = cluster_parse_graph(g, p)
    table = emit_state_table(cg, p)
    verdict = check_capacity(table, p)
    logger.info(f"Parser state table: {verdict.entry_count}/{verdict.capacity} entries "
                f"({verdict.utilization_percent:.2f}%)")
    if not verdict.accepted:
        raise MappingRejected(
            phase="parser",
            resource="parser capacity",
            element=g.start,
            detail="; ".join(verdict.reasons),
        )
    return ParserMapping(
        cluster_graph=cg,
        state_table=table,
        verdict=verdict,
        states=len(g.nodes),
        edges=len(g.edges),
    )


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

def _set_partitions(items: list[str]) -> Iterator[list[list[str]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in _set_partitions(rest):
        yield [[first]] + partition
        for i in range(len(partition)):
            yield partition[:i] + [[first] + partition[i]] + partition[i + 1:]


def _ordered_members(block: list[str], incoming) -> Optional[tuple[str, ...]]:
    """Root first, then members reachable inside the block; None if no single root."""
    block_set = set(block)
    roots = [m for m in block if not (len(incoming[m]) == 1 and incoming[m][0].source in block_set)]
    if len(roots) != 1:
        return None
    ordered = [roots[0]]
    frontier = [roots[0]]
    while frontier:
        node = frontier.pop(0)
        for member in block:
            if member not in ordered and incoming[member][0].source == node:
                ordered.append(member)
                frontier.append(member)
    return tuple(ordered) if len(ordered) == len(block) else None


def brute_force_cluster(g: ParseGraph, p: ParserSpec) -> Optional[int]:
    """Minimum state-table entry count over every valid clustering.

    Only for small graphs (test oracle). Returns None when no clustering is valid.

    Raises:
        ValueError: More than 8 parse states
    """
    if len(g.nodes) > ORACLE_MAX_NODES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_NODES} parse states, got {len(g.nodes)}")
    incoming = _in_edges(g)
    best: Optional[int] = None
    for partition in _set_partitions(list(g.nodes)):
        ordered = [_ordered_members(block, incoming) for block in partition]
        if any(members is None for members in ordered):
            continue
        if any(_violation(members, g, incoming, p) is not None for members in ordered):
            continue
        cluster_of = {m: i for i, members in enumerate(ordered) for m in members}
        clusters = tuple(_make_cluster(i, members, g, incoming, p) for i, members in enumerate(ordered))
        cg = ClusterGraph(graph=g, clusters=clusters, cluster_of=cluster_of)
        if not nx.is_directed_acyclic_graph(cg.quotient()):
            continue
        count = emit_state_table(cg, p).entry_count
        if best is None or count < best:
            best = count
    return best


def unique_outgoing_pairs(cg: ClusterGraph) -> int:
    """Count distinct (cluster, outgoing transition) pairs independently of the emitter."""
    pairs = set()
    for edge in cg.graph.edges:
        if cg.is_internal(edge):
            continue
        pairs.add((cg.cluster_of[edge.source], edge.source, edge.key, edge.value, edge.mask, edge.target))
    return len(pairs)

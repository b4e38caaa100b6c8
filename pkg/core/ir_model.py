"""Intermediate representation ingestion: header fields, parse graph and TDG.

The IR consumed here is the JSON document the reference P4 frontend emits
for the V1Model target (header types, headers, parsers, pipelines with
tables and conditionals, actions and stateful extern declarations).
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Optional

import networkx as nx

from core.errors import Diagnostic, InputError, MappingRejected, UnsupportedFeatureError
from utils.logger import setup_logger

logger = setup_logger()

FieldRef = tuple[str, str]  # (header instance, field name)

ACCEPT = "$accept$"
VALIDITY_FIELD = "$valid$"
PIPELINES = ("ingress", "egress")

KNOWN_TOP_LEVEL_KEYS = frozenset({
    "header_types", "headers", "header_stacks", "header_union_types", "header_unions",
    "header_union_stacks", "field_lists", "errors", "enums", "parsers", "parse_vsets",
    "deparsers", "meter_arrays", "counter_arrays", "register_arrays", "calculations",
    "learn_lists", "actions", "pipelines", "checksums", "force_arith", "extern_instances",
    "field_aliases", "program", "__meta__",
})

# Primitives whose first parameter is the written field
FIRST_PARAM_WRITES = frozenset({
    "assign", "modify_field", "register_read", "modify_field_with_hash_based_offset",
    "modify_field_rng_uniform",
})
# Primitives that read or write only packet-control state
CONTROL_PRIMITIVES = frozenset({
    "mark_to_drop", "drop", "_drop", "exit", "no_op", "add_header", "remove_header",
    "clone_ingress_pkt_to_egress", "clone_egress_pkt_to_egress", "resubmit", "recirculate",
    "truncate", "log_msg", "assert", "assume", "_jump", "_jump_if_zero",
})
STATEFUL_PRIMITIVES = frozenset({"register_read", "register_write", "count", "execute_meter"})
HEADER_COPY_PRIMITIVES = frozenset({"assign_header", "copy_header"})
EXTERN_PARAM_TYPES = {
    "register_array": "register",
    "counter_array": "counter",
    "meter_array": "meter",
}
# Cell width of counters and meters (packet and byte count, or two rate buckets)
EXTERN_CELL_BITS = {"counter": 64, "meter": 64}


class MatchKind(str, Enum):
    """Match kind of one table key field."""
    EXACT = "exact"
    TERNARY = "ternary"
    LPM = "lpm"
    RANGE = "range"


MATCH_KIND_ALIASES = {
    "exact": MatchKind.EXACT,
    "ternary": MatchKind.TERNARY,
    "lpm": MatchKind.LPM,
    "range": MatchKind.RANGE,
    "optional": MatchKind.TERNARY,
}


class DependencyKind(Enum):
    """Dependency between two logical tables on one control-flow path."""
    MATCH = "match"
    ACTION = "action"
    REVERSE_MATCH = "reverse_match"
    SUCCESSOR = "successor"
    NONE = "none"

    @property
    def strictness(self) -> int:
        return _STRICTNESS[self]

    @property
    def separates_stages(self) -> bool:
        """True when the dependent table must sit in a later stage."""
        return self in (DependencyKind.MATCH, DependencyKind.ACTION)

    def sort_key(self) -> tuple[int, int]:
        # REVERSE_MATCH and SUCCESSOR are equally strict; prefer REVERSE_MATCH on ties
        return (_STRICTNESS[self], 1 if self is DependencyKind.REVERSE_MATCH else 0)


_STRICTNESS = {
    DependencyKind.MATCH: 3,
    DependencyKind.ACTION: 2,
    DependencyKind.REVERSE_MATCH: 1,
    DependencyKind.SUCCESSOR: 1,
    DependencyKind.NONE: 0,
}


def strictest(kinds) -> DependencyKind:
    """Return the strictest kind of an iterable of kinds (NONE when empty)."""
    return max(kinds, key=DependencyKind.sort_key, default=DependencyKind.NONE)


@dataclass(frozen=True)
class HeaderField:
    """One header or metadata field of the program."""
    name: str
    header_instance: str
    width: int
    is_metadata: bool = False

    @property
    def ref(self) -> FieldRef:
        return (self.header_instance, self.name)

    @property
    def qualified_name(self) -> str:
        return f"{self.header_instance}.{self.name}"


@dataclass(frozen=True)
class ActionDef:
    """Action with its resolved read/write sets and extern operations."""
    id: int
    name: str
    reads: frozenset[FieldRef]
    writes: frozenset[FieldRef]
    extern_ops: tuple[tuple[str, str], ...] = ()
    arg_width_total: int = 0
    primitive_count: int = 0


@dataclass(frozen=True)
class ExternDecl:
    """Stateful object declaration (register, counter or meter)."""
    name: str
    kind: str
    size: int
    bitwidth: int
    bound_table: Optional[str] = None

    @property
    def total_bits(self) -> int:
        return self.size * self.bitwidth


@dataclass(frozen=True)
class LogicalTable:
    """Logical match-action table of one pipeline."""
    name: str
    pipeline: str
    match_fields: tuple[tuple[FieldRef, MatchKind], ...]
    max_entries: int
    actions: tuple[int, ...]
    next_table_map: tuple[tuple[str, Optional[str]], ...]
    base_default_next: Optional[str]
    extern_refs: frozenset[str]
    tdg_order: int
    key_width: int
    reads: frozenset[FieldRef] = frozenset()
    writes: frozenset[FieldRef] = frozenset()
    vliw_slots: int = 0
    action_arg_width: int = 0
    action_crossbar_bits: int = 0

    @property
    def match_refs(self) -> frozenset[FieldRef]:
        return frozenset(ref for ref, _ in self.match_fields)

    @property
    def is_exact(self) -> bool:
        """True for exact-match tables (keyless tables count as exact)."""
        return all(kind is MatchKind.EXACT for _, kind in self.match_fields)

    @property
    def exits(self) -> frozenset[Optional[str]]:
        """Distinct next-node names this table can hand control to."""
        if self.next_table_map:
            return frozenset(target for _, target in self.next_table_map)
        return frozenset({self.base_default_next})


@dataclass(frozen=True)
class Conditional:
    """Branch node of a pipeline's control flow."""
    name: str
    reads: frozenset[FieldRef]
    true_next: Optional[str]
    false_next: Optional[str]


@dataclass(frozen=True)
class PipelineDef:
    name: str
    init_table: Optional[str]
    tables: tuple[str, ...]
    conditionals: tuple[Conditional, ...]


@dataclass(frozen=True)
class ParseState:
    name: str
    headers: tuple[str, ...]
    bits: int


@dataclass(frozen=True)
class ParseTransition:
    """Parser transition; ``target`` is ACCEPT for the accept sink, ``value`` None for default."""
    source: str
    target: str
    key: tuple[FieldRef, ...]
    key_widths: tuple[int, ...]
    value: Optional[int]
    mask: Optional[int]

    @property
    def key_width(self) -> int:
        return sum(self.key_widths)


@dataclass(frozen=True)
class ParserDef:
    name: str
    init_state: str
    states: tuple[ParseState, ...]
    transitions: tuple[ParseTransition, ...]


@dataclass(frozen=True)
class IrProgram:
    """Target-independent representation of one P4 program."""
    name: str
    fields: tuple[HeaderField, ...]
    header_types: dict[str, str]
    parser: Optional[ParserDef]
    pipelines: dict[str, PipelineDef]
    tables: dict[str, LogicalTable]
    actions: dict[int, ActionDef]
    externs: dict[str, ExternDecl]
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def lookup_field(self, ref: FieldRef) -> HeaderField:
        for header_field in self.fields:
            if header_field.ref == ref:
                return header_field
        raise KeyError(f"{ref[0]}.{ref[1]}")

    def header_bits(self, header: str) -> int:
        return sum(f.width for f in self.fields if f.header_instance == header)

    def pipeline_tables(self, pipeline: str) -> list[LogicalTable]:
        return sorted(
            (t for t in self.tables.values() if t.pipeline == pipeline),
            key=lambda t: t.tdg_order,
        )


@dataclass(frozen=True)
class ParseGraph:
    """DAG of parse states; the accept sink is not counted among ``nodes``."""
    nodes: tuple[str, ...]
    start: str
    edges: tuple[ParseTransition, ...]
    node_bits: dict[str, int]
    node_headers: dict[str, tuple[str, ...]]

    def graph(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.nodes)
        g.add_node(ACCEPT)
        for index, edge in enumerate(self.edges):
            g.add_edge(edge.source, edge.target, key=index)
        return g

    def out_edges(self, node: str) -> list[ParseTransition]:
        return [e for e in self.edges if e.source == node]

    def topological_order(self) -> list[str]:
        order = list(nx.lexicographical_topological_sort(self.graph(), key=self._position))
        return [n for n in order if n != ACCEPT]

    def _position(self, node: str) -> int:
        return self.nodes.index(node) if node in self.nodes else len(self.nodes)


@dataclass(frozen=True)
class ControlFlow:
    """Control-flow facts of one pipeline used by dependency classification."""
    pipeline: str
    reachable: dict[str, frozenset[str]]
    successors: dict[str, frozenset[str]]
    control_parents: dict[str, frozenset[str]]
    guard_fields: dict[str, frozenset[FieldRef]]

    def precedes(self, a: str, b: str) -> bool:
        return b in self.reachable.get(a, frozenset())

    def predicated(self, a: str, b: str) -> bool:
        """True when b runs right after a or only on some of a's outcomes."""
        return b in self.successors.get(a, frozenset()) or a in self.control_parents.get(b, frozenset())

    def effective_match(self, table: LogicalTable) -> frozenset[FieldRef]:
        return table.match_refs | self.guard_fields.get(table.name, frozenset())


@dataclass(frozen=True)
class Tdg:
    """Table dependency graph of one pipeline."""
    pipeline: str
    tables: tuple[LogicalTable, ...]
    kinds: dict[tuple[str, str], frozenset[DependencyKind]]
    edges: dict[tuple[str, str], DependencyKind]
    stateful_groups: tuple[frozenset[str], ...]

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(t.name for t in self.tables)
        for (a, b), kind in self.edges.items():
            g.add_edge(a, b, kind=kind)
        return g

    def table(self, name: str) -> LogicalTable:
        for table in self.tables:
            if table.name == name:
                return table
        raise KeyError(name)


# ---------------------------------------------------------------------------
# IR document parsing
# ---------------------------------------------------------------------------

def _iter_field_refs(node: Any) -> Iterator[FieldRef]:
    """Yield every field reference found anywhere inside a JSON fragment."""
    if isinstance(node, dict):
        if node.get("type") == "field" and isinstance(node.get("value"), list):
            header, name = node["value"][0], node["value"][1]
            yield (str(header), str(name))
            return
        for value in node.values():
            yield from _iter_field_refs(value)
    elif isinstance(node, list):
        for item in node:
            yield from _iter_field_refs(item)


def _iter_header_refs(node: Any) -> Iterator[str]:
    if isinstance(node, dict):
        if node.get("type") == "header" and isinstance(node.get("value"), str):
            yield node["value"]
            return
        for value in node.values():
            yield from _iter_header_refs(value)
    elif isinstance(node, list):
        for item in node:
            yield from _iter_header_refs(item)


def _parse_int(text: Any, what: str) -> int:
    if isinstance(text, int):
        return text
    try:
        return int(str(text), 0)
    except ValueError as e:
        raise InputError(f"invalid integer for {what}: {text!r}") from e


def _has_atomic_annotation(node: dict) -> bool:
    for key in ("annotations", "pragmas"):
        values = node.get(key) or []
        if any("atomic" in str(v) for v in values):
            return True
    return False


class _IrParser:
    """Stateful helper turning one IR document into an IrProgram."""

    def __init__(self, doc: dict, name: str):
        self.doc = doc
        self.name = name
        self.diagnostics: list[Diagnostic] = []
        self.fields: list[HeaderField] = []
        self.field_index: dict[FieldRef, HeaderField] = {}
        self.header_types: dict[str, str] = {}
        self.header_fields: dict[str, list[str]] = {}

    def warn(self, code: str, message: str) -> None:
        self.diagnostics.append(Diagnostic("warning", code, message))
        logger.warning(f"{code}: {message}")

    def resolve(self, ref: FieldRef, where: str) -> Optional[FieldRef]:
        if ref[1] == VALIDITY_FIELD:
            return None
        if ref not in self.field_index:
            raise InputError(f"unresolved field reference {ref[0]}.{ref[1]} in '{where}'")
        return ref

    def resolve_all(self, refs, where: str) -> frozenset[FieldRef]:
        resolved = (self.resolve(ref, where) for ref in refs)
        return frozenset(ref for ref in resolved if ref is not None)

    def run(self) -> IrProgram:
        unknown = sorted(set(self.doc) - KNOWN_TOP_LEVEL_KEYS)
        for key in unknown:
            self.warn("ir.unknown_key", f"top-level key '{key}' ignored")
        for key, feature in (
            ("header_stacks", "header stack"),
            ("header_union_stacks", "header union stack"),
            ("parse_vsets", "parser value set"),
            ("extern_instances", "architecture extern instance"),
        ):
            if self.doc.get(key):
                raise UnsupportedFeatureError(feature, self.doc[key][0].get("name", key))

        self._parse_headers()
        externs = self._parse_externs()
        actions = self._parse_actions(externs)
        parser = self._parse_parser()
        pipelines, tables = self._parse_pipelines(actions, externs)

        return IrProgram(
            name=self.name,
            fields=tuple(self.fields),
            header_types=dict(self.header_types),
            parser=parser,
            pipelines=pipelines,
            tables=tables,
            actions=actions,
            externs=externs,
            diagnostics=tuple(self.diagnostics),
        )

    def _parse_headers(self) -> None:
        if "header_types" not in self.doc or "headers" not in self.doc:
            raise InputError("IR document lacks 'header_types' or 'headers'")
        types: dict[str, dict] = {}
        for header_type in self.doc["header_types"]:
            if header_type.get("max_length") is not None:
                raise UnsupportedFeatureError("variable-length header", header_type["name"])
            types[header_type["name"]] = header_type

        for header in self.doc["headers"]:
            instance = header["name"]
            type_name = header["header_type"]
            if type_name not in types:
                raise InputError(f"header '{instance}' has unknown type '{type_name}'")
            self.header_types[instance] = type_name
            names = []
            for entry in types[type_name]["fields"]:
                field_name, width = entry[0], entry[1]
                if width == "*" or (len(entry) > 3 and entry[3] == "varbit"):
                    raise UnsupportedFeatureError("variable-length header", f"{instance}.{field_name}")
                if field_name == VALIDITY_FIELD:
                    continue
                width = _parse_int(width, f"{instance}.{field_name}")
                if width < 1:
                    raise InputError(f"field {instance}.{field_name} has width {width}")
                header_field = HeaderField(
                    name=field_name,
                    header_instance=instance,
                    width=width,
                    is_metadata=bool(header.get("metadata", False)),
                )
                if header_field.ref in self.field_index:
                    raise InputError(f"duplicate field {header_field.qualified_name}")
                self.fields.append(header_field)
                self.field_index[header_field.ref] = header_field
                names.append(field_name)
            self.header_fields[instance] = names

    def _parse_externs(self) -> dict[str, ExternDecl]:
        externs: dict[str, ExternDecl] = {}
        for register in self.doc.get("register_arrays", []):
            externs[register["name"]] = ExternDecl(
                name=register["name"],
                kind="register",
                size=_parse_int(register.get("size", 1), register["name"]),
                bitwidth=_parse_int(register.get("bitwidth", 32), register["name"]),
            )
        for key, kind in (("counter_arrays", "counter"), ("meter_arrays", "meter")):
            for decl in self.doc.get(key, []):
                bound = decl.get("binding") if decl.get("is_direct") else None
                externs[decl["name"]] = ExternDecl(
                    name=decl["name"],
                    kind=kind,
                    size=_parse_int(decl.get("size", 1), decl["name"]),
                    bitwidth=EXTERN_CELL_BITS[kind],
                    bound_table=bound,
                )
        return externs

    def _parse_actions(self, externs: dict[str, ExternDecl]) -> dict[int, ActionDef]:
        actions: dict[int, ActionDef] = {}
        for index, action in enumerate(self.doc.get("actions", [])):
            name = action["name"]
            action_id = action.get("id", index)
            if _has_atomic_annotation(action):
                raise UnsupportedFeatureError("atomic transaction", name)
            reads: set[FieldRef] = set()
            writes: set[FieldRef] = set()
            extern_ops: list[tuple[str, str]] = []
            primitives = action.get("primitives", [])
            for primitive in primitives:
                op = primitive.get("op", "")
                params = primitive.get("parameters", [])
                for param in params:
                    if isinstance(param, dict) and param.get("type") in EXTERN_PARAM_TYPES:
                        extern_name = param["value"]
                        if extern_name not in externs:
                            raise InputError(f"action '{name}' uses undeclared extern '{extern_name}'")
                        extern_ops.append((extern_name, op))

                if op in HEADER_COPY_PRIMITIVES and len(params) >= 2:
                    dst_headers = list(_iter_header_refs(params[0]))
                    src_headers = list(_iter_header_refs(params[1:]))
                    writes.update((h, f) for h in dst_headers for f in self.header_fields.get(h, []))
                    reads.update((h, f) for h in src_headers for f in self.header_fields.get(h, []))
                    continue

                if op == "execute_meter" and len(params) >= 3:
                    writes.update(_iter_field_refs(params[2]))
                    reads.update(_iter_field_refs(params[:2]))
                    continue

                if op in FIRST_PARAM_WRITES and params:
                    writes.update(_iter_field_refs(params[0]))
                    reads.update(_iter_field_refs(params[1:]))
                    continue

                if op not in CONTROL_PRIMITIVES and op not in STATEFUL_PRIMITIVES:
                    self.warn("ir.unknown_primitive", f"primitive '{op}' in action '{name}' treated as read-only")
                reads.update(_iter_field_refs(params))

            arg_width = sum(_parse_int(arg.get("bitwidth", 0), f"{name}.{arg.get('name')}")
                            for arg in action.get("runtime_data", []))
            actions[action_id] = ActionDef(
                id=action_id,
                name=name,
                reads=self.resolve_all(reads, name),
                writes=self.resolve_all(writes, name),
                extern_ops=tuple(extern_ops),
                arg_width_total=arg_width,
                primitive_count=len(primitives),
            )
        return actions

    def _parse_parser(self) -> Optional[ParserDef]:
        parsers = self.doc.get("parsers", [])
        if not parsers:
            self.warn("ir.no_parser", "IR declares no parser")
            return None
        if len(parsers) > 1:
            self.warn("ir.extra_parsers", f"{len(parsers) - 1} extra parser(s) ignored")
        parser = parsers[0]
        states: list[ParseState] = []
        transitions: list[ParseTransition] = []
        for state in parser.get("parse_states", []):
            headers = []
            for op in state.get("parser_ops", []):
                kind = op.get("op")
                if kind == "extract_VL":
                    raise UnsupportedFeatureError("variable-length header", state["name"])
                if kind != "extract":
                    continue
                for param in op.get("parameters", []):
                    if param.get("type") != "regular":
                        raise UnsupportedFeatureError(f"{param.get('type')} extraction", state["name"])
                    if param["value"] not in self.header_types:
                        raise InputError(f"state '{state['name']}' extracts unknown header '{param['value']}'")
                    headers.append(param["value"])
            bits = sum(self.field_index[(h, f)].width for h in headers for f in self.header_fields[h])
            states.append(ParseState(state["name"], tuple(headers), bits))

            key_refs: list[FieldRef] = []
            for key in state.get("transition_key", []):
                if key.get("type") != "field":
                    raise UnsupportedFeatureError(f"{key.get('type')} transition key", state["name"])
                ref = (key["value"][0], key["value"][1])
                self.resolve(ref, state["name"])
                key_refs.append(ref)
            widths = tuple(self.field_index[ref].width for ref in key_refs)

            for transition in state.get("transitions", []):
                kind = transition.get("type", "hexstr")
                target = transition.get("next_state")
                if target == "reject":
                    continue
                if kind == "parse_vset":
                    raise UnsupportedFeatureError("parser value set", state["name"])
                if kind == "default":
                    value, mask = None, None
                else:
                    value = _parse_int(transition["value"], f"{state['name']} transition")
                    raw_mask = transition.get("mask")
                    mask = None if raw_mask is None else _parse_int(raw_mask, f"{state['name']} mask")
                transitions.append(ParseTransition(
                    source=state["name"],
                    target=ACCEPT if target is None else target,
                    key=tuple(key_refs),
                    key_widths=widths,
                    value=value,
                    mask=mask,
                ))
        init_state = parser.get("init_state")
        if init_state not in {s.name for s in states}:
            raise InputError(f"parser init state '{init_state}' is not declared")
        return ParserDef(parser.get("name", "parser"), init_state, tuple(states), tuple(transitions))

    def _parse_pipelines(
        self,
        actions: dict[int, ActionDef],
        externs: dict[str, ExternDecl],
    ) -> tuple[dict[str, PipelineDef], dict[str, LogicalTable]]:
        pipelines: dict[str, PipelineDef] = {}
        tables: dict[str, LogicalTable] = {}
        by_name = {a.name: a.id for a in actions.values()}
        order = 0
        docs = sorted(
            self.doc.get("pipelines", []),
            key=lambda p: PIPELINES.index(p["name"]) if p["name"] in PIPELINES else len(PIPELINES),
        )
        for pipeline in docs:
            pipeline_name = pipeline["name"]
            if pipeline_name not in PIPELINES:
                self.warn("ir.unknown_pipeline", f"pipeline '{pipeline_name}' ignored")
                continue
            if _has_atomic_annotation(pipeline):
                raise UnsupportedFeatureError("atomic transaction", pipeline_name)
            names = []
            for table in pipeline.get("tables", []):
                logical = self._parse_table(table, pipeline_name, order, actions, by_name, externs)
                if logical.name in tables:
                    raise InputError(f"duplicate table name '{logical.name}'")
                tables[logical.name] = logical
                names.append(logical.name)
                order += 1
            conditionals = tuple(
                Conditional(
                    name=c["name"],
                    reads=self.resolve_all(_iter_field_refs(c.get("expression", {})), c["name"]),
                    true_next=c.get("true_next"),
                    false_next=c.get("false_next"),
                )
                for c in pipeline.get("conditionals", [])
            )
            pipelines[pipeline_name] = PipelineDef(
                name=pipeline_name,
                init_table=pipeline.get("init_table"),
                tables=tuple(names),
                conditionals=conditionals,
            )
        return pipelines, tables

    def _parse_table(
        self,
        table: dict,
        pipeline: str,
        order: int,
        actions: dict[int, ActionDef],
        by_name: dict[str, int],
        externs: dict[str, ExternDecl],
    ) -> LogicalTable:
        name = table["name"]
        match_fields = []
        key_width = 0
        for key in table.get("key", []):
            raw_kind = key.get("match_type", "exact")
            if raw_kind not in MATCH_KIND_ALIASES:
                raise UnsupportedFeatureError(f"'{raw_kind}' match", name)
            ref = (key["target"][0], key["target"][1])
            if self.resolve(ref, name) is None:
                # validity match: one bit, no PHV field behind it
                key_width += 1
                continue
            match_fields.append((ref, MATCH_KIND_ALIASES[raw_kind]))
            key_width += self.field_index[ref].width

        if "action_ids" in table:
            action_ids = tuple(table["action_ids"])
        else:
            action_ids = tuple(by_name[a] for a in table.get("actions", []) if a in by_name)
        missing = [a for a in action_ids if a not in actions]
        if missing:
            raise InputError(f"table '{name}' refers to unknown action id(s) {missing}")

        table_actions = [actions[a] for a in action_ids]
        extern_refs = {ext for action in table_actions for ext, _ in action.extern_ops}
        extern_refs.update(e.name for e in externs.values() if e.bound_table == name)
        if table.get("direct_meters"):
            extern_refs.add(table["direct_meters"])

        max_entries = _parse_int(table.get("max_size", 1), f"{name}.max_size")
        if max_entries < 1:
            raise InputError(f"table '{name}' has max_size {max_entries}")

        action_crossbar = 0
        for action in table_actions:
            read_bits = sum(self.field_index[ref].width for ref in action.reads)
            action_crossbar = max(action_crossbar, action.arg_width_total + read_bits)

        next_tables = table.get("next_tables", {}) or {}
        return LogicalTable(
            name=name,
            pipeline=pipeline,
            match_fields=tuple(match_fields),
            max_entries=max_entries,
            actions=action_ids,
            next_table_map=tuple(sorted(next_tables.items())),
            base_default_next=table.get("base_default_next"),
            extern_refs=frozenset(extern_refs),
            tdg_order=order,
            key_width=key_width,
            reads=frozenset().union(*(a.reads for a in table_actions)),
            writes=frozenset().union(*(a.writes for a in table_actions)),
            vliw_slots=len(set(action_ids)),
            action_arg_width=max((a.arg_width_total for a in table_actions), default=0),
            action_crossbar_bits=action_crossbar,
        )


def parse_ir(ir_document: str, name: Optional[str] = None) -> IrProgram:
    """Parse the frontend's JSON IR document into an IrProgram.

    Args:
        ir_document: JSON text emitted by the frontend
        name: Program name (defaults to the document's ``program`` entry)

    Returns:
        Parsed IrProgram

    Raises:
        InputError: Malformed document or dangling references
        UnsupportedFeatureError: Variable-length headers, atomic blocks and similar
    """
    try:
        doc = json.loads(ir_document)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed IR document: {e.msg}", offset=e.pos) from e
    if not isinstance(doc, dict):
        raise InputError("IR document must be a JSON object")

    if name is None:
        program = str(doc.get("program", "program"))
        name = program.rsplit("/", 1)[-1].removesuffix(".p4")
    try:
        program = _IrParser(doc, name).run()
    except (KeyError, IndexError) as e:
        raise InputError(f"IR document is missing a required entry: {e}") from e
    except (TypeError, AttributeError, ValueError) as e:
        raise InputError(f"IR document has an entry of the wrong shape: {e}") from e

    logger.info(f"Parsed IR '{program.name}': {len(program.fields)} fields, "
                f"{len(program.tables)} tables, {len(program.actions)} actions")
    return program


# ---------------------------------------------------------------------------
# Parse graph
# ---------------------------------------------------------------------------

def build_parse_graph(program: IrProgram) -> ParseGraph:
    """Build the parse-state DAG, with the accept state as an explicit sink.

    Raises:
        MappingRejected: The parser state machine contains a cycle
    """
    parser = program.parser
    if parser is None:
        raise InputError("program has no parser")
    names = [s.name for s in parser.states]
    for edge in parser.transitions:
        if edge.target != ACCEPT and edge.target not in names:
            raise InputError(f"transition from '{edge.source}' to unknown state '{edge.target}'")

    graph = ParseGraph(
        nodes=tuple(names),
        start=parser.init_state,
        edges=parser.transitions,
        node_bits={s.name: s.bits for s in parser.states},
        node_headers={s.name: s.headers for s in parser.states},
    )
    g = graph.graph()
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise MappingRejected(
            phase="parser",
            resource="acyclic parse graph",
            element=cycle[0][0],
            detail="parser state machine loops: " + " -> ".join(str(e[0]) for e in cycle),
        )
    logger.debug(f"Parse graph: {len(graph.nodes)} states, {len(graph.edges)} transitions")
    return graph


# ---------------------------------------------------------------------------
# Control flow and TDG
# ---------------------------------------------------------------------------

def build_control_flow(program: IrProgram, pipeline: str) -> ControlFlow:
    """Derive reachability, direct successors and control dependences of a pipeline.

    Raises:
        MappingRejected: The pipeline's control flow has a cycle
    """
    if pipeline not in PIPELINES:
        raise InputError(f"unknown pipeline '{pipeline}'")
    definition = program.pipelines.get(pipeline)
    tables = {t.name: t for t in program.pipeline_tables(pipeline)}
    conditionals = {c.name: c for c in definition.conditionals} if definition else {}

    exits: dict[str, frozenset[Optional[str]]] = {}
    for name, table in tables.items():
        exits[name] = table.exits
    for name, cond in conditionals.items():
        exits[name] = frozenset({cond.true_next, cond.false_next})

    g = nx.DiGraph()
    g.add_nodes_from(exits)
    for node, targets in exits.items():
        for target in targets:
            if target is None:
                continue
            if target not in exits:
                raise InputError(f"'{node}' hands control to unknown node '{target}'")
            g.add_edge(node, target)
    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise MappingRejected(
            phase="tdg",
            resource="acyclic control flow",
            element=cycle[0][0],
            detail=" -> ".join(str(e[0]) for e in cycle),
        )

    def reach(node: Optional[str]) -> frozenset[str]:
        if node is None:
            return frozenset()
        return frozenset({node} | nx.descendants(g, node))

    def first_tables(node: Optional[str]) -> set[str]:
        if node is None:
            return set()
        if node in tables:
            return {node}
        cond = conditionals[node]
        return first_tables(cond.true_next) | first_tables(cond.false_next)

    reachable = {n: frozenset(t for t in nx.descendants(g, n) if t in tables) for n in tables}
    successors = {
        n: frozenset(set().union(*(first_tables(t) for t in exits[n]))) for n in tables
    }

    control_parents: dict[str, set[str]] = {n: set() for n in tables}
    guard_fields: dict[str, set[FieldRef]] = {n: set() for n in tables}
    for node, targets in exits.items():
        if len(targets) < 2:
            continue
        reaches = [reach(t) for t in targets]
        dependent = frozenset.union(*reaches) - frozenset.intersection(*reaches)
        for name in dependent:
            if name not in tables:
                continue
            control_parents[name].add(node)
            if node in conditionals:
                guard_fields[name].update(conditionals[node].reads)

    return ControlFlow(
        pipeline=pipeline,
        reachable=reachable,
        successors=successors,
        control_parents={n: frozenset(v) for n, v in control_parents.items()},
        guard_fields={n: frozenset(v) for n, v in guard_fields.items()},
    )


def detect_dependencies(a: LogicalTable, b: LogicalTable, flow: ControlFlow) -> frozenset[DependencyKind]:
    """Return every dependency kind that holds from table a to table b."""
    kinds = set()
    if a.writes & flow.effective_match(b):
        kinds.add(DependencyKind.MATCH)
    if a.writes & (b.reads | b.writes):
        kinds.add(DependencyKind.ACTION)
    if flow.effective_match(a) & b.writes:
        kinds.add(DependencyKind.REVERSE_MATCH)
    if flow.predicated(a.name, b.name):
        kinds.add(DependencyKind.SUCCESSOR)
    return frozenset(kinds)


def classify_dependency(a: LogicalTable, b: LogicalTable, flow: ControlFlow) -> DependencyKind:
    """Classify the strictest dependency of b on a (a precedes b on some path)."""
    return strictest(detect_dependencies(a, b, flow))


def stateful_groups(tables: list[LogicalTable]) -> tuple[frozenset[str], ...]:
    """Group tables that share at least one stateful extern."""
    g = nx.Graph()
    for table in tables:
        g.add_node(("table", table.name))
        for extern in table.extern_refs:
            g.add_edge(("table", table.name), ("extern", extern))
    groups = []
    for component in nx.connected_components(g):
        names = frozenset(n for kind, n in component if kind == "table")
        if len(names) > 1:
            groups.append(names)
    order = {t.name: t.tdg_order for t in tables}
    return tuple(sorted(groups, key=lambda grp: min(order[n] for n in grp)))


def build_tdg(program: IrProgram, pipeline: str) -> Tdg:
    """Build the table dependency graph of one pipeline.

    Args:
        program: Parsed program
        pipeline: 'ingress' or 'egress'

    Returns:
        Tdg with one edge per dependent pair, holding the strictest kind
    """
    flow = build_control_flow(program, pipeline)
    tables = program.pipeline_tables(pipeline)
    kinds: dict[tuple[str, str], frozenset[DependencyKind]] = {}
    edges: dict[tuple[str, str], DependencyKind] = {}
    for a in tables:
        for b in tables:
            if a.name == b.name or not flow.precedes(a.name, b.name):
                continue
            detected = detect_dependencies(a, b, flow)
            if not detected:
                continue
            kinds[(a.name, b.name)] = detected
            edges[(a.name, b.name)] = strictest(detected)

    tdg = Tdg(
        pipeline=pipeline,
        tables=tuple(tables),
        kinds=kinds,
        edges=edges,
        stateful_groups=stateful_groups(tables),
    )
    logger.info(f"TDG '{pipeline}': {len(tables)} tables, {len(edges)} edges, "
                f"{len(tdg.stateful_groups)} stateful group(s)")
    return tdg

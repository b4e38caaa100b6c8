"""Builders for IR documents, logical tables and hardware specs used across the test suite."""
import json
from dataclasses import replace
from typing import Iterable, Optional, Sequence

from core.hsl import HardwareSpec, default_spec
from core.ir_model import IrProgram, LogicalTable, MatchKind, parse_ir

AUTO = "auto"

_EXTERN_PARAM = {"register": "register_array", "counter": "counter_array", "meter": "meter_array"}


def _field(ref: str) -> dict:
    header, name = ref.split(".", 1)
    return {"type": "field", "value": [header, name]}


def _combine(refs: Sequence[str]) -> dict:
    node = _field(refs[0])
    for ref in refs[1:]:
        node = {"type": "expression", "value": {"op": "+", "left": node, "right": _field(ref)}}
    return {"type": "expression", "value": node} if len(refs) > 1 else node


class IrBuilder:
    """Assemble a frontend-style JSON IR document piece by piece."""

    def __init__(self, name: str = "test_program"):
        self.name = name
        self.header_types: list[dict] = []
        self.headers: list[dict] = []
        self.states: list[dict] = []
        self.init_state: Optional[str] = None
        self.actions: list[dict] = [{"name": "NoAction", "id": 0, "runtime_data": [], "primitives": []}]
        self.externs: dict[str, str] = {}
        self.registers: list[dict] = []
        self.counters: list[dict] = []
        self.meters: list[dict] = []
        self.tables: dict[str, list[dict]] = {"ingress": [], "egress": []}
        self.conditionals: dict[str, list[dict]] = {"ingress": [], "egress": []}
        self.init: dict[str, Optional[str]] = {"ingress": None, "egress": None}
        self.extra: dict = {}

    # headers -----------------------------------------------------------
    def header(self, name: str, fields: Iterable[tuple[str, int]], metadata: bool = False) -> "IrBuilder":
        type_name = f"{name}_t"
        self.header_types.append({
            "name": type_name,
            "id": len(self.header_types),
            "fields": [[f, w, False] for f, w in fields],
        })
        self.headers.append({
            "name": name, "id": len(self.headers), "header_type": type_name,
            "metadata": metadata, "pi_omit": True,
        })
        return self

    # parser ------------------------------------------------------------
    def state(
        self,
        name: str,
        extract: Sequence[str] = (),
        key: Sequence[str] = (),
        transitions: Sequence[tuple[Optional[str], Optional[str]]] = ((None, None),),
    ) -> "IrBuilder":
        """Add a parse state; transitions are (hex value or None for default, next state or None for accept)."""
        if self.init_state is None:
            self.init_state = name
        self.states.append({
            "name": name,
            "id": len(self.states),
            "parser_ops": [
                {"op": "extract", "parameters": [{"type": "regular", "value": h}]} for h in extract
            ],
            "transition_key": [_field(k) for k in key],
            "transitions": [
                {"type": "default" if value is None else "hexstr", "value": value, "mask": None, "next_state": target}
                for value, target in transitions
            ],
        })
        return self

    # externs -----------------------------------------------------------
    def register(self, name: str, size: int = 1024, bitwidth: int = 32) -> "IrBuilder":
        self.externs[name] = "register"
        self.registers.append({"name": name, "id": len(self.registers), "size": size, "bitwidth": bitwidth})
        return self

    def counter(self, name: str, size: int = 1024, direct_table: Optional[str] = None) -> "IrBuilder":
        self.externs[name] = "counter"
        self.counters.append({
            "name": name, "id": len(self.counters), "size": size,
            "is_direct": direct_table is not None, "binding": direct_table,
        })
        return self

    def meter(self, name: str, size: int = 1024, direct_table: Optional[str] = None) -> "IrBuilder":
        self.externs[name] = "meter"
        self.meters.append({
            "name": name, "id": len(self.meters), "size": size, "type": "bytes", "rate_count": 2,
            "is_direct": direct_table is not None, "binding": direct_table,
        })
        return self

    # actions -----------------------------------------------------------
    def action(
        self,
        name: str,
        writes: Sequence[str] = (),
        reads: Sequence[str] = (),
        args: Sequence[tuple[str, int]] = (),
        externs: Sequence[str] = (),
        annotations: Sequence[str] = (),
    ) -> "IrBuilder":
        """Each written field is assigned from the reads (or the first argument, or a constant)."""
        primitives = []
        for ref in writes:
            if reads:
                source = _combine(list(reads))
            elif args:
                source = {"type": "runtime_data", "value": 0}
            else:
                source = {"type": "hexstr", "value": "0x1"}
            primitives.append({"op": "assign", "parameters": [_field(ref), source]})
        if reads and not writes:
            primitives.append({"op": "log_msg", "parameters": [{"type": "parameters_vector",
                                                                "value": [_field(r) for r in reads]}]})
        for extern in externs:
            kind = self.externs[extern]
            op = {"register": "register_write", "counter": "count", "meter": "execute_meter"}[kind]
            params = [{"type": _EXTERN_PARAM[kind], "value": extern}, {"type": "hexstr", "value": "0x0"}]
            if kind == "register":
                params.append({"type": "hexstr", "value": "0x1"})
            primitives.append({"op": op, "parameters": params})
        action = {
            "name": name,
            "id": len(self.actions),
            "runtime_data": [{"name": a, "bitwidth": w} for a, w in args],
            "primitives": primitives,
        }
        if annotations:
            action["annotations"] = list(annotations)
        self.actions.append(action)
        return self

    # control -----------------------------------------------------------
    def table(
        self,
        name: str,
        keys: Sequence[tuple[str, str]] = (),
        actions: Sequence[str] = ("NoAction",),
        pipeline: str = "ingress",
        max_size: int = 1024,
        next_table: Optional[str] = AUTO,
        next_tables: Optional[dict[str, Optional[str]]] = None,
    ) -> "IrBuilder":
        """Add a table; with next_table left AUTO it hands control to the next table declared in its pipeline."""
        if self.init[pipeline] is None:
            self.init[pipeline] = name
        ids = {a["name"]: a["id"] for a in self.actions}
        self.tables[pipeline].append({
            "name": name,
            "id": sum(len(t) for t in self.tables.values()),
            "key": [{"match_type": kind, "name": ref, "target": ref.split(".", 1), "mask": None} for ref, kind in keys],
            "max_size": max_size,
            "action_ids": [ids[a] for a in actions],
            "actions": list(actions),
            "_next": next_table,
            "_next_tables": next_tables,
        })
        return self

    def conditional(
        self,
        name: str,
        reads: Sequence[str],
        true_next: Optional[str],
        false_next: Optional[str],
        pipeline: str = "ingress",
    ) -> "IrBuilder":
        expression = {"op": "==", "left": _field(reads[0]), "right": {"type": "hexstr", "value": "0x1"}}
        for ref in reads[1:]:
            expression = {"op": "and", "left": {"type": "expression", "value": expression},
                          "right": {"type": "expression", "value": {"op": "d2b", "left": None, "right": _field(ref)}}}
        self.conditionals[pipeline].append({
            "name": name, "id": len(self.conditionals[pipeline]),
            "expression": {"type": "expression", "value": expression},
            "true_next": true_next, "false_next": false_next,
        })
        return self

    def init_node(self, pipeline: str, name: str) -> "IrBuilder":
        self.init[pipeline] = name
        return self

    # output ------------------------------------------------------------
    def _resolved_tables(self, pipeline: str) -> list[dict]:
        tables = self.tables[pipeline]
        out = []
        for index, table in enumerate(tables):
            table = dict(table)
            nxt = table.pop("_next")
            explicit = table.pop("_next_tables")
            if nxt == AUTO:
                nxt = tables[index + 1]["name"] if index + 1 < len(tables) else None
            table["base_default_next"] = nxt
            table["next_tables"] = explicit if explicit is not None else {a: nxt for a in table["actions"]}
            out.append(table)
        return out

    def doc(self) -> dict:
        doc = {
            "program": f"{self.name}.p4",
            "header_types": self.header_types,
            "headers": self.headers,
            "actions": self.actions,
            "register_arrays": self.registers,
            "counter_arrays": self.counters,
            "meter_arrays": self.meters,
            "pipelines": [
                {
                    "name": pipeline,
                    "id": i,
                    "init_table": self.init[pipeline],
                    "tables": self._resolved_tables(pipeline),
                    "conditionals": self.conditionals[pipeline],
                }
                for i, pipeline in enumerate(("ingress", "egress"))
            ],
        }
        if self.states:
            doc["parsers"] = [{"name": "parser", "id": 0, "init_state": self.init_state, "parse_states": self.states}]
        doc.update(self.extra)
        return doc

    def text(self) -> str:
        return json.dumps(self.doc())

    def program(self) -> IrProgram:
        return parse_ir(self.text())


def basic_builder(name: str = "test_program") -> IrBuilder:
    """Ethernet/IPv4 program skeleton with a small metadata header and a two-state parser."""
    return (
        IrBuilder(name)
        .header("ethernet", [("dstAddr", 48), ("srcAddr", 48), ("etherType", 16)])
        .header("ipv4", [("ttl", 8), ("protocol", 8), ("srcAddr", 32), ("dstAddr", 32)])
        .header("meta", [("a", 16), ("b", 16), ("c", 16), ("d", 16)], metadata=True)
        .state("start", extract=["ethernet"], key=["ethernet.etherType"],
               transitions=[("0x0800", "parse_ipv4"), (None, None)])
        .state("parse_ipv4", extract=["ipv4"])
    )


def make_table(
    name: str,
    order: int,
    key_width: int = 32,
    exact: bool = True,
    max_entries: int = 1024,
    writes: Sequence[tuple[str, str]] = (),
    reads: Sequence[tuple[str, str]] = (),
    match: Sequence[tuple[str, str]] = (),
    vliw_slots: int = 1,
    action_arg_width: int = 0,
    externs: Sequence[str] = (),
    pipeline: str = "ingress",
) -> LogicalTable:
    """LogicalTable built directly, bypassing IR parsing."""
    kind = MatchKind.EXACT if exact else MatchKind.TERNARY
    refs = tuple(match) or ((("key", name)),)
    return LogicalTable(
        name=name,
        pipeline=pipeline,
        match_fields=tuple((ref, kind) for ref in refs) if key_width else (),
        max_entries=max_entries,
        actions=tuple(range(vliw_slots)),
        next_table_map=(),
        base_default_next=None,
        extern_refs=frozenset(externs),
        tdg_order=order,
        key_width=key_width,
        reads=frozenset(reads),
        writes=frozenset(writes),
        vliw_slots=vliw_slots,
        action_arg_width=action_arg_width,
        action_crossbar_bits=action_arg_width,
    )


def spec_with(base: Optional[HardwareSpec] = None, num_stages: Optional[int] = None, **stage) -> HardwareSpec:
    """Benchmark spec with the stage section and stage count overridden."""
    base = base or default_spec()
    spec = replace(base, stage=replace(base.stage, **stage)) if stage else base
    if num_stages is not None:
        spec = replace(spec, num_stages=num_stages)
    return spec

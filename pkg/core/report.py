"""Mapping report: verdict, per-phase sections and provenance, with JSON and text rendering."""
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from core.errors import InputError
from core.parser_mapper import LookupValue, StateTableEntry
from utils.logger import setup_logger

logger = setup_logger()

ACCEPTED = "accepted"
REJECTED = "rejected"
REPORT_FORMATS = ("json", "table")
REPORT_SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class HeaderSection:
    field_count: int
    used_bits: int
    allocated_bits: int
    waste_percent: float
    phv_bits: int
    containers_used: dict[str, int]  # class width -> containers
    elapsed_ms: Optional[float] = field(default=None, compare=False)


@dataclass(frozen=True)
class ParserSection:
    states: int
    edges: int
    clusters: int
    entry_count: int
    capacity: int
    capacity_percent: float
    entries: tuple[StateTableEntry, ...] = ()
    elapsed_ms: Optional[float] = field(default=None, compare=False)


@dataclass(frozen=True)
class StageUsage:
    stage: int
    tables: tuple[str, ...]
    tcam_blocks: int
    sram_match_blocks: int
    sram_action_blocks: int
    sram_stateful_blocks: int
    vliw_slots: int
    tcam_crossbar_bits: int
    sram_crossbar_bits: int
    action_crossbar_bits: int
    memory_ports: int


@dataclass(frozen=True)
class TablePlacement:
    table: str
    pipeline: str
    level: int
    stages: tuple[int, ...]
    modes: tuple[str, ...]
    entries: tuple[int, ...]


@dataclass(frozen=True)
class TdgSection:
    nodes: int
    edges: int
    stages_used: int
    stages_ingress: int
    stages_egress: int
    latency_cycles: int
    latency_ingress: int
    latency_egress: int
    tcam_blocks: int
    sram_blocks: int
    placement: tuple[TablePlacement, ...] = ()
    stages: tuple[StageUsage, ...] = ()
    elapsed_ms: Optional[float] = field(default=None, compare=False)


@dataclass(frozen=True)
class Verdict:
    status: str
    phase: Optional[str] = None
    resource: Optional[str] = None
    element: Optional[str] = None
    reason: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.status == ACCEPTED


@dataclass(frozen=True)
class Provenance:
    tool_version: str
    config: dict[str, Any]
    hardware_spec: str
    hardware_digest: str


@dataclass(frozen=True)
class MappingReport:
    program_name: str
    verdict: Verdict
    provenance: Provenance
    header: Optional[HeaderSection] = None
    parser: Optional[ParserSection] = None
    tdg: Optional[TdgSection] = None
    diagnostics: tuple[str, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.verdict.accepted

    def consistency_errors(self) -> list[str]:
        """Cross-section checks an accepted report must pass."""
        errors = []
        if not self.accepted:
            return errors
        for name in ("header", "parser", "tdg"):
            if getattr(self, name) is None:
                errors.append(f"accepted report lacks its {name} section")
        if self.tdg is not None:
            tcam = sum(s.tcam_blocks for s in self.tdg.stages)
            sram = sum(s.sram_match_blocks + s.sram_action_blocks + s.sram_stateful_blocks
                       for s in self.tdg.stages)
            if tcam != self.tdg.tcam_blocks or sram != self.tdg.sram_blocks:
                errors.append("TDG block totals differ from the per-stage sums")
        if self.parser is not None and self.parser.entries and len(self.parser.entries) != self.parser.entry_count:
            errors.append("parser entry list differs from its entry count")
        return errors


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _strip_timings(node: Any) -> Any:
    if isinstance(node, dict):
        return {k: _strip_timings(v) for k, v in node.items() if k != "elapsed_ms"}
    if isinstance(node, list):
        return [_strip_timings(v) for v in node]
    return node


def report_to_dict(r: MappingReport, include_timings: bool = False) -> dict[str, Any]:
    doc = asdict(r)
    doc = {"schema_version": REPORT_SCHEMA_VERSION, **doc}
    if not include_timings:
        doc = _strip_timings(doc)
    return doc


def report_from_dict(doc: dict[str, Any]) -> MappingReport:
    """Inverse of report_to_dict.

    Raises:
        InputError: The document is not a mapping report
    """
    try:
        header = parser = tdg = None
        if doc.get("header") is not None:
            header = HeaderSection(**doc["header"])
        if doc.get("parser") is not None:
            section = dict(doc["parser"])
            section["entries"] = tuple(
                StateTableEntry(
                    state=e["state"],
                    state_id=e["state_id"],
                    lookup=tuple(LookupValue(**v) for v in e["lookup"]),
                    next_state=e["next_state"],
                    next_state_id=e["next_state_id"],
                    extract=tuple(e["extract"]),
                )
                for e in section.get("entries", [])
            )
            parser = ParserSection(**section)
        if doc.get("tdg") is not None:
            section = dict(doc["tdg"])
            section["placement"] = tuple(
                TablePlacement(
                    table=p["table"],
                    pipeline=p["pipeline"],
                    level=p["level"],
                    stages=tuple(p["stages"]),
                    modes=tuple(p["modes"]),
                    entries=tuple(p["entries"]),
                )
                for p in section.get("placement", [])
            )
            section["stages"] = tuple(
                StageUsage(**{**s, "tables": tuple(s["tables"])}) for s in section.get("stages", [])
            )
            tdg = TdgSection(**section)
        return MappingReport(
            program_name=doc["program_name"],
            verdict=Verdict(**doc["verdict"]),
            provenance=Provenance(**doc["provenance"]),
            header=header,
            parser=parser,
            tdg=tdg,
            diagnostics=tuple(doc.get("diagnostics", [])),
        )
    except (KeyError, TypeError) as e:
        raise InputError(f"not a mapping report: {e}") from e


def report_from_json(text: str) -> MappingReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed report: {e.msg}", offset=e.pos) from e
    return report_from_dict(doc)


# ---------------------------------------------------------------------------
# Text tables
# ---------------------------------------------------------------------------

def _grid(title: str, headers: list[str], rows: list[list[Any]]) -> str:
    cells = [[str(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(headers)]
    rule = "+-" + "-+-".join("-" * w for w in widths) + "-+"
    lines = [title, rule, "| " + " | ".join(h.ljust(w) for h, w in zip(headers, widths)) + " |", rule]
    for row in cells:
        lines.append("| " + " | ".join(c.rjust(w) if c.replace(".", "").isdigit() else c.ljust(w)
                                       for c, w in zip(row, widths)) + " |")
    lines.append(rule)
    return "\n".join(lines)


def _ms(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_table(r: MappingReport, include_timings: bool = False) -> str:
    def elapsed(section) -> str:
        return _ms(section.elapsed_ms if include_timings else None)

    blocks = [f"Program: {r.program_name}", f"Verdict: {_verdict_line(r.verdict)}"]
    if r.header is not None:
        h = r.header
        blocks.append(_grid(
            "PHV mapping",
            ["Program", "# Fields", "Total PHV Bitwidth", "Allocated PHV Bitwidth", "Waste (%)", "Ex. time (ms)"],
            [[r.program_name, h.field_count, h.used_bits, h.allocated_bits, f"{h.waste_percent:.2f}", elapsed(h)]],
        ))
    if r.parser is not None:
        p = r.parser
        blocks.append(_grid(
            "Parse graph mapping",
            ["Program", "# States", "# Edges", "Req. TCAM Entries", "TCAM Usage (%)", "Ex. time (ms)"],
            [[r.program_name, p.states, p.edges, p.entry_count, f"{p.capacity_percent:.2f}", elapsed(p)]],
        ))
    if r.tdg is not None:
        t = r.tdg
        blocks.append(_grid(
            "TDG mapping",
            ["Program", "# Nodes", "# Edges", "# Stages", "Latency (cycles)",
             "# TCAM Block Usage", "# SRAM Block Usage", "Ex. time (ms)"],
            [[r.program_name, t.nodes, t.edges, t.stages_used, t.latency_cycles,
              t.tcam_blocks, t.sram_blocks, elapsed(t)]],
        ))
        if t.stages:
            blocks.append(_grid(
                "Per-stage usage",
                ["Stage", "TCAM", "SRAM match", "SRAM action", "SRAM stateful", "VLIW", "Tables"],
                [[s.stage, s.tcam_blocks, s.sram_match_blocks, s.sram_action_blocks,
                  s.sram_stateful_blocks, s.vliw_slots, ", ".join(s.tables)] for s in t.stages],
            ))
    if r.diagnostics:
        blocks.append("Diagnostics:\n" + "\n".join(f"  {d}" for d in r.diagnostics))
    return "\n\n".join(blocks) + "\n"


def _verdict_line(v: Verdict) -> str:
    if v.accepted:
        return ACCEPTED
    return f"{REJECTED} in {v.phase} phase: {v.resource} at '{v.element}'" + (f" ({v.reason})" if v.reason else "")


def render_report(r: MappingReport, format: str = "json", include_timings: bool = False) -> str:
    """Render a report as stable-ordered JSON or as benchmark-style text tables."""
    if format == "json":
        return json.dumps(report_to_dict(r, include_timings), indent=2, sort_keys=True) + "\n"
    if format == "table":
        return render_table(r, include_timings)
    raise ValueError(f"unknown report format '{format}', expected one of {REPORT_FORMATS}")

"""End-to-end compilation: IR + hardware spec in, MappingReport out."""
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

from config import (
    ACTION_MODE,
    LATENCY_COSTS,
    PACKING_FACTOR,
    PHV_REPACK,
    POINTER_OVERHEAD_BITS,
    STATEFUL_POLICY,
    TABLE_ACTION_MODES,
    TOOL_VERSION,
)
from core.errors import InputError, MappingRejected
from core.header_mapper import HeaderMapping, map_headers, waste_percent
from core.hsl import HardwareSpec, load_hsl, spec_digest
from core.ir_model import IrProgram, build_parse_graph, parse_ir
from core.parser_mapper import ParserMapping, map_parser
from core.report import (
    ACCEPTED,
    REJECTED,
    HeaderSection,
    MappingReport,
    ParserSection,
    Provenance,
    StageUsage,
    TablePlacement,
    TdgSection,
    Verdict,
)
from core.tdg_mapper import (
    ActionMode,
    LatencyCosts,
    PlacementOptions,
    TdgMapping,
    map_tdg,
    parse_table_action_modes,
    summarize,
)
from utils.logger import setup_logger

logger = setup_logger()


@dataclass(frozen=True)
class CompileOptions:
    """Resolved mapping configuration, embedded in every report."""
    packing_factor: int = PACKING_FACTOR
    action_mode: ActionMode = field(default_factory=lambda: ActionMode.parse(ACTION_MODE))
    latency_costs: LatencyCosts = field(default_factory=lambda: LatencyCosts.parse(LATENCY_COSTS))
    stateful_policy: str = STATEFUL_POLICY
    pointer_overhead_bits: int = POINTER_OVERHEAD_BITS
    table_action_modes: dict[str, ActionMode] = field(
        default_factory=lambda: parse_table_action_modes(TABLE_ACTION_MODES))
    phv_repack: bool = PHV_REPACK

    def placement(self) -> PlacementOptions:
        return PlacementOptions(
            packing_factor=self.packing_factor,
            action_mode=self.action_mode,
            pointer_overhead_bits=self.pointer_overhead_bits,
            stateful_policy=self.stateful_policy,
            table_action_modes=self.table_action_modes,
        )

    def to_config(self, spec: HardwareSpec) -> dict:
        config = asdict(self)
        config["packing_factor"] = self.placement().resolved_packing(spec)
        config["action_mode"] = str(self.action_mode)
        config["latency_costs"] = str(self.latency_costs)
        config["table_action_modes"] = {t: str(m) for t, m in sorted(self.table_action_modes.items())}
        return config


def _elapsed_ms(started: float) -> float:
    return round((time.perf_counter() - started) * 1000.0, 3)


def _header_section(m: HeaderMapping, spec: HardwareSpec, elapsed: float) -> HeaderSection:
    return HeaderSection(
        field_count=m.field_count,
        used_bits=m.used_bits,
        allocated_bits=m.allocated_bits,
        waste_percent=round(waste_percent(m), 2),
        phv_bits=spec.phv.total_bits,
        containers_used={str(w): n for w, n in m.containers_used().items()},
        elapsed_ms=elapsed,
    )


def _parser_section(m: ParserMapping, elapsed: float) -> ParserSection:
    return ParserSection(
        states=m.states,
        edges=m.edges,
        clusters=len(m.cluster_graph.clusters),
        entry_count=m.verdict.entry_count,
        capacity=m.verdict.capacity,
        capacity_percent=round(m.verdict.utilization_percent, 2),
        entries=m.state_table.entries,
        elapsed_ms=elapsed,
    )


def _tdg_section(m: TdgMapping, elapsed: float) -> TdgSection:
    summary = summarize(m)
    pipeline_of = {t.name: d.pipeline for d in m.dags for t in d.tables}
    placement = tuple(
        TablePlacement(
            table=name,
            pipeline=pipeline_of[name],
            level=m.levels.get(name, 0),
            stages=tuple(p.stage for p in portions),
            modes=tuple(p.mode for p in portions),
            entries=tuple(p.entries for p in portions),
        )
        for name, portions in m.placement.items()
    )
    stages = tuple(
        StageUsage(
            stage=row.stage,
            tables=row.tables,
            tcam_blocks=row.footprint.tcam_blocks,
            sram_match_blocks=row.footprint.sram_match_blocks,
            sram_action_blocks=row.footprint.sram_action_blocks,
            sram_stateful_blocks=row.footprint.sram_stateful_blocks,
            vliw_slots=row.footprint.vliw_slots,
            tcam_crossbar_bits=row.footprint.tcam_crossbar_bits,
            sram_crossbar_bits=row.footprint.sram_crossbar_bits,
            action_crossbar_bits=row.footprint.action_crossbar_bits,
            memory_ports=row.footprint.memory_ports,
        )
        for row in summary.rows
    )
    return TdgSection(
        nodes=m.table_count,
        edges=m.edge_count,
        stages_used=m.stages_used,
        stages_ingress=m.stages_used_by("ingress"),
        stages_egress=m.stages_used_by("egress"),
        latency_cycles=m.latency_cycles,
        latency_ingress=m.latency_by_pipeline.get("ingress", 0),
        latency_egress=m.latency_by_pipeline.get("egress", 0),
        tcam_blocks=summary.totals.tcam_blocks,
        sram_blocks=summary.totals.sram_blocks,
        placement=placement,
        stages=stages,
        elapsed_ms=elapsed,
    )


def compile_program(
    program: IrProgram,
    spec: HardwareSpec,
    options: Optional[CompileOptions] = None,
) -> MappingReport:
    """Run header, parser and TDG mapping in order; the first rejection short-circuits.

    Returns:
        Accepted report with all three sections, or a rejected report with
        the sections that completed before the failing phase
    """
    options = options or CompileOptions()
    provenance = Provenance(
        tool_version=TOOL_VERSION,
        config=options.to_config(spec),
        hardware_spec=spec.name,
        hardware_digest=spec_digest(spec),
    )
    diagnostics = tuple(str(d) for d in program.diagnostics + spec.diagnostics)
    sections: dict = {}

    try:
        started = time.perf_counter()
        header = map_headers(list(program.fields), spec.phv, repack=options.phv_repack)
        sections["header"] = _header_section(header, spec, _elapsed_ms(started))

        started = time.perf_counter()
        parser = map_parser(build_parse_graph(program), spec.parser)
        sections["parser"] = _parser_section(parser, _elapsed_ms(started))

        started = time.perf_counter()
        tdg = map_tdg(program, spec, options.placement(), options.latency_costs)
        sections["tdg"] = _tdg_section(tdg, _elapsed_ms(started))
    except MappingRejected as e:
        logger.warning(f"Program '{program.name}' {e}")
        return MappingReport(
            program_name=program.name,
            verdict=Verdict(REJECTED, e.phase, e.resource, e.element, e.detail or None),
            provenance=provenance,
            diagnostics=diagnostics,
            **sections,
        )

    logger.info(f"Program '{program.name}' accepted")
    return MappingReport(
        program_name=program.name,
        verdict=Verdict(ACCEPTED),
        provenance=provenance,
        diagnostics=diagnostics,
        **sections,
    )


def compile(
    ir_path: Union[str, Path],
    hw_path: Union[str, Path],
    options: Optional[CompileOptions] = None,
) -> MappingReport:
    """Compile an IR file against a hardware specification file.

    Raises:
        InputError: Either file is unreadable or invalid (no report is produced)
    """
    ir_path = Path(ir_path)
    spec = load_hsl(hw_path)
    try:
        text = ir_path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read IR file '{ir_path}': {e}") from e
    program = parse_ir(text, name=None)
    return compile_program(program, spec, options)

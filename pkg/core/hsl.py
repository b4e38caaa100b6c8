"""Hardware specification language (HSL) for V1Model RMT switches.

One JSON document describes one switch: a ``parser`` section, a ``phv``
section, a ``stage`` section (every match-action stage is identical) and the
top-level ``num_stages`` and ``packing_factor``. Widths are in bits, depths
in entries. See ``schemas/hsl.schema.json`` for the full schema.
"""
import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Union

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from config import DEFAULT_HSL_PATH, SCHEMAS_DIR, STATE_ID_BITS
from core.errors import Diagnostic, HslValidationError, InputError
from utils.logger import setup_logger

logger = setup_logger()

HSL_VERSION = "1.0"
SHARED = "shared"


@dataclass(frozen=True)
class ParserSpec:
    lookahead_bits: int
    max_headers_per_cycle: int
    tcam_entries: int
    tcam_entry_width: int
    lookup_fields_per_cycle: int
    lookup_field_width: int
    extraction_width_per_cycle: int
    state_id_bits: int = STATE_ID_BITS

    @property
    def cycle_bits(self) -> int:
        """Header bits one parser cycle can identify and extract."""
        return min(self.lookahead_bits, self.extraction_width_per_cycle)


@dataclass(frozen=True)
class ContainerClass:
    width: int
    count: int


@dataclass(frozen=True)
class PhvSpec:
    container_classes: tuple[ContainerClass, ...]

    @property
    def total_bits(self) -> int:
        return sum(c.width * c.count for c in self.container_classes)

    def inventory(self) -> dict[int, int]:
        return {c.width: c.count for c in self.container_classes}


@dataclass(frozen=True)
class SramPartitions:
    """Fixed split of a stage's SRAM blocks between memory roles."""
    match: int
    action: int
    stateful: int

    @property
    def total(self) -> int:
        return self.match + self.action + self.stateful


@dataclass(frozen=True)
class StageSpec:
    tcam_blocks: int
    tcam_width: int
    tcam_depth: int
    sram_blocks: int
    sram_width: int
    sram_depth: int
    match_crossbar_tcam: int
    match_crossbar_sram: int
    action_crossbar: int
    vliw_slots: int
    hash_ways: int
    memory_ports: int
    port_width: int
    partitions: Optional[SramPartitions] = None  # None means "shared"
    extern_units: dict[str, int] = field(default_factory=dict)

    @property
    def shared_sram(self) -> bool:
        return self.partitions is None


@dataclass(frozen=True)
class HardwareSpec:
    parser: ParserSpec
    phv: PhvSpec
    stage: StageSpec
    num_stages: int
    packing_factor: int = 1
    name: str = "v1model"
    source: dict[str, Any] = field(default_factory=dict, compare=False)
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)


PARSER_KEYS = (
    "lookahead_bits", "max_headers_per_cycle", "tcam_entries", "tcam_entry_width",
    "lookup_fields_per_cycle", "lookup_field_width", "extraction_width_per_cycle",
)
STAGE_KEYS = (
    "tcam_blocks", "tcam_width", "tcam_depth", "sram_blocks", "sram_width", "sram_depth",
    "match_crossbar_tcam", "match_crossbar_sram", "action_crossbar", "vliw_slots",
    "hash_ways", "memory_ports", "port_width",
)
OPTIONAL_PARSER_KEYS = ("state_id_bits",)
OPTIONAL_STAGE_KEYS = ("partitions", "extern_units")
TOP_LEVEL_KEYS = ("hsl_version", "name", "num_stages", "packing_factor", "parser", "phv", "stage", "source")


# Range violations are reported by validate_spec as diagnostics; a wrong
# hsl_version only warns.
DEFERRED_SCHEMA_CHECKS = ("minimum", "minItems", "const")


@lru_cache(maxsize=None)
def _schema_validator() -> Draft202012Validator:
    path = SCHEMAS_DIR / "hsl.schema.json"
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot load HSL schema '{path}': {e}") from e
    return Draft202012Validator(schema)


def _dotted(path) -> str:
    return ".".join(f"[{p}]" if isinstance(p, int) else str(p) for p in path).replace(".[", "[")


def _check_schema(doc: dict) -> None:
    """Raise InputError naming the first structural schema violation."""
    errors = [e for e in _schema_validator().iter_errors(doc) if e.validator not in DEFERRED_SCHEMA_CHECKS]
    error = best_match(errors)
    if error is None:
        return
    if error.validator == "required":
        missing = [key for key in error.validator_value if key not in error.instance]
        where = _dotted([*error.absolute_path, missing[0]])
        raise InputError(f"HSL is missing mandatory field '{where}'")
    where = _dotted(error.absolute_path) or "<document>"
    raise InputError(f"HSL field '{where}' is invalid: {error.message}")


def _unknown(section: dict, allowed, where: str) -> list[Diagnostic]:
    return [
        Diagnostic("warning", "hsl.unknown_key", f"unknown key '{where}{key}' ignored")
        for key in sorted(set(section) - set(allowed))
    ]


def parse_hsl(document: str) -> HardwareSpec:
    """Parse and validate an HSL document.

    Args:
        document: JSON text of the hardware specification

    Returns:
        HardwareSpec with defaults filled in and non-fatal diagnostics attached

    Raises:
        InputError: Malformed JSON, or a document that breaks the structure
            of ``schemas/hsl.schema.json`` (missing field, wrong type)
        HslValidationError: The parsed spec violates an invariant
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed HSL document: {e.msg}", offset=e.pos) from e
    if not isinstance(doc, dict):
        raise InputError("HSL document must be a JSON object")
    _check_schema(doc)

    diagnostics = _unknown(doc, TOP_LEVEL_KEYS, "")
    version = doc.get("hsl_version")
    if version is None:
        diagnostics.append(Diagnostic("warning", "hsl.version", "no 'hsl_version'; assuming " + HSL_VERSION))
    elif str(version) != HSL_VERSION:
        diagnostics.append(Diagnostic("warning", "hsl.version", f"hsl_version {version} read as {HSL_VERSION}"))

    parser_doc = doc["parser"]
    diagnostics += _unknown(parser_doc, PARSER_KEYS + OPTIONAL_PARSER_KEYS, "parser.")
    parser = ParserSpec(
        **{key: parser_doc[key] for key in PARSER_KEYS},
        state_id_bits=parser_doc.get("state_id_bits", STATE_ID_BITS),
    )

    phv_doc = doc["phv"]
    diagnostics += _unknown(phv_doc, ("container_classes",), "phv.")
    classes = tuple(ContainerClass(width=c["width"], count=c["count"]) for c in phv_doc["container_classes"])
    phv = PhvSpec(tuple(sorted(classes, key=lambda c: c.width)))

    stage_doc = doc["stage"]
    diagnostics += _unknown(stage_doc, STAGE_KEYS + OPTIONAL_STAGE_KEYS, "stage.")
    raw_partitions = stage_doc.get("partitions", SHARED)
    partitions = None if raw_partitions == SHARED else SramPartitions(
        raw_partitions["match"], raw_partitions["action"], raw_partitions["stateful"])
    stage = StageSpec(
        **{key: stage_doc[key] for key in STAGE_KEYS},
        partitions=partitions,
        extern_units=dict(stage_doc.get("extern_units") or {}),
    )

    spec = HardwareSpec(
        parser=parser,
        phv=phv,
        stage=stage,
        num_stages=doc["num_stages"],
        packing_factor=doc.get("packing_factor", 1),
        name=doc.get("name", "v1model"),
        source=dict(doc.get("source", {})),
    )
    diagnostics += validate_spec(spec)
    for diagnostic in diagnostics:
        if diagnostic.severity != "error":
            logger.warning(str(diagnostic))
    if any(d.severity == "error" for d in diagnostics):
        raise HslValidationError(diagnostics)

    logger.info(f"Parsed HSL '{spec.name}': {spec.num_stages} stages, "
                f"PHV {spec.phv.total_bits} bits, parser TCAM "
                f"{spec.parser.tcam_entries}x{spec.parser.tcam_entry_width}b")
    return replace(spec, diagnostics=tuple(diagnostics))


def validate_spec(spec: HardwareSpec) -> list[Diagnostic]:
    """Check every HardwareSpec invariant.

    Returns:
        Diagnostics; errors for invariant violations, warnings for suspicious
        but legal settings. Empty when the hardware spec is fully consistent.
    """
    diagnostics: list[Diagnostic] = []

    def error(code: str, message: str) -> None:
        diagnostics.append(Diagnostic("error", code, message))

    for key in PARSER_KEYS + OPTIONAL_PARSER_KEYS:
        if getattr(spec.parser, key) < 1:
            error("hsl.parser_range", f"parser.{key} must be >= 1")

    widths = [c.width for c in spec.phv.container_classes]
    if not widths:
        error("hsl.phv_empty", "phv declares no container classes")
    if len(set(widths)) != len(widths):
        error("hsl.phv_duplicate", "phv container widths must be distinct")
    for c in spec.phv.container_classes:
        if c.width < 1 or c.count < 0:
            error("hsl.phv_range", f"phv class {c.width}b x {c.count} is out of range")

    stage = spec.stage
    for key in STAGE_KEYS:
        if getattr(stage, key) < 0:
            error("hsl.stage_range", f"stage.{key} must be >= 0")
    for key in ("tcam_width", "tcam_depth", "sram_width", "sram_depth", "hash_ways"):
        if getattr(stage, key) < 1:
            error("hsl.stage_range", f"stage.{key} must be >= 1")
    if stage.partitions is not None:
        parts = stage.partitions
        if min(parts.match, parts.action, parts.stateful) < 0:
            error("hsl.partition_range", "stage.partitions entries must be >= 0")
        if parts.total > stage.sram_blocks:
            error("hsl.partition_overflow",
                  f"S^M+S^A+S^S = {parts.total} exceeds sram_blocks = {stage.sram_blocks}")
    for kind, count in stage.extern_units.items():
        if count < 0:
            error("hsl.extern_units", f"stage.extern_units.{kind} must be >= 0")

    if stage.tcam_blocks > 0 and stage.match_crossbar_tcam == 0:
        diagnostics.append(Diagnostic("warning", "hsl.crossbar_width",
                                      "TCAM blocks present but match_crossbar_tcam is 0"))
    if stage.sram_blocks > 0 and stage.match_crossbar_sram == 0:
        diagnostics.append(Diagnostic("warning", "hsl.crossbar_width",
                                      "SRAM blocks present but match_crossbar_sram is 0"))

    if spec.num_stages < 1:
        error("hsl.num_stages", f"num_stages must be >= 1, got {spec.num_stages}")
    if spec.packing_factor < 1:
        error("hsl.packing_factor", f"packing_factor must be >= 1, got {spec.packing_factor}")
    return diagnostics


def hsl_to_dict(spec: HardwareSpec) -> dict[str, Any]:
    """Canonical dictionary form of a spec (inverse of parse_hsl)."""
    stage = {key: getattr(spec.stage, key) for key in STAGE_KEYS}
    if spec.stage.partitions is None:
        stage["partitions"] = SHARED
    else:
        stage["partitions"] = {
            "match": spec.stage.partitions.match,
            "action": spec.stage.partitions.action,
            "stateful": spec.stage.partitions.stateful,
        }
    stage["extern_units"] = dict(sorted(spec.stage.extern_units.items()))
    doc = {
        "hsl_version": HSL_VERSION,
        "name": spec.name,
        "num_stages": spec.num_stages,
        "packing_factor": spec.packing_factor,
        "parser": {key: getattr(spec.parser, key) for key in PARSER_KEYS + OPTIONAL_PARSER_KEYS},
        "phv": {"container_classes": [{"width": c.width, "count": c.count}
                                      for c in spec.phv.container_classes]},
        "stage": stage,
    }
    if spec.source:
        doc["source"] = spec.source
    return doc


def serialize_hsl(spec: HardwareSpec) -> str:
    return json.dumps(hsl_to_dict(spec), indent=2, sort_keys=True) + "\n"


def spec_digest(spec: HardwareSpec) -> str:
    """sha256 of the canonical serialization, without informational notes."""
    doc = hsl_to_dict(spec)
    doc.pop("source", None)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_hsl(path: Union[str, Path]) -> HardwareSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read hardware specification '{path}': {e}") from e
    return parse_hsl(text)


def default_spec() -> HardwareSpec:
    """Return the bundled benchmark profile."""
    return load_hsl(DEFAULT_HSL_PATH)

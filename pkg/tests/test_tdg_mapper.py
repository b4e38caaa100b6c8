"""Dependency reduction, levels, memory sizing, placement and latency."""
from dataclasses import replace
from itertools import product

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from core.errors import MappingRejected
from core.ir_model import DependencyKind, ExternDecl, Tdg, stateful_groups
from core.tdg_mapper import (
    SRAM,
    TCAM,
    ActionMode,
    LatencyCosts,
    MemoryFootprint,
    PlacementOptions,
    Portion,
    StrictDag,
    TdgMapping,
    align_stateful_levels,
    apply_stateful_policy,
    assign_levels,
    brute_force_place,
    check_mapping,
    compute_latency,
    map_tdg,
    parse_table_action_modes,
    place_tables,
    reduce_dependencies,
    sram_blocks_needed,
    stateful_blocks_needed,
    summarize,
    tcam_blocks_needed,
)
from tests.helpers import make_table, spec_with
from utils.logger import setup_logger

logger = setup_logger()

MATCH = DependencyKind.MATCH
ACTION = DependencyKind.ACTION
REVERSE = DependencyKind.REVERSE_MATCH
SUCCESSOR = DependencyKind.SUCCESSOR
KINDS = [MATCH, ACTION, REVERSE, SUCCESSOR]
OPTS = PlacementOptions()


def _dag(tables, edges=None, groups=(), pipeline="ingress") -> StrictDag:
    return StrictDag(pipeline=pipeline, tables=tuple(tables), edges=dict(edges or {}), stateful_groups=tuple(groups))


def _place(tables, edges=None, spec=None, opts=OPTS, externs=None, groups=()):
    dag = _dag(tables, edges, groups)
    spec = spec or spec_with()
    levels = assign_levels(dag)
    if groups:
        levels = align_stateful_levels(levels)
    return place_tables(levels, spec, opts, externs)


def _manual(stages: dict[str, tuple[int, ...]], edges) -> TdgMapping:
    tables = [make_table(name, i) for i, name in enumerate(stages)]
    placement = {
        name: tuple(Portion(name, s, SRAM, 1, MemoryFootprint()) for s in where)
        for name, where in stages.items()
    }
    return TdgMapping(placement=placement, per_stage={}, dags=(_dag(tables, edges),), levels={}, num_stages=8)


# ---------------------------------------------------------------------------
# Options
# ---------------------------------------------------------------------------

def test_action_mode_parse():
    assert ActionMode.parse("per-entry") == ActionMode("per-entry")
    assert ActionMode.parse("fixed:4") == ActionMode("fixed", 4)
    assert ActionMode.parse("fixed(2)") == ActionMode("fixed", 2)
    assert str(ActionMode.parse("fixed:4")) == "fixed:4"
    assert ActionMode.parse("fixed:4").entries(1000) == 4
    assert ActionMode().entries(1000) == 1000


@pytest.mark.parametrize("text", ["fixed:0", "fixed:x", "sometimes"])
def test_action_mode_rejects(text):
    with pytest.raises(ValueError):
        ActionMode.parse(text)


def test_table_action_modes_parse():
    modes = parse_table_action_modes(" acl=fixed:2, ipv4_fib=per-entry ,")
    assert modes == {"acl": ActionMode("fixed", 2), "ipv4_fib": ActionMode("per-entry")}
    assert parse_table_action_modes("") == {}
    opts = PlacementOptions(action_mode=ActionMode("fixed", 1), table_action_modes=modes)
    assert opts.action_mode_for("acl") == ActionMode("fixed", 2)
    assert opts.action_mode_for("other") == ActionMode("fixed", 1)


@pytest.mark.parametrize("text", ["acl", "=fixed:2", "acl=sometimes"])
def test_table_action_modes_rejects(text):
    with pytest.raises(ValueError):
        parse_table_action_modes(text)


def test_latency_costs_parse():
    costs = LatencyCosts.parse("1, 2, 3, 4")
    assert (costs.match, costs.action, costs.other, costs.base) == (1, 2, 3, 4)
    assert str(LatencyCosts()) == "12,3,1,12"
    assert costs.cost(REVERSE) == costs.cost(SUCCESSOR) == 3


@pytest.mark.parametrize("text", ["1,2", "a,b,c,d", "-1,0,0,0"])
def test_latency_costs_rejects(text):
    with pytest.raises(ValueError):
        LatencyCosts.parse(text)


def test_placement_options_validation():
    with pytest.raises(ValueError):
        PlacementOptions(stateful_policy="share")
    with pytest.raises(ValueError):
        PlacementOptions(packing_factor=-1)
    assert PlacementOptions(packing_factor=3).resolved_packing(spec_with()) == 3
    assert PlacementOptions().resolved_packing(spec_with()) == 1


# ---------------------------------------------------------------------------
# Dependency reduction and levels
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kinds, kept", [
    ({MATCH, SUCCESSOR}, MATCH),
    ({SUCCESSOR}, SUCCESSOR),
    ({ACTION, REVERSE}, ACTION),
])
def test_reduce_keeps_strictest(kinds, kept):
    tables = (make_table("a", 0), make_table("b", 1))
    tdg = Tdg("ingress", tables, {("a", "b"): frozenset(kinds)}, {}, ())
    assert reduce_dependencies(tdg).edges == {("a", "b"): kept}


def test_levels_chain():
    tables = [make_table(n, i) for i, n in enumerate("abc")]
    levels = assign_levels(_dag(tables, {("a", "b"): MATCH, ("b", "c"): ACTION}))
    assert levels.level == {"a": 0, "b": 1, "c": 2}


def test_levels_successor_shares_level():
    tables = [make_table("a", 0), make_table("b", 1)]
    assert assign_levels(_dag(tables, {("a", "b"): SUCCESSOR})).level == {"a": 0, "b": 0}


def test_levels_diamond():
    tables = [make_table(n, i) for i, n in enumerate("abcd")]
    edges = {("a", "b"): MATCH, ("a", "c"): MATCH, ("b", "d"): REVERSE, ("c", "d"): MATCH}
    assert assign_levels(_dag(tables, edges)).level == {"a": 0, "b": 1, "c": 1, "d": 2}


def test_by_level_groups_in_tdg_order():
    tables = [make_table(n, i) for i, n in enumerate("abc")]
    levels = assign_levels(_dag(tables, {("a", "c"): MATCH}))
    assert levels.by_level() == {0: ["a", "b"], 1: ["c"]}


def test_serialize_policy_orders_group():
    tables = [make_table("a", 0, externs=["r"]), make_table("b", 1, externs=["r"])]
    dag = apply_stateful_policy(_dag(tables, groups=[frozenset("ab")]), "serialize")
    assert dag.edges == {("a", "b"): ACTION}
    assert assign_levels(dag).level == {"a": 0, "b": 1}


def test_colocate_policy_keeps_edges():
    tables = [make_table("a", 0, externs=["r"]), make_table("b", 1, externs=["r"])]
    dag = _dag(tables, groups=[frozenset("ab")])
    assert apply_stateful_policy(dag, "colocate") is dag


def test_align_raises_group_to_common_level():
    tables = [make_table("a", 0), make_table("s1", 1, externs=["r"]), make_table("s2", 2, externs=["r"]),
              make_table("z", 3)]
    dag = _dag(tables, {("a", "s2"): MATCH, ("s1", "z"): MATCH}, groups=[frozenset({"s1", "s2"})])
    aligned = align_stateful_levels(assign_levels(dag))
    assert aligned.level == {"a": 0, "s1": 1, "s2": 1, "z": 2}


def test_align_rejects_dependent_group_members():
    tables = [make_table("a", 0, externs=["r"]), make_table("b", 1, externs=["r"])]
    dag = _dag(tables, {("a", "b"): MATCH}, groups=[frozenset("ab")])
    with pytest.raises(MappingRejected) as info:
        align_stateful_levels(assign_levels(dag))
    assert info.value.resource == "stateful co-location"
    assert info.value.element == "b"


def _oracle_levels(dag: StrictDag) -> dict[str, int]:
    g = nx.DiGraph()
    g.add_nodes_from(t.name for t in dag.tables)
    for (u, v), kind in dag.edges.items():
        g.add_edge(u, v, w=1 if kind.separates_stages else 0)
    return {
        n: nx.dag_longest_path_length(g.subgraph(nx.ancestors(g, n) | {n}), weight="w", default_weight=0)
        for n in g.nodes
    }


@st.composite
def random_dags(draw, max_nodes=12):
    n = draw(st.integers(min_value=1, max_value=max_nodes))
    tables = [make_table(f"t{i}", i) for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    edges = {(f"t{i}", f"t{j}"): draw(st.sampled_from(KINDS)) for i, j in chosen}
    return _dag(tables, edges)


@settings(max_examples=1000, deadline=None)
@given(random_dags())
def test_levels_match_longest_strict_path(dag):
    levels = assign_levels(dag).level
    assert levels == _oracle_levels(dag)
    for (u, v), kind in dag.edges.items():
        assert levels[v] >= levels[u] + (1 if kind.separates_stages else 0)


# ---------------------------------------------------------------------------
# Memory sizing
# ---------------------------------------------------------------------------

def test_tcam_blocks_formula(benchmark_spec):
    s = benchmark_spec.stage
    assert tcam_blocks_needed(make_table("t", 0, key_width=48, max_entries=4096), s) == 4
    assert tcam_blocks_needed(make_table("t", 0, key_width=40, max_entries=2048), s) == 1
    assert tcam_blocks_needed(make_table("t", 0, key_width=0, max_entries=2048), s) == 0


def test_sram_word_packing():
    s = spec_with(sram_depth=1000, hash_ways=1).stage
    table = make_table("t", 0, key_width=48, max_entries=4500)
    footprint = sram_blocks_needed(table, s, p_f=2, action_mode=ActionMode())
    assert footprint.sram_match_blocks == 4
    assert footprint.sram_action_blocks == 0


def test_sram_blocks_rounded_to_hash_ways(benchmark_spec):
    table = make_table("t", 0, key_width=48, max_entries=4500)
    footprint = sram_blocks_needed(table, benchmark_spec.stage, p_f=1, action_mode=ActionMode())
    # one 64b entry per 112b word: 1024 per block
    assert footprint.sram_match_blocks == 8


def test_single_entry_gets_a_whole_unit():
    s = spec_with(hash_ways=1).stage
    footprint = sram_blocks_needed(make_table("t", 0, max_entries=1), s, p_f=2, action_mode=ActionMode())
    assert footprint.sram_match_blocks == 2


def test_action_mode_sizes_action_memory(benchmark_spec):
    s = benchmark_spec.stage
    table = make_table("t", 0, max_entries=4096, action_arg_width=32)
    assert sram_blocks_needed(table, s, 1, ActionMode()).sram_action_blocks == 2
    assert sram_blocks_needed(table, s, 1, ActionMode("fixed", 1)).sram_action_blocks == 1


def test_per_table_action_mode_override(benchmark_spec):
    tables = [make_table(name, i, max_entries=4096, action_arg_width=32) for i, name in enumerate(("acl", "fib"))]
    opts = PlacementOptions(action_mode=ActionMode("fixed", 1), table_action_modes={"fib": ActionMode()})
    m = _place(tables, spec=benchmark_spec, opts=opts)
    assert m.placement["acl"][0].footprint.sram_action_blocks == 1
    assert m.placement["fib"][0].footprint.sram_action_blocks == 2
    assert check_mapping(m, benchmark_spec, opts) == []
    uniform = _place(tables, spec=benchmark_spec, opts=replace(opts, table_action_modes={}))
    assert uniform.placement["fib"][0].footprint.sram_action_blocks == 1


def test_stateful_blocks(benchmark_spec):
    s = spec_with(sram_depth=1000).stage
    table = make_table("t", 0, externs=["r"])
    assert stateful_blocks_needed(table, ExternDecl("r", "register", 64, 32), s) == 1
    big = ExternDecl("r", "register", 4096, 64)
    assert stateful_blocks_needed(table, big, benchmark_spec.stage) == 3
    footprint = sram_blocks_needed(table, benchmark_spec.stage, 1, ActionMode(), externs={"r": big})
    assert footprint.sram_stateful_blocks == 3
    assert footprint.memory_ports == 1


def test_direct_counter_follows_table_size(benchmark_spec):
    table = make_table("t", 0, max_entries=2048, externs=["hits"])
    counter = ExternDecl("hits", "counter", 1, 64, bound_table="t")
    assert stateful_blocks_needed(table, counter, benchmark_spec.stage) == 2


def test_entry_wider_than_packing_unit(benchmark_spec):
    table = make_table("wide", 0, key_width=200)
    with pytest.raises(MappingRejected) as info:
        sram_blocks_needed(table, benchmark_spec.stage, 1, ActionMode())
    assert info.value.resource == "packing unit"
    assert sram_blocks_needed(table, benchmark_spec.stage, 2, ActionMode()).sram_match_blocks > 0


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------

def test_single_table_one_stage():
    m = _place([make_table("t", 0)])
    assert m.stages_used == 1
    assert m.stages_of("t") == (0,)


def test_match_dependency_separates_stages():
    m = _place([make_table("a", 0), make_table("b", 1)], {("a", "b"): MATCH})
    assert (m.stages_of("a"), m.stages_of("b")) == ((0,), (1,))


def test_successor_shares_stage():
    m = _place([make_table("a", 0), make_table("b", 1)], {("a", "b"): SUCCESSOR})
    assert m.stages_of("a") == m.stages_of("b") == (0,)


def test_level_overflow_continues_in_next_stage():
    spec = spec_with(sram_blocks=8, hash_ways=1, tcam_blocks=0)
    tables = [make_table(f"t{i}", i, max_entries=8192) for i in range(3)]
    m = _place(tables, spec=spec)
    assert [m.stages_of(f"t{i}") for i in range(3)] == [(0,), (0,), (1,)]
    assert m.stages_used == 2
    assert check_mapping(m, spec, OPTS) == []


def test_exact_table_spills_to_tcam():
    spec = spec_with(sram_blocks=8, hash_ways=1)
    tables = [make_table(f"t{i}", i, max_entries=8192) for i in range(3)]
    m = _place(tables, spec=spec)
    assert m.placement["t2"][0].stage == 0
    assert m.placement["t2"][0].mode == TCAM


def test_non_exact_tables_go_first():
    spec = spec_with(sram_blocks=0, tcam_blocks=1)
    tables = [make_table("e0", 0, max_entries=2048), make_table("x1", 1, exact=False, max_entries=2048)]
    m = _place(tables, spec=spec)
    assert m.stages_of("x1") == (0,)
    assert m.stages_of("e0") == (1,)


def test_oversized_table_is_split(benchmark_spec):
    table = make_table("wide", 0, key_width=40, exact=False, max_entries=40960)
    m = _place([table], spec=benchmark_spec)
    assert m.stages_of("wide") == (0, 1)
    assert [p.entries for p in m.placement["wide"]] == [32768, 8192]
    assert check_mapping(m, benchmark_spec, OPTS) == []


def test_pipeline_exhausted():
    spec = spec_with(num_stages=1)
    with pytest.raises(MappingRejected) as info:
        _place([make_table("a", 0), make_table("b", 1)], {("a", "b"): MATCH}, spec=spec)
    assert info.value.phase == "tdg"
    assert info.value.element == "b"
    assert info.value.resource == "stages"
    assert "pipeline exhausted" in str(info.value)


def test_vliw_pressure_moves_table():
    spec = spec_with(vliw_slots=4)
    tables = [make_table("a", 0, vliw_slots=3), make_table("b", 1, vliw_slots=2)]
    m = _place(tables, spec=spec)
    assert (m.stages_of("a"), m.stages_of("b")) == ((0,), (1,))


def test_stateful_group_colocated(benchmark_spec):
    register = ExternDecl("r", "register", 1024, 32)
    tables = [make_table("a", 0), make_table("s1", 1, externs=["r"]), make_table("s2", 2, externs=["r"])]
    m = _place(tables, {("a", "s2"): MATCH}, externs={"r": register}, groups=[frozenset({"s1", "s2"})])
    assert m.stages_of("s1") == m.stages_of("s2") == (1,)
    # the register is charged once in its stage
    assert m.per_stage[1].memory_ports == 1
    assert m.per_stage[1].sram_stateful_blocks == 1
    assert check_mapping(m, benchmark_spec, OPTS, {"r": register}) == []


def test_memory_ports_limit_stateful_tables():
    spec = spec_with(memory_ports=1)
    externs = {n: ExternDecl(n, "register", 64, 32) for n in ("r0", "r1")}
    tables = [make_table("a", 0, externs=["r0"]), make_table("b", 1, externs=["r1"])]
    m = _place(tables, spec=spec, externs=externs)
    assert (m.stages_of("a"), m.stages_of("b")) == ((0,), (1,))


def test_egress_shares_the_ledger():
    spec = spec_with(vliw_slots=2)
    ingress = _dag([make_table("i", 0, vliw_slots=2)])
    egress = _dag([make_table("e", 1, vliw_slots=2, pipeline="egress")], pipeline="egress")
    m = place_tables([assign_levels(ingress), assign_levels(egress)], spec, OPTS)
    assert (m.stages_of("i"), m.stages_of("e")) == ((0,), (1,))
    assert (m.stages_used_by("ingress"), m.stages_used_by("egress")) == (1, 2)


def test_check_mapping_reports_violations(benchmark_spec):
    tables = [make_table("a", 0), make_table("b", 1)]
    m = _manual({"a": (0,), "b": (0,)}, {("a", "b"): MATCH})
    m = replace(m, placement={
        n: tuple(replace(p, entries=t.max_entries) for p in m.placement[n]) for n, t in zip("ab", tables)
    })
    violations = check_mapping(m, spec_with(num_stages=8), OPTS)
    assert violations == ["match dependency a -> b needs a later stage (0 vs 0)"]


# ---------------------------------------------------------------------------
# Latency and summary
# ---------------------------------------------------------------------------

def test_latency_single_stage():
    assert compute_latency(_manual({"a": (0,)}, {})) == 12


def test_latency_match_boundaries():
    m = _manual({"a": (0,), "b": (1,), "c": (2,)}, {("a", "b"): MATCH, ("b", "c"): MATCH})
    assert compute_latency(m, LatencyCosts(match=12, base=12)) == 36


def test_latency_successor_boundaries():
    m = _manual({"a": (0,), "b": (1,), "c": (2,)}, {("a", "b"): SUCCESSOR, ("b", "c"): SUCCESSOR})
    assert compute_latency(m, LatencyCosts(other=1, base=12)) == 14


def test_summary_single_table():
    m = _place([make_table("t", 0, action_arg_width=16)])
    summary = summarize(m)
    assert len(summary.rows) == 1
    assert summary.rows[0].tables == ("t",)
    assert summary.totals == summary.rows[0].footprint


def test_summary_is_additive():
    tables = [make_table(f"t{i}", i, exact=i % 2 == 0, max_entries=4096) for i in range(4)]
    edges = {("t0", "t1"): MATCH, ("t1", "t2"): ACTION, ("t2", "t3"): MATCH}
    summary = summarize(_place(tables, edges))
    assert len(summary.rows) == 4
    assert summary.totals.tcam_blocks == sum(r.footprint.tcam_blocks for r in summary.rows)
    assert summary.totals.sram_blocks == sum(r.footprint.sram_blocks for r in summary.rows)


# ---------------------------------------------------------------------------
# Bundled programs
# ---------------------------------------------------------------------------

def test_l2l3_simple_mapping(load_program, benchmark_spec):
    m = map_tdg(load_program("l2l3_simple"), benchmark_spec)
    assert {n: m.levels[n] for n in ("ingress_port_mapping", "port_vlan_mapping", "validate_ipv4", "smac",
                                     "ipv6_fib", "fwd_result", "nexthop", "system_acl")} == {
        "ingress_port_mapping": 0, "port_vlan_mapping": 1, "validate_ipv4": 2, "smac": 3,
        "ipv6_fib": 4, "fwd_result": 5, "nexthop": 6, "system_acl": 8,
    }
    assert m.stages_used_by("ingress") == 10
    assert m.stages_used_by("egress") == 3
    assert m.latency_by_pipeline == {"ingress": 120, "egress": 36}
    assert m.latency_cycles == 156
    assert (m.table_count, m.edge_count) == (24, 38)


def test_qos_policers_share_a_stage(load_program, benchmark_spec):
    program = load_program("qos_modifier")
    m = map_tdg(program, benchmark_spec)
    assert m.stages_of("tcp_policer") == m.stages_of("udp_policer")
    assert m.levels["tcp_policer"] == m.levels["udp_policer"] == 3
    assert frozenset({"tcp_policer", "udp_policer"}) in m.colocated
    assert check_mapping(m, benchmark_spec, OPTS, program.externs) == []


def test_qos_serialized_policers(load_program, benchmark_spec):
    program = load_program("qos_modifier")
    m = map_tdg(program, benchmark_spec, PlacementOptions(stateful_policy="serialize"))
    assert m.stages_of("tcp_policer") != m.stages_of("udp_policer")
    assert m.colocated == ()
    assert check_mapping(m, benchmark_spec, PlacementOptions(stateful_policy="serialize"), program.externs) == []


def test_l2l3_complex_splits_large_lpm(load_program, benchmark_spec):
    program = load_program("l2l3_complex")
    m = map_tdg(program, benchmark_spec)
    assert len(m.stages_of("ipv6_fib")) >= 2
    assert {p.mode for p in m.placement["ipv6_fib"]} == {TCAM}
    assert check_mapping(m, benchmark_spec, OPTS, program.externs) == []


def test_anonymizer_levels(load_program, benchmark_spec):
    program = load_program("traffic_anonymizer")
    m = map_tdg(program, benchmark_spec)
    assert m.levels["anon_policy"] == 0
    assert m.levels["l4_salt_select"] == m.levels["ip_src_seed"] == 1
    assert [m.levels[f"ip_src_round{i}"] for i in range(1, 7)] == [2, 3, 4, 5, 6, 7]
    assert m.levels["ip_dst_round6"] == 7
    assert check_mapping(m, benchmark_spec, OPTS, program.externs) == []


@pytest.mark.parametrize("name", ["qos_modifier", "l2l3_simple", "l2l3_complex", "traffic_anonymizer"])
def test_more_stages_never_reject(load_program, benchmark_spec, name):
    program = load_program(name)
    base = map_tdg(program, benchmark_spec)
    wider = map_tdg(program, spec_with(benchmark_spec, num_stages=48))
    assert wider.stages_used <= base.stages_used
    assert map_tdg(program, benchmark_spec).placement == base.placement


# ---------------------------------------------------------------------------
# Random placements
# ---------------------------------------------------------------------------

REGISTERS = {n: ExternDecl(n, "register", 2048, 32) for n in ("r0", "r1")}


@st.composite
def random_programs(draw):
    n = draw(st.integers(min_value=1, max_value=10))
    tables = []
    for i in range(n):
        exact = draw(st.booleans())
        tables.append(make_table(
            f"t{i}", i,
            key_width=draw(st.integers(min_value=0 if exact else 8, max_value=160)),
            exact=exact,
            max_entries=draw(st.integers(min_value=1, max_value=40000)),
            vliw_slots=draw(st.integers(min_value=1, max_value=12)),
            action_arg_width=draw(st.sampled_from([0, 8, 32, 64, 96])),
            externs=draw(st.sampled_from([(), (), (), ("r0",), ("r1",)])),
        ))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=15)) if pairs else []
    edges = {(f"t{i}", f"t{j}"): draw(st.sampled_from(KINDS)) for i, j in chosen}
    dag = _dag(tables, edges, groups=stateful_groups(tables))
    stages = draw(st.integers(min_value=2, max_value=16))
    return dag, spec_with(num_stages=stages)


@settings(max_examples=500, deadline=None)
@given(random_programs())
def test_random_placements_are_valid(case):
    """Every accepted placement respects resource limits and dependency order."""
    dag, spec = case
    try:
        levels = align_stateful_levels(assign_levels(dag))
        m = place_tables(levels, spec, OPTS, REGISTERS)
    except MappingRejected:
        return
    assert check_mapping(m, spec, OPTS, REGISTERS) == []
    assert m.stages_used <= spec.num_stages


TINY_MENU = (
    {"key_width": 32, "max_entries": 1024, "vliw_slots": 4},
    {"key_width": 64, "max_entries": 60000, "vliw_slots": 12},
    {"key_width": 80, "max_entries": 8192, "exact": False, "vliw_slots": 20},
)
# Placement only distinguishes kinds that force a later stage from kinds that
# only forbid an earlier one.
PLACEMENT_CLASSES = (None, SUCCESSOR, MATCH)


def _tiny_instances(n: int, choices):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for sizes in product(range(len(TINY_MENU)), repeat=n):
        for kinds in product(choices, repeat=len(pairs)):
            tables = [make_table(f"t{i}", i, **TINY_MENU[s]) for i, s in enumerate(sizes)]
            edges = {(f"t{i}", f"t{j}"): kind for (i, j), kind in zip(pairs, kinds) if kind is not None}
            yield sizes, kinds, _dag(tables, edges)


def _heuristic(dag, spec):
    try:
        return place_tables(assign_levels(dag), spec, OPTS)
    except MappingRejected:
        return None


def test_tiny_instances_against_exhaustive_search():
    """Every program of up to three tables, every size and every dependency kind per pair."""
    spec = spec_with(num_stages=3)
    accepted = gap = total = 0
    by_class: dict[tuple, object] = {}
    for n in (1, 2, 3):
        for sizes, kinds, dag in _tiny_instances(n, [None] + KINDS):
            total += 1
            m = _heuristic(dag, spec)
            optimum = brute_force_place([dag], spec, OPTS)
            if m is None:
                gap += optimum is not None
            else:
                accepted += 1
                assert check_mapping(m, spec, OPTS) == []
                assert optimum is not None
            stages = None if m is None else tuple(m.stages_of(t.name) for t in dag.tables)
            key = (sizes, tuple(k is not None and k.separates_stages for k in kinds),
                   tuple(k is None for k in kinds))
            assert by_class.setdefault(key, stages) == stages
    assert total == 3 + 9 * 5 + 27 * 5 ** 3
    logger.info(f"Tiny instances (<= 3 tables): {total} total, {accepted} accepted, completeness gap {gap}")
    assert accepted > 0


def test_four_table_instances_against_exhaustive_search():
    """Every four-table program over the size menu, dependencies enumerated per placement class."""
    spec = spec_with(num_stages=3)
    accepted = gap = total = 0
    for _, _, dag in _tiny_instances(4, PLACEMENT_CLASSES):
        total += 1
        m = _heuristic(dag, spec)
        if m is None:
            gap += brute_force_place([dag], spec, OPTS) is not None
            continue
        accepted += 1
        assert check_mapping(m, spec, OPTS) == []
    assert total == 3 ** 4 * 3 ** 6
    logger.info(f"Tiny instances (4 tables): {total} total, {accepted} accepted, completeness gap {gap}")
    assert accepted > 0


def test_brute_force_guard():
    tables = [make_table(f"t{i}", i) for i in range(5)]
    with pytest.raises(ValueError):
        brute_force_place([_dag(tables)], spec_with(num_stages=3), OPTS)

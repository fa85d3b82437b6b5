"""Lexical function extraction, masking, and call-graph ordering."""

from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from checkmate import codegraph
from checkmate.errors import CycleRemains, NoFunctionsFound, ParseFailure
from conftest import EDGE_FILTER_C, EDGE_FILTER_H, EDGE_MAIN_C


def write_tree(tmp_path, files):
    for name, text in files.items():
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return tmp_path


@pytest.fixture
def edge_tree(tmp_path):
    return write_tree(
        tmp_path,
        {"main.c": EDGE_MAIN_C, "filter.c": EDGE_FILTER_C, "filter.h": EDGE_FILTER_H},
    )


# -- masking -------------------------------------------------------------------

def test_mask_blanks_comments_strings_preproc():
    text = '#include <x.h>\nint f(void) { /* {brace} */ return "}\\"{"[0]; } // }\n'
    masked = codegraph.mask_source(text)
    assert len(masked) == len(text)
    assert masked.count("\n") == text.count("\n")
    # only the two real braces survive
    assert masked.count("{") == 1
    assert masked.count("}") == 1


def test_mask_handles_char_literals_and_continuation():
    text = "#define X \\\n  '{'\nchar c = '{';\n"
    masked = codegraph.mask_source(text)
    assert "{" not in masked
    assert "char c =" in masked


@given(st.text(alphabet='abc{}/*"\'\\\n #', max_size=200))
def test_mask_only_blanks_in_place(text):
    masked = codegraph.mask_source(text)
    assert len(masked) == len(text)
    assert all(m in (c, " ") for m, c in zip(masked, text))


@given(st.text(alphabet='abc{}/*"\\\n #', max_size=200))
def test_mask_preserves_newlines_outside_char_literals(text):
    # a raw newline inside a char literal is the one masked case
    masked = codegraph.mask_source(text)
    assert [i for i, c in enumerate(text) if c == "\n"] == [
        i for i, c in enumerate(masked) if c == "\n"
    ]


# -- extraction ----------------------------------------------------------------

def test_extracts_all_edge_functions(edge_tree):
    records = codegraph.extract_functions(edge_tree)
    assert sorted(r.name for r in records) == [
        "edge_filter", "load_image", "main", "save_image",
    ]


def test_body_spans_round_trip(edge_tree):
    for rec in codegraph.extract_functions(edge_tree):
        text = rec.file.read_text()
        assert text[rec.start:rec.end] == rec.body
        assert rec.body.rstrip().endswith("}")
        assert rec.start_line == text.count("\n", 0, rec.start) + 1


def test_callees_resolved_within_tree(edge_tree):
    by_name = {r.name: r for r in codegraph.extract_functions(edge_tree)}
    assert by_name["main"].callees == ("load_image", "edge_filter", "save_image")
    # libc calls (fopen, fscanf, calloc) are not in-tree and never appear
    assert by_name["load_image"].callees == ()
    assert by_name["edge_filter"].callees == ()


def test_prototypes_are_not_definitions(tmp_path):
    tree = write_tree(
        tmp_path,
        {"a.c": "int f(int x);\nint f(int x) { return x; }\n"},
    )
    records = codegraph.extract_functions(tree)
    assert len(records) == 1
    assert records[0].body.startswith("int f(int x) {")


def test_kr_style_definition(tmp_path):
    source = (
        "int add(a, b)\n"
        "    int a;\n"
        "    int b;\n"
        "{\n"
        "    return a + b;\n"
        "}\n"
    )
    tree = write_tree(tmp_path, {"kr.c": source})
    records = codegraph.extract_functions(tree)
    assert [r.name for r in records] == ["add"]
    assert records[0].body == source.rstrip("\n")


def test_control_keywords_not_extracted(tmp_path):
    tree = write_tree(
        tmp_path,
        {"a.c": "int f(void) { if (1) { while (0) {} } return 0; }\n"},
    )
    assert [r.name for r in codegraph.extract_functions(tree)] == ["f"]


def test_duplicate_definition_rejected(tmp_path):
    tree = write_tree(
        tmp_path,
        {"a.c": "int f(void) { return 0; }\n", "b.c": "int f(void) { return 1; }\n"},
    )
    with pytest.raises(ParseFailure):
        codegraph.extract_functions(tree)


def test_unbalanced_braces_rejected(tmp_path):
    tree = write_tree(tmp_path, {"a.c": "int f(void) { return 0;\n"})
    with pytest.raises(ParseFailure):
        codegraph.extract_functions(tree)


def test_empty_tree_rejected(tmp_path):
    tree = write_tree(tmp_path, {"a.c": "/* nothing here */\n"})
    with pytest.raises(NoFunctionsFound):
        codegraph.extract_functions(tree)


def test_string_braces_do_not_confuse_spans(tmp_path):
    tree = write_tree(
        tmp_path,
        {"a.c": 'const char *f(void) { return "}{"; }\nint g(void) { return 0; }\n'},
    )
    assert sorted(r.name for r in codegraph.extract_functions(tree)) == ["f", "g"]


# -- call graph and ordering -----------------------------------------------------

def graph_of(edges, nodes=None):
    nodes = tuple(sorted(nodes or {n for e in edges for n in e}))
    return codegraph.CallGraph(nodes=nodes, edges=frozenset(edges))


def test_build_call_graph(edge_tree):
    graph = codegraph.build_call_graph(codegraph.extract_functions(edge_tree))
    assert graph.edges == frozenset(
        [("main", "load_image"), ("main", "edge_filter"), ("main", "save_image")]
    )


def test_break_cycles_removes_self_loops_first():
    graph = graph_of([("a", "a"), ("a", "b")])
    broken = codegraph.break_cycles(graph)
    assert broken.removed_edges == (("a", "a"),)
    assert broken.edges == frozenset([("a", "b")])


def test_break_cycles_two_cycle_deterministic():
    graph = graph_of([("a", "b"), ("b", "a")])
    broken = codegraph.break_cycles(graph)
    # DFS from 'a' meets a->b->a first, so (b, a) is the back edge
    assert broken.removed_edges == (("b", "a"),)
    assert codegraph.approximation_order(broken).order == ("b", "a")


def test_order_places_callees_first(edge_tree):
    graph = codegraph.build_call_graph(codegraph.extract_functions(edge_tree))
    ordered = codegraph.approximation_order(codegraph.break_cycles(graph))
    assert ordered.order == ("edge_filter", "load_image", "save_image", "main")


def test_order_breaks_ties_lexicographically():
    graph = graph_of([("z", "b"), ("z", "a")], nodes={"a", "b", "z"})
    ordered = codegraph.approximation_order(graph)
    assert ordered.order == ("a", "b", "z")


def test_order_requires_acyclic_graph():
    graph = graph_of([("a", "b"), ("b", "a")])
    with pytest.raises(CycleRemains):
        codegraph.approximation_order(graph)


@given(
    st.sets(
        st.tuples(st.sampled_from("abcdef"), st.sampled_from("abcdef")),
        max_size=20,
    )
)
def test_break_then_order_is_topological(edges):
    graph = graph_of(edges, nodes=set("abcdef"))
    ordered = codegraph.approximation_order(codegraph.break_cycles(graph))
    position = {name: i for i, name in enumerate(ordered.order)}
    assert sorted(position) == sorted(graph.nodes)
    for caller, callee in ordered.edges:
        if caller != callee:
            assert position[callee] < position[caller]


def test_dump_dot_lists_nodes_edges_and_removals():
    graph = codegraph.break_cycles(graph_of([("a", "b"), ("b", "a")]))
    dot = codegraph.dump_dot(graph)
    assert '"a";' in dot and '"b";' in dot
    assert '"a" -> "b";' in dot
    assert '"b" -> "a" [style=dashed, label="removed"];' in dot
    assert dot.startswith("digraph calls {")

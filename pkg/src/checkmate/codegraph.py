"""Lexical C function extraction and call-graph ordering.

No preprocessing or real parsing happens here: functions are located by
brace matching on comment/string/preprocessor-masked text, and call
edges are identifier-before-parenthesis occurrences that name another
in-tree function.  That is deliberate: benchmark C with vendor headers
defeats strict parsers, and the downstream consumers only need names,
byte spans, and a processing order.  Function pointers and macro-hidden
calls are not resolved.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CycleRemains, NoFunctionsFound, ParseFailure

_KEYWORDS = frozenset(
    "if else for while do switch case return sizeof goto break continue "
    "typedef struct union enum static extern inline const volatile "
    "register unsigned signed void int char short long float double".split()
)

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"


@dataclass
class FunctionRecord:
    name: str
    file: Path
    start: int          # byte offset of the definition's first character
    end: int            # byte offset one past the closing brace
    start_line: int     # 1-based
    end_line: int       # 1-based
    body: str           # verbatim file text at [start:end)
    callees: tuple = ()


@dataclass
class CallGraph:
    nodes: tuple
    edges: frozenset           # (caller, callee) pairs
    removed_edges: tuple = ()  # populated by break_cycles
    order: tuple = None        # populated by approximation_order


def mask_source(text):
    """Replace comments, string/char literals, and preprocessor lines
    with spaces, preserving length and newlines, so that brace matching
    and identifier scans see only real code."""
    out = list(text)
    i, n = 0, len(text)
    state = "code"
    line_start = True
    while i < n:
        c = text[i]
        nxt = text[i + 1] if i + 1 < n else ""
        if state == "code":
            if line_start and c == "#":
                state = "preproc"
                out[i] = " "
            elif c == "/" and nxt == "/":
                state = "line_comment"
                out[i] = " "
            elif c == "/" and nxt == "*":
                state = "block_comment"
                out[i] = out[i + 1] = " "
                i += 1
            elif c == '"':
                state = "string"
                out[i] = " "
            elif c == "'":
                state = "char"
                out[i] = " "
        elif state == "preproc":
            if c == "\n":
                # backslash continuation keeps the directive going
                j = i - 1
                while j >= 0 and text[j] in " \t":
                    j -= 1
                if j < 0 or text[j] != "\\":
                    state = "code"
            else:
                out[i] = " "
        elif state == "line_comment":
            if c == "\n":
                state = "code"
            else:
                out[i] = " "
        elif state == "block_comment":
            if c == "*" and nxt == "/":
                out[i] = out[i + 1] = " "
                i += 1
                state = "code"
            else:
                out[i] = " " if c != "\n" else "\n"
        elif state == "string":
            if c == "\\":
                out[i] = " "
                if i + 1 < n and text[i + 1] != "\n":
                    out[i + 1] = " "
                i += 1
            elif c == '"':
                out[i] = " "
                state = "code"
            else:
                out[i] = " " if c != "\n" else "\n"
        elif state == "char":
            if c == "\\":
                out[i] = " "
                if i + 1 < n and text[i + 1] != "\n":
                    out[i + 1] = " "
                i += 1
            elif c == "'":
                out[i] = " "
                state = "code"
            else:
                out[i] = " "
        line_start = c == "\n" or (line_start and c in " \t")
        i += 1
    return "".join(out)


def _match_paren(masked, open_idx):
    depth = 0
    for i in range(open_idx, len(masked)):
        if masked[i] == "(":
            depth += 1
        elif masked[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return -1


def _match_brace(masked, open_idx):
    depth = 0
    for i in range(open_idx, len(masked)):
        if masked[i] == "{":
            depth += 1
        elif masked[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    return -1


# text allowed between ')' and '{' for K&R-style definitions: parameter
# declarations, each ending with ';'
_KR_PARAMS = re.compile(r"^(?:[A-Za-z0-9_\s,*\[\]]*;)+\s*$", re.S)


def _definition_start(text, masked, name_idx):
    """Walk back from the function name over return-type tokens."""
    i = name_idx - 1
    while i >= 0 and (masked[i].isalnum() or masked[i] in "_* \t\n"):
        i -= 1
    i += 1
    # skip whitespace (and masked-out comments) forward
    while i < name_idx and masked[i].isspace():
        i += 1
    return i


def extract_functions(source_dir, suffixes=(".c",)):
    """All function definitions under ``source_dir``, by file then offset.

    Raises ParseFailure on unbalanced braces or duplicate definitions and
    NoFunctionsFound when the tree defines nothing.
    """
    source_dir = Path(source_dir)
    files = sorted(p for s in suffixes for p in source_dir.rglob(f"*{s}"))
    records = []
    for path in files:
        text = path.read_text()
        masked = mask_source(text)
        records.extend(_scan_file(path, text, masked))
    if not records:
        raise NoFunctionsFound(source_dir)
    seen = {}
    for rec in records:
        if rec.name in seen:
            raise ParseFailure(
                rec.file, rec.start_line,
                f"duplicate definition of {rec.name!r} (also in {seen[rec.name].file})",
            )
        seen[rec.name] = rec
    names = frozenset(seen)
    for rec in records:
        rec.callees = _find_callees(masked_body(rec), names)
    return records


def masked_body(rec):
    """The record's body with comments/strings/preprocessor masked,
    header (everything up to the opening brace) blanked as well."""
    masked = mask_source(rec.body)
    brace = masked.find("{")
    return " " * (brace + 1) + masked[brace + 1:]


def _scan_file(path, text, masked):
    records = []
    depth = 0
    i = 0
    n = len(masked)
    last_open_line = 0
    while i < n:
        c = masked[i]
        if c == "{":
            if depth == 0:
                last_open_line = text.count("\n", 0, i) + 1
            depth += 1
        elif c == "}":
            depth -= 1
            if depth < 0:
                raise ParseFailure(path, text.count("\n", 0, i) + 1, "unbalanced '}'")
        elif c == "(" and depth == 0:
            rec_end = _try_definition(path, text, masked, i)
            if rec_end is not None:
                records.append(rec_end)
                i = rec_end.end
                continue
        i += 1
    if depth != 0:
        raise ParseFailure(path, last_open_line, "unbalanced '{' at end of file")
    return records


def _try_definition(path, text, masked, paren_idx):
    # identifier immediately before '('
    j = paren_idx - 1
    while j >= 0 and masked[j].isspace():
        j -= 1
    name_end = j + 1
    while j >= 0 and (masked[j].isalnum() or masked[j] == "_"):
        j -= 1
    name = masked[j + 1:name_end]
    if not name or name[0].isdigit() or name in _KEYWORDS:
        return None
    close = _match_paren(masked, paren_idx)
    if close < 0:
        raise ParseFailure(path, text.count("\n", 0, paren_idx) + 1, "unbalanced '('")
    # find '{' after the parameter list; allow K&R parameter declarations
    brace = masked.find("{", close + 1)
    if brace < 0:
        return None
    between = masked[close + 1:brace]
    if ";" in between and not _KR_PARAMS.match(between):
        return None
    if ";" not in between and between.strip():
        return None
    body_end = _match_brace(masked, brace)
    if body_end < 0:
        raise ParseFailure(path, text.count("\n", 0, brace) + 1, "unbalanced '{'")
    start = _definition_start(text, masked, j + 1)
    return FunctionRecord(
        name=name,
        file=path,
        start=start,
        end=body_end + 1,
        start_line=text.count("\n", 0, start) + 1,
        end_line=text.count("\n", 0, body_end) + 1,
        body=text[start:body_end + 1],
    )


_CALL = re.compile(rf"({_IDENT})\s*\(")


def _find_callees(masked_body_text, defined_names):
    found = []
    for m in _CALL.finditer(masked_body_text):
        name = m.group(1)
        if name in defined_names and name not in _KEYWORDS and name not in found:
            found.append(name)
    return tuple(found)


def build_call_graph(functions):
    """Call graph over the extracted functions; self-edges allowed."""
    nodes = tuple(sorted(rec.name for rec in functions))
    edges = frozenset(
        (rec.name, callee) for rec in functions for callee in rec.callees
    )
    return CallGraph(nodes=nodes, edges=edges)


def _find_back_edge(nodes, adjacency):
    """First back edge met by iterative DFS, roots and neighbors in
    lexicographic order."""
    visited = set()
    for root in nodes:
        if root in visited:
            continue
        on_stack = {root}
        stack = [(root, iter(adjacency[root]))]
        visited.add(root)
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt in on_stack:
                    return (node, nxt)
                if nxt not in visited:
                    visited.add(nxt)
                    on_stack.add(nxt)
                    stack.append((nxt, iter(adjacency[nxt])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                on_stack.discard(node)
    return None


def break_cycles(graph):
    """Remove back edges (deterministic DFS order) until acyclic.

    Self-loops always go first; each DFS pass removes the first back
    edge it meets, then restarts.  Returns a new graph with
    ``removed_edges`` recording what was dropped, in removal order.
    """
    edges = set(graph.edges)
    removed = [e for e in sorted(edges) if e[0] == e[1]]
    edges -= set(removed)
    while True:
        adjacency = {n: sorted(c for (p, c) in edges if p == n) for n in graph.nodes}
        back = _find_back_edge(graph.nodes, adjacency)
        if back is None:
            break
        edges.discard(back)
        removed.append(back)
    return CallGraph(
        nodes=graph.nodes,
        edges=frozenset(edges),
        removed_edges=tuple(removed),
    )


def approximation_order(graph):
    """Topological order, callees before callers, lexicographic ties.

    The graph must be acyclic (run break_cycles first); CycleRemains is
    raised otherwise.
    """
    placed = []
    placed_set = set()
    remaining = set(graph.nodes)
    callees_of = {n: {c for (p, c) in graph.edges if p == n and c != n} for n in graph.nodes}
    while remaining:
        ready = sorted(
            n for n in remaining if callees_of[n] <= placed_set
        )
        if not ready:
            raise CycleRemains(remaining)
        nxt = ready[0]
        placed.append(nxt)
        placed_set.add(nxt)
        remaining.discard(nxt)
    return CallGraph(
        nodes=graph.nodes,
        edges=graph.edges,
        removed_edges=graph.removed_edges,
        order=tuple(placed),
    )


def dump_dot(graph):
    """DOT text for the graph; removed edges drawn dashed."""
    lines = ["digraph calls {"]
    for n in graph.nodes:
        lines.append(f'  "{n}";')
    for caller, callee in sorted(graph.edges):
        lines.append(f'  "{caller}" -> "{callee}";')
    for caller, callee in graph.removed_edges:
        lines.append(f'  "{caller}" -> "{callee}" [style=dashed, label="removed"];')
    lines.append("}")
    return "\n".join(lines) + "\n"

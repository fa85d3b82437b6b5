"""Approximation patches and the knob protocol.

A patch replaces one function with an LLM-authored variant whose tuning
knobs are plain C variables declared inside a marked block:

    /* Knob Variables Declaration Start */
    int knob1 = 80;
    /* Knob Variables Declaration End */

exactly one declaration per line, each with an initializer.  The JSON
the LLM returns alongside the code (apx_code / knob_variables /
knob_ranges / knob_increments) must agree with that block name-for-name;
mismatches are protocol violations and trigger the repair loop rather
than silently proceeding.
"""

import re
from dataclasses import dataclass, field, replace

from . import codegraph, llm, prompts
from .errors import (
    AlternativesExhausted,
    KnobProtocolViolation,
    NoJsonFound,
    SchemaMismatch,
    SelectionFailed,
    SpanDrift,
    SummaryFailed,
    UnknownKnob,
)

KNOB_BLOCK_START = "/* Knob Variables Declaration Start */"
KNOB_BLOCK_END = "/* Knob Variables Declaration End */"

JSON_REPAIR_ATTEMPTS = 3
ALTERNATIVE_BUDGET = 3


@dataclass
class CodebaseSummary:
    app_summary: str
    per_function: dict  # name -> one-line summary

    def render(self):
        lines = [self.app_summary.strip(), ""]
        for name in sorted(self.per_function):
            lines.append(f"{name}: {self.per_function[name]}")
        return "\n".join(lines).strip()


@dataclass
class SelectionMap:
    decisions: dict  # name -> "approximate" | "do_not_approximate"
    rationale: dict  # name -> text ('' when the reply gave none)

    def selected(self):
        return [n for n, d in self.decisions.items() if d == "approximate"]


@dataclass(frozen=True)
class KnobSpec:
    name: str
    lo: float
    hi: float
    increment_kind: str  # "Integer" | "Real"
    declared_in: str
    default: float

    @property
    def is_integer(self):
        return self.increment_kind == "Integer"


@dataclass
class ApproximationPatch:
    function: str
    apx_code: str
    knobs: tuple  # KnobSpec, declaration order
    plan_text: str
    status: str = "proposed"  # proposed | validated | discarded

    def knob(self, name):
        for k in self.knobs:
            if k.name == name:
                return k
        raise UnknownKnob(name)


# -- knob block parsing -------------------------------------------------------

_DECL = re.compile(
    r"^\s*(?P<type>[A-Za-z_][A-Za-z0-9_ \t]*?)\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"\s*=\s*(?P<literal>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?[fF]?)\s*;\s*$"
)


def parse_knob_block(code):
    """Declarations inside the marker block, as (name, type, literal, span).

    Raises KnobProtocolViolation when the markers are absent, repeated,
    out of order, or a line between them is not a single initialized
    declaration.
    """
    starts = [m.start() for m in re.finditer(re.escape(KNOB_BLOCK_START), code)]
    ends = [m.start() for m in re.finditer(re.escape(KNOB_BLOCK_END), code)]
    if len(starts) != 1 or len(ends) != 1:
        raise KnobProtocolViolation(
            f"expected exactly one marker pair, found {len(starts)} start / {len(ends)} end"
        )
    if ends[0] < starts[0]:
        raise KnobProtocolViolation("end marker precedes start marker")
    inner_start = starts[0] + len(KNOB_BLOCK_START)
    inner = code[inner_start:ends[0]]
    decls = []
    offset = inner_start
    for line in inner.splitlines(keepends=True):
        stripped = line.strip()
        if stripped:
            m = _DECL.match(line)
            if not m:
                raise KnobProtocolViolation(
                    f"not a single initialized declaration: {stripped!r}"
                )
            lit_start = offset + m.start("literal")
            lit_end = offset + m.end("literal")
            decls.append(
                {
                    "name": m.group("name"),
                    "type": m.group("type").strip(),
                    "literal": m.group("literal"),
                    "span": (lit_start, lit_end),
                }
            )
        offset += len(line)
    names = [d["name"] for d in decls]
    if len(names) != len(set(names)):
        raise KnobProtocolViolation("duplicate declaration in knob block")
    return decls


def _knob_specs(parsed, declared_in):
    """Cross-check LLM JSON against the knob block and build KnobSpecs."""
    decls = parse_knob_block(parsed["apx_code"])
    block_names = [d["name"] for d in decls]
    json_names = parsed["knob_variables"]
    if len(json_names) != len(set(json_names)):
        raise KnobProtocolViolation("duplicate name in knob_variables")
    for label, names in (
        ("knob_variables", set(json_names)),
        ("knob_ranges", set(parsed["knob_ranges"])),
        ("knob_increments", set(parsed["knob_increments"])),
    ):
        if names != set(block_names):
            raise KnobProtocolViolation(
                f"{label} {sorted(names)} does not match knob block {sorted(block_names)}"
            )
    specs = []
    for d in decls:
        lo, hi = parsed["knob_ranges"][d["name"]]
        kind = parsed["knob_increments"][d["name"]]
        if not lo < hi:
            raise KnobProtocolViolation(f"{d['name']}: range [{lo}, {hi}] is not lo < hi")
        if kind == "Integer" and (lo != int(lo) or hi != int(hi)):
            raise KnobProtocolViolation(f"{d['name']}: Integer knob with non-integral bounds")
        specs.append(
            KnobSpec(
                name=d["name"],
                lo=float(lo),
                hi=float(hi),
                increment_kind=kind,
                declared_in=declared_in,
                default=float(d["literal"].rstrip("fF")),
            )
        )
    return tuple(specs)


def set_knob_values(apx_code, values):
    """Rewrite knob initializers; Integer knobs render without a decimal
    point.  Bytes outside the initializer literals are untouched."""
    decls = parse_knob_block(apx_code)
    by_name = {d["name"]: d for d in decls}
    for name in values:
        if name not in by_name:
            raise UnknownKnob(name)
    edits = []
    for name, value in values.items():
        d = by_name[name]
        if float(value) == int(float(value)):
            literal = str(int(float(value)))
        else:
            literal = repr(float(value))
        edits.append((d["span"], literal))
    edits.sort(key=lambda e: e[0][0], reverse=True)
    out = apx_code
    for (start, end), literal in edits:
        out = out[:start] + literal + out[end:]
    return out


# -- conversation 1: summary and selection -----------------------------------

def summarize_codebase(conv, codebase_text, function_names):
    """Present the codebase, parse the reply into a CodebaseSummary.

    The reply must carry a JSON object with a ``code_summary`` map
    covering every extracted function; prose before the JSON becomes the
    application summary.  Non-compliant replies get the standard repair
    prompts, then SummaryFailed.
    """
    response = llm.send(conv, prompts.render("conv1_summary", complete_code_base=codebase_text))
    last_error = None
    for attempt in range(JSON_REPAIR_ATTEMPTS + 1):
        if attempt:
            response = llm.send(
                conv,
                f"Your previous reply could not be processed: {last_error}\n"
                f"Reply again with a JSON object containing a \"code_summary\" map "
                f"with one entry per function: {sorted(function_names)}.",
            )
        try:
            obj, _ = llm.first_json_object(response.text)
            summary = obj.get("code_summary", obj)
            if not isinstance(summary, dict):
                raise SchemaMismatch("code_summary", "must be an object")
            missing = set(function_names) - set(summary)
            if missing:
                raise SchemaMismatch("code_summary", f"missing functions {sorted(missing)}")
            return CodebaseSummary(
                app_summary=llm.prose_before_json(response.text),
                per_function={n: str(summary[n]) for n in function_names},
            )
        except (NoJsonFound, SchemaMismatch) as exc:
            last_error = exc
    raise SummaryFailed(str(last_error))


_RATIONALE_HEADER = re.compile(r"^#+\s*(\S+)\s*$", re.M)


def _parse_rationale(text, function_names):
    """Per-function prose under '# name' headers, per the reply format."""
    text = llm.prose_before_json(text)
    rationale = {n: "" for n in function_names}
    matches = list(_RATIONALE_HEADER.finditer(text))
    for i, m in enumerate(matches):
        name = m.group(1).strip("`'\"")
        if name in rationale:
            end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
            rationale[name] = text[m.end():end].strip()
    return rationale


def select_functions(conv, function_names):
    """One probing exchange per function, then the selection exchange.

    The selection reply must classify every extracted function; missing
    or extra names trigger the repair loop, then SelectionFailed.
    """
    for name in function_names:
        llm.send(conv, prompts.render("conv1_function_detail", function_name=name))
    response = llm.send(conv, prompts.render("conv1_select"))
    last_error = None
    for attempt in range(JSON_REPAIR_ATTEMPTS + 1):
        if attempt:
            response = llm.send(
                conv,
                f"Your previous reply could not be processed: {last_error}\n"
                f"Reply again following the requested format, classifying exactly "
                f"these functions: {sorted(function_names)}.",
            )
        try:
            parsed = llm.extract_json(response, "function_selection")
            decisions = parsed["target_functions"]
            if set(decisions) != set(function_names):
                raise SchemaMismatch(
                    "target_functions",
                    f"expected exactly {sorted(function_names)}, got {sorted(decisions)}",
                )
            return SelectionMap(
                decisions={n: decisions[n] for n in function_names},
                rationale=_parse_rationale(response.text, function_names),
            )
        except (NoJsonFound, SchemaMismatch) as exc:
            last_error = exc
    raise SelectionFailed(str(last_error))


# -- conversation 2: plan and apply -------------------------------------------

def plan_approximation(conv, function_name, platform_architecture):
    """Planning exchange; the reply text is the plan."""
    response = llm.send(
        conv,
        prompts.render(
            "conv2_plan",
            function_name=function_name,
            platform_architecture=platform_architecture,
        ),
    )
    return response.text


def _fewshot_suffix(plan_text):
    parts = []
    lowered = plan_text.lower()
    if "loop perforation" in lowered:
        parts.append(prompts.render("fewshot_loop_perforation"))
    if "precision scaling" in lowered:
        parts.append(prompts.render("fewshot_precision_scaling"))
    return parts


def apply_approximation(conv, function_name, plan_text,
                        output_instructions=prompts.DEFAULT_OUTPUT_INSTRUCTIONS):
    """Apply-then-jsonify exchange pair; returns a proposed patch.

    Few-shot examples ride along with the apply prompt when the plan
    mentions the matching technique.  JSON extraction failures re-prompt
    with the error in the {add_error} slot up to the repair budget, then
    the patch proposal is abandoned (KnobProtocolViolation/SchemaMismatch
    propagates to the caller, which may ask for an alternative).
    """
    apply_text = prompts.render("conv2_apply", function_name=function_name)
    for fewshot in _fewshot_suffix(plan_text):
        apply_text += "\n\n" + fewshot
    llm.send(conv, apply_text)

    add_error = ""
    last_error = None
    for _ in range(JSON_REPAIR_ATTEMPTS + 1):
        response = llm.send(
            conv,
            prompts.render(
                "conv2_jsonify",
                add_error=add_error,
                output_instuctions=output_instructions,
            ),
        )
        try:
            parsed = llm.extract_json(response, "approximation_output")
            knobs = _knob_specs(parsed, function_name)
            return ApproximationPatch(
                function=function_name,
                apx_code=parsed["apx_code"],
                knobs=knobs,
                plan_text=plan_text,
            )
        except (NoJsonFound, SchemaMismatch, KnobProtocolViolation) as exc:
            last_error = exc
            add_error = (
                f"Your previous JSON could not be processed: {exc}. "
                f"Correct it and reply again.\n"
            )
    raise last_error


def next_alternative(conv, function_name, platform_architecture, failure_log,
                     output_instructions=prompts.DEFAULT_OUTPUT_INSTRUCTIONS):
    """Ask for a different technique after a patch was discarded."""
    llm.send(
        conv,
        f"The approximation you proposed for {function_name} was discarded. "
        f"Failure log:\n\n{failure_log}\n\n"
        f"Propose a different approximation technique for {function_name}. "
        f"Avoid the approach that just failed.",
    )
    plan_text = plan_approximation(conv, function_name, platform_architecture)
    return apply_approximation(conv, function_name, plan_text, output_instructions)


# -- patch integration ---------------------------------------------------------

def integrate_patch(workdir, patch):
    """Splice the patch's code over the target function in ``workdir``.

    The function is located by re-extraction from the working copy, so
    earlier patches cannot shift it; only the target span changes.
    Raises SpanDrift when the function no longer exists there.
    """
    records = codegraph.extract_functions(workdir)
    target = next((r for r in records if r.name == patch.function), None)
    if target is None:
        raise SpanDrift(patch.function)
    text = target.file.read_text()
    target.file.write_text(text[:target.start] + patch.apx_code + text[target.end:])
    return target.file

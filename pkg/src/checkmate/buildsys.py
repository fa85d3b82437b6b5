"""Building, running, instrumenting, and range-validating C trees.

The Makefile itself comes from the LLM (conversation 3) and is written
verbatim; compilation is always ``make main`` and the compile-repair
loop feeds build errors back into that conversation for a corrected
Makefile, up to ``max_attempts`` total builds.  Programs run in
isolated per-run directories with a wall-clock timeout: the binary gets
the input trace path as argv[1] and must write its result to the
manifest's output path relative to the run directory.

The instrumented build variant injects a work-unit counter -- one
increment at every function entry and every braced loop-body head --
plus an exit-time dump to ``workunits.txt`` beside the output file.
Work units are the simulator's currency, so original and approximated
binaries are instrumented identically.

Knob-range validation executes the patched program over a binary
traversal of each knob's declared range (endpoints, then recursive
midpoints to depth D) holding other knobs at their LLM defaults; the
safe interval is the widest maximal run of passing tested points.
"""

import json
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from . import approximator, codegraph, llm, metrics, prompts
from .errors import SpawnFailure, ToolchainMissing, TypeMismatch, ValidationDiscard

DEFAULT_MAX_ATTEMPTS = 5
DEFAULT_RUN_TIMEOUT = 10.0
DEFAULT_BUILD_TIMEOUT = 60.0
DEFAULT_TRAVERSAL_DEPTH = 4

WORKUNITS_FILE = "workunits.txt"

_COUNTER = "__cm_work_units"

_PRELUDE_EXTERN = f"extern unsigned long long {_COUNTER};\n"

_PRELUDE_MAIN = f"""#include <stdio.h>
#include <stdlib.h>
unsigned long long {_COUNTER};
static void __cm_dump_work_units(void) {{
    FILE *__cm_fh = fopen("{WORKUNITS_FILE}", "w");
    if (__cm_fh) {{ fprintf(__cm_fh, "%llu\\n", {_COUNTER}); fclose(__cm_fh); }}
}}
__attribute__((constructor)) static void __cm_register_dump(void) {{
    atexit(__cm_dump_work_units);
}}
"""


@dataclass
class BuildResult:
    ok: bool
    log: str
    binary: Path = None
    attempts: int = 1


@dataclass
class RunResult:
    exit_status: int  # None when the run timed out
    stdout: str
    stderr: str
    timed_out: bool
    output: bytes = None      # bytes of the declared output file, if present
    work_units: int = None    # from the instrumented variant, if present

    @property
    def ok(self):
        return not self.timed_out and self.exit_status == 0


def require_toolchain():
    for tool in ("make", "gcc"):
        if shutil.which(tool) is None:
            raise ToolchainMissing(tool)


def source_files(workdir):
    workdir = Path(workdir)
    return sorted(str(p.relative_to(workdir)) for p in workdir.rglob("*.c"))


def generate_makefile(conv, workdir):
    """Ask conversation 3 for a Makefile and write it verbatim."""
    files = source_files(workdir)
    response = llm.send(
        conv, prompts.render("conv3_makefile", files_list=json.dumps(files))
    )
    text = llm.extract_json(response, "makefile")
    write_makefile(workdir, text)
    return text


def write_makefile(workdir, text):
    path = Path(workdir) / "Makefile"
    if not text.endswith("\n"):
        text += "\n"
    path.write_text(text)
    return path


def compile(workdir, conv=None, max_attempts=DEFAULT_MAX_ATTEMPTS,
            build_timeout=DEFAULT_BUILD_TIMEOUT):
    """``make main``; on failure, repair the Makefile through ``conv``.

    Without a conversation a failed build returns immediately (repair
    needs the LLM).  The returned BuildResult carries the final build
    log either way; ``ok`` implies the ``main`` binary exists.
    """
    require_toolchain()
    workdir = Path(workdir)
    log = ""
    for attempt in range(1, max_attempts + 1):
        try:
            proc = subprocess.run(
                ["make", "main"],
                cwd=workdir,
                capture_output=True,
                text=True,
                timeout=build_timeout,
            )
            log = proc.stdout + proc.stderr
            failed = proc.returncode != 0
        except subprocess.TimeoutExpired:
            log = f"build timed out after {build_timeout}s"
            failed = True
        except OSError as exc:
            raise SpawnFailure(str(exc))
        binary = workdir / "main"
        if not failed and binary.exists():
            return BuildResult(ok=True, log=log, binary=binary, attempts=attempt)
        if not failed:
            log += "\nmake succeeded but produced no 'main' binary"
        if conv is None or attempt == max_attempts:
            return BuildResult(ok=False, log=log, attempts=attempt)
        response = llm.send(
            conv,
            "The Makefile failed. Build output:\n\n"
            f"{log}\n\n"
            "Output only the corrected Makefile content, no other text. "
            'The command that will be run is just "make main".',
        )
        write_makefile(workdir, llm.extract_json(response, "makefile"))
    return BuildResult(ok=False, log=log, attempts=max_attempts)


def run(binary, input_path, rundir, timeout=DEFAULT_RUN_TIMEOUT, output_path=None):
    """Execute ``binary <input_path>`` inside ``rundir``.

    The run directory is created (and cleared of stale output files)
    first; the declared output file and ``workunits.txt`` are collected
    afterwards when present.
    """
    rundir = Path(rundir)
    rundir.mkdir(parents=True, exist_ok=True)
    for stale in (output_path, WORKUNITS_FILE):
        if stale and (rundir / stale).exists():
            (rundir / stale).unlink()
    try:
        proc = subprocess.run(
            [str(Path(binary).resolve()), str(Path(input_path).resolve())],
            cwd=rundir,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
        result = RunResult(
            exit_status=proc.returncode,
            stdout=proc.stdout,
            stderr=proc.stderr,
            timed_out=False,
        )
    except subprocess.TimeoutExpired as exc:
        result = RunResult(
            exit_status=None,
            stdout=exc.stdout or "",
            stderr=exc.stderr or "",
            timed_out=True,
        )
    except OSError as exc:
        raise SpawnFailure(str(exc))
    if output_path and (rundir / output_path).exists():
        result.output = (rundir / output_path).read_bytes()
    wu = rundir / WORKUNITS_FILE
    if wu.exists():
        try:
            result.work_units = int(wu.read_text().strip())
        except ValueError:
            result.work_units = None
    return result


# -- instrumentation -------------------------------------------------------------

_LOOP_KW = re.compile(r"\b(for|while|do)\b")


def _skip_ws(text, i):
    while i < len(text) and text[i].isspace():
        i += 1
    return i


def _loop_body_braces(masked):
    """Offsets of '{' opening a for/while/do body (braceless bodies are
    not instrumented)."""
    braces = []
    for m in _LOOP_KW.finditer(masked):
        if m.group(1) == "do":
            j = _skip_ws(masked, m.end())
            if j < len(masked) and masked[j] == "{":
                braces.append(j)
            continue
        p = _skip_ws(masked, m.end())
        if p >= len(masked) or masked[p] != "(":
            continue  # the 'while' of a do-while has its paren, but see below
        close = codegraph._match_paren(masked, p)
        if close < 0:
            continue
        j = _skip_ws(masked, close + 1)
        if j < len(masked) and masked[j] == "{":
            braces.append(j)
    return braces


def _function_body_braces(masked, text):
    braces = []
    for rec in codegraph._scan_file(Path("<mem>"), text, masked):
        brace = masked.find("{", rec.start, rec.end)
        if brace >= 0:
            braces.append(brace)
    return braces


def instrument_file(path, defines_main):
    """Inject the work-unit counter into one C file, in place."""
    path = Path(path)
    text = path.read_text()
    masked = codegraph.mask_source(text)
    points = sorted(set(_function_body_braces(masked, text) + _loop_body_braces(masked)))
    tick = f" {_COUNTER}++;"
    for offset in reversed(points):
        text = text[:offset + 1] + tick + text[offset + 1:]
    prelude = _PRELUDE_MAIN if defines_main else _PRELUDE_EXTERN
    path.write_text(prelude + text)
    return len(points)


def instrument_tree(workdir):
    """Instrument every .c file under ``workdir``.

    The counter definition and the exit-time dump land in the file
    defining ``main``; every other file gets an extern declaration.
    """
    workdir = Path(workdir)
    files = sorted(workdir.rglob("*.c"))
    main_file = None
    for path in files:
        text = path.read_text()
        masked = codegraph.mask_source(text)
        for rec in codegraph._scan_file(path, text, masked):
            if rec.name == "main":
                main_file = path
                break
    if main_file is None:
        raise ValidationDiscard("<tree>", "no main() found to instrument")
    total = 0
    for path in files:
        total += instrument_file(path, defines_main=(path == main_file))
    return total


# -- knob range validation ---------------------------------------------------------

def traversal_points(lo, hi, depth, integer):
    """Endpoints then level-order midpoints, left to right per level.

    Integer knobs round midpoints; collapsed segments (width <= 1)
    stop splitting, so narrow ranges test fewer than 2^depth points.
    """
    def coerce(v):
        return int(round(v)) if integer else v

    lo, hi = coerce(lo), coerce(hi)
    points = [lo]
    if hi != lo:
        points.append(hi)
    segments = [(lo, hi)]
    for _ in range(depth):
        next_segments = []
        for a, b in segments:
            m = coerce((a + b) / 2)
            if m <= a or m >= b:
                continue
            if m not in points:
                points.append(m)
            next_segments.extend([(a, m), (m, b)])
        segments = next_segments
    return points


@dataclass
class ValidationReport:
    function: str
    tested: dict = field(default_factory=dict)   # knob -> [(value, passed)]
    safe: dict = field(default_factory=dict)     # knob -> (lo, hi)
    log: list = field(default_factory=list)


def _widest_passing_run(tested):
    """Widest maximal run of passing points in value order; ties go to
    the lower interval."""
    by_value = sorted(tested)
    best = None
    i = 0
    while i < len(by_value):
        value, passed = by_value[i]
        if not passed:
            i += 1
            continue
        j = i
        while j + 1 < len(by_value) and by_value[j + 1][1]:
            j += 1
        lo, hi = by_value[i][0], by_value[j][0]
        if best is None or (hi - lo) > (best[1] - best[0]):
            best = (lo, hi)
        i = j + 1
    return best


def validate_knob_ranges(patch, template_dir, inputs, output_spec, workroot,
                         depth=DEFAULT_TRAVERSAL_DEPTH, timeout=DEFAULT_RUN_TIMEOUT,
                         keep_workdirs=False):
    """Narrow each knob's range to an execution-safe interval.

    For every knob (others pinned at their LLM defaults) the patched
    program is rebuilt and run on every input at the traversal points;
    a point passes when every run exits 0 within the timeout and the
    declared output parses.  A knob whose every tested point fails
    discards the whole patch (ValidationDiscard).  Returns a
    ValidationReport with ``safe`` intervals at tested-point resolution.
    """
    template_dir = Path(template_dir)
    workroot = Path(workroot)
    workroot.mkdir(parents=True, exist_ok=True)
    defaults = {k.name: k.default for k in patch.knobs}
    report = ValidationReport(function=patch.function)

    for knob in patch.knobs:
        tested = []
        any_pass = False
        points = traversal_points(knob.lo, knob.hi, depth, knob.is_integer)
        for idx, value in enumerate(points):
            values = dict(defaults)
            values[knob.name] = value
            tree = workroot / f"{knob.name}_{idx}"
            if tree.exists():
                shutil.rmtree(tree)
            shutil.copytree(template_dir, tree)
            passed, note = _execute_point(patch, tree, values, inputs, output_spec, timeout)
            tested.append((value, passed))
            any_pass = any_pass or passed
            report.log.append(f"{knob.name}={value}: {'pass' if passed else f'fail ({note})'}")
            if not keep_workdirs:
                shutil.rmtree(tree, ignore_errors=True)
        report.tested[knob.name] = tested
        if not any_pass:
            raise ValidationDiscard(
                patch.function, f"knob {knob.name} failed at every tested point"
            )
        report.safe[knob.name] = _widest_passing_run(tested)
    return report


def _execute_point(patch, tree, values, inputs, output_spec, timeout):
    """Build and run one knob assignment; True iff every input passes."""
    staged = approximator.ApproximationPatch(
        function=patch.function,
        apx_code=approximator.set_knob_values(patch.apx_code, values),
        knobs=patch.knobs,
        plan_text=patch.plan_text,
    )
    approximator.integrate_patch(tree, staged)
    build = compile(tree)
    if not build.ok:
        return False, "build failed"
    for input_path in inputs:
        result = run(
            build.binary, input_path, tree / "run",
            timeout=timeout, output_path=output_spec.path,
        )
        if not result.ok:
            reason = "timeout" if result.timed_out else f"exit {result.exit_status}"
            return False, reason
        if result.output is None:
            return False, "no output file"
        try:
            metrics.parse_output(result.output, output_spec.data_type)
        except TypeMismatch as exc:
            return False, f"garbage output: {exc}"
    return True, "ok"

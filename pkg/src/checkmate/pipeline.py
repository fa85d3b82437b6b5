"""One-shot orchestration: manifest to tuned code and report.

Stage order (and therefore the order in which a scripted provider's
responses are consumed):

1. manifest + platform profile
2. call-graph extraction, cycle breaking, approximation order
3. conversation 1: codebase summary, per-function probes, selection
4. conversation 2, per selected function in approximation order:
   plan, apply, jsonify (with JSON repair exchanges as needed)
5. conversation 3: Makefile generation, original build (repair loop)
6. per-function knob-range validation; a discarded patch asks
   conversation 2 for an alternative (up to the per-function budget)
7. baseline: instrumented original run per input, simulated per energy
   trace
8. knob tuning over the validated safe intervals
9. artifacts: tuned source tree, history CSV, figures, transcripts,
   patches, logs, report JSON (written last - failures leave no report)

The manifest's source directory is never modified; all builds happen in
copies under ``<out>/work`` (removed on success unless kept).
"""

import dataclasses
import json
import shutil
from pathlib import Path

from . import (
    approximator,
    buildsys,
    codegraph,
    llm,
    manifest as manifest_mod,
    metrics,
    prompts,
    report as report_mod,
    simulator,
    tuner,
)
from .errors import (
    BaselineIncomplete,
    CompileFailed,
    EmptySpace,
    EvaluatorFailure,
    InsufficientCapacitor,
    InvalidValue,
    KnobProtocolViolation,
    MetricsError,
    NoJsonFound,
    NonProgressive,
    OriginalRunFailed,
    SchemaMismatch,
    SpanDrift,
    ValidationDiscard,
)

REPORT_SCHEMA = "checkmate-report/1"

STATUS_VALIDATED = "validated"
STATUS_DISCARDED = "discarded"
STATUS_KEPT = "kept-original"

_PROPOSAL_ERRORS = (NoJsonFound, SchemaMismatch, KnobProtocolViolation)


@dataclasses.dataclass
class FunctionOutcome:
    name: str
    status: str
    reason: str = ""
    patch: object = None       # ApproximationPatch when status == validated
    safe: dict = None          # knob -> (lo, hi), tested-point resolution
    attempts: int = 0

    def report_entry(self):
        entry = {"status": self.status, "reason": self.reason, "attempts": self.attempts}
        if self.patch is not None:
            entry["knobs"] = {
                k.name: {
                    "range": [k.lo, k.hi],
                    "increment": k.increment_kind,
                    "default": k.default,
                }
                for k in self.patch.knobs
            }
        if self.safe:
            entry["safe_intervals"] = {n: list(iv) for n, iv in self.safe.items()}
        return entry


def _unique_ids(paths):
    """File-name ids for a path list; duplicates get a #index suffix."""
    counts = {}
    for p in paths:
        counts[p.name] = counts.get(p.name, 0) + 1
    seen = {}
    ids = []
    for p in paths:
        if counts[p.name] == 1:
            ids.append(p.name)
        else:
            seen[p.name] = seen.get(p.name, 0) + 1
            ids.append(f"{p.name}#{seen[p.name]}")
    return ids


def _codebase_text(source_dir):
    """The complete codebase as one string for the summary prompt."""
    source_dir = Path(source_dir)
    parts = []
    for path in sorted(source_dir.rglob("*")):
        if path.suffix not in (".c", ".h") or not path.is_file():
            continue
        rel = path.relative_to(source_dir)
        parts.append(f"// file: {rel}\n{path.read_text()}")
    return "\n\n".join(parts)


def _stage_tree(source_dir, dest, makefile_text=None):
    """Fresh copy of the source tree (plus Makefile) for building in."""
    dest = Path(dest)
    if dest.exists():
        shutil.rmtree(dest)
    shutil.copytree(source_dir, dest)
    if makefile_text is not None:
        buildsys.write_makefile(dest, makefile_text)
    return dest


def _clamp(value, lo, hi):
    return min(max(value, lo), hi)


class _Evaluator:
    """Builds, runs, and scores one knob assignment across all inputs
    and energy traces.  Results are memoized by assignment."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.memo = {}

    def __call__(self, values):
        key = tuple(sorted(values.items()))
        if key in self.memo:
            return self.memo[key]
        result = self._evaluate(values)
        self.memo[key] = result
        return result

    def _evaluate(self, values):
        ctx = self.ctx
        staged = _stage_tree(ctx.template, ctx.work / "candidate", ctx.makefile_text)
        for outcome in ctx.validated:
            patch = outcome.patch
            local = {
                k.name: values[f"{patch.function}.{k.name}"] for k in patch.knobs
            }
            staged_patch = dataclasses.replace(
                patch, apx_code=approximator.set_knob_values(patch.apx_code, local)
            )
            try:
                approximator.integrate_patch(staged, staged_patch)
            except SpanDrift as exc:
                raise EvaluatorFailure(values, str(exc))
        buildsys.instrument_tree(staged)
        build = buildsys.compile(staged)
        if not build.ok:
            raise EvaluatorFailure(values, f"candidate build failed:\n{build.log}")
        digest = simulator.binary_hash(build.binary)

        rows = []
        for input_id, input_path in zip(ctx.input_ids, ctx.manifest.input_traces):
            run = buildsys.run(
                build.binary, input_path, staged / "run",
                timeout=ctx.run_timeout, output_path=ctx.manifest.output_spec.path,
            )
            e_m = None
            if run.ok and run.output is not None and run.work_units is not None:
                try:
                    s = metrics.score(
                        ctx.references[input_id], run.output,
                        ctx.manifest.accuracy_class,
                    )
                    e_m = metrics.deviation_or_cap(s.a_o, s.a_a)
                except MetricsError:
                    e_m = None
            if e_m is None:
                for trace in ctx.energy_traces:
                    rows.append((f"{input_id}|{trace.id}", 1.0, 1.0))
                continue
            for trace in ctx.energy_traces:
                pair = f"{input_id}|{trace.id}"
                try:
                    sim = simulator.cycles_for(
                        run.work_units, trace, ctx.manifest.capacitance_farads,
                        ctx.profile, digest,
                    )
                except (NonProgressive, InsufficientCapacitor):
                    rows.append((pair, 1.0, 1.0))
                    continue
                if not sim.completed:
                    rows.append((pair, 1.0, 1.0))
                    continue
                c_r = metrics.cycle_ratio(ctx.baseline_cycles[pair], sim.power_cycles)
                rows.append((pair, e_m, c_r))
        agg = metrics.aggregate(rows, ctx.manifest.error_bound)
        return agg.e_m, agg.c_r


@dataclasses.dataclass
class _Context:
    """Everything the evaluator needs, assembled by run()."""
    manifest: object
    profile: object
    template: Path
    work: Path
    makefile_text: str
    input_ids: list
    energy_traces: list
    references: dict
    baseline_cycles: dict
    validated: list
    run_timeout: float


def run(manifest_path, provider, out_dir, *, iterations=150, error_bound=None,
        seed=0, keep_workdirs=False, figures=True,
        traversal_depth=buildsys.DEFAULT_TRAVERSAL_DEPTH,
        run_timeout=buildsys.DEFAULT_RUN_TIMEOUT, platform_overrides=None,
        alternative_budget=approximator.ALTERNATIVE_BUDGET):
    """Execute the full workflow; returns the report dict.

    ``provider`` is any LLM provider object (scripted or HTTP).  The
    report JSON is written last, so a failed run leaves no report.
    """
    started = report_mod.now()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = out / "work"
    work.mkdir(exist_ok=True)
    simulator.clear_cache()

    # stage 1: manifest and platform
    man = manifest_mod.load_manifest(manifest_path)
    if error_bound is not None:
        if not 0.0 < error_bound <= 1.0:
            raise InvalidValue("error_bound", "must lie in (0, 1]")
        man = dataclasses.replace(man, error_bound=float(error_bound))
    profile = manifest_mod.platform_profile(man.platform, platform_overrides)
    arch = manifest_mod.PLATFORM_ARCHITECTURES[man.platform]
    buildsys.require_toolchain()

    input_ids = _unique_ids(man.input_traces)
    energy_traces = [simulator.load_trace(p) for p in man.energy_traces]

    # stage 2: call graph and approximation order
    records = codegraph.extract_functions(man.source_dir)
    graph = codegraph.build_call_graph(records)
    graph = codegraph.break_cycles(graph)
    graph = codegraph.approximation_order(graph)
    order = list(graph.order)
    (out / "fcg.dot").write_text(codegraph.dump_dot(graph))

    # stage 3: conversation 1 - summary, probes, selection
    conv1 = llm.start_conversation(prompts.render("conv1_system"), provider, "conv1")
    summary = approximator.summarize_codebase(conv1, _codebase_text(man.source_dir), order)
    selection = approximator.select_functions(conv1, order)
    selected = [n for n in order if selection.decisions[n] == "approximate"]

    outcomes = {
        name: FunctionOutcome(name=name, status=STATUS_KEPT, reason="not selected")
        for name in order if name not in selected
    }

    # stage 4: conversation 2 - plan and apply per selected function
    conv2 = llm.start_conversation(
        prompts.render("conv2_system", code_base_summary=summary.render()),
        provider, "conv2",
    )
    proposals = {}
    for name in selected:
        outcomes[name] = FunctionOutcome(name=name, status=STATUS_DISCARDED)
        outcomes[name].attempts = 1
        try:
            plan = approximator.plan_approximation(conv2, name, arch)
            proposals[name] = approximator.apply_approximation(conv2, name, plan)
        except _PROPOSAL_ERRORS as exc:
            proposals[name] = None
            outcomes[name].reason = f"proposal rejected: {exc}"

    # stage 5: conversation 3 - Makefile and original build
    conv3 = llm.start_conversation(prompts.render("conv3_system"), provider, "conv3")
    template = _stage_tree(man.source_dir, work / "template")
    buildsys.generate_makefile(conv3, template)
    check = _stage_tree(template, work / "buildcheck")
    build = buildsys.compile(check, conv=conv3)
    if not build.ok:
        raise CompileFailed(build.attempts, build.log)
    # repairs rewrote the copy's Makefile; carry the working one back
    shutil.copy2(check / "Makefile", template / "Makefile")
    makefile_text = (template / "Makefile").read_text()
    build_log = build.log
    if not keep_workdirs:
        shutil.rmtree(check, ignore_errors=True)

    # stage 6: validate each proposal; discards ask conv 2 for alternatives
    accepted = _stage_tree(template, work / "accepted")
    validated = []
    validation_logs = {}
    for name in selected:
        outcome = outcomes[name]
        patch = proposals[name]
        log_lines = []
        while patch is not None or outcome.attempts < alternative_budget:
            if patch is None:
                outcome.attempts += 1
                try:
                    patch = approximator.next_alternative(
                        conv2, name, arch, outcome.reason
                    )
                except _PROPOSAL_ERRORS as exc:
                    outcome.reason = f"proposal rejected: {exc}"
                    log_lines.append(outcome.reason)
                    continue
            vroot = work / "validate" / name / str(outcome.attempts)
            try:
                vreport = buildsys.validate_knob_ranges(
                    patch, accepted, man.input_traces, man.output_spec, vroot,
                    depth=traversal_depth, timeout=run_timeout,
                    keep_workdirs=keep_workdirs,
                )
            except (ValidationDiscard, SpanDrift, EmptySpace) as exc:
                outcome.reason = str(exc)
                log_lines.append(f"attempt {outcome.attempts}: {exc}")
                patch = None
                continue
            log_lines.extend(vreport.log)
            # pin each knob's default inside its safe interval
            knobs = tuple(
                dataclasses.replace(k, default=_clamp(k.default, *vreport.safe[k.name]))
                for k in patch.knobs
            )
            patch = dataclasses.replace(patch, knobs=knobs, status=STATUS_VALIDATED)
            outcome.status = STATUS_VALIDATED
            outcome.reason = ""
            outcome.patch = patch
            outcome.safe = vreport.safe
            validated.append(outcome)
            defaults = {k.name: k.default for k in knobs}
            staged = dataclasses.replace(
                patch, apx_code=approximator.set_knob_values(patch.apx_code, defaults)
            )
            approximator.integrate_patch(accepted, staged)
            break
        validation_logs[name] = log_lines

    # stage 7: baseline - instrumented original, per input and trace
    baseline_dir = _stage_tree(template, work / "baseline")
    buildsys.instrument_tree(baseline_dir)
    base_build = buildsys.compile(baseline_dir)
    if not base_build.ok:
        raise CompileFailed(base_build.attempts, base_build.log)
    base_digest = simulator.binary_hash(base_build.binary)
    references = {}
    work_units = {}
    for input_id, input_path in zip(input_ids, man.input_traces):
        res = buildsys.run(
            base_build.binary, input_path, baseline_dir / "run",
            timeout=run_timeout, output_path=man.output_spec.path,
        )
        if not res.ok:
            reason = "timeout" if res.timed_out else f"exit status {res.exit_status}"
            raise OriginalRunFailed(input_id, reason)
        if res.output is None:
            raise OriginalRunFailed(input_id, "no output file written")
        if res.work_units is None:
            raise OriginalRunFailed(input_id, "no work-unit count written")
        metrics.parse_output(res.output, man.output_spec.data_type)
        references[input_id] = res.output
        work_units[input_id] = res.work_units
    baseline_cycles = {}
    for input_id in input_ids:
        for trace in energy_traces:
            sim = simulator.cycles_for(
                work_units[input_id], trace, man.capacitance_farads, profile,
                base_digest,
            )
            if not sim.completed:
                raise BaselineIncomplete(trace.id)
            baseline_cycles[f"{input_id}|{trace.id}"] = sim.power_cycles

    # stage 8: tuning over validated knobs
    result = None
    if validated:
        knobs = []
        safe = {}
        for outcome in validated:
            for k in outcome.patch.knobs:
                scoped = f"{outcome.name}.{k.name}"
                knobs.append(dataclasses.replace(k, name=scoped))
                lo, hi = outcome.safe[k.name]
                safe[scoped] = (lo, hi)
        space = tuner.build_space(knobs, safe)
        ctx = _Context(
            manifest=man, profile=profile, template=template, work=work,
            makefile_text=makefile_text, input_ids=input_ids,
            energy_traces=energy_traces, references=references,
            baseline_cycles=baseline_cycles, validated=validated,
            run_timeout=run_timeout,
        )
        result = tuner.tune(_Evaluator(ctx), space, budget=iterations,
                            error_bound=man.error_bound, seed=seed)

    # stage 9: artifacts, then the report
    history_path = out / "history.csv"
    if result is not None:
        tuner.export_history(result, history_path)
        best = result.best
        final = {
            "e_m": best.e_m,
            "c_r": best.c_r,
            "objective": best.objective,
            "capped": best.capped,
            "reduction_percent": metrics.reduction_percent(best.c_r),
        }
        best_entry = {
            "iteration": best.iteration,
            "values": dict(sorted(best.values.items())),
            "e_m": best.e_m,
            "c_r": best.c_r,
            "objective": best.objective,
            "capped": best.capped,
        }
    else:
        _write_empty_history(history_path)
        value, capped = metrics.objective(0.0, 1.0, man.error_bound)
        final = {
            "e_m": 0.0, "c_r": 1.0, "objective": value, "capped": capped,
            "reduction_percent": 0.0,
        }
        best_entry = None

    _write_tuned_tree(out / "approximated", template, validated,
                      best_entry["values"] if best_entry else None)

    rendered = []
    if figures:
        rendered = report_mod.render_figures(
            result, energy_traces, out, error_bound=man.error_bound
        )

    conv_dir = out / "conversations"
    conv_dir.mkdir(exist_ok=True)
    for conv in (conv1, conv2, conv3):
        (conv_dir / f"{conv.id}.json").write_text(
            json.dumps(llm.conversation_to_dict(conv), indent=2, sort_keys=True) + "\n"
        )

    patch_dir = out / "patches"
    patch_dir.mkdir(exist_ok=True)
    for name in selected:
        outcome = outcomes[name]
        entry = outcome.report_entry()
        if outcome.patch is not None:
            entry["apx_code"] = outcome.patch.apx_code
            entry["plan"] = outcome.patch.plan_text
        (patch_dir / f"{name}.json").write_text(
            json.dumps(entry, indent=2, sort_keys=True) + "\n"
        )

    log_dir = out / "logs"
    log_dir.mkdir(exist_ok=True)
    (log_dir / "build.log").write_text(build_log or "(empty)\n")
    for name, lines in validation_logs.items():
        (log_dir / f"validate_{name}.log").write_text(
            "\n".join(lines) + "\n" if lines else "(no validation attempts)\n"
        )

    if not keep_workdirs:
        shutil.rmtree(work, ignore_errors=True)

    report = {
        "schema": REPORT_SCHEMA,
        "manifest": man.to_dict(),
        "error_bound": man.error_bound,
        "platform_profile": profile.to_dict(),
        "approximation_order": list(order),
        "selection": {
            "decisions": dict(sorted(selection.decisions.items())),
            "rationale": dict(sorted(selection.rationale.items())),
        },
        "functions": {n: outcomes[n].report_entry() for n in order},
        "baseline": {
            "work_units": dict(sorted(work_units.items())),
            "power_cycles": dict(sorted(baseline_cycles.items())),
        },
        "best": best_entry,
        "final": final,
        "seeds": {"tuner": seed},
        "iterations": {
            "budget": iterations,
            "used": result.budget_used if result is not None else 0,
        },
        "artifacts": {
            "history_csv": "history.csv",
            "approximated_source": "approximated",
            "conversations": "conversations",
            "patches": "patches",
            "call_graph": "fcg.dot",
            "figures": rendered,
        },
        "tool_versions": report_mod.tool_versions(),
        "metadata": report_mod.metadata(started, report_mod.now()),
    }
    report_mod.write_report(report, out / "report.json")
    return report


def _write_empty_history(path):
    import csv

    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(["iteration", "e_m", "c_r", "objective", "capped"])


def _write_tuned_tree(dest, template, validated, best_values):
    """The deliverable: the source tree with best knob values applied."""
    _stage_tree(template, dest)
    for outcome in validated:
        patch = outcome.patch
        if best_values is None:
            values = {k.name: k.default for k in patch.knobs}
        else:
            values = {
                k.name: best_values[f"{patch.function}.{k.name}"]
                for k in patch.knobs
            }
        staged = dataclasses.replace(
            patch, apx_code=approximator.set_knob_values(patch.apx_code, values)
        )
        approximator.integrate_patch(dest, staged)

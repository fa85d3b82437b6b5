"""Command-line entry points.

``checkmate run`` executes the whole workflow from a manifest and
writes the report, tuned sources, history CSV, and figures under the
output directory.  ``checkmate plot`` re-renders the progress figure
from a history CSV produced by an earlier run.

Exit codes: 0 success, 2 manifest, 3 LLM, 4 build, 5 validation,
6 simulation, 7 tuning, 1 anything else.
"""

import sys
from pathlib import Path

import click

from . import __version__, llm, pipeline, report as report_mod, tuner
from .errors import CheckmateError, InvalidValue, exit_code_for


@click.group()
@click.version_option(__version__, prog_name="checkmate")
def main():
    """Approximate a C codebase to cut power cycles under a user error
    bound, using an LLM for code transforms and Bayesian optimization
    for knob tuning."""


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidValue("platform-override", f"expected KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        try:
            overrides[key.strip()] = float(value)
        except ValueError:
            raise InvalidValue("platform-override", f"{key!r} needs a numeric value")
    return overrides or None


def _make_provider(kind, script, base_url, model):
    if kind == "scripted":
        if not script:
            raise InvalidValue("script", "--provider scripted requires --script")
        return llm.ScriptedProvider.from_file(script)
    return llm.HttpProvider(base_url=base_url, model=model)


@main.command("run")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Project manifest JSON.")
@click.option("--provider", "provider_kind",
              type=click.Choice(["http", "scripted"]), default="http",
              show_default=True, help="LLM provider backend.")
@click.option("--script", "script_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Canned-response file for --provider scripted.")
@click.option("--iterations", default=150, show_default=True, type=int,
              help="Tuning evaluation budget.")
@click.option("--error-bound", default=None, type=float,
              help="Override the manifest's error bound (0, 1].")
@click.option("--seed", default=0, show_default=True, type=int,
              help="Tuner seed, surfaced in the report.")
@click.option("--out", "out_dir", default="checkmate_out", show_default=True,
              type=click.Path(file_okay=False), help="Output directory.")
@click.option("--keep-workdirs", is_flag=True,
              help="Keep build/validation working trees for inspection.")
@click.option("--no-figures", is_flag=True, help="Skip figure rendering.")
@click.option("--depth", default=4, show_default=True, type=int,
              help="Knob-range validation traversal depth.")
@click.option("--run-timeout", default=10.0, show_default=True, type=float,
              help="Per-execution wall-clock timeout in seconds.")
@click.option("--platform-override", "platform_overrides", multiple=True,
              metavar="KEY=VALUE",
              help="Override a platform profile field (repeatable).")
@click.option("--llm-base-url", default="https://api.openai.com/v1",
              show_default=True, help="Chat-completion API base URL.")
@click.option("--llm-model", default="gpt-4o", show_default=True,
              help="Model name for the HTTP provider.")
def run_cmd(manifest_path, provider_kind, script_path, iterations, error_bound,
            seed, out_dir, keep_workdirs, no_figures, depth, run_timeout,
            platform_overrides, llm_base_url, llm_model):
    """Run the full pipeline on a manifest."""
    try:
        provider = _make_provider(provider_kind, script_path, llm_base_url, llm_model)
        report = pipeline.run(
            manifest_path,
            provider,
            out_dir,
            iterations=iterations,
            error_bound=error_bound,
            seed=seed,
            keep_workdirs=keep_workdirs,
            figures=not no_figures,
            traversal_depth=depth,
            run_timeout=run_timeout,
            platform_overrides=_parse_overrides(platform_overrides),
        )
    except CheckmateError as exc:
        click.echo(f"error [{exc.stage}]: {exc}", err=True)
        sys.exit(exit_code_for(exc))
    final = report["final"]
    click.echo(f"report: {Path(out_dir) / 'report.json'}")
    click.echo(
        "e_m={e:.4f}  c_r={c:.4f}  objective={o:.4f}  reduction={r:.1f}%".format(
            e=final["e_m"], c=final["c_r"], o=final["objective"],
            r=final["reduction_percent"],
        )
    )


@main.command("plot")
@click.option("--history", "history_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="History CSV from a previous run.")
@click.option("--out", "out_dir", default=".", show_default=True,
              type=click.Path(file_okay=False), help="Figure output directory.")
@click.option("--error-bound", default=None, type=float,
              help="Draw the error-bound line on the error panel.")
def plot_cmd(history_path, out_dir, error_bound):
    """Re-render the tuning progress figure from a history CSV."""
    try:
        _, rows = tuner.load_history(history_path)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if not rows:
        click.echo("error: history has no records to plot", err=True)
        sys.exit(1)
    records = [tuner.TuneRecord(**row) for row in rows]
    best = min(records, key=lambda r: (r.objective, r.iteration))
    path = report_mod.render_progress_figure(
        records, best, Path(out_dir) / "tuning_progress.png",
        error_bound=error_bound,
    )
    click.echo(str(path))


if __name__ == "__main__":
    main()

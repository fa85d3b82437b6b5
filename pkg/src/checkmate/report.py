"""Final run report and figures.

The report is a single JSON document with deterministic serialization:
keys sorted, floats via repr, one trailing newline.  Anything
time-dependent (wall-clock timestamps, elapsed seconds) lives under the
single ``metadata`` key so golden-file comparisons can mask exactly one
subtree and assert the rest byte-for-byte.

Figures are rendered from the tuning history next to the history CSV:
a three-panel progress chart (output error %, power-cycle ratio,
objective across iterations, best iteration marked) and one
voltage-over-time chart per energy trace.
"""

import datetime as _dt
import json
import platform as _platform
import shutil
import subprocess
from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
import scipy  # noqa: E402

from . import __version__  # noqa: E402

FIGURE_DPI = 110


def tool_versions():
    versions = {
        "checkmate": __version__,
        "python": _platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }
    for tool in ("gcc", "make"):
        if shutil.which(tool):
            try:
                out = subprocess.run(
                    [tool, "--version"], capture_output=True, text=True, timeout=10
                )
                first = out.stdout.splitlines()[0] if out.stdout else ""
                versions[tool] = first.strip()
            except (subprocess.SubprocessError, OSError):
                versions[tool] = "unknown"
    return versions


def metadata(started_at, finished_at):
    """The one time-dependent subtree of the report."""
    return {
        "started_at": started_at.isoformat(timespec="seconds"),
        "finished_at": finished_at.isoformat(timespec="seconds"),
        "elapsed_seconds": round((finished_at - started_at).total_seconds(), 3),
    }


def now():
    return _dt.datetime.now(_dt.timezone.utc)


def write_report(report, path):
    """Serialize deterministically; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def load_report(path):
    return json.loads(Path(path).read_text())


def masked(report):
    """Copy of a report dict with the time-dependent subtree blanked."""
    clone = json.loads(json.dumps(report))
    clone["metadata"] = None
    return clone


# -- figures -----------------------------------------------------------------

def render_progress_figure(history, best, path, error_bound=None):
    """Three panels across iterations: output error %, power-cycle
    ratio, objective; the best iteration is marked on each.

    ``history`` is a sequence of TuneRecord-like objects (iteration,
    e_m, c_r, objective); ``best`` one of them or None.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    iterations = [r.iteration for r in history]
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 3.4), dpi=FIGURE_DPI)
    panels = (
        ("Output error (%)", [100.0 * r.e_m for r in history]),
        ("Power-cycle ratio", [r.c_r for r in history]),
        ("Optimization metric", [r.objective for r in history]),
    )
    for ax, (label, series) in zip(axes, panels):
        ax.plot(iterations, series, lw=1.0, color="#1f6fb2", marker=".", ms=3)
        if best is not None:
            ax.axvline(best.iteration, color="#c23b22", lw=0.9, ls="--")
        ax.set_xlabel("Iteration")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    if error_bound is not None:
        axes[0].axhline(100.0 * error_bound, color="#777777", lw=0.9, ls=":")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_trace_figure(trace, path):
    """Voltage over time for one energy trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = np.arange(len(trace.voltages)) * trace.dt
    fig, ax = plt.subplots(figsize=(8.0, 2.6), dpi=FIGURE_DPI)
    ax.plot(t, trace.voltages, lw=0.8, color="#1f6fb2")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Source voltage (V)")
    ax.set_title(trace.id)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_figures(result, traces, out_dir, error_bound=None):
    """Render all figures for a run; returns relative paths.

    ``result`` may be None (no tuning happened); trace charts render
    regardless so the report always documents its energy input.
    """
    out_dir = Path(out_dir)
    rendered = []
    if result is not None and result.history:
        p = render_progress_figure(
            result.history, result.best, out_dir / "tuning_progress.png",
            error_bound=error_bound,
        )
        rendered.append(p.name)
    for trace in traces:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in trace.id)
        p = render_trace_figure(trace, out_dir / f"trace_{safe}.png")
        rendered.append(p.name)
    return rendered

"""Deterministic report serialization and figure rendering."""

import datetime
import json

from checkmate import report, simulator, tuner
from checkmate.tuner import Dimension, SearchSpace

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_report():
    return {
        "schema": "checkmate-report/1",
        "best": {"objective": 0.8, "values": {"knob1": 48}},
        "metadata": {"started_at": "now", "finished_at": "later", "elapsed_seconds": 1.5},
    }


def test_write_report_is_deterministic(tmp_path):
    path_a = report.write_report(sample_report(), tmp_path / "a.json")
    shuffled = dict(reversed(list(sample_report().items())))
    path_b = report.write_report(shuffled, tmp_path / "b.json")
    assert path_a.read_bytes() == path_b.read_bytes()
    text = path_a.read_text()
    assert text.endswith("}\n")
    # keys are sorted at every level
    assert text.index('"best"') < text.index('"metadata"') < text.index('"schema"')


def test_write_then_load_round_trips(tmp_path):
    original = sample_report()
    path = report.write_report(original, tmp_path / "nested" / "report.json")
    assert report.load_report(path) == original


def test_masked_blanks_only_metadata():
    original = sample_report()
    clone = report.masked(original)
    assert clone["metadata"] is None
    assert clone["best"] == original["best"]
    assert original["metadata"]["elapsed_seconds"] == 1.5  # input untouched
    assert report.masked(clone) == clone  # idempotent


def test_metadata_elapsed_from_timestamps():
    started = datetime.datetime(2026, 5, 1, 12, 0, 0, tzinfo=datetime.timezone.utc)
    finished = started + datetime.timedelta(seconds=90, milliseconds=250)
    meta = report.metadata(started, finished)
    assert meta["elapsed_seconds"] == 90.25
    assert meta["started_at"] == "2026-05-01T12:00:00+00:00"
    assert meta["finished_at"] == "2026-05-01T12:01:30+00:00"


def test_now_is_timezone_aware_utc():
    stamp = report.now()
    assert stamp.tzinfo is datetime.timezone.utc


def test_tool_versions_names_the_stack():
    versions = report.tool_versions()
    for key in ("checkmate", "python", "numpy", "scipy", "matplotlib", "gcc", "make"):
        assert key in versions
        assert versions[key]
    json.dumps(versions)  # must be serializable as-is


# -- figures -----------------------------------------------------------------------

def tuned_result():
    space = SearchSpace(dimensions=(Dimension("k", "Integer", 0.0, 15.0),))
    return tuner.tune(
        lambda values: (0.05, (values["k"] - 6) ** 2 / 64.0),
        space, budget=10, error_bound=0.3, seed=1,
    )


def test_render_progress_figure_writes_png(tmp_path):
    result = tuned_result()
    path = report.render_progress_figure(
        result.history, result.best, tmp_path / "figs" / "tuning_progress.png",
        error_bound=0.3,
    )
    assert path.exists()
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_render_trace_figure_writes_png(tmp_path):
    trace = simulator.constant_trace(3.3, 50, trace_id="bench")
    path = report.render_trace_figure(trace, tmp_path / "trace.png")
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_render_figures_names_all_outputs(tmp_path):
    result = tuned_result()
    traces = [
        simulator.constant_trace(3.3, 20, trace_id="energy"),
        simulator.constant_trace(2.8, 20, trace_id="weird trace/id"),
    ]
    names = report.render_figures(result, traces, tmp_path, error_bound=0.3)
    assert names == [
        "tuning_progress.png",
        "trace_energy.png",
        "trace_weird_trace_id.png",
    ]
    for name in names:
        assert (tmp_path / name).read_bytes()[:8] == PNG_MAGIC


def test_render_figures_without_tuning_result(tmp_path):
    traces = [simulator.constant_trace(3.3, 20, trace_id="energy")]
    names = report.render_figures(None, traces, tmp_path)
    assert names == ["trace_energy.png"]

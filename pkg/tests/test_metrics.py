"""Output parsers, accuracy classes, and the tuning objective."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from checkmate import metrics
from checkmate.errors import EmptyReference, TypeMismatch, ZeroReference


def pgm_text(rows, maxval=255):
    height = len(rows)
    width = len(rows[0])
    lines = [
        "P2",
        f"{width} {height}",
        str(maxval),
    ] + [str(int(p)) for row in rows for p in row]
    return "\n".join(lines) + "\n"


# -- parsers -----------------------------------------------------------------------

def test_parse_numeric_reads_one_value_per_line():
    values = metrics.parse_numeric(b"1.5\n\n-2\n 3 \n")
    assert values.tolist() == [1.5, -2.0, 3.0]


@pytest.mark.parametrize("payload", [b"abc\n", b"1\ntwo\n", b"\xff\xfe"])
def test_parse_numeric_rejects_garbage(payload):
    with pytest.raises(TypeMismatch):
        metrics.parse_numeric(payload)


def test_parse_boolean_accepts_only_bits():
    assert metrics.parse_boolean(b"1\n0\n1\n").tolist() == [1, 0, 1]
    for payload in (b"2\n", b"true\n", b"-1\n"):
        with pytest.raises(TypeMismatch):
            metrics.parse_boolean(payload)


def test_parse_pgm_reads_pixels_and_comments():
    text = "P2 # magic\n# whole-line comment\n2 2\n255\n1 2\n3 4\n"
    pixels, maxval = metrics.parse_pgm(text)
    assert maxval == 255
    assert pixels.tolist() == [[1.0, 2.0], [3.0, 4.0]]


@pytest.mark.parametrize(
    "text",
    [
        "P5\n2 2\n255\n1 2 3 4\n",
        "P2\n2 2\n",
        "P2\n2 2\n255\n1 2 3\n",
        "P2\n0 2\n255\n",
        "P2\n2 2\n255\n1 2 x 4\n",
        "",
    ],
)
def test_parse_pgm_rejects_malformed_images(text):
    with pytest.raises(TypeMismatch):
        metrics.parse_pgm(text)


def test_parse_output_dispatches_by_type():
    assert metrics.parse_output(b"2\n", "numeric").tolist() == [2.0]
    assert metrics.parse_output(b"hi there", "text") == "hi there"
    assert metrics.parse_output(b"1\n", "boolean").tolist() == [1]
    pixels, _ = metrics.parse_output(pgm_text([[7]]), "image")
    assert pixels.tolist() == [[7.0]]
    with pytest.raises(TypeMismatch):
        metrics.parse_output(b"", "audio")


# -- accuracy classes ----------------------------------------------------------------

def test_raw_absolute_error_uses_means():
    result = metrics.raw_absolute_error(b"2\n4\n", b"3\n")
    assert result.a_o == 3.0
    assert result.a_a == 3.0
    with pytest.raises(EmptyReference):
        metrics.raw_absolute_error(b"\n", b"3\n")
    with pytest.raises(TypeMismatch):
        metrics.raw_absolute_error(b"3\n", b"\n")


def test_normalized_r_squared_values():
    assert metrics.normalized_r_squared(b"1\n2\n3\n", b"1\n2\n3\n").a_a == 1.0
    # ss_res = 1 against ss_tot = 2
    assert metrics.normalized_r_squared(b"1\n2\n3\n", b"1\n2\n4\n").a_a == pytest.approx(0.5)
    # worse than the mean predictor clamps to zero
    assert metrics.normalized_r_squared(b"1\n2\n3\n", b"9\n-9\n9\n").a_a == 0.0
    # constant reference: exact match or nothing
    assert metrics.normalized_r_squared(b"5\n5\n", b"5\n5\n").a_a == 1.0
    assert metrics.normalized_r_squared(b"5\n5\n", b"5\n6\n").a_a == 0.0
    with pytest.raises(TypeMismatch):
        metrics.normalized_r_squared(b"1\n2\n", b"1\n")


def test_one_minus_wer_counts_word_edits():
    # substitution + deletion over four reference words
    result = metrics.one_minus_wer("a b c d", "a x c")
    assert result.a_a == pytest.approx(0.5)
    assert metrics.one_minus_wer("a b", "a b").a_a == 1.0
    # more edits than words floors at zero
    assert metrics.one_minus_wer("a", "x y z").a_a == 0.0
    with pytest.raises(EmptyReference):
        metrics.one_minus_wer("  ", "a")


def test_one_minus_pixel_error_fraction():
    ref = pgm_text([[1, 2], [3, 4]])
    cand = pgm_text([[1, 2], [3, 5]])
    assert metrics.one_minus_pixel_error(ref, ref).a_a == 1.0
    assert metrics.one_minus_pixel_error(ref, cand).a_a == pytest.approx(0.75)
    with pytest.raises(TypeMismatch):
        metrics.one_minus_pixel_error(ref, pgm_text([[1, 2, 3]]))


def test_ssim_identity_and_constant_images():
    ref = pgm_text([[10, 200], [60, 128]])
    assert metrics.ssim(ref, ref).a_a == pytest.approx(1.0)
    # constant images have zero variance, so SSIM reduces to the
    # luminance term (2*mu_x*mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
    flat_ref = pgm_text([[100, 100], [100, 100]])
    flat_cand = pgm_text([[50, 50], [50, 50]])
    c1 = (0.01 * 255) ** 2
    expected = (2 * 100 * 50 + c1) / (100**2 + 50**2 + c1)
    assert metrics.ssim(flat_ref, flat_cand).a_a == pytest.approx(expected)


def test_f1_oracle_counts():
    assert metrics.f1(b"1\n1\n0\n1\n0\n", b"1\n1\n1\n0\n0\n").a_a == pytest.approx(2 / 3)
    assert metrics.f1(b"0\n0\n", b"0\n0\n").a_a == 1.0
    assert metrics.f1(b"1\n1\n", b"0\n0\n").a_a == 0.0
    assert metrics.f1(b"0\n0\n", b"1\n0\n").a_a == 0.0
    with pytest.raises(TypeMismatch):
        metrics.f1(b"1\n", b"1\n0\n")


def test_score_dispatches_and_rejects_unknown_class():
    assert metrics.score("a b", "a b", "one_minus_wer").a_a == 1.0
    with pytest.raises(TypeMismatch):
        metrics.score("a", "a", "psnr")


# -- the metric ----------------------------------------------------------------------

def test_deviation_quotient():
    assert metrics.deviation(2.0, 1.5) == pytest.approx(0.25)
    assert metrics.deviation(2.0, 2.0) == 0.0
    assert metrics.deviation(-2.0, -1.0) == pytest.approx(0.5)
    with pytest.raises(ZeroReference):
        metrics.deviation(0.0, 1.0)


def test_deviation_or_cap_totalizes_zero_reference():
    assert metrics.deviation_or_cap(0.0, 0.0) == 0.0
    assert metrics.deviation_or_cap(0.0, 0.001) == 1.0
    assert metrics.deviation_or_cap(2.0, 1.5) == pytest.approx(0.25)


def test_cycle_ratio_and_reduction():
    assert metrics.cycle_ratio(59, 23) == pytest.approx(23 / 59)
    assert metrics.reduction_percent(0.5) == pytest.approx(50.0)
    assert metrics.reduction_percent(1.0) == 0.0
    with pytest.raises(ZeroReference):
        metrics.cycle_ratio(0, 5)


def test_objective_caps_strictly_above_bound():
    assert metrics.objective(0.30, 0.5, 0.30) == (0.8, False)
    value, capped = metrics.objective(0.300001, 0.5, 0.30)
    assert capped and value == pytest.approx(1.5)
    assert metrics.objective(0.0, 0.25, 1.0) == (0.25, False)


@pytest.mark.parametrize("bound", [0.0, -0.5, 1.0001, 2.0])
def test_objective_rejects_bad_bounds(bound):
    with pytest.raises(ValueError):
        metrics.objective(0.1, 0.5, bound)


def test_aggregate_means_then_objective():
    rows = [("t1|e1", 0.1, 0.5), ("t2|e1", 0.3, 0.7)]
    report = metrics.aggregate(rows, error_bound=0.5)
    assert report.e_m == pytest.approx(0.2)
    assert report.c_r == pytest.approx(0.6)
    assert report.objective == pytest.approx(0.8)
    assert not report.capped
    assert report.per_trace == tuple(rows)


def test_aggregate_caps_on_mean_deviation():
    rows = [("a", 0.9, 1.0), ("b", 0.1, 1.0)]
    report = metrics.aggregate(rows, error_bound=0.3)
    assert report.e_m == pytest.approx(0.5)
    assert report.capped
    assert report.objective == pytest.approx(2.0)


def test_aggregate_requires_rows():
    with pytest.raises(EmptyReference):
        metrics.aggregate([], error_bound=0.3)


# -- properties -----------------------------------------------------------------------

@given(
    a_o=st.floats(0.1, 1e6),
    a_a=st.floats(-1e6, 1e6),
    scale=st.floats(0.001, 1000),
)
def test_deviation_is_scale_invariant(a_o, a_a, scale):
    base = metrics.deviation(a_o, a_a)
    scaled = metrics.deviation(a_o * scale, a_a * scale)
    assert base >= 0.0
    assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)


@given(
    e_m=st.floats(0, 1),
    c_lo=st.floats(0, 2),
    c_delta=st.floats(0, 2),
    bound=st.floats(0.01, 1.0),
)
def test_objective_is_monotone_in_cycles(e_m, c_lo, c_delta, bound):
    low, low_capped = metrics.objective(e_m, c_lo, bound)
    high, high_capped = metrics.objective(e_m, c_lo + c_delta, bound)
    assert high >= low
    assert low_capped == high_capped == (e_m > bound)


@given(values=st.lists(st.integers(-50, 50), min_size=2, max_size=20))
def test_identical_numeric_outputs_score_perfect(values):
    text = "\n".join(str(v) for v in values) + "\n"
    assert metrics.normalized_r_squared(text, text).a_a == 1.0

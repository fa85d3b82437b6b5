"""Output accuracy, power-cycle ratio, and the optimization metric.

The deviation between the original and approximated program outputs is

    e_m = |a_o - a_a| / a_o

where a_o and a_a are per-class accuracy figures.  For the bounded
classes (r-squared, word/pixel similarity, SSIM, F1) the original
output is its own reference, so a_o = 1 and e_m reduces to 1 - a_a.
The raw_absolute_error class instead feeds raw numeric output values
into the quotient.  Power-cycle reduction is the plain ratio

    c_r = c_a / c_o

and the tuner's objective is e_m + c_r, with e_m capped to 1.0 whenever
it exceeds the user's error bound so that out-of-spec candidates rank
strictly worse than any in-spec one.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyReference, TypeMismatch, ZeroReference

ACCURACY_OK = 1e-12  # guard for float comparisons against zero


@dataclass(frozen=True)
class AccuracyScore:
    a_o: float
    a_a: float
    accuracy_class: str


@dataclass(frozen=True)
class MetricReport:
    e_m: float
    c_r: float
    objective: float
    capped: bool
    per_trace: tuple  # (trace id, e_m, c_r) rows


# -- output parsing ----------------------------------------------------------

def parse_numeric(data):
    """One value per line; blank lines skipped."""
    try:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as exc:
        raise TypeMismatch(f"numeric output not UTF-8: {exc}")
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values.append(float(line.strip()))
        except ValueError:
            raise TypeMismatch(f"line {lineno}: not a number: {line.strip()!r}")
    return np.asarray(values, dtype=float)


def parse_text(data):
    try:
        return data.decode("utf-8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as exc:
        raise TypeMismatch(f"text output not UTF-8: {exc}")


def parse_boolean(data):
    text = parse_text(data)
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        token = line.strip()
        if not token:
            continue
        if token not in ("0", "1"):
            raise TypeMismatch(f"line {lineno}: boolean output must be 0 or 1, got {token!r}")
        values.append(int(token))
    return np.asarray(values, dtype=int)


def parse_pgm(data):
    """Plain-text PGM (P2): returns (pixels ndarray, maxval)."""
    text = parse_text(data)
    tokens = []
    for line in text.splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens or tokens[0] != "P2":
        raise TypeMismatch("image output must be plain PGM (P2)")
    if len(tokens) < 4:
        raise TypeMismatch("truncated PGM header")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        pixels = np.asarray([int(t) for t in tokens[4:]], dtype=float)
    except ValueError as exc:
        raise TypeMismatch(f"malformed PGM: {exc}")
    if width <= 0 or height <= 0 or maxval <= 0:
        raise TypeMismatch("PGM dimensions and maxval must be positive")
    if pixels.size != width * height:
        raise TypeMismatch(
            f"PGM pixel count {pixels.size} != {width}x{height}"
        )
    return pixels.reshape(height, width), maxval


_PARSERS = {
    "numeric": parse_numeric,
    "text": parse_text,
    "image": parse_pgm,
    "boolean": parse_boolean,
}


def parse_output(data, data_type):
    """Parse raw program output per the declared data type.

    Raises TypeMismatch when the bytes do not form a valid value of
    that type (the validation pass treats that as a failing point).
    """
    try:
        parser = _PARSERS[data_type]
    except KeyError:
        raise TypeMismatch(f"unknown output data type {data_type!r}")
    return parser(data)


# -- accuracy classes ---------------------------------------------------------

def _levenshtein(a, b):
    """Word-level edit distance, linear memory."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, wa in enumerate(a, start=1):
        current = [i]
        for j, wb in enumerate(b, start=1):
            cost = 0 if wa == wb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def raw_absolute_error(reference, candidate):
    """Raw numeric a_o/a_a: multi-value outputs reduce by mean."""
    ref, cand = parse_numeric(reference), parse_numeric(candidate)
    if ref.size == 0:
        raise EmptyReference("reference numeric output has no values")
    if cand.size == 0:
        raise TypeMismatch("candidate numeric output has no values")
    return AccuracyScore(float(ref.mean()), float(cand.mean()), "raw_absolute_error")


def normalized_r_squared(reference, candidate):
    """max(0, R^2) of candidate against reference, clamped to [0, 1]."""
    ref, cand = parse_numeric(reference), parse_numeric(candidate)
    if ref.size == 0:
        raise EmptyReference("reference numeric output has no values")
    if cand.size != ref.size:
        raise TypeMismatch(f"value counts differ: {ref.size} vs {cand.size}")
    ss_res = float(np.sum((ref - cand) ** 2))
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    if ss_tot <= ACCURACY_OK:
        score = 1.0 if ss_res <= ACCURACY_OK else 0.0
    else:
        score = max(0.0, 1.0 - ss_res / ss_tot)
    return AccuracyScore(1.0, min(1.0, score), "normalized_r_squared")


def one_minus_wer(reference, candidate):
    """1 - word error rate, floored at zero; whitespace tokens."""
    ref_words = parse_text(reference).split()
    cand_words = parse_text(candidate).split()
    if not ref_words:
        raise EmptyReference("reference text has no words")
    wer = _levenshtein(ref_words, cand_words) / len(ref_words)
    return AccuracyScore(1.0, max(0.0, 1.0 - wer), "one_minus_wer")


def one_minus_pixel_error(reference, candidate):
    """1 - fraction of differing pixels; dimensions must match."""
    ref, ref_max = parse_pgm(reference)
    cand, cand_max = parse_pgm(candidate)
    if ref.shape != cand.shape:
        raise TypeMismatch(f"image dimensions differ: {ref.shape} vs {cand.shape}")
    differing = float(np.count_nonzero(ref != cand))
    return AccuracyScore(1.0, 1.0 - differing / ref.size, "one_minus_pixel_error")


def ssim(reference, candidate):
    """Global (single-window) SSIM with the standard stabilizers
    C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = reference dynamic range."""
    ref, ref_max = parse_pgm(reference)
    cand, cand_max = parse_pgm(candidate)
    if ref.shape != cand.shape:
        raise TypeMismatch(f"image dimensions differ: {ref.shape} vs {cand.shape}")
    L = float(ref_max)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    mu_x, mu_y = float(ref.mean()), float(cand.mean())
    var_x, var_y = float(ref.var()), float(cand.var())
    cov = float(((ref - mu_x) * (cand - mu_y)).mean())
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return AccuracyScore(1.0, float(np.clip(score, 0.0, 1.0)), "ssim")


def f1(reference, candidate):
    """F1 with reference as truth; no positives anywhere scores 1.0."""
    ref, cand = parse_boolean(reference), parse_boolean(candidate)
    if ref.size == 0:
        raise EmptyReference("reference boolean output has no values")
    if cand.size != ref.size:
        raise TypeMismatch(f"value counts differ: {ref.size} vs {cand.size}")
    tp = int(np.sum((ref == 1) & (cand == 1)))
    fp = int(np.sum((ref == 0) & (cand == 1)))
    fn = int(np.sum((ref == 1) & (cand == 0)))
    if tp == 0:
        score = 1.0 if (fp == 0 and fn == 0) else 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        score = 2 * precision * recall / (precision + recall)
    return AccuracyScore(1.0, float(score), "f1")


_CLASSES = {
    "raw_absolute_error": raw_absolute_error,
    "normalized_r_squared": normalized_r_squared,
    "one_minus_wer": one_minus_wer,
    "one_minus_pixel_error": one_minus_pixel_error,
    "ssim": ssim,
    "f1": f1,
}


def score(reference, candidate, accuracy_class):
    """Dispatch to the named accuracy class; outputs are raw bytes/str."""
    try:
        fn = _CLASSES[accuracy_class]
    except KeyError:
        raise TypeMismatch(f"unknown accuracy class {accuracy_class!r}")
    return fn(reference, candidate)


# -- the metric ----------------------------------------------------------------

def deviation(a_o, a_a):
    """e_m = |a_o - a_a| / a_o.  Raises ZeroReference at a_o == 0."""
    if a_o == 0:
        raise ZeroReference()
    return abs(a_o - a_a) / abs(a_o)


def deviation_or_cap(a_o, a_a):
    """Totalized deviation: at a_o == 0 this is 0 when a_a == 0, else 1."""
    if a_o == 0:
        return 0.0 if a_a == 0 else 1.0
    return deviation(a_o, a_a)


def cycle_ratio(c_o, c_a):
    """c_r = c_a / c_o."""
    if c_o <= 0:
        raise ZeroReference()
    return c_a / c_o


def reduction_percent(c_r):
    """Power-cycle reduction in percent for a given ratio."""
    return 100.0 * (1.0 - c_r)


def objective(e_m, c_r, error_bound):
    """(value, capped): e_m + c_r, with e_m capped to 1.0 above the bound."""
    if not 0.0 < error_bound <= 1.0:
        raise ValueError("error_bound must lie in (0, 1]")
    if e_m > error_bound:
        return 1.0 + c_r, True
    return e_m + c_r, False


def aggregate(per_trace, error_bound):
    """Mean e_m and c_r over per-(trace) rows, objective on the means.

    ``per_trace`` rows are (trace id, e_m, c_r); a trace whose run or
    simulation failed must be fed in as (id, 1.0, 1.0) by the caller -
    the declared worst-case penalty.
    """
    rows = tuple(per_trace)
    if not rows:
        raise EmptyReference("no traces to aggregate")
    e_m = float(np.mean([r[1] for r in rows]))
    c_r = float(np.mean([r[2] for r in rows]))
    value, capped = objective(e_m, c_r, error_bound)
    return MetricReport(e_m=e_m, c_r=c_r, objective=value, capped=capped, per_trace=rows)

"""Bayesian knob tuning over mixed integer/real search spaces.

The tuner minimizes objective(values) = e_m + c_r (with the error-bound
cap applied by the caller-supplied metric) using a Gaussian-process
surrogate with expected improvement:

* inputs are normalized to the unit cube and observations standardized;
* the surrogate uses a Matern 5/2 kernel,
  k(r) = (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) exp(-sqrt(5) r / l),
  with fixed length scale l = 0.25 and observation jitter 1e-6;
* initialization draws n_init = min(10, budget // 5) scrambled-Sobol
  points, then every further proposal maximizes
  EI(x) = (y* - mu(x) - xi) Phi(Z) + s(x) phi(Z),  Z = (y* - mu - xi)/s
  with xi = 0.01.

Integer dimensions are optimized by continuous relaxation: proposals
are rounded and clamped, and a proposal that repeats an evaluated point
is perturbed to the nearest unevaluated lattice point.  On all-integer
spaces of at most 4096 lattice points the acquisition simply enumerates
the unevaluated lattice, which makes the search exact once the budget
covers the space.  Evaluator failures are logged and scored 2.0 (the
worst possible objective) so the search continues around them.
"""

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from . import metrics
from .errors import EmptySpace, EvaluatorFailure

LENGTH_SCALE = 0.25
JITTER = 1e-6
XI = 0.01
ENUMERABLE_LATTICE = 4096
FAILURE_OBJECTIVE = 2.0


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str  # "Integer" | "Real"
    lo: float
    hi: float

    @property
    def is_integer(self):
        return self.kind == "Integer"

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple

    @property
    def names(self):
        return [d.name for d in self.dimensions]

    def lattice_size(self):
        """Number of lattice points, or None if any dimension is real."""
        size = 1
        for d in self.dimensions:
            if not d.is_integer:
                return None
            size *= int(d.hi) - int(d.lo) + 1
        return size


@dataclass(frozen=True)
class TuneRecord:
    iteration: int
    values: dict
    e_m: float
    c_r: float
    objective: float
    capped: bool
    failed: bool = False


@dataclass(frozen=True)
class TuneResult:
    best: TuneRecord
    history: tuple
    budget_used: int
    seed: int
    space: SearchSpace


def build_space(knobs, safe_intervals=None):
    """Search space from knob specs intersected with safe intervals.

    ``safe_intervals`` maps knob name -> (lo, hi) from range validation;
    knobs without an entry keep their declared range.  An empty
    intersection raises EmptySpace.
    """
    safe_intervals = safe_intervals or {}
    dims = []
    for knob in knobs:
        lo, hi = knob.lo, knob.hi
        if knob.name in safe_intervals:
            s_lo, s_hi = safe_intervals[knob.name]
            lo, hi = max(lo, s_lo), min(hi, s_hi)
        if knob.is_integer:
            lo, hi = math.ceil(lo), math.floor(hi)
        if lo > hi:
            raise EmptySpace(knob.name)
        dims.append(
            Dimension(name=knob.name, kind=knob.increment_kind, lo=float(lo), hi=float(hi))
        )
    if not dims:
        raise EmptySpace("<none>")
    return SearchSpace(dimensions=tuple(dims))


# -- surrogate -------------------------------------------------------------

class GaussianProcess:
    """Zero-mean GP with a fixed Matern 5/2 kernel on [0, 1]^d inputs."""

    def __init__(self, length_scale=LENGTH_SCALE, jitter=JITTER):
        self.length_scale = length_scale
        self.jitter = jitter
        self._x = None
        self._alpha = None
        self._chol = None

    @staticmethod
    def _kernel(a, b, length_scale):
        dists = np.sqrt(
            np.maximum(0.0, np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))
        )
        q = np.sqrt(5.0) * dists / length_scale
        return (1.0 + q + q**2 / 3.0) * np.exp(-q)

    def fit(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        k = self._kernel(x, x, self.length_scale)
        k[np.diag_indices_from(k)] += self.jitter
        self._chol = np.linalg.cholesky(k)
        self._alpha = np.linalg.solve(
            self._chol.T, np.linalg.solve(self._chol, y)
        )
        self._x = x

    def predict(self, x_star):
        x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
        k_star = self._kernel(x_star, self._x, self.length_scale)
        mean = k_star @ self._alpha
        v = np.linalg.solve(self._chol, k_star.T)
        var = np.maximum(1e-12, 1.0 + self.jitter - np.sum(v**2, axis=0))
        return mean, np.sqrt(var)


def expected_improvement(mean, std, best_y, xi=XI):
    imp = best_y - mean - xi
    z = np.zeros_like(imp, dtype=float)
    np.divide(imp, std, out=z, where=std > 0)
    ei = imp * norm.cdf(z) + std * norm.pdf(z)
    return np.where(std > 0, np.maximum(ei, 0.0), 0.0)


# -- point handling ----------------------------------------------------------

def _normalize(space, point):
    out = []
    for d, v in zip(space.dimensions, point):
        out.append(0.5 if d.width == 0 else (v - d.lo) / d.width)
    return out


def _denormalize(space, unit_point):
    out = []
    for d, u in zip(space.dimensions, unit_point):
        v = d.lo + float(u) * d.width
        if d.is_integer:
            v = int(min(d.hi, max(d.lo, round(v))))
        else:
            v = min(d.hi, max(d.lo, v))
        out.append(v)
    return tuple(out)


def _point_key(space, point):
    return tuple(
        int(v) if d.is_integer else float(v) for d, v in zip(space.dimensions, point)
    )


def _values_dict(space, point):
    return {
        d.name: (int(v) if d.is_integer else float(v))
        for d, v in zip(space.dimensions, point)
    }


def _full_lattice(space):
    axes = [
        range(int(d.lo), int(d.hi) + 1) for d in space.dimensions
    ]
    return [tuple(float(v) for v in p) for p in itertools.product(*axes)]


def _perturb_to_unevaluated(space, point, seen, rng):
    """Nearest unevaluated lattice point by growing L-inf rings."""
    base = [int(v) for v in point]
    for radius in range(1, 1 + max(int(d.width) for d in space.dimensions)):
        ring = []
        offsets = itertools.product(range(-radius, radius + 1), repeat=len(base))
        for off in offsets:
            if max(abs(o) for o in off) != radius:
                continue
            cand = tuple(
                float(min(d.hi, max(d.lo, b + o)))
                for d, b, o in zip(space.dimensions, base, off)
            )
            if _point_key(space, cand) not in seen:
                ring.append(cand)
        if ring:
            return sorted(ring)[0]
    return None


# -- the optimization loop ------------------------------------------------------

def tune(evaluator, space, budget, error_bound, seed=0):
    """Minimize e_m + c_r over the space within an evaluation budget.

    ``evaluator(values_dict) -> (e_m, c_r)``; EvaluatorFailure is caught,
    logged in the history, and scored FAILURE_OBJECTIVE.  Returns a
    TuneResult whose history holds every evaluation in order.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n_init = min(10, max(1, budget // 5))
    seq = np.random.SeedSequence(seed)
    init_seed, acq_seed = [int(s.generate_state(1)[0]) for s in seq.spawn(2)]
    rng = np.random.default_rng(acq_seed)

    all_integer = all(d.is_integer for d in space.dimensions)
    lattice = None
    size = space.lattice_size()
    if all_integer and size is not None and size <= ENUMERABLE_LATTICE:
        lattice = _full_lattice(space)

    history = []
    seen = set()
    x_unit = []
    y_raw = []

    def evaluate(point):
        values = _values_dict(space, point)
        iteration = len(history) + 1
        try:
            e_m, c_r = evaluator(values)
            value, capped = metrics.objective(e_m, c_r, error_bound)
            record = TuneRecord(
                iteration=iteration, values=values, e_m=float(e_m), c_r=float(c_r),
                objective=float(value), capped=capped,
            )
        except EvaluatorFailure:
            record = TuneRecord(
                iteration=iteration, values=values, e_m=1.0, c_r=1.0,
                objective=FAILURE_OBJECTIVE, capped=True, failed=True,
            )
        history.append(record)
        seen.add(_point_key(space, point))
        x_unit.append(_normalize(space, point))
        y_raw.append(record.objective)

    # space-filling initialization; draw a power of two to keep Sobol
    # balance (and scipy quiet), then truncate
    sobol = qmc.Sobol(d=len(space.dimensions), scramble=True, seed=init_seed)
    raw = sobol.random(1 << max(1, math.ceil(math.log2(n_init))))[:n_init]
    for unit_point in raw:
        point = _denormalize(space, unit_point)
        if _point_key(space, point) in seen:
            replacement = _fresh_point(space, seen, rng, lattice)
            if replacement is None:
                continue
            point = replacement
        evaluate(point)
        if len(history) >= budget:
            break

    # surrogate-guided proposals
    while len(history) < budget:
        if lattice is not None:
            candidates = [p for p in lattice if _point_key(space, p) not in seen]
            if not candidates:
                break  # space exhausted; budget_used < budget
        else:
            unit = qmc.Sobol(
                d=len(space.dimensions), scramble=True,
                seed=int(rng.integers(0, 2**31 - 1)),
            ).random(512)
            best_unit = x_unit[int(np.argmin(y_raw))]
            local = np.clip(
                np.asarray(best_unit) + rng.normal(0.0, 0.05, size=(64, len(best_unit))),
                0.0, 1.0,
            )
            pool = [_denormalize(space, u) for u in np.vstack([unit, local])]
            candidates = []
            keys = set()
            for p in pool:
                k = _point_key(space, p)
                if k not in seen and k not in keys:
                    candidates.append(p)
                    keys.add(k)
            if not candidates:
                candidates = pool[:1]

        y = np.asarray(y_raw)
        y_mean, y_std = float(y.mean()), float(y.std())
        y_std = y_std if y_std > 1e-12 else 1.0
        gp = GaussianProcess()
        gp.fit(np.asarray(x_unit), (y - y_mean) / y_std)
        cand_unit = np.asarray([_normalize(space, p) for p in candidates])
        mean, std = gp.predict(cand_unit)
        ei = expected_improvement(mean, std, float((y.min() - y_mean) / y_std))
        proposal = candidates[int(np.argmax(ei))]

        if _point_key(space, proposal) in seen:
            if all_integer:
                perturbed = _perturb_to_unevaluated(space, proposal, seen, rng)
                if perturbed is None:
                    break
                proposal = perturbed
            else:
                proposal = _fresh_point(space, seen, rng, lattice) or proposal
        evaluate(proposal)

    if not history:
        raise EvaluatorFailure({}, "no evaluations performed")
    best = min(history, key=lambda r: (r.objective, r.iteration))
    return TuneResult(
        best=best, history=tuple(history), budget_used=len(history), seed=seed,
        space=space,
    )


def _fresh_point(space, seen, rng, lattice):
    if lattice is not None:
        fresh = [p for p in lattice if _point_key(space, p) not in seen]
        return sorted(fresh)[0] if fresh else None
    for _ in range(128):
        point = _denormalize(space, rng.random(len(space.dimensions)))
        if _point_key(space, point) not in seen:
            return point
    return None


def export_history(result, path):
    """Write ``iteration,<knob names...>,e_m,c_r,objective,capped`` CSV."""
    names = result.space.names
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", *names, "e_m", "c_r", "objective", "capped"])
        for rec in result.history:
            writer.writerow(
                [
                    rec.iteration,
                    *[rec.values[n] for n in names],
                    repr(rec.e_m),
                    repr(rec.c_r),
                    repr(rec.objective),
                    "true" if rec.capped else "false",
                ]
            )


def load_history(path):
    """Parse an export_history CSV back into plain records (round-trip)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "iteration" or header[-4:] != ["e_m", "c_r", "objective", "capped"]:
            raise ValueError(f"not a tuning history CSV: {path}")
        names = header[1:-4]
        rows = []
        for row in reader:
            rows.append(
                {
                    "iteration": int(row[0]),
                    "values": {n: float(v) for n, v in zip(names, row[1:-4])},
                    "e_m": float(row[-4]),
                    "c_r": float(row[-3]),
                    "objective": float(row[-2]),
                    "capped": row[-1] == "true",
                }
            )
    return names, rows

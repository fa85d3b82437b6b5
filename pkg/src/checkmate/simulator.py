"""Intermittent-execution simulator over harvested-energy voltage traces.

The model is a desk-scale stand-in for a full device simulation, built
around counted work units instead of instruction timing:

* The storage capacitor charges from the trace's source voltage through
  an ideal diode (fixed drop) and a series resistance, one forward-Euler
  step per trace sample: ``i = max(0, (V_src - V_diode - V_cap) / R)``,
  and the capacitor voltage never exceeds ``V_src - V_diode`` nor
  discharges back into the source.

* The MCU turns on when the capacitor reaches ``v_on``.  Turn-on pins
  the start-of-cycle voltage at v_on; any overshoot above it is booked
  as boot overhead (this makes the per-cycle work budget a function of
  capacitance and thresholds alone, so growing the capacitor can never
  cost extra power cycles).

* While on, each executed work unit drains ``energy_per_work_unit``.
  At the downward crossing of ``v_warn`` a just-in-time checkpoint is
  taken - ``checkpoint_cost`` work-unit equivalents of energy - and all
  progress so far persists.  The checkpoint only succeeds if the
  capacitor stays at or above ``v_off`` afterwards.

* Below ``v_off`` the system is off and any un-checkpointed progress
  since the last checkpoint is lost.  Two consecutive on-periods that
  persist nothing raise NonProgressive; a capacitor that never reaches
  ``v_on`` raises InsufficientCapacitor.

Completion is reaching the program's total work count; the power-cycle
count at that moment is the simulation's primary output.
"""

import csv
import hashlib
import math
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import InsufficientCapacitor, MalformedTrace, NonProgressive

_REL_TOL = 1e-9


@dataclass(frozen=True)
class EnergyTrace:
    id: str
    dt: float
    voltages: tuple

    @property
    def duration(self):
        return self.dt * len(self.voltages)


@dataclass
class CapacitorState:
    capacitance: float  # farads
    voltage: float = 0.0

    @property
    def energy(self):
        return 0.5 * self.capacitance * self.voltage**2

    def set_energy(self, energy):
        self.voltage = math.sqrt(max(0.0, 2.0 * energy / self.capacitance))


@dataclass
class SimResult:
    power_cycles: int
    completed: bool
    work_done: int
    checkpoints_taken: int
    sim_time: float
    energy_in: float = 0.0
    energy_work: float = 0.0
    energy_checkpoint: float = 0.0
    energy_boot: float = 0.0


def load_trace(path):
    """Read a ``time_s,voltage_v`` CSV into an EnergyTrace.

    Timestamps must be strictly increasing and uniformly spaced (1e-9
    relative tolerance); voltages must be non-negative.
    """
    path = Path(path)
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["time_s", "voltage_v"]:
                raise MalformedTrace(path, 'header must be "time_s,voltage_v"')
            for lineno, row in enumerate(reader, start=2):
                if not row or not "".join(row).strip():
                    continue
                if len(row) != 2:
                    raise MalformedTrace(path, f"line {lineno}: expected 2 columns")
                try:
                    t, v = float(row[0]), float(row[1])
                except ValueError:
                    raise MalformedTrace(path, f"line {lineno}: non-numeric value")
                if v < 0:
                    raise MalformedTrace(path, f"line {lineno}: negative voltage")
                rows.append((t, v))
    except OSError as exc:
        raise MalformedTrace(path, str(exc))
    if len(rows) < 2:
        raise MalformedTrace(path, "need at least two samples")
    dt = rows[1][0] - rows[0][0]
    if dt <= 0:
        raise MalformedTrace(path, "timestamps must be strictly increasing")
    for i in range(1, len(rows)):
        step = rows[i][0] - rows[i - 1][0]
        if abs(step - dt) > _REL_TOL * max(abs(dt), 1.0):
            raise MalformedTrace(path, f"non-uniform timestep at sample {i}")
    return EnergyTrace(
        id=path.stem,
        dt=dt,
        voltages=tuple(v for _, v in rows),
    )


def constant_trace(voltage, samples, dt=1e-3, trace_id="constant"):
    """Synthetic flat trace, mainly for tests and fixtures."""
    return EnergyTrace(id=trace_id, dt=dt, voltages=(float(voltage),) * samples)


def step_charge(cap, source_voltage, profile, dt):
    """One Euler charging step; returns energy added to the capacitor.

    Current only ever flows into the capacitor: the diode blocks reverse
    discharge, and the voltage is clamped at ``source - diode_drop``.
    """
    ceiling = source_voltage - profile.diode_drop
    if ceiling <= cap.voltage:
        return 0.0
    before = cap.energy
    current = (ceiling - cap.voltage) / profile.series_resistance
    cap.voltage = min(ceiling, cap.voltage + current * dt / cap.capacitance)
    return cap.energy - before


def simulate(total_work, trace, cap, profile, audit=None):
    """Replay ``trace`` against a program needing ``total_work`` units.

    ``cap`` gives the storage capacitance and starting voltage (0 V for
    a cold start).  Returns a SimResult; raises NonProgressive or
    InsufficientCapacitor per the module model.  ``audit``, if given, is
    a list that receives per-step ``(energy_in, energy_spent,
    cap_energy)`` cumulative tuples for conservation checks.
    """
    total_work = int(total_work)
    e_unit = profile.energy_per_work_unit
    e_ckpt = profile.checkpoint_cost * e_unit
    e_off = 0.5 * cap.capacitance * profile.v_off**2

    result = SimResult(
        power_cycles=0, completed=False, work_done=0, checkpoints_taken=0, sim_time=0.0
    )
    persisted = 0
    volatile = 0
    on = False
    ckpt_armed = True
    persisted_at_on = 0
    zero_progress_periods = 0
    v_max = 0.0

    if total_work <= 0:
        result.completed = True
        return result

    for step, source in enumerate(trace.voltages):
        result.sim_time = (step + 1) * trace.dt
        result.energy_in += step_charge(cap, source, profile, trace.dt)
        v_max = max(v_max, cap.voltage)

        if not on and cap.voltage >= profile.v_on:
            on = True
            result.power_cycles += 1
            # turn-on regulation: pin the start-of-cycle voltage at v_on
            overshoot = cap.energy - 0.5 * cap.capacitance * profile.v_on**2
            if overshoot > 0:
                result.energy_boot += overshoot
                cap.voltage = profile.v_on
            volatile = 0
            ckpt_armed = True
            persisted_at_on = persisted

        if on:
            if cap.voltage > profile.v_warn:
                ckpt_armed = True
            while persisted + volatile < total_work:
                if cap.voltage < profile.v_off or cap.energy < e_unit:
                    break
                cap.set_energy(cap.energy - e_unit)
                result.energy_work += e_unit
                volatile += 1
                if ckpt_armed and cap.voltage <= profile.v_warn:
                    ckpt_armed = False
                    if cap.energy - e_ckpt >= e_off:
                        cap.set_energy(cap.energy - e_ckpt)
                        result.energy_checkpoint += e_ckpt
                        persisted += volatile
                        volatile = 0
                        result.checkpoints_taken += 1
            if persisted + volatile >= total_work:
                result.completed = True
                result.work_done = total_work
                if audit is not None:
                    audit.append(_audit_row(result, cap))
                return result
            if cap.voltage < profile.v_off:
                on = False
                volatile = 0
                if persisted == persisted_at_on:
                    zero_progress_periods += 1
                    if zero_progress_periods >= 2:
                        raise NonProgressive()
                else:
                    zero_progress_periods = 0

        if audit is not None:
            audit.append(_audit_row(result, cap))

    if result.power_cycles == 0:
        raise InsufficientCapacitor(profile.v_on, v_max)
    result.work_done = persisted
    return result


def _audit_row(result, cap):
    return (
        result.energy_in,
        result.energy_work + result.energy_checkpoint + result.energy_boot,
        cap.energy,
    )


# -- result caching -------------------------------------------------------------

_cache = {}
_cache_lock = threading.Lock()


def binary_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _profile_key(profile):
    return tuple(sorted(profile.to_dict().items()))


def cycles_for(total_work, trace, capacitance, profile, binary_digest):
    """Simulate with caching keyed by (binary hash, trace id, profile).

    ``total_work`` comes from one instrumented run of the binary whose
    hash is given; identical binaries on the same trace and profile hit
    the cache and return the same SimResult object contents.  The work
    count joins the key because one binary yields one count per program
    input, and different inputs must not collide.
    """
    key = (binary_digest, total_work, trace.id, capacitance, _profile_key(profile))
    with _cache_lock:
        if key in _cache:
            return _cache[key]
    result = simulate(total_work, trace, CapacitorState(capacitance), profile)
    with _cache_lock:
        return _cache.setdefault(key, result)


def clear_cache():
    with _cache_lock:
        _cache.clear()

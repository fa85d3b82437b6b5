"""Run manifest: the user-facing description of one approximation run.

A manifest is a single JSON object naming the six inputs the pipeline
needs (source tree, input traces, energy traces, accuracy class, error
bound, platform + capacitor) plus ``output_spec``, which tells the
harness where the compiled program writes its result and how to parse
it.  Relative paths are resolved against the manifest file's directory.
Unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    IncompatibleAccuracyClass,
    InvalidValue,
    MissingField,
    UnknownPlatform,
)

OUTPUT_DATA_TYPES = ("numeric", "text", "image", "boolean")

# accuracy classes per output data type
ACCURACY_CLASSES = {
    "numeric": ("raw_absolute_error", "normalized_r_squared"),
    "text": ("one_minus_wer",),
    "image": ("one_minus_pixel_error", "ssim"),
    "boolean": ("f1",),
}

PLATFORMS = ("msp430-class", "cortex-m-class")

_REQUIRED = (
    "source_dir",
    "input_traces",
    "energy_traces",
    "accuracy_class",
    "platform",
    "capacitor_uF",
    "output_spec",
)
_OPTIONAL = ("error_bound",)

DEFAULT_ERROR_BOUND = 0.30


@dataclass(frozen=True)
class OutputSpec:
    """Where the program writes its result and how to parse it."""

    path: str
    data_type: str


@dataclass(frozen=True)
class ProjectManifest:
    source_dir: Path
    input_traces: tuple
    energy_traces: tuple
    accuracy_class: str
    error_bound: float
    platform: str
    capacitor_uF: float
    output_spec: OutputSpec

    def to_dict(self):
        return {
            "source_dir": str(self.source_dir),
            "input_traces": [str(p) for p in self.input_traces],
            "energy_traces": [str(p) for p in self.energy_traces],
            "accuracy_class": self.accuracy_class,
            "error_bound": self.error_bound,
            "platform": self.platform,
            "capacitor_uF": self.capacitor_uF,
            "output_spec": {
                "path": self.output_spec.path,
                "data_type": self.output_spec.data_type,
            },
        }

    @property
    def capacitance_farads(self):
        return self.capacitor_uF * 1e-6


@dataclass(frozen=True)
class PlatformProfile:
    """Energy model constants for one target platform.

    Voltages are thresholds on the storage capacitor: the MCU turns on
    at ``v_on``, takes a just-in-time checkpoint when the voltage falls
    to ``v_warn``, and browns out below ``v_off``.  ``checkpoint_cost``
    is expressed in work-unit equivalents of energy.
    """

    name: str
    energy_per_work_unit: float  # joules per counted work unit
    checkpoint_cost: float       # work-unit equivalents per checkpoint
    v_on: float = 2.8
    v_warn: float = 2.2
    v_off: float = 1.8
    diode_drop: float = 0.3
    series_resistance: float = 100.0  # ohms

    def __post_init__(self):
        if not (self.v_off < self.v_warn < self.v_on):
            raise InvalidValue("platform", "thresholds must satisfy v_off < v_warn < v_on")
        for fname in ("energy_per_work_unit", "series_resistance"):
            if getattr(self, fname) <= 0:
                raise InvalidValue(fname, "must be > 0")
        if self.checkpoint_cost < 0:
            raise InvalidValue("checkpoint_cost", "must be >= 0")
        if self.diode_drop < 0:
            raise InvalidValue("diode_drop", "must be >= 0")

    def to_dict(self):
        return {
            "name": self.name,
            "energy_per_work_unit": self.energy_per_work_unit,
            "checkpoint_cost": self.checkpoint_cost,
            "v_on": self.v_on,
            "v_warn": self.v_warn,
            "v_off": self.v_off,
            "diode_drop": self.diode_drop,
            "series_resistance": self.series_resistance,
        }


# Invented defaults; the voltage thresholds and diode drop are shared,
# per-work-unit energy and checkpoint cost differ by platform class.
_PLATFORM_DEFAULTS = {
    "msp430-class": dict(energy_per_work_unit=2.0e-7, checkpoint_cost=25.0),
    "cortex-m-class": dict(energy_per_work_unit=5.0e-7, checkpoint_cost=40.0),
}

# human-facing architecture names used in prompt rendering
PLATFORM_ARCHITECTURES = {
    "msp430-class": "MSP430",
    "cortex-m-class": "ARM Cortex-M",
}


def platform_profile(platform, overrides=None):
    """Profile for a platform name, with optional field overrides."""
    if platform not in _PLATFORM_DEFAULTS:
        raise UnknownPlatform(platform)
    profile = PlatformProfile(name=platform, **_PLATFORM_DEFAULTS[platform])
    if overrides:
        allowed = set(profile.to_dict()) - {"name"}
        unknown = set(overrides) - allowed
        if unknown:
            raise InvalidValue("platform_override", f"unknown fields {sorted(unknown)}")
        try:
            profile = replace(profile, **{k: float(v) for k, v in overrides.items()})
        except (TypeError, ValueError) as exc:
            raise InvalidValue("platform_override", str(exc))
    return profile


def _require(data, key):
    if key not in data:
        raise MissingField(key)
    return data[key]


def _check_paths(name, raw, base):
    if not isinstance(raw, list) or not raw:
        raise InvalidValue(name, "must be a non-empty list of paths")
    out = []
    for entry in raw:
        if not isinstance(entry, str):
            raise InvalidValue(name, f"path entries must be strings, got {entry!r}")
        p = (base / entry).resolve() if not Path(entry).is_absolute() else Path(entry)
        if not p.exists():
            raise InvalidValue(name, f"path does not exist: {p}")
        out.append(p)
    return tuple(out)


def parse_manifest(data, base_dir):
    """Validate a decoded manifest object against ``base_dir``."""
    if not isinstance(data, dict):
        raise InvalidValue("manifest", "top level must be a JSON object")
    unknown = set(data) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise InvalidValue("manifest", f"unknown keys {sorted(unknown)}")
    base = Path(base_dir)

    raw_src = _require(data, "source_dir")
    if not isinstance(raw_src, str):
        raise InvalidValue("source_dir", "must be a string path")
    source_dir = (base / raw_src).resolve() if not Path(raw_src).is_absolute() else Path(raw_src)
    if not source_dir.is_dir():
        raise InvalidValue("source_dir", f"not a directory: {source_dir}")

    input_traces = _check_paths("input_traces", _require(data, "input_traces"), base)
    energy_traces = _check_paths("energy_traces", _require(data, "energy_traces"), base)

    accuracy_class = _require(data, "accuracy_class")
    all_classes = {c for group in ACCURACY_CLASSES.values() for c in group}
    if accuracy_class not in all_classes:
        raise InvalidValue("accuracy_class", f"must be one of {sorted(all_classes)}")

    error_bound = data.get("error_bound", DEFAULT_ERROR_BOUND)
    if not isinstance(error_bound, (int, float)) or isinstance(error_bound, bool):
        raise InvalidValue("error_bound", "must be a number")
    error_bound = float(error_bound)
    if not (0.0 < error_bound <= 1.0):
        raise InvalidValue("error_bound", "must lie in (0, 1]")

    platform = _require(data, "platform")
    if platform not in PLATFORMS:
        raise UnknownPlatform(platform)

    capacitor = _require(data, "capacitor_uF")
    if not isinstance(capacitor, (int, float)) or isinstance(capacitor, bool):
        raise InvalidValue("capacitor_uF", "must be a number")
    capacitor = float(capacitor)
    if capacitor <= 0:
        raise InvalidValue("capacitor_uF", "must be > 0")

    raw_out = _require(data, "output_spec")
    if not isinstance(raw_out, dict):
        raise InvalidValue("output_spec", "must be an object")
    if set(raw_out) != {"path", "data_type"}:
        raise InvalidValue("output_spec", 'must have exactly the keys "path" and "data_type"')
    out_path, data_type = raw_out["path"], raw_out["data_type"]
    if not isinstance(out_path, str) or not out_path or Path(out_path).is_absolute():
        raise InvalidValue("output_spec", "path must be a relative path string")
    if data_type not in OUTPUT_DATA_TYPES:
        raise InvalidValue("output_spec", f"data_type must be one of {OUTPUT_DATA_TYPES}")
    if accuracy_class not in ACCURACY_CLASSES[data_type]:
        raise IncompatibleAccuracyClass(accuracy_class, data_type)

    return ProjectManifest(
        source_dir=source_dir,
        input_traces=input_traces,
        energy_traces=energy_traces,
        accuracy_class=accuracy_class,
        error_bound=error_bound,
        platform=platform,
        capacitor_uF=capacitor,
        output_spec=OutputSpec(path=out_path, data_type=data_type),
    )


def load_manifest(path):
    """Load and validate a manifest file.

    Loading is idempotent: serializing a loaded manifest with
    ``to_dict`` and parsing it again yields an equal manifest, because
    all paths are resolved to absolute form on first load.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidValue("manifest", f"cannot read {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidValue("manifest", f"not valid JSON: {exc}")
    return parse_manifest(data, path.parent)

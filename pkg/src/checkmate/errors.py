"""Exception hierarchy.

Every error carries a ``stage`` attribute naming the pipeline stage it
belongs to; the CLI maps stages to exit codes (manifest/input 2, llm 3,
build 4, validation 5, simulation 6, tuning 7).
"""


class CheckmateError(Exception):
    stage = "pipeline"


# -- manifest / input stage (exit 2) ----------------------------------------

class ManifestError(CheckmateError):
    stage = "manifest"


class MissingField(ManifestError):
    def __init__(self, name):
        super().__init__(f"manifest is missing required field {name!r}")
        self.name = name


class InvalidValue(ManifestError):
    def __init__(self, name, reason):
        super().__init__(f"manifest field {name!r} invalid: {reason}")
        self.name = name
        self.reason = reason


class IncompatibleAccuracyClass(ManifestError):
    def __init__(self, accuracy_class, data_type):
        super().__init__(
            f"accuracy class {accuracy_class!r} is not defined for "
            f"output data type {data_type!r}"
        )
        self.accuracy_class = accuracy_class
        self.data_type = data_type


class UnknownPlatform(ManifestError):
    def __init__(self, platform):
        super().__init__(f"unknown platform {platform!r}")
        self.platform = platform


class CodeGraphError(CheckmateError):
    stage = "manifest"


class ParseFailure(CodeGraphError):
    def __init__(self, file, line, reason):
        super().__init__(f"{file}:{line}: {reason}")
        self.file = file
        self.line = line
        self.reason = reason


class NoFunctionsFound(CodeGraphError):
    def __init__(self, source_dir):
        super().__init__(f"no function definitions found under {source_dir}")
        self.source_dir = source_dir


class CycleRemains(CodeGraphError):
    def __init__(self, nodes):
        super().__init__(f"call graph still cyclic after edge removal: {sorted(nodes)}")
        self.nodes = nodes


# -- llm / approximation stage (exit 3) --------------------------------------

class LlmError(CheckmateError):
    stage = "llm"


class ProviderError(LlmError):
    def __init__(self, reason):
        super().__init__(f"provider failure: {reason}")
        self.reason = reason


class RetriesExhausted(LlmError):
    def __init__(self, attempts, last_error):
        super().__init__(f"provider still failing after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class ScriptExhausted(LlmError):
    def __init__(self):
        super().__init__("scripted provider has no responses left")


class NoJsonFound(LlmError):
    def __init__(self):
        super().__init__("no balanced JSON object found in response")


class SchemaMismatch(LlmError):
    def __init__(self, field, reason="missing or malformed"):
        super().__init__(f"response JSON field {field!r}: {reason}")
        self.field = field
        self.reason = reason


class UnknownTemplate(LlmError):
    def __init__(self, template_id):
        super().__init__(f"unknown prompt template {template_id!r}")
        self.template_id = template_id


class UnresolvedPlaceholder(LlmError):
    def __init__(self, template_id, placeholder):
        super().__init__(f"template {template_id!r} rendered with unresolved {{{placeholder}}}")
        self.template_id = template_id
        self.placeholder = placeholder


class SummaryFailed(LlmError):
    def __init__(self, reason):
        super().__init__(f"codebase summary exchange failed: {reason}")
        self.reason = reason


class SelectionFailed(LlmError):
    def __init__(self, reason):
        super().__init__(f"function selection exchange failed: {reason}")
        self.reason = reason


class ApproximatorError(CheckmateError):
    stage = "llm"


class KnobProtocolViolation(ApproximatorError):
    def __init__(self, reason):
        super().__init__(f"knob protocol violation: {reason}")
        self.reason = reason


class UnknownKnob(ApproximatorError):
    def __init__(self, name):
        super().__init__(f"knob {name!r} not declared in the knob block")
        self.name = name


class SpanDrift(ApproximatorError):
    def __init__(self, function):
        super().__init__(f"function {function!r} not found in working copy")
        self.function = function


class AlternativesExhausted(ApproximatorError):
    def __init__(self, function, attempts):
        super().__init__(f"no viable approximation for {function!r} after {attempts} attempts")
        self.function = function
        self.attempts = attempts


# -- build stage (exit 4) ----------------------------------------------------

class BuildError(CheckmateError):
    stage = "build"


class ToolchainMissing(BuildError):
    def __init__(self, tool):
        super().__init__(f"required build tool {tool!r} not found on PATH")
        self.tool = tool


class SpawnFailure(BuildError):
    def __init__(self, reason):
        super().__init__(f"failed to spawn process: {reason}")
        self.reason = reason


class CompileFailed(BuildError):
    def __init__(self, attempts, log):
        super().__init__(f"build still failing after {attempts} attempts")
        self.attempts = attempts
        self.log = log


class OriginalRunFailed(BuildError):
    """The unmodified program must run cleanly on every declared input."""

    def __init__(self, input_id, reason):
        super().__init__(f"original program failed on input {input_id!r}: {reason}")
        self.input_id = input_id
        self.reason = reason


# -- validation stage (exit 5) ------------------------------------------------

class ValidationError(CheckmateError):
    stage = "validation"


class ValidationDiscard(ValidationError):
    def __init__(self, function, reason):
        super().__init__(f"approximation of {function!r} discarded: {reason}")
        self.function = function
        self.reason = reason


# -- simulation stage (exit 6) -------------------------------------------------

class SimulationError(CheckmateError):
    stage = "simulation"


class MalformedTrace(SimulationError):
    def __init__(self, path, reason):
        super().__init__(f"energy trace {path}: {reason}")
        self.path = path
        self.reason = reason


class NonProgressive(SimulationError):
    def __init__(self):
        super().__init__(
            "two consecutive on-periods persisted zero work; "
            "the program cannot make progress on this trace"
        )


class InsufficientCapacitor(SimulationError):
    def __init__(self, v_on, v_max):
        super().__init__(
            f"capacitor never reached the turn-on threshold "
            f"({v_max:.3f} V peak vs v_on {v_on:.3f} V)"
        )
        self.v_on = v_on
        self.v_max = v_max


class BaselineIncomplete(SimulationError):
    def __init__(self, trace_id):
        super().__init__(f"original program does not complete on energy trace {trace_id!r}")
        self.trace_id = trace_id


# -- metrics --------------------------------------------------------------------

class MetricsError(CheckmateError):
    stage = "simulation"


class ZeroReference(MetricsError):
    def __init__(self):
        super().__init__("reference accuracy a_o is zero; deviation undefined")


class TypeMismatch(MetricsError):
    def __init__(self, reason):
        super().__init__(f"outputs not comparable: {reason}")
        self.reason = reason


class EmptyReference(MetricsError):
    def __init__(self, reason="reference output is empty"):
        super().__init__(reason)


# -- tuning stage (exit 7) ---------------------------------------------------------

class TunerError(CheckmateError):
    stage = "tuning"


class EmptySpace(TunerError):
    def __init__(self, name):
        super().__init__(f"search space for knob {name!r} is empty after range intersection")
        self.name = name


class EvaluatorFailure(TunerError):
    def __init__(self, values, reason):
        super().__init__(f"evaluator failed at {values}: {reason}")
        self.values = values
        self.reason = reason


EXIT_CODES = {
    "ok": 0,
    "manifest": 2,
    "llm": 3,
    "build": 4,
    "validation": 5,
    "simulation": 6,
    "tuning": 7,
    "pipeline": 1,
}


def exit_code_for(error):
    """Exit code for a CheckmateError per its pipeline stage."""
    return EXIT_CODES.get(getattr(error, "stage", "pipeline"), 1)

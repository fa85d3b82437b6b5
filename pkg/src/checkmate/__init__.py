"""Automated approximation of C programs for intermittent power.

Given a C codebase and a manifest describing its inputs, output
contract, energy traces, and hardware profile, the pipeline asks an
LLM to approximate selected functions, validates the safe ranges of the
exposed knobs by execution, and tunes knob values with Bayesian
optimization to minimize power cycles under a user error bound.
"""

__version__ = "0.1.0"

from .errors import CheckmateError, EXIT_CODES, exit_code_for  # noqa: F401
from .manifest import ProjectManifest, load_manifest, platform_profile  # noqa: F401

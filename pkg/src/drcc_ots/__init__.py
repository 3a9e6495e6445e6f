"""Distributionally robust chance-constrained optimal transmission switching."""
from .case import CASE_SCHEMA_VERSION
from .evaluate import REPORT_SCHEMA_VERSION
from .reformulate.problem import SOLUTION_SCHEMA_VERSION
from .uncertainty import AMBIGUITY_SCHEMA_VERSION, SCENARIO_SCHEMA_VERSION

__version__ = "0.1.0"

SCHEMA_VERSIONS = {
    "case": CASE_SCHEMA_VERSION,
    "scenario": SCENARIO_SCHEMA_VERSION,
    "ambiguity": AMBIGUITY_SCHEMA_VERSION,
    "solution": SOLUTION_SCHEMA_VERSION,
    "report": REPORT_SCHEMA_VERSION,
}

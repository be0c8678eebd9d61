"""Richardson maturity estimate from a model and its rule outcomes."""

from __future__ import annotations

from collections.abc import Sequence

from restrule.checks.engine import RuleOutcome
from restrule.model import CanonicalApiModel


def estimate_maturity(model: CanonicalApiModel, outcomes: Sequence[RuleOutcome]) -> int:
    """Level 0-3.

    0: a single endpoint that only receives POST (everything tunneled).
    1: several resources, but operations still named in URIs or one verb only.
    2: resources plus verbs and status codes (no CRUD names, no tunneling,
       at least two methods and two status classes).
    3: level 2 plus hypermedia links in some response body.
    """
    methods = {op.method for op in model.operations}
    if len(model.resources) <= 1 and methods <= {"POST"}:
        return 0
    violated = {o.rule_id for o in outcomes if o.outcome == "violation"}
    classes = {code // 100 for op in model.operations for code in op.responses}
    if violated & {14, 17} or len(methods) < 2 or len(classes) < 2:
        return 1
    if any(d.body_schema is not None and d.body_schema.hypermedia_hint
           for op in model.operations for d in op.all_responses()):
        return 3
    return 2

"""Rule checkers and the evaluation engine."""

from __future__ import annotations

from restrule.catalog import RuleCatalog, default_catalog
from restrule.checks.engine import (
    OUTCOMES,
    SEVERITIES,
    CheckResult,
    Context,
    Finding,
    RuleOutcome,
    evaluate,
    evaluate_rule,
    make_context,
    registered_rules,
)
from restrule.checks.maturity import estimate_maturity
from restrule.config import Config
from restrule.model import CanonicalApiModel


def diff_concepts(old_model: CanonicalApiModel, new_model: CanonicalApiModel,
                  catalog: RuleCatalog | None = None, config: Config | None = None) -> RuleOutcome:
    """Rule-74 outcome for moving from ``old_model`` to ``new_model``."""
    catalog = catalog or default_catalog()
    ctx = make_context(new_model, None, config, baseline=old_model)
    return evaluate_rule(catalog[74], ctx)


__all__ = [
    "OUTCOMES",
    "SEVERITIES",
    "CheckResult",
    "Context",
    "Finding",
    "RuleOutcome",
    "diff_concepts",
    "estimate_maturity",
    "evaluate",
    "evaluate_rule",
    "registered_rules",
]

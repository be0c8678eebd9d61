"""Quality-attribute scores and the evaluation report."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from restrule.catalog import Importance, QaAttribute, RuleCatalog
from restrule.checks.engine import RuleOutcome
from restrule.checks.maturity import estimate_maturity
from restrule.model import CanonicalApiModel

SCHEMA_VERSION = "1.0"

# importance weights for the violated-share score (a design choice)
WEIGHTS = {Importance.HIGH: 3, Importance.MEDIUM: 2, Importance.LOW: 1}

SCORED_OUTCOMES = ("pass", "violation")
FAIL_ON = ("error", "warning", "never")


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationReport:
    api_title: str
    qa_scores: Mapping[QaAttribute, float | None]  # None: not applicable
    maturity_level: int
    outcomes: tuple[RuleOutcome, ...]
    summary_counts: Mapping[str, int]
    source: str = ""
    warnings: tuple[str, ...] = ()
    rule_meta: Mapping[int, Mapping[str, str]] = field(default_factory=dict, compare=False)

    def findings(self):
        return [f for o in self.outcomes for f in o.findings]

    def to_json(self) -> dict[str, Any]:
        outcomes = []
        for o in self.outcomes:
            entry = o.to_json()
            meta = self.rule_meta.get(o.rule_id)
            if meta:
                entry = {"rule_id": o.rule_id, **meta, **{k: v for k, v in entry.items() if k != "rule_id"}}
            outcomes.append(entry)
        return {
            "schema_version": SCHEMA_VERSION,
            "api_title": self.api_title,
            "source": self.source,
            "maturity_level": self.maturity_level,
            "qa_scores": {q.value: ("not_applicable" if s is None else s) for q, s in self.qa_scores.items()},
            "summary": dict(self.summary_counts),
            "warnings": list(self.warnings),
            "outcomes": outcomes,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> EvaluationReport:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ScoringError(f"unsupported report schema {d.get('schema_version')!r}")
        scores = {QaAttribute(k): (None if v == "not_applicable" else float(v)) for k, v in d["qa_scores"].items()}
        meta = {}
        for o in d["outcomes"]:
            extra = {k: o[k] for k in ("importance", "text") if k in o}
            if extra:
                meta[int(o["rule_id"])] = extra
        return cls(
            api_title=d["api_title"],
            qa_scores=scores,
            maturity_level=int(d["maturity_level"]),
            outcomes=tuple(RuleOutcome.from_json(o) for o in d["outcomes"]),
            summary_counts=dict(d["summary"]),
            source=d.get("source", ""),
            warnings=tuple(d.get("warnings", ())),
            rule_meta=meta,
        )


def qa_scores(outcomes: Iterable[RuleOutcome], catalog: RuleCatalog) -> dict[QaAttribute, float | None]:
    """score(q) = 1 - violated weight / applicable weight over rules impacting q.

    Only pass/violation outcomes count; a QA without any is not applicable.
    """
    totals = {q: 0 for q in QaAttribute}
    violated = {q: 0 for q in QaAttribute}
    for o in outcomes:
        rule = catalog.get(o.rule_id)
        if rule is None:
            raise ScoringError(f"outcome references rule {o.rule_id}, which is not in the catalog")
        if o.outcome not in SCORED_OUTCOMES:
            continue
        w = WEIGHTS[rule.importance]
        for q in rule.qa_impact:
            totals[q] += w
            if o.outcome == "violation":
                violated[q] += w
    return {q: (None if totals[q] == 0 else 1 - violated[q] / totals[q]) for q in QaAttribute}


def summary_counts(outcomes: Iterable[RuleOutcome]) -> dict[str, int]:
    outcomes = list(outcomes)
    counts = {"errors": 0, "warnings": 0, "infos": 0}
    key = {"error": "errors", "warning": "warnings", "info": "infos"}
    for o in outcomes:
        for f in o.findings:
            counts[key[f.severity]] += 1
    counts["needs_dynamic"] = sum(1 for o in outcomes if o.outcome == "needs_dynamic")
    counts["not_applicable"] = sum(1 for o in outcomes if o.outcome == "not_applicable")
    return counts


def score(
    outcomes: Sequence[RuleOutcome],
    catalog: RuleCatalog,
    model: CanonicalApiModel | None = None,
    *,
    maturity_level: int | None = None,
    api_title: str | None = None,
    source: str = "",
    warnings: Iterable[str] = (),
) -> EvaluationReport:
    outcomes = tuple(sorted(outcomes, key=lambda o: o.rule_id))
    scores = qa_scores(outcomes, catalog)
    if maturity_level is None:
        maturity_level = estimate_maturity(model, outcomes) if model is not None else 0
    if api_title is None:
        api_title = model.api_title if model is not None else ""
    meta = {o.rule_id: {"importance": catalog[o.rule_id].importance.value, "text": catalog[o.rule_id].text}
            for o in outcomes}
    return EvaluationReport(api_title, scores, maturity_level, outcomes, summary_counts(outcomes),
                            source, tuple(warnings), meta)


def exit_code(report: EvaluationReport, fail_on: str = "error") -> int:
    if fail_on not in FAIL_ON:
        raise ValueError(f"fail_on must be one of {FAIL_ON}")
    counts = report.summary_counts
    if fail_on == "error":
        return 1 if counts["errors"] else 0
    if fail_on == "warning":
        return 1 if counts["errors"] or counts["warnings"] else 0
    return 0


# --------------------------------------------------------------------------
# rendering


def render_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n"


def _fmt_score(value: float | None) -> str:
    return "not applicable" if value is None else f"{value:.3f}"


def render_text(report: EvaluationReport) -> str:
    lines = [f"{report.api_title or 'API'} ({report.source})" if report.source else report.api_title or "API"]
    lines.append(f"maturity level: {report.maturity_level}")
    lines.append("")
    lines.append("quality attribute scores:")
    for q, value in report.qa_scores.items():
        lines.append(f"  {q.label:<24} {_fmt_score(value)}")
    lines.append("")
    findings = report.findings()
    if findings:
        lines.append("findings:")
        for f in findings:
            where = f"{f.location.file}:{f.location.line}" if f.location.line else f.location.file
            lines.append(f"  [{f.severity}] rule {f.rule_id}: {f.message}")
            lines.append(f"      at {where} {f.location.pointer}")
            if f.evidence:
                lines.append(f"      evidence: {f.evidence}")
            lines.append(f"      fix: {f.remediation}")
        lines.append("")
    pending = [o for o in report.outcomes if o.outcome == "needs_dynamic"]
    if pending:
        lines.append("needs recorded exchanges: rules " + ", ".join(str(o.rule_id) for o in pending))
    na = [o for o in report.outcomes if o.outcome == "not_applicable"]
    if na:
        lines.append("not applicable: rules " + ", ".join(str(o.rule_id) for o in na))
    for w in report.warnings:
        lines.append(f"warning: {w}")
    c = report.summary_counts
    passed = sum(1 for o in report.outcomes if o.outcome == "pass")
    lines.append(f"{len(report.outcomes)} rules checked: {passed} passed, {c['errors']} errors, "
                 f"{c['warnings']} warnings, {c['infos']} infos")
    return "\n".join(lines) + "\n"

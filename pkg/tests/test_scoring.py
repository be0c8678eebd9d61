from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restrule.catalog import Automation, Importance, QaAttribute, default_catalog
from restrule.checks import evaluate
from restrule.checks.engine import OUTCOMES, Finding, RuleOutcome
from restrule.ingest import ingest_file
from restrule.model import SourceLocation
from restrule.scoring import (
    EvaluationReport,
    ScoringError,
    exit_code,
    qa_scores,
    render_json,
    render_text,
    score,
    summary_counts,
)

CATALOG = default_catalog()
RATED = sorted(r.id for r in CATALOG if r.automation is not Automation.MANUAL)
U = QaAttribute.USABILITY


def _usability(importance):
    return [r.id for r in CATALOG if U in r.qa_impact and r.importance is importance]


def _finding(rule_id, severity="error", kind="violation"):
    return Finding(rule_id, severity, SourceLocation("api.yaml", "#/paths"), "m", "", "fix", kind)


def test_hand_computed_example():
    high_pass, high_bad = _usability(Importance.HIGH)[:2]
    medium_pass = _usability(Importance.MEDIUM)[0]
    outcomes = [RuleOutcome(high_pass, "pass"),
                RuleOutcome(high_bad, "violation", (_finding(high_bad),)),
                RuleOutcome(medium_pass, "pass")]
    assert qa_scores(outcomes, CATALOG)[U] == 0.625


def test_unscored_outcomes_are_excluded():
    rid = _usability(Importance.HIGH)[0]
    for outcome in ("advisory", "needs_dynamic", "not_applicable"):
        assert qa_scores([RuleOutcome(rid, outcome)], CATALOG)[U] is None


def _oracle(outcomes, qa):
    w = {Importance.HIGH: 3, Importance.MEDIUM: 2, Importance.LOW: 1}
    total = bad = 0
    for o in outcomes:
        rule = CATALOG[o.rule_id]
        if qa in rule.qa_impact and o.outcome in ("pass", "violation"):
            total += w[rule.importance]
            bad += w[rule.importance] if o.outcome == "violation" else 0
    return None if total == 0 else 1 - bad / total


_outcome_sets = st.lists(st.tuples(st.sampled_from(RATED), st.sampled_from(OUTCOMES)),
                         min_size=1, max_size=45, unique_by=lambda t: t[0])


@settings(max_examples=100)
@given(_outcome_sets)
def test_scores_match_oracle_and_stay_in_range(pairs):
    outcomes = [RuleOutcome(r, o) for r, o in pairs]
    scores = qa_scores(outcomes, CATALOG)
    for qa, value in scores.items():
        expected = _oracle(outcomes, qa)
        if expected is None:
            assert value is None
        else:
            assert value == pytest.approx(expected)
            assert 0.0 <= value <= 1.0


def test_monotone_under_violation_to_pass_flips():
    rng = random.Random(1234)
    for _ in range(200):
        chosen = rng.sample(RATED, rng.randint(1, len(RATED)))
        outcomes = [RuleOutcome(r, rng.choice(OUTCOMES)) for r in chosen]
        violated = [i for i, o in enumerate(outcomes) if o.outcome == "violation"]
        if not violated:
            continue
        i = rng.choice(violated)
        flipped = list(outcomes)
        flipped[i] = RuleOutcome(outcomes[i].rule_id, "pass")
        before, after = qa_scores(outcomes, CATALOG), qa_scores(flipped, CATALOG)
        for qa in QaAttribute:
            assert (before[qa] is None) == (after[qa] is None)
            if before[qa] is not None:
                assert after[qa] >= before[qa]


@given(_outcome_sets)
def test_security_is_never_applicable(pairs):
    assert qa_scores([RuleOutcome(r, o) for r, o in pairs], CATALOG)[QaAttribute.SECURITY] is None


@given(_outcome_sets, st.sampled_from(RATED))
def test_not_applicable_outcomes_leave_scores_unchanged(pairs, extra):
    outcomes = [RuleOutcome(r, o) for r, o in pairs if r != extra]
    assert qa_scores(outcomes + [RuleOutcome(extra, "not_applicable")], CATALOG) == qa_scores(outcomes, CATALOG)


def test_unknown_rule_rejected():
    with pytest.raises(ScoringError):
        qa_scores([RuleOutcome(999, "pass")], CATALOG)


def test_summary_counts():
    outcomes = [
        RuleOutcome(1, "violation", (_finding(1), _finding(1))),
        RuleOutcome(2, "violation", (_finding(2, "warning"),)),
        RuleOutcome(13, "violation", (_finding(13, "info"),)),
        RuleOutcome(45, "needs_dynamic"),
        RuleOutcome(74, "not_applicable"),
    ]
    assert summary_counts(outcomes) == {"errors": 2, "warnings": 1, "infos": 1,
                                        "needs_dynamic": 1, "not_applicable": 1}


def test_exit_codes():
    errors = score([RuleOutcome(1, "violation", (_finding(1),))], CATALOG)
    warnings = score([RuleOutcome(2, "violation", (_finding(2, "warning"),))], CATALOG)
    clean = score([RuleOutcome(1, "pass")], CATALOG)
    assert [exit_code(r, "error") for r in (errors, warnings, clean)] == [1, 0, 0]
    assert [exit_code(r, "warning") for r in (errors, warnings, clean)] == [1, 1, 0]
    assert exit_code(errors, "never") == 0
    with pytest.raises(ValueError):
        exit_code(clean, "sometimes")


def test_report_round_trip(fixtures):
    model = ingest_file(fixtures / "seeded" / "s01_uri_syntax.yaml").model
    report = score(evaluate(model), CATALOG, model, source="s01_uri_syntax.yaml")
    again = EvaluationReport.from_json(json.loads(render_json(report)))
    assert again == report
    assert render_json(again) == render_json(report)
    data = json.loads(render_json(report))
    assert data["qa_scores"]["security"] == "not_applicable"
    assert [o["rule_id"] for o in data["outcomes"]] == sorted(o["rule_id"] for o in data["outcomes"])


def test_report_schema_version_checked():
    data = json.loads(render_json(score([RuleOutcome(1, "pass")], CATALOG)))
    data["schema_version"] = "0.1"
    with pytest.raises(ScoringError):
        EvaluationReport.from_json(data)


def test_text_rendering(fixtures):
    model = ingest_file(fixtures / "seeded" / "s01_uri_syntax.yaml").model
    text = render_text(score(evaluate(model), CATALOG, model))
    assert "maturity level:" in text
    assert "[error] rule 1:" in text
    assert "not applicable" in text

"""Rule engine: checker registry, evaluation context, and outcome assembly."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Any

from restrule.catalog import Automation, Importance, Rule, RuleCatalog, default_catalog
from restrule.config import CheckSettings, Config
from restrule.linguistics import Lexicon, SegmentAnalysis, analyze_segment, annotate_model, default_lexicon, load_lexicon
from restrule.model import (
    CanonicalApiModel,
    ExchangeRecord,
    Operation,
    PathSegment,
    ResponseDecl,
    SourceLocation,
    UriTemplate,
    resolve_template,
)

log = logging.getLogger(__name__)

OUTCOMES = ("pass", "violation", "advisory", "not_applicable", "needs_dynamic")
SEVERITIES = ("error", "warning", "info")

_SEVERITY = {Importance.HIGH: "error", Importance.MEDIUM: "warning", Importance.LOW: "info"}
_DEMOTE = {"error": "warning", "warning": "info", "info": "info"}


def _pointer_key(pointer: str) -> tuple:
    return tuple((0, int(t), "") if t.isdigit() else (1, 0, t) for t in pointer.split("/"))


@dataclass(frozen=True)
class Finding:
    rule_id: int
    severity: str
    location: SourceLocation
    message: str
    evidence: str = ""
    remediation: str = ""
    kind: str = "violation"  # or "advisory"
    heuristic: bool = False

    @property
    def sort_key(self) -> tuple:
        loc = self.location
        return (self.rule_id, loc.file, _pointer_key(loc.pointer), loc.line or 0, self.message, self.evidence)

    def to_json(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "severity": self.severity,
            "kind": self.kind,
            "location": self.location.to_json(),
            "message": self.message,
            "evidence": self.evidence,
            "remediation": self.remediation,
            "heuristic": self.heuristic,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> Finding:
        return cls(
            rule_id=int(d["rule_id"]),
            severity=d["severity"],
            location=SourceLocation.from_json(d["location"]),
            message=d["message"],
            evidence=d.get("evidence", ""),
            remediation=d.get("remediation", ""),
            kind=d.get("kind", "violation"),
            heuristic=bool(d.get("heuristic", False)),
        )


@dataclass(frozen=True)
class RuleOutcome:
    rule_id: int
    outcome: str
    findings: tuple[Finding, ...] = ()
    checked: int = 0
    notes: tuple[str, ...] = ()

    @property
    def compliance(self) -> float | None:
        """Share of checked locations without a violation."""
        if self.checked <= 0:
            return None
        bad = {f.location for f in self.findings if f.kind == "violation"}
        return max(0, self.checked - len(bad)) / self.checked

    def to_json(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "outcome": self.outcome,
            "checked": self.checked,
            "compliance": self.compliance,
            "notes": list(self.notes),
            "findings": [f.to_json() for f in self.findings],
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> RuleOutcome:
        return cls(
            rule_id=int(d["rule_id"]),
            outcome=d["outcome"],
            findings=tuple(Finding.from_json(f) for f in d.get("findings", ())),
            checked=int(d.get("checked", 0)),
            notes=tuple(d.get("notes", ())),
        )


# --------------------------------------------------------------------------
# checker registry


@dataclass
class Issue:
    location: SourceLocation
    message: str
    evidence: str = ""
    advisory: bool = False
    heuristic: bool = False


@dataclass
class CheckResult:
    issues: list[Issue] = field(default_factory=list)
    checked: int = 0

    def add(self, location: SourceLocation, message: str, evidence: Any = "",
            advisory: bool = False, heuristic: bool = False) -> None:
        self.issues.append(Issue(location, message, str(evidence), advisory, heuristic))

    @property
    def applicable(self) -> bool:
        return self.checked > 0 or bool(self.issues)


Checker = Callable[["Context"], CheckResult]

STATIC: dict[int, Checker] = {}
DYNAMIC: dict[int, Checker] = {}
REMEDIATION: dict[int, str] = {}


def static_check(rule_id: int, remediation: str | None = None):
    def register(fn: Checker) -> Checker:
        STATIC[rule_id] = fn
        if remediation:
            REMEDIATION[rule_id] = remediation
        return fn
    return register


def dynamic_check(rule_id: int, remediation: str | None = None):
    def register(fn: Checker) -> Checker:
        DYNAMIC[rule_id] = fn
        if remediation:
            REMEDIATION.setdefault(rule_id, remediation)
        return fn
    return register


def registered_rules() -> set[int]:
    _load_checkers()
    return set(STATIC) | set(DYNAMIC)


# --------------------------------------------------------------------------
# context shared by all checkers


@dataclass(frozen=True)
class Observed:
    record: ExchangeRecord
    operation: Operation | None
    template: UriTemplate | None


def is_json_type(media_type: str | None) -> bool:
    if not media_type:
        return False
    base = media_type.split(";", 1)[0].strip().lower()
    return base == "application/json" or base.endswith("+json")


def base_media_type(media_type: str) -> str:
    return media_type.split(";", 1)[0].strip().lower()


def _standard_headers() -> frozenset[str]:
    text = resources.files("restrule.data").joinpath("http_headers.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


class Context:
    """Read-only view handed to every checker."""

    def __init__(self, model: CanonicalApiModel, settings: CheckSettings, lexicon: Lexicon,
                 exchanges: Sequence[ExchangeRecord] | None = None,
                 baseline: CanonicalApiModel | None = None):
        self.model = model
        self.settings = settings
        self.lexicon = lexicon
        self.baseline = baseline
        self.templates = {t.raw: t for t in model.resources}
        self.ops_by_template: dict[str, list[Operation]] = {}
        for op in model.operations:
            self.ops_by_template.setdefault(op.template_ref, []).append(op)
        self.has_exchanges = bool(exchanges)
        self.exchanges: list[Observed] = []
        for rec in exchanges or ():
            if rec.synthetic:
                continue
            template = resolve_template(model, rec.request.uri)
            op = None
            if template is not None:
                method = rec.effective_method if rec.is_preflight else rec.request.method
                op = next((o for o in self.ops_by_template.get(template.raw, ()) if o.method == method), None)
            self.exchanges.append(Observed(rec, op, template))

    def loc(self, pointer: str) -> SourceLocation:
        return self.model.locate(pointer)

    def analysis(self, segment: PathSegment) -> SegmentAnalysis:
        return analyze_segment(segment, self.lexicon)

    def template_of(self, op: Operation) -> UriTemplate:
        return self.templates[op.template_ref]

    def ops(self, template: UriTemplate) -> list[Operation]:
        return self.ops_by_template.get(template.raw, [])

    def archetype(self, template: UriTemplate) -> str | None:
        return template.final.archetype if template.final else None

    def parent_archetype(self, template: UriTemplate) -> str | None:
        return template.segments[-2].archetype if len(template.segments) >= 2 else None

    @cached_property
    def standard_headers(self) -> frozenset[str]:
        return _standard_headers()

    @cached_property
    def override_headers(self) -> frozenset[str]:
        return frozenset(h.lower() for h in self.settings.method_override_headers)

    @cached_property
    def auth_headers(self) -> frozenset[str]:
        return frozenset(h.lower() for h in self.model.auth_headers) | {"authorization"}

    def error_responses(self) -> list[tuple[Operation, ResponseDecl]]:
        out = []
        for op in self.model.operations:
            for decl in op.all_responses():
                if (decl.status == 0 or decl.status >= 400) and decl.body_schema is not None:
                    out.append((op, decl))
        return out

    @cached_property
    def error_digests(self) -> Counter:
        return Counter(decl.body_schema.digest for _, decl in self.error_responses())

    def is_error_shape(self, shape) -> bool:
        if shape is None:
            return False
        markers = set(self.settings.error_markers)
        if shape.kind == "object" and markers & set(shape.members()):
            return True
        return shape.digest in self.error_digests

    def observed(self, *methods: str) -> list[Observed]:
        if not methods:
            return list(self.exchanges)
        return [o for o in self.exchanges if o.record.request.method in methods]


# --------------------------------------------------------------------------
# evaluation


def _load_checkers() -> None:
    # checker modules register themselves on import
    from restrule.checks import client, http, metadata, representation, uris  # noqa: F401


def _severity(rule: Rule, advisory: bool) -> str:
    sev = "info" if rule.is_may_rule else _SEVERITY[rule.importance]
    return _DEMOTE[sev] if advisory else sev


def _findings(rule: Rule, result: CheckResult) -> list[Finding]:
    remediation = REMEDIATION.get(rule.id, rule.text)
    out = []
    for issue in result.issues:
        message = issue.message + (" (heuristic)" if issue.heuristic else "")
        out.append(Finding(
            rule_id=rule.id,
            severity=_severity(rule, issue.advisory),
            location=issue.location,
            message=message,
            evidence=issue.evidence,
            remediation=remediation,
            kind="advisory" if issue.advisory else "violation",
            heuristic=issue.heuristic,
        ))
    return out


def _run(checker: Checker, ctx: Context, rule_id: int, notes: list[str]) -> CheckResult | None:
    try:
        return checker(ctx)
    except Exception as exc:  # noqa: BLE001 - one checker must not abort the run
        log.warning("checker for rule %d failed: %r", rule_id, exc)
        notes.append(f"checker failed: {exc!r}")
        return None


def evaluate_rule(rule: Rule, ctx: Context) -> RuleOutcome:
    _load_checkers()
    static = STATIC.get(rule.id)
    dynamic = DYNAMIC.get(rule.id)
    notes: list[str] = []
    if static is None and dynamic is None:
        return RuleOutcome(rule.id, "not_applicable", notes=("no checker available",))

    s_result = d_result = None
    if static is not None:
        s_result = _run(static, ctx, rule.id, notes)
        if s_result is None:
            return RuleOutcome(rule.id, "not_applicable", notes=tuple(notes))
    if dynamic is not None and ctx.has_exchanges:
        d_result = _run(dynamic, ctx, rule.id, notes)
        if d_result is None:
            return RuleOutcome(rule.id, "not_applicable", notes=tuple(notes))

    findings: list[Finding] = []
    checked = 0
    for result in (s_result, d_result):
        if result is not None:
            findings.extend(_findings(rule, result))
            checked += result.checked
    unique = {(f.location, f.message, f.evidence, f.kind): f for f in findings}
    findings = sorted(unique.values(), key=lambda f: f.sort_key)

    if any(f.kind == "violation" for f in findings):
        outcome = "violation"
    elif findings:
        outcome = "advisory"
    elif dynamic is None:
        outcome = "pass" if s_result.applicable else "not_applicable"
    elif d_result is not None and d_result.applicable:
        outcome = "pass"
    elif static is None or s_result.applicable:
        outcome = "needs_dynamic"
    else:
        outcome = "not_applicable"
    if outcome == "needs_dynamic":
        notes.append("no dynamic evidence recorded")
    return RuleOutcome(rule.id, outcome, tuple(findings), checked, tuple(notes))


def selected_rules(catalog: RuleCatalog, config: Config | None = None,
                   rules: Iterable[int] | None = None) -> list[Rule]:
    disabled = config.disabled_rules if config else frozenset()
    only = set(rules) if rules is not None else None
    out = []
    for rule in catalog:
        if not rule.enabled or rule.automation is Automation.MANUAL or rule.id in disabled:
            continue
        if only is not None and rule.id not in only:
            continue
        out.append(rule)
    return sorted(out, key=lambda r: r.id)


def make_context(model: CanonicalApiModel, exchanges: Sequence[ExchangeRecord] | None = None,
                 config: Config | None = None, lexicon: Lexicon | None = None,
                 baseline: CanonicalApiModel | None = None) -> Context:
    config = config or Config()
    if lexicon is None:
        lexicon = load_lexicon(config.lexicon) if config.lexicon else default_lexicon()
    model = annotate_model(model, lexicon)
    if baseline is not None:
        baseline = annotate_model(baseline, lexicon)
    return Context(model, config.checks, lexicon, exchanges, baseline)


def evaluate(
    model: CanonicalApiModel,
    exchanges: Sequence[ExchangeRecord] | None = None,
    catalog: RuleCatalog | None = None,
    config: Config | None = None,
    *,
    lexicon: Lexicon | None = None,
    baseline: CanonicalApiModel | None = None,
    rules: Iterable[int] | None = None,
) -> list[RuleOutcome]:
    """One outcome per enabled, automatable rule, ordered by rule id."""
    catalog = catalog or default_catalog()
    ctx = make_context(model, exchanges, config, lexicon, baseline)
    return [evaluate_rule(rule, ctx) for rule in selected_rules(catalog, config, rules)]

"""Rule registry: loading, consistency validation and team overrides."""

from __future__ import annotations

import dataclasses
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

import yaml


class CatalogError(ValueError):
    """Raised when a catalog or override document cannot be loaded."""


class QaAttribute(str, Enum):
    FUNCTIONAL_SUITABILITY = "functional_suitability"
    PERFORMANCE_EFFICIENCY = "performance_efficiency"
    COMPATIBILITY = "compatibility"
    USABILITY = "usability"
    RELIABILITY = "reliability"
    SECURITY = "security"
    MAINTAINABILITY = "maintainability"
    PORTABILITY = "portability"

    @property
    def label(self) -> str:
        return self.value.replace("_", " ")


class Category(str, Enum):
    URIS = "URIs"
    HTTP = "HTTP"
    META = "Meta"
    REPRESENTATION = "Representation"
    CLIENT = "Client"


class Importance(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _IMPORTANCE_RANK[self]


_IMPORTANCE_RANK = {Importance.LOW: 0, Importance.MEDIUM: 1, Importance.HIGH: 2}


class Automation(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    HYBRID = "hybrid"
    MANUAL = "manual"


class Rfc2119(str, Enum):
    MAY = "may"
    SHOULD = "should"
    MUST = "must"


_CATEGORY_ALIASES = {
    "uris": Category.URIS,
    "uri": Category.URIS,
    "http": Category.HTTP,
    "meta": Category.META,
    "metadata": Category.META,
    "repr.": Category.REPRESENTATION,
    "repr": Category.REPRESENTATION,
    "representation": Category.REPRESENTATION,
    "client": Category.CLIENT,
}

_MODAL_RE = re.compile(r"\b(must|should|may)\b", re.IGNORECASE)


def parse_rfc2119(text: str) -> Rfc2119 | None:
    """Return the first RFC 2119 modal verb in ``text``, if any."""
    match = _MODAL_RE.search(text)
    return Rfc2119(match.group(1).lower()) if match else None


@dataclass(frozen=True)
class Rule:
    id: int
    text: str
    category: Category
    importance: Importance
    qa_impact: frozenset[QaAttribute] = frozenset()
    automation: Automation = Automation.MANUAL
    rfc2119_level: Rfc2119 = Rfc2119.SHOULD
    enabled: bool = True
    note: str = ""

    @property
    def is_may_rule(self) -> bool:
        return self.rfc2119_level is Rfc2119.MAY


@dataclass(frozen=True)
class CatalogOverride:
    rule_id: int
    enabled: bool = True
    importance_override: Importance | None = None
    qa_override: frozenset[QaAttribute] | None = None


@dataclass(frozen=True)
class ConstraintViolation:
    constraint: str
    observed: Any
    expected: Any
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class RuleCatalog:
    rules: tuple[Rule, ...]
    warnings: tuple[str, ...] = ()
    _by_id: Mapping[int, Rule] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {rule.id: rule for rule in self.rules})

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __contains__(self, rule_id: object) -> bool:
        return rule_id in self._by_id

    def __getitem__(self, rule_id: int) -> Rule:
        return self._by_id[rule_id]

    def get(self, rule_id: int) -> Rule | None:
        return self._by_id.get(rule_id)

    def ids(self, importance: Importance | None = None) -> set[int]:
        return {r.id for r in self.rules if importance is None or r.importance is importance}

    def rated(self) -> list[Rule]:
        """Rules with medium or high importance."""
        return [r for r in self.rules if r.importance is not Importance.LOW]

    def automatable(self) -> list[Rule]:
        return [r for r in self.rules if r.enabled and r.automation is not Automation.MANUAL]


# --------------------------------------------------------------------------
# loading


def _entry_error(entry_id: Any, message: str) -> CatalogError:
    label = f"rule {entry_id}" if entry_id is not None else "catalog entry"
    return CatalogError(f"{label}: {message}")


def _parse_qa_set(values: Any, entry_id: Any) -> frozenset[QaAttribute]:
    if values is None:
        return frozenset()
    if isinstance(values, str):
        values = [values]
    if not isinstance(values, (list, tuple, set, frozenset)):
        raise _entry_error(entry_id, "qa_impact must be a list")
    out = set()
    for value in values:
        key = str(value).strip().lower().replace(" ", "_")
        try:
            out.add(QaAttribute(key))
        except ValueError:
            raise _entry_error(entry_id, f"unknown quality attribute {value!r}") from None
    return frozenset(out)


def _parse_importance(value: Any, entry_id: Any) -> Importance:
    try:
        return Importance(str(value).lower())
    except ValueError:
        raise _entry_error(entry_id, f"unknown importance {value!r}") from None


def _parse_rule(entry: Mapping[str, Any]) -> Rule:
    if not isinstance(entry, Mapping):
        raise CatalogError(f"catalog entry must be a mapping, got {type(entry).__name__}")
    entry_id = entry.get("id")
    for key in ("id", "text", "category", "importance"):
        if entry.get(key) in (None, ""):
            raise _entry_error(entry_id, f"missing required field {key!r}")
    if isinstance(entry_id, bool) or not isinstance(entry_id, int) or not 1 <= entry_id <= 82:
        raise _entry_error(entry_id, "id must be an integer in 1..82")

    category = _CATEGORY_ALIASES.get(str(entry["category"]).strip().lower())
    if category is None:
        raise _entry_error(entry_id, f"unknown category {entry['category']!r}")
    importance = _parse_importance(entry["importance"], entry_id)
    text = str(entry["text"])

    try:
        automation = Automation(str(entry.get("automation", "manual")).lower())
    except ValueError:
        raise _entry_error(entry_id, f"unknown automation {entry.get('automation')!r}") from None
    if importance is Importance.LOW and automation is not Automation.MANUAL:
        raise _entry_error(entry_id, "low-importance rules must have automation 'manual'")

    if "rfc2119" in entry:
        try:
            level = Rfc2119(str(entry["rfc2119"]).lower())
        except ValueError:
            raise _entry_error(entry_id, f"unknown rfc2119 level {entry['rfc2119']!r}") from None
    else:
        # rule 69 has no modal verb; it is treated as a "should" rule
        level = parse_rfc2119(text) or Rfc2119.SHOULD

    unknown = set(entry) - {"id", "text", "category", "importance", "qa_impact",
                            "automation", "rfc2119", "enabled", "note"}
    if unknown:
        raise _entry_error(entry_id, f"unknown fields {sorted(unknown)}")

    return Rule(
        id=entry_id,
        text=text,
        category=category,
        importance=importance,
        qa_impact=_parse_qa_set(entry.get("qa_impact"), entry_id),
        automation=automation,
        rfc2119_level=level,
        enabled=bool(entry.get("enabled", True)),
        note=str(entry.get("note", "")),
    )


def load_catalog(source: str | Path | Mapping[str, Any] | None = None) -> RuleCatalog:
    """Load a catalog from a YAML path, YAML text, or parsed mapping.

    ``None`` loads the shipped default catalog.
    """
    if source is None:
        text = resources.files("restrule.data").joinpath("catalog.yaml").read_text("utf-8")
        doc = yaml.safe_load(text)
    elif isinstance(source, Mapping):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                      and Path(source).exists()):
        try:
            doc = yaml.safe_load(Path(source).read_text("utf-8"))
        except yaml.YAMLError as exc:
            raise CatalogError(f"{source}: {exc}") from exc
    else:
        try:
            doc = yaml.safe_load(source)
        except yaml.YAMLError as exc:
            raise CatalogError(str(exc)) from exc

    if not isinstance(doc, Mapping) or not isinstance(doc.get("rules"), list):
        raise CatalogError("catalog document must be a mapping with a 'rules' list")

    rules: list[Rule] = []
    seen: set[int] = set()
    for entry in doc["rules"]:
        rule = _parse_rule(entry)
        if rule.id in seen:
            raise _entry_error(rule.id, "duplicate id")
        seen.add(rule.id)
        rules.append(rule)
    rules.sort(key=lambda r: r.id)
    return RuleCatalog(tuple(rules))


def default_catalog() -> RuleCatalog:
    return load_catalog(None)


# --------------------------------------------------------------------------
# validation against the published aggregates

MEDIUM_IDS = frozenset({2, 6, 11, 12, 15, 20, 26, 31, 41, 43, 47, 51, 54, 63, 69, 79, 82})
HIGH_IDS = frozenset({1, 3, 4, 5, 9, 10, 13, 14, 17, 18, 22, 23, 24, 27, 28, 30, 34, 37,
                      38, 44, 45, 46, 57, 61, 71, 72, 73, 74})

IMPORTANCE_TOTALS = {Importance.LOW: 37, Importance.MEDIUM: 17, Importance.HIGH: 28}

# (high, medium, low) per category
CATEGORY_COUNTS = {
    Category.URIS: (8, 5, 3),
    Category.HTTP: (13, 5, 11),
    Category.REPRESENTATION: (4, 2, 7),
    Category.META: (2, 3, 10),
    Category.CLIENT: (1, 2, 6),
}

QA_TOTALS = {
    QaAttribute.USABILITY: 35,
    QaAttribute.MAINTAINABILITY: 35,
    QaAttribute.COMPATIBILITY: 26,
    QaAttribute.FUNCTIONAL_SUITABILITY: 7,
    QaAttribute.PERFORMANCE_EFFICIENCY: 3,
    QaAttribute.RELIABILITY: 1,
    QaAttribute.PORTABILITY: 1,
    QaAttribute.SECURITY: 0,
}

# number of QAs touched -> number of rules
QA_CARDINALITY = {1: 10, 2: 12, 3: 18, 4: 5}

HIGH_BROAD_IDS = frozenset({71, 72, 73, 57})  # plus the 13 high HTTP rules

_CATEGORY_QA = [
    (Category.URIS, QaAttribute.MAINTAINABILITY, 12),
    (Category.URIS, QaAttribute.USABILITY, 7),
    (Category.REPRESENTATION, QaAttribute.USABILITY, 6),
    (Category.REPRESENTATION, QaAttribute.COMPATIBILITY, 5),
    (Category.REPRESENTATION, QaAttribute.MAINTAINABILITY, 4),
    (Category.META, QaAttribute.MAINTAINABILITY, 0),
]


def _check(out: list[ConstraintViolation], name: str, observed, expected, message: str) -> None:
    if observed != expected:
        out.append(ConstraintViolation(name, observed, expected, message))


def _fmt_ids(ids: Iterable[int]) -> str:
    return "{" + ", ".join(str(i) for i in sorted(ids)) + "}"


def validate_catalog(catalog: RuleCatalog) -> list[ConstraintViolation]:
    """Check the catalog against every aggregate count it must reproduce.

    Returns an empty list when all constraints hold.
    """
    out: list[ConstraintViolation] = []
    rules = list(catalog)

    _check(out, "rule-ids", sorted(catalog.ids()), list(range(1, 83)),
           f"rule ids must be exactly 1..82 (found {len(rules)} rules)")

    totals = Counter(r.importance for r in rules)
    for importance, expected in IMPORTANCE_TOTALS.items():
        got = totals.get(importance, 0)
        _check(out, f"{importance.value}-total", got, expected,
               f"{importance.value}-importance count {got} ≠ {expected}")

    for category, (high, medium, low) in CATEGORY_COUNTS.items():
        counts = Counter(r.importance for r in rules if r.category is category)
        got = (counts[Importance.HIGH], counts[Importance.MEDIUM], counts[Importance.LOW])
        _check(out, f"category-{category.value}", got, (high, medium, low),
               f"{category.value} high/medium/low {got[0]}/{got[1]}/{got[2]} ≠ "
               f"{high}/{medium}/{low}")

    medium = catalog.ids(Importance.MEDIUM)
    high = catalog.ids(Importance.HIGH)
    _check(out, "medium-set", medium, set(MEDIUM_IDS),
           f"medium rule set differs: extra {_fmt_ids(medium - MEDIUM_IDS)}, "
           f"missing {_fmt_ids(MEDIUM_IDS - medium)}")
    _check(out, "high-set", high, set(HIGH_IDS),
           f"high rule set differs: extra {_fmt_ids(high - HIGH_IDS)}, "
           f"missing {_fmt_ids(HIGH_IDS - high)}")

    rated = catalog.rated()
    qa_counts = Counter(qa for r in rated for qa in r.qa_impact)
    for qa, expected in QA_TOTALS.items():
        got = qa_counts.get(qa, 0)
        if expected == 0:
            _check(out, f"qa-{qa.value}", got, 0, f"{qa.label} must have 0 rules (found {got})")
        else:
            _check(out, f"qa-{qa.value}", got, expected, f"{qa.label} rule count {got} ≠ {expected}")

    cardinality = Counter(len(r.qa_impact) for r in rated)
    got_hist = {k: cardinality.get(k, 0) for k in sorted(set(cardinality) | set(QA_CARDINALITY))}
    expected_hist = {k: QA_CARDINALITY.get(k, 0) for k in got_hist}
    _check(out, "qa-cardinality", got_hist, expected_hist,
           f"QA cardinality histogram {got_hist} ≠ {expected_hist}")

    assignments = sum(len(r.qa_impact) for r in rated)
    _check(out, "qa-assignments", assignments, sum(QA_TOTALS.values()),
           f"total QA assignments {assignments} ≠ {sum(QA_TOTALS.values())}")

    broad = {r.id for r in rated if len(r.qa_impact) >= 3}
    _check(out, "broad-count", len(broad), 23, f"rules touching ≥3 QAs {len(broad)} ≠ 23")
    http_rated = {r.id for r in rated if r.category is Category.HTTP}
    _check(out, "broad-http", http_rated - broad, set(),
           f"HTTP rules touching <3 QAs: {_fmt_ids(http_rated - broad)}")

    high_broad = {r.id for r in rated if r.importance is Importance.HIGH and len(r.qa_impact) >= 3}
    expected_high_broad = ({r.id for r in rated if r.importance is Importance.HIGH
                            and r.category is Category.HTTP} | HIGH_BROAD_IDS)
    _check(out, "high-broad-count", len(high_broad), 17,
           f"high-importance rules touching ≥3 QAs {len(high_broad)} ≠ 17")
    _check(out, "high-broad-set", high_broad, expected_high_broad,
           f"high-importance rules touching ≥3 QAs {_fmt_ids(high_broad)} ≠ "
           f"13 HTTP rules + {{57, 71, 72, 73}}")

    for category, qa, expected in _CATEGORY_QA:
        got = sum(1 for r in rated if r.category is category and qa in r.qa_impact)
        _check(out, f"{category.value}-{qa.value}", got, expected,
               f"{category.value} rules impacting {qa.label} {got} ≠ {expected}")

    core = {QaAttribute.USABILITY, QaAttribute.MAINTAINABILITY, QaAttribute.COMPATIBILITY}
    overlap = sum(1 for r in rated if core <= r.qa_impact)
    _check(out, "core-overlap", overlap, 21,
           f"usability∩maintainability∩compatibility {overlap} ≠ 21")

    for rule in rules:
        if rule.importance is Importance.LOW and rule.automation is not Automation.MANUAL:
            out.append(ConstraintViolation(
                f"low-manual-{rule.id}", rule.automation.value, "manual",
                f"rule {rule.id} is low importance but has automation {rule.automation.value}"))
    return out


# --------------------------------------------------------------------------
# overrides


def apply_overrides(catalog: RuleCatalog, overrides: Sequence[CatalogOverride]) -> RuleCatalog:
    """Return a new catalog with ``overrides`` applied.

    The result is not required to satisfy :func:`validate_catalog`; any
    constraint it breaks is attached as a warning.
    """
    by_id = {rule.id: rule for rule in catalog}
    for override in overrides:
        if override.rule_id not in by_id:
            raise CatalogError(f"override references unknown rule id {override.rule_id}")
        rule = by_id[override.rule_id]
        changes: dict[str, Any] = {"enabled": override.enabled}
        if override.importance_override is not None:
            changes["importance"] = override.importance_override
        if override.qa_override is not None:
            changes["qa_impact"] = frozenset(override.qa_override)
        by_id[override.rule_id] = dataclasses.replace(rule, **changes)

    result = RuleCatalog(tuple(by_id[i] for i in sorted(by_id)))
    warnings = tuple(v.message for v in validate_catalog(result))
    return dataclasses.replace(result, warnings=warnings)


def parse_overrides(doc: Any) -> list[CatalogOverride]:
    """Parse an override document (``{"overrides": [...]}`` or a bare list)."""
    if isinstance(doc, Mapping):
        doc = doc.get("overrides")
    if not isinstance(doc, list):
        raise CatalogError("override document must be a list or {overrides: [...]}")
    out = []
    for entry in doc:
        if not isinstance(entry, Mapping) or "rule" not in entry:
            raise CatalogError(f"override entry must be a mapping with 'rule': {entry!r}")
        rule_id = entry["rule"]
        if isinstance(rule_id, bool) or not isinstance(rule_id, int):
            raise CatalogError(f"override rule id must be an integer: {rule_id!r}")
        unknown = set(entry) - {"rule", "enabled", "importance", "qa_impact"}
        if unknown:
            raise CatalogError(f"override for rule {rule_id}: unknown fields {sorted(unknown)}")
        importance = entry.get("importance")
        qa = entry.get("qa_impact")
        out.append(CatalogOverride(
            rule_id=rule_id,
            enabled=bool(entry.get("enabled", True)),
            importance_override=None if importance is None else _parse_importance(importance, rule_id),
            qa_override=None if qa is None else _parse_qa_set(qa, rule_id),
        ))
    return out


def _read_yaml(path: str | Path) -> Any:
    try:
        return yaml.safe_load(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise CatalogError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise CatalogError(f"{path}: {exc}") from exc


def load_overrides(path: str | Path) -> list[CatalogOverride]:
    return parse_overrides(_read_yaml(path))


def dump_overrides(overrides: Sequence[CatalogOverride]) -> str:
    entries = []
    for o in overrides:
        entry: dict[str, Any] = {"rule": o.rule_id}
        if not o.enabled:
            entry["enabled"] = False
        if o.importance_override is not None:
            entry["importance"] = o.importance_override.value
        if o.qa_override is not None:
            entry["qa_impact"] = sorted(qa.value for qa in o.qa_override)
        entries.append(entry)
    return yaml.safe_dump({"overrides": entries}, sort_keys=False)


def load_catalog_or_overrides(path: str | Path) -> RuleCatalog:
    """Load ``path`` as a full catalog, or as overrides on the default one."""
    doc = _read_yaml(path)
    if isinstance(doc, Mapping) and "rules" in doc:
        return load_catalog(doc)
    return apply_overrides(default_catalog(), parse_overrides(doc))

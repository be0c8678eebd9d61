"""Agreement statistics over expert rating rounds.

Importance ratings use the ordinal scale low < medium < high. Quality
attribute ratings are sets of attributes and only compare equal when the
sets are identical.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

from restrule.catalog import CatalogOverride, Importance, QaAttribute

IMPORTANCE = "importance"
QA_IMPACT = "qa_impact"
KINDS = (IMPORTANCE, QA_IMPACT)

LEVELS = ("low", "medium", "high")
DEFAULT_THRESHOLD = Fraction(7, 8)
STOP_KAPPA = 0.90

Rating = Union[str, frozenset]

_QA_ORDER = tuple(QaAttribute)


class ConsensusError(ValueError):
    pass


def disagreement_weight(a: str, b: str) -> int:
    """0 for equal ratings, 1 for adjacent levels, 2 for low vs high."""
    return abs(LEVELS.index(a) - LEVELS.index(b))


@dataclass(frozen=True)
class RatingMatrix:
    iteration: int
    kind: str
    participants: tuple[str, ...]
    rules: tuple[int, ...]
    entries: Mapping[tuple[str, int], Rating]

    def __post_init__(self) -> None:
        if self.iteration < 1:
            raise ConsensusError("iteration must be >= 1")
        if self.kind not in KINDS:
            raise ConsensusError(f"unknown rating kind {self.kind!r}")
        if not self.participants or not self.rules:
            raise ConsensusError("rating matrix is empty")
        if len(set(self.participants)) != len(self.participants):
            raise ConsensusError("duplicate participant ids")
        if len(set(self.rules)) != len(self.rules):
            raise ConsensusError("duplicate rule ids")
        for (participant, rule), rating in self.entries.items():
            if self.kind == IMPORTANCE and rating not in LEVELS:
                raise ConsensusError(f"{participant}/rule {rule}: importance must be one of {LEVELS}, "
                                     f"got {rating!r}")
            if self.kind == QA_IMPACT and not (isinstance(rating, frozenset)
                                               and all(isinstance(q, QaAttribute) for q in rating)):
                raise ConsensusError(f"{participant}/rule {rule}: expected a set of quality attributes")

    @classmethod
    def from_rows(cls, rows: Mapping[str, Mapping[int, Rating]], kind: str = IMPORTANCE,
                  iteration: int = 1) -> RatingMatrix:
        participants = tuple(rows)
        rules: list[int] = []
        for ratings in rows.values():
            for rule in ratings:
                if rule not in rules:
                    rules.append(rule)
        entries = {(p, r): v for p, ratings in rows.items() for r, v in ratings.items()}
        return cls(iteration, kind, participants, tuple(rules), entries)

    def missing_cells(self) -> list[tuple[str, int]]:
        return [(p, r) for p in self.participants for r in self.rules if (p, r) not in self.entries]

    def require_complete(self) -> None:
        missing = self.missing_cells()
        if missing:
            shown = ", ".join(f"{p}/rule {r}" for p, r in missing[:20])
            more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
            raise ConsensusError(f"incomplete rating matrix; missing {shown}{more}")

    def votes(self, rule: int) -> list[Rating]:
        return [self.entries[(p, rule)] for p in self.participants]


# --------------------------------------------------------------------------
# consensus


@dataclass(frozen=True)
class RuleConsensus:
    consensus: bool
    majority_value: Rating | None
    vote_histogram: tuple[tuple[Rating, int], ...]


@dataclass(frozen=True)
class ConsensusResult:
    kind: str
    threshold: Fraction
    per_rule: Mapping[int, RuleConsensus]
    agreement_fraction: float

    def open_rules(self) -> list[int]:
        return [r for r, c in self.per_rule.items() if not c.consensus]


def _as_fraction(value: float | Fraction) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))  # 0.875 -> 7/8, 0.9 -> 9/10


def _rating_key(rating: Rating) -> tuple:
    if isinstance(rating, frozenset):
        return (1, tuple(sorted(q.value for q in rating)))
    return (0, (LEVELS.index(rating),) if rating in LEVELS else (rating,))


def consensus(matrix: RatingMatrix, threshold: float | Fraction = DEFAULT_THRESHOLD) -> ConsensusResult:
    """A rule reaches consensus when its modal rating holds at least ``threshold`` of the votes.

    A tie for the modal rating is never a consensus.
    """
    threshold = _as_fraction(threshold)
    if not 0 < threshold <= 1:
        raise ConsensusError("threshold must lie in (0, 1]")
    matrix.require_complete()
    n = len(matrix.participants)
    per_rule = {}
    for rule in matrix.rules:
        counts = Counter(matrix.votes(rule))
        histogram = tuple(sorted(counts.items(), key=lambda kv: _rating_key(kv[0])))
        top = max(counts.values())
        leaders = [v for v, c in counts.items() if c == top]
        if len(leaders) > 1:
            per_rule[rule] = RuleConsensus(False, None, histogram)
            continue
        reached = Fraction(top, n) >= threshold
        per_rule[rule] = RuleConsensus(reached, leaders[0], histogram)
    agreed = sum(1 for c in per_rule.values() if c.consensus)
    return ConsensusResult(matrix.kind, threshold, per_rule, agreed / len(per_rule))


# --------------------------------------------------------------------------
# kappa


@dataclass(frozen=True)
class StabilityResult:
    kappa: float
    band: str
    stop_recommended: bool


def landis_koch(kappa: float) -> str:
    if kappa < 0:
        return "poor"
    if kappa < 0.21:
        return "slight"
    if kappa < 0.41:
        return "fair"
    if kappa < 0.61:
        return "moderate"
    if kappa < 0.81:
        return "substantial"
    return "almost perfect"


def should_stop(kappas: Sequence[float], limit: float = STOP_KAPPA) -> bool:
    """True when the last two round-to-round kappas both reach ``limit``."""
    return len(kappas) >= 2 and kappas[-1] >= limit and kappas[-2] >= limit


def _paired(prev: RatingMatrix, next_: RatingMatrix, kind: str) -> list[tuple[Rating, Rating]]:
    for m in (prev, next_):
        if m.kind != kind:
            raise ConsensusError(f"expected {kind} matrices, got {m.kind}")
        m.require_complete()
    if set(prev.participants) != set(next_.participants) or set(prev.rules) != set(next_.rules):
        raise ConsensusError("matrices must cover the same participants and rules")
    return [(prev.entries[(p, r)], next_.entries[(p, r)]) for p in prev.participants for r in prev.rules]


def _result(kappa: float, history: Iterable[float]) -> StabilityResult:
    kappas = [*history, kappa]
    return StabilityResult(kappa, landis_koch(kappa), should_stop(kappas))


def weighted_kappa_value(pairs: Sequence[tuple[str, str]]) -> float:
    n = len(pairs)
    if n == 0:
        raise ConsensusError("no rating pairs")
    first = Counter(a for a, _ in pairs)
    second = Counter(b for _, b in pairs)
    observed = sum(disagreement_weight(a, b) for a, b in pairs) / n
    expected = sum(first[a] * second[b] * disagreement_weight(a, b)
                   for a in LEVELS for b in LEVELS) / (n * n)
    if expected == 0:
        return 1.0
    return 1.0 - observed / expected


def unweighted_kappa_value(pairs: Sequence[tuple[Rating, Rating]]) -> float:
    n = len(pairs)
    if n == 0:
        raise ConsensusError("no rating pairs")
    first = Counter(a for a, _ in pairs)
    second = Counter(b for _, b in pairs)
    observed = sum(1 for a, b in pairs if a == b) / n
    expected = sum(first[c] * second[c] for c in first) / (n * n)
    if expected == 1:
        return 1.0
    return (observed - expected) / (1 - expected)


def weighted_kappa(prev: RatingMatrix, next_: RatingMatrix, history: Iterable[float] = ()) -> StabilityResult:
    """Weighted Cohen's kappa between two importance rounds.

    Each (participant, rule) cell is one item and the two rounds act as
    the two raters. ``history`` holds kappas of earlier transitions; a stop
    is recommended once two consecutive transitions reach 0.90.
    """
    return _result(weighted_kappa_value(_paired(prev, next_, IMPORTANCE)), history)


def unweighted_kappa(prev: RatingMatrix, next_: RatingMatrix, history: Iterable[float] = ()) -> StabilityResult:
    """Cohen's kappa between two quality-attribute rounds (exact set agreement)."""
    return _result(unweighted_kappa_value(_paired(prev, next_, QA_IMPACT)), history)


def kappa(prev: RatingMatrix, next_: RatingMatrix, history: Iterable[float] = ()) -> StabilityResult:
    if prev.kind == IMPORTANCE:
        return weighted_kappa(prev, next_, history)
    return unweighted_kappa(prev, next_, history)


# --------------------------------------------------------------------------
# weights


def derive_weights(result: ConsensusResult) -> list[CatalogOverride]:
    """Catalog overrides setting each rule to its consensual rating."""
    open_rules = result.open_rules()
    if open_rules:
        raise ConsensusError("no consensus for rule(s) " + ", ".join(map(str, sorted(open_rules))))
    out = []
    for rule in sorted(result.per_rule):
        value = result.per_rule[rule].majority_value
        if result.kind == IMPORTANCE:
            out.append(CatalogOverride(rule, importance_override=Importance(value)))
        else:
            out.append(CatalogOverride(rule, qa_override=frozenset(value)))
    return out


# --------------------------------------------------------------------------
# delimited files


def parse_qa_cell(cell: str) -> frozenset[QaAttribute]:
    cell = cell.strip()
    if cell == "-":
        return frozenset()
    if len(cell) == len(_QA_ORDER) and set(cell) <= {"0", "1"}:
        return frozenset(q for q, bit in zip(_QA_ORDER, cell) if bit == "1")
    out = set()
    for name in cell.split(";"):
        key = name.strip().lower().replace(" ", "_").replace("-", "_")
        if not key:
            continue
        try:
            out.add(QaAttribute(key))
        except ValueError:
            raise ConsensusError(f"unknown quality attribute {name.strip()!r}") from None
    return frozenset(out)


def format_rating(rating: Rating) -> str:
    if isinstance(rating, frozenset):
        return ";".join(q.value for q in _QA_ORDER if q in rating) or "-"
    return rating


def _rule_id(header: str) -> int:
    text = header.strip().lower().removeprefix("rule").removeprefix("r").strip()
    try:
        return int(text)
    except ValueError:
        raise ConsensusError(f"column header {header!r} is not a rule id") from None


def parse_ratings(text: str, kind: str | None = None, iteration: int = 1) -> RatingMatrix:
    """Parse a ratings table: header ``participant,<rule id>,...``; one row per participant.

    Empty cells are missing ratings. For quality attributes a cell lists
    attribute names separated by ``;`` (``-`` for none) or an 8-digit bit
    string in the order functional suitability ... portability.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    rows = [r for r in rows if not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise ConsensusError("ratings file needs a header row and at least one participant row")
    header = rows[0]
    rules = [_rule_id(h) for h in header[1:]]
    cells: dict[str, dict[int, str]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConsensusError(f"row {lineno} has {len(row)} cells, header has {len(header)}")
        participant = row[0].strip()
        if participant in cells:
            raise ConsensusError(f"row {lineno}: duplicate participant {participant!r}")
        cells[participant] = {rule: value.strip() for rule, value in zip(rules, row[1:]) if value.strip()}

    if kind is None:
        values = {v.lower() for ratings in cells.values() for v in ratings.values()}
        kind = IMPORTANCE if values <= set(LEVELS) else QA_IMPACT
    parsed: dict[str, dict[int, Rating]] = {}
    for participant, ratings in cells.items():
        if kind == IMPORTANCE:
            parsed[participant] = {r: v.lower() for r, v in ratings.items()}
        else:
            parsed[participant] = {r: parse_qa_cell(v) for r, v in ratings.items()}
    matrix = RatingMatrix.from_rows(parsed, kind, iteration)
    return RatingMatrix(iteration, kind, matrix.participants, tuple(rules), matrix.entries)


def read_ratings(path: str | Path, kind: str | None = None, iteration: int = 1) -> RatingMatrix:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ConsensusError(f"cannot read {path}: {exc.strerror}") from None
    return parse_ratings(text, kind, iteration)


def write_ratings(matrix: RatingMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["participant", *matrix.rules])
    for p in matrix.participants:
        writer.writerow([p, *(format_rating(matrix.entries[(p, r)]) if (p, r) in matrix.entries else ""
                              for r in matrix.rules)])
    return buf.getvalue()

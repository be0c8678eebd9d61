"""Acceptance criteria 1-9, one test each; a pass/fail line per criterion is
printed in the terminal summary."""

from __future__ import annotations

import functools
import io
import random
import time
from collections import Counter
from contextlib import redirect_stdout
from datetime import datetime
from fractions import Fraction
from importlib import resources
from itertools import product

import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import (
    DYNAMIC,
    MATURITY,
    SEEDED,
    dynamic_manifest,
    expected_multiset,
    finding_multiset,
    lint,
    replay,
    seeded_manifest,
)
from restrule.catalog import QaAttribute, default_catalog, validate_catalog
from restrule.checks import engine, estimate_maturity, evaluate
from restrule.cli import build_parser, cmd_lint
from restrule.consensus import LEVELS, RatingMatrix, consensus, weighted_kappa, weighted_kappa_value
from restrule.ingest import ingest_file
from restrule.model import METHODS, CanonicalApiModel, Operation, ResponseDecl, parse_template
from restrule.probe import SAFE_METHODS, ProbePlan, ProbeTarget, execute, plan
from restrule.scoring import qa_scores
from restrule.checks.engine import OUTCOMES, RuleOutcome

RESULTS: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs) or ""
            except BaseException as exc:
                RESULTS[number] = (title, False, f"{type(exc).__name__}: {exc}".splitlines()[0])
                raise
            RESULTS[number] = (title, True, detail)
        return run
    return wrap


def _raw_catalog() -> list[dict]:
    text = resources.files("restrule.data").joinpath("catalog.yaml").read_text("utf-8")
    return yaml.safe_load(text)["rules"]


# ---------------------------------------------------------------------------


@criterion(1, "catalog fidelity")
def test_criterion_1_catalog_fidelity():
    start = time.perf_counter()
    catalog = default_catalog()
    assert validate_catalog(catalog) == []
    rules = _raw_catalog()
    by_importance = {lvl: {r["id"] for r in rules if r["importance"] == lvl} for lvl in ("low", "medium", "high")}
    assert by_importance["medium"] == {2, 6, 11, 12, 15, 20, 26, 31, 41, 43, 47, 51, 54, 63, 69, 79, 82}
    assert by_importance["high"] == {1, 3, 4, 5, 9, 10, 13, 14, 17, 18, 22, 23, 24, 27, 28, 30, 34, 37,
                                     38, 44, 45, 46, 57, 61, 71, 72, 73, 74}
    assert [len(by_importance[k]) for k in ("low", "medium", "high")] == [37, 17, 28]
    per_category = Counter((r["category"], r["importance"]) for r in rules)
    expected = {
        "URIs": (8, 5, 3), "HTTP": (13, 5, 11), "Representation": (4, 2, 7),
        "Meta": (2, 3, 10), "Client": (1, 2, 6),
    }
    for category, (high, medium, low) in expected.items():
        assert (per_category[category, "high"], per_category[category, "medium"],
                per_category[category, "low"]) == (high, medium, low), category
    assert time.perf_counter() - start < 1.0
    return "82 rules; 37/17/28; all category counts exact"


@criterion(2, "QA-mapping consistency")
def test_criterion_2_qa_mapping():
    start = time.perf_counter()
    rated = [r for r in _raw_catalog() if r["importance"] != "low"]
    qa = {r["id"]: set(r["qa_impact"]) for r in rated}
    totals = Counter(q for s in qa.values() for q in s)
    order = ["usability", "maintainability", "compatibility", "functional_suitability",
             "performance_efficiency", "reliability", "portability", "security"]
    assert [totals[q] for q in order] == [35, 35, 26, 7, 3, 1, 1, 0]
    cardinality = Counter(len(s) for s in qa.values())
    assert [cardinality[k] for k in (1, 2, 3, 4)] == [10, 12, 18, 5]
    assert sum(totals.values()) == sum(k * v for k, v in cardinality.items()) == 108
    broad = {rid for rid, s in qa.items() if len(s) >= 3}
    assert len(broad) == 23
    category = {r["id"]: r["category"] for r in rated}
    high_broad = {r["id"] for r in rated if r["importance"] == "high" and r["id"] in broad}
    assert len(high_broad) == 17
    assert len({rid for rid in high_broad if category[rid] == "HTTP"}) == 13
    assert high_broad - {rid for rid in high_broad if category[rid] == "HTTP"} == {57, 71, 72, 73}
    assert not any("maintainability" in qa[rid] for rid in qa if category[rid] == "Meta")
    assert sum(1 for s in qa.values() if {"usability", "maintainability", "compatibility"} <= s) == 21
    assert time.perf_counter() - start < 1.0
    return "totals, histogram, 108, 23/17, Meta∩M=∅, U∩M∩C=21"


def _brute_kappa(a, b):
    w = {(x, y): abs(LEVELS.index(x) - LEVELS.index(y)) for x, y in product(LEVELS, LEVELS)}
    n = len(a)
    observed = Fraction(sum(w[x, y] for x, y in zip(a, b)), n)
    expected = Fraction(sum(w[x, y] for x in a for y in b), n * n)
    return float(1 - observed / expected)


def _matrix(columns, participants=8, iteration=1):
    names = [f"e{i}" for i in range(participants)]
    return RatingMatrix.from_rows({p: {r: v[i] for r, v in columns.items()} for i, p in enumerate(names)},
                                  "importance", iteration)


@criterion(3, "consensus math")
def test_criterion_3_consensus():
    rng = random.Random(42)
    cols = {r: [rng.choice(LEVELS) for _ in range(8)] for r in range(1, 83)}
    m = _matrix(cols)
    identical = weighted_kappa(m, m)
    assert identical.kappa == 1.0 and identical.band == "almost perfect"

    a = [rng.choice(LEVELS) for _ in range(10_000)]
    b = [rng.choice(LEVELS) for _ in range(10_000)]
    noise = weighted_kappa_value(list(zip(a, b)))
    assert abs(noise) < 0.05

    # 3 participants x 4 rules
    prev = _matrix({1: ["low", "high", "medium"], 2: ["low", "high", "medium"],
                    3: ["medium", "medium", "high"], 4: ["high", "low", "low"]}, 3)
    nxt = _matrix({1: ["low", "medium", "medium"], 2: ["medium", "high", "high"],
                   3: ["medium", "medium", "high"], 4: ["high", "low", "high"]}, 3, 2)
    cells = sorted(prev.entries)
    kappa = weighted_kappa(prev, nxt).kappa
    oracle = _brute_kappa([prev.entries[c] for c in cells], [nxt.entries[c] for c in cells])
    assert abs(kappa - oracle) < 1e-12

    assert consensus(_matrix({1: ["high"] * 7 + ["low"]})).per_rule[1].consensus
    assert not consensus(_matrix({1: ["high"] * 6 + ["low"] * 2})).per_rule[1].consensus

    synthetic = {}
    for rule in range(1, 83):
        votes = ["medium"] * 8 if rule <= 42 else ["high"] * 6 + ["low"] * 2
        rng.shuffle(votes)
        synthetic[rule] = votes
    fraction = consensus(_matrix(synthetic)).agreement_fraction
    assert fraction == 42 / 82 and f"{fraction:.2%}" == "51.22%"
    return f"12-cell kappa {kappa:.6f}; noise kappa {noise:+.4f}; agreement {fraction:.2%}"


@criterion(4, "linter correctness")
def test_criterion_4_seeded_corpus():
    fixtures = seeded_manifest()
    assert len(fixtures) >= 15
    planted = sum(len(f["findings"]) for f in fixtures)
    assert planted >= 40
    engine._load_checkers()
    static_rules = set(engine.STATIC) & {r.id for r in default_catalog().automatable()}
    assert {int(r) for f in fixtures for r, _ in f["findings"]} == static_rules
    start = time.perf_counter()
    for case in fixtures:
        baseline = SEEDED / case["baseline"] if case.get("baseline") else None
        got = finding_multiset(lint(SEEDED / case["file"], baseline))
        want = expected_multiset(case["findings"])
        assert got == want, f"{case['file']}: missing {want - got}, unexpected {got - want}"
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    return f"{len(fixtures)} fixtures, {planted} plants, {len(static_rules)} static rules, {elapsed:.2f}s"


@criterion(5, "dynamic checks")
def test_criterion_5_replay():
    manifest = dynamic_manifest()
    spec = DYNAMIC / manifest["spec"]
    for case in manifest["logs"]:
        outcomes = replay(spec, DYNAMIC / case["file"])
        assert finding_multiset(outcomes) == expected_multiset(case["findings"]), case["file"]
        by_rule = {o.rule_id: o.outcome for o in outcomes}
        for rule, outcome in case["outcomes"].items():
            assert by_rule[int(rule)] == outcome, f"{case['file']} rule {rule}"
    engine._load_checkers()
    return f"{len(manifest['logs'])} logs; {len(engine.DYNAMIC)} dynamic/hybrid rules resolved"


@criterion(6, "maturity estimation")
def test_criterion_6_maturity():
    levels = []
    for name in ("level0_tunnel.yaml", "level1_resources.yaml", "level2_verbs.yaml", "level3_hypermedia.yaml"):
        model = ingest_file(MATURITY / name).model
        levels.append(estimate_maturity(model, evaluate(model)))
    assert levels == [0, 1, 2, 3]
    return "levels 0, 1, 2, 3"


@criterion(7, "scoring properties")
def test_criterion_7_scoring():
    catalog = default_catalog()
    rated = sorted(r.id for r in catalog.automatable())
    usability = [r for r in catalog.automatable() if QaAttribute.USABILITY in r.qa_impact]
    high = [r.id for r in usability if r.importance.value == "high"][:2]
    medium = [r.id for r in usability if r.importance.value == "medium"][0]
    example = [RuleOutcome(high[0], "pass"), RuleOutcome(high[1], "violation"), RuleOutcome(medium, "pass")]
    assert qa_scores(example, catalog)[QaAttribute.USABILITY] == 0.625

    rng = random.Random(7)
    checked = 0
    while checked < 200:
        outcomes = [RuleOutcome(r, rng.choice(OUTCOMES)) for r in rng.sample(rated, rng.randint(1, len(rated)))]
        violated = [i for i, o in enumerate(outcomes) if o.outcome == "violation"]
        if not violated:
            continue
        checked += 1
        before = qa_scores(outcomes, catalog)
        assert before[QaAttribute.SECURITY] is None
        i = rng.choice(violated)
        outcomes[i] = RuleOutcome(outcomes[i].rule_id, "pass")
        after = qa_scores(outcomes, catalog)
        for q in QaAttribute:
            if before[q] is not None:
                assert after[q] >= before[q]
    assert all(QaAttribute.SECURITY not in r.qa_impact for r in catalog)
    return "0.625 example; 200 monotone flips; security not applicable"


@criterion(8, "determinism")
def test_criterion_8_determinism():
    fixtures = sorted(SEEDED.glob("s*.yaml")) + sorted(SEEDED.glob("s*.json")) + sorted(MATURITY.glob("*.yaml"))
    parser = build_parser()
    for path in fixtures:
        outputs = []
        for _ in range(2):
            buf = io.StringIO()
            with redirect_stdout(buf):
                cmd_lint(parser.parse_args(["lint", str(path), "--format", "json"]))
            outputs.append(buf.getvalue().encode())
        assert outputs[0] == outputs[1], path.name
        assert outputs[0]
    return f"{len(fixtures)} fixtures byte-identical"


_segment = st.sampled_from(["items", "{id}", "orders", "{orderId}", "run", "v2"])
_ops = st.lists(st.tuples(st.lists(_segment, min_size=1, max_size=3).map(lambda s: "/" + "/".join(s)),
                          st.sampled_from(METHODS), st.booleans(), st.booleans()),
                max_size=12, unique_by=lambda t: (t[0], t[1]))


@criterion(9, "prober safety")
def test_criterion_9_probe(stub_server):
    @settings(max_examples=200, deadline=None)
    @given(_ops)
    def safe_plans(ops):
        templates = {raw: parse_template(raw) for raw, *_ in ops}
        operations = tuple(Operation(m, raw, responses={200: ResponseDecl(200, headers_declared=("ETag",) if etag else ())},
                                     has_request_body=body, secured=True, path_examples={"id": "1", "orderId": "2"})
                           for raw, m, body, etag in ops)
        model = CanonicalApiModel("gen", "1", "http://api.example", tuple(templates.values()), operations,
                                  security_declared=True)
        p = plan(model)
        assert all(t.method in SAFE_METHODS and t.body_text is None for t in p.targets)

    safe_plans()

    _, base, handler = stub_server
    targets = tuple(ProbeTarget(i, "plain_get", "GET", f"{base}/players/{i}", "GET /players/{playerId}")
                    for i in range(25))
    start = time.monotonic()
    records = execute(ProbePlan(base, targets, rate_limit=5.0, concurrency=4))
    elapsed = time.monotonic() - start
    assert len(handler.seen) == 25 and all(r.response.status == 200 for r in records)
    assert elapsed >= 24 / 5.0
    sent = sorted(datetime.fromisoformat(r.timestamp.replace("Z", "+00:00")) for r in records)
    observed = 24 / (sent[-1] - sent[0]).total_seconds()
    assert observed <= 5.0 * 1.05
    return f"200 generated plans safe; 25 requests at {observed:.3f}/s (limit 5/s) in {elapsed:.2f}s"

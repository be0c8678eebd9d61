from __future__ import annotations

import random
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restrule.catalog import Importance, QaAttribute
from restrule.consensus import (
    LEVELS,
    ConsensusError,
    RatingMatrix,
    consensus,
    derive_weights,
    kappa,
    landis_koch,
    parse_qa_cell,
    parse_ratings,
    read_ratings,
    should_stop,
    unweighted_kappa,
    unweighted_kappa_value,
    weighted_kappa,
    weighted_kappa_value,
    write_ratings,
)

PARTICIPANTS = [f"e{i}" for i in range(1, 9)]


def matrix(columns: dict[int, list[str]], kind="importance", iteration=1) -> RatingMatrix:
    rows = {p: {rule: votes[i] for rule, votes in columns.items()} for i, p in enumerate(PARTICIPANTS)}
    return RatingMatrix.from_rows(rows, kind, iteration)


def brute_force_weighted_kappa(a: list[str], b: list[str]) -> float:
    """1 - observed/expected disagreement, with expectation over every cross pair."""
    w = {(x, y): abs(LEVELS.index(x) - LEVELS.index(y)) for x, y in product(LEVELS, LEVELS)}
    n = len(a)
    observed = Fraction(sum(w[x, y] for x, y in zip(a, b)), n)
    expected = Fraction(sum(w[x, y] for x in a for y in b), n * n)
    return float(1 - observed / expected)


# -- consensus thresholding ---------------------------------------------------


def test_seven_of_eight_reaches_consensus():
    result = consensus(matrix({1: ["high"] * 7 + ["low"]}))
    assert result.per_rule[1].consensus
    assert result.per_rule[1].majority_value == "high"


def test_six_of_eight_does_not():
    result = consensus(matrix({1: ["high"] * 6 + ["medium"] * 2}))
    assert not result.per_rule[1].consensus
    assert result.open_rules() == [1]


def test_threshold_as_float_is_exact():
    m = matrix({1: ["high"] * 7 + ["low"]})
    assert consensus(m, 0.875).per_rule[1].consensus
    assert not consensus(m, 0.9).per_rule[1].consensus


def test_tie_is_never_consensus():
    result = consensus(matrix({1: ["high"] * 4 + ["low"] * 4}), threshold=0.5)
    assert not result.per_rule[1].consensus
    assert result.per_rule[1].majority_value is None


def test_vote_histogram_is_ordered_by_level():
    rc = consensus(matrix({1: ["high", "low", "medium", "high", "high", "high", "high", "high"]})).per_rule[1]
    assert rc.vote_histogram == (("low", 1), ("medium", 1), ("high", 6))


def test_bad_threshold():
    with pytest.raises(ConsensusError):
        consensus(matrix({1: ["high"] * 8}), 0)


def test_incomplete_matrix_rejected():
    rows = {p: {1: "high"} for p in PARTICIPANTS}
    rows["e8"] = {}
    m = RatingMatrix(1, "importance", tuple(PARTICIPANTS), (1,),
                     {(p, 1): "high" for p in PARTICIPANTS[:-1]})
    with pytest.raises(ConsensusError, match="missing e8"):
        consensus(m)


def test_invalid_ratings_rejected():
    with pytest.raises(ConsensusError):
        matrix({1: ["urgent"] * 8})
    with pytest.raises(ConsensusError):
        RatingMatrix(1, "importance", (), (), {})


def study_shaped(consensual: int, total: int = 82, seed: int = 7) -> RatingMatrix:
    rng = random.Random(seed)
    columns = {}
    for rule in range(1, total + 1):
        if rule <= consensual:
            value = rng.choice(LEVELS)
            votes = [value] * rng.choice((7, 8))
            votes += [rng.choice([v for v in LEVELS if v != value]) for _ in range(8 - len(votes))]
        else:
            a, b = rng.sample(LEVELS, 2)
            votes = [a] * 6 + [b] * 2 if rng.random() < 0.5 else [a] * 4 + [b] * 4
        rng.shuffle(votes)
        columns[rule] = votes
    return matrix(columns)


def test_study_shaped_agreement():
    result = consensus(study_shaped(42))
    assert sum(c.consensus for c in result.per_rule.values()) == 42
    assert result.agreement_fraction == 42 / 82
    assert f"{result.agreement_fraction:.2%}" == "51.22%"


# -- kappa ----------------------------------------------------------------------


def test_weighted_kappa_identical_is_one():
    m = study_shaped(42)
    result = weighted_kappa(m, m)
    assert result.kappa == 1.0
    assert result.band == "almost perfect"


def test_twelve_cell_example():
    prev = ["low", "low", "medium", "high", "high", "medium", "low", "high", "medium", "medium", "high", "low"]
    nxt = ["low", "medium", "medium", "high", "medium", "medium", "low", "high", "high", "medium", "high", "high"]
    # observed disagreement 5/12; marginals (4,4,4) vs (2,5,5) give expected 124/144; kappa = 16/31
    value = weighted_kappa_value(list(zip(prev, nxt)))
    assert abs(value - 16 / 31) < 1e-12
    assert abs(value - brute_force_weighted_kappa(prev, nxt)) < 1e-12


def test_weighted_kappa_near_zero_for_independent_ratings():
    rng = random.Random(20240101)
    a = [rng.choice(LEVELS) for _ in range(10_000)]
    b = [rng.choice(LEVELS) for _ in range(10_000)]
    assert abs(weighted_kappa_value(list(zip(a, b)))) < 0.05


def test_constant_ratings_give_one():
    assert weighted_kappa_value([("high", "high")] * 5) == 1.0
    assert unweighted_kappa_value([(frozenset(), frozenset())] * 5) == 1.0


def test_matrices_must_align():
    m = study_shaped(42)
    other = matrix({1: ["high"] * 8})
    with pytest.raises(ConsensusError):
        weighted_kappa(m, other)


def test_unweighted_kappa_on_qa_sets():
    u, m_ = QaAttribute.USABILITY, QaAttribute.MAINTAINABILITY
    prev = matrix({1: [frozenset({u})] * 4 + [frozenset({u, m_})] * 4}, kind="qa_impact")
    same = unweighted_kappa(prev, prev)
    assert same.kappa == 1.0
    # a superset is a disagreement under exact-set comparison
    nxt = matrix({1: [frozenset({u, m_})] * 8}, kind="qa_impact", iteration=2)
    assert unweighted_kappa(prev, nxt).kappa == 0.0
    assert kappa(prev, prev).kappa == 1.0


@pytest.mark.parametrize("value, band", [
    (-0.1, "poor"), (0.0, "slight"), (0.2, "slight"), (0.21, "fair"), (0.4, "fair"),
    (0.41, "moderate"), (0.6, "moderate"), (0.61, "substantial"), (0.8, "substantial"),
    (0.81, "almost perfect"), (1.0, "almost perfect"),
])
def test_landis_koch_bands(value, band):
    assert landis_koch(value) == band


def test_stop_rule_needs_two_rounds():
    assert not should_stop([0.95])
    assert not should_stop([0.95, 0.85])
    assert should_stop([0.7, 0.91, 0.93])
    m = study_shaped(42)
    assert weighted_kappa(m, m, history=[0.92]).stop_recommended


_levels = st.sampled_from(LEVELS)


@given(st.lists(st.tuples(_levels, _levels), min_size=1, max_size=60))
def test_weighted_kappa_symmetric_and_bounded(pairs):
    k = weighted_kappa_value(pairs)
    assert k <= 1.0 + 1e-12
    assert k == weighted_kappa_value([(b, a) for a, b in pairs])


@given(st.lists(_levels, min_size=1, max_size=60))
def test_weighted_kappa_identity(values):
    assert weighted_kappa_value([(v, v) for v in values]) == 1.0


@given(st.lists(st.tuples(_levels, _levels), min_size=2, max_size=40), st.data())
def test_weighted_kappa_matches_brute_force(pairs, data):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    expected_disagreement = sum(abs(LEVELS.index(x) - LEVELS.index(y)) for x in a for y in b)
    if expected_disagreement == 0:
        return
    assert abs(weighted_kappa_value(pairs) - brute_force_weighted_kappa(a, b)) < 1e-12


@settings(max_examples=50)
@given(st.lists(st.lists(_levels, min_size=8, max_size=8), min_size=1, max_size=10), st.randoms())
def test_consensus_invariant_under_participant_order(columns, rnd):
    m = matrix(dict(enumerate(columns, start=1)))
    order = list(PARTICIPANTS)
    rnd.shuffle(order)
    shuffled = RatingMatrix(1, "importance", tuple(order), m.rules, m.entries)
    assert consensus(m) == consensus(shuffled)
    assert 0.0 <= consensus(m).agreement_fraction <= 1.0


# -- weights & files -----------------------------------------------------------


def test_derive_weights():
    result = consensus(matrix({4: ["high"] * 8, 2: ["medium"] * 7 + ["low"]}))
    overrides = derive_weights(result)
    assert [(o.rule_id, o.importance_override) for o in overrides] == [(2, Importance.MEDIUM),
                                                                        (4, Importance.HIGH)]


def test_derive_weights_refuses_open_rules():
    with pytest.raises(ConsensusError, match="no consensus"):
        derive_weights(consensus(matrix({1: ["high"] * 5 + ["low"] * 3})))


def test_derive_weights_for_qa():
    u = QaAttribute.USABILITY
    result = consensus(matrix({1: [frozenset({u})] * 8}, kind="qa_impact"))
    assert derive_weights(result)[0].qa_override == {u}


def test_csv_round_trip():
    m = study_shaped(42)
    again = parse_ratings(write_ratings(m))
    assert again == m


def test_qa_csv_cells():
    assert parse_qa_cell("-") == frozenset()
    assert parse_qa_cell("00010000") == {QaAttribute.USABILITY}
    assert parse_qa_cell("usability; Maintainability") == {QaAttribute.USABILITY, QaAttribute.MAINTAINABILITY}
    with pytest.raises(ConsensusError):
        parse_qa_cell("speed")
    m = parse_ratings("participant,1,2\ne1,usability,-\ne2,usability;compatibility,-\n")
    assert m.kind == "qa_impact"
    assert parse_ratings(write_ratings(m)) == m


def test_ragged_rows_rejected():
    with pytest.raises(ConsensusError, match="row 3"):
        parse_ratings("participant,1,2\ne1,high,low\ne2,high\n")


def test_empty_cells_are_missing():
    m = parse_ratings("participant,1,2\ne1,high,\ne2,high,low\n")
    assert m.missing_cells() == [("e1", 2)]


def test_read_ratings_errors(tmp_path):
    with pytest.raises(ConsensusError, match="cannot read"):
        read_ratings(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("participant,one\ne1,high\n")
    with pytest.raises(ConsensusError, match="not a rule id"):
        read_ratings(bad)


@settings(max_examples=300)
@given(st.lists(st.tuples(_levels, _levels), min_size=2, max_size=30), st.data())
def test_weighted_kappa_falls_when_one_cell_disagrees_more(pairs, data):
    i = data.draw(st.integers(0, len(pairs) - 1))
    a, b = pairs[i]
    w = abs(LEVELS.index(a) - LEVELS.index(b))
    worse = [v for v in LEVELS if abs(LEVELS.index(a) - LEVELS.index(v)) > w]
    if not worse:
        return
    before = weighted_kappa_value(pairs)
    if before < 0:
        return  # below chance the expected disagreement can shrink faster than the observed one grows
    changed = list(pairs)
    changed[i] = (a, data.draw(st.sampled_from(worse)))
    assert weighted_kappa_value(changed) <= before + 1e-12

"""Shared loaders for the fixture manifests."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import yaml

from restrule.checks import evaluate
from restrule.ingest import ingest_exchanges, ingest_file

FIXTURES = Path(__file__).parent / "fixtures"
SEEDED = FIXTURES / "seeded"
DYNAMIC = FIXTURES / "dynamic"
MATURITY = FIXTURES / "maturity"


def seeded_manifest() -> list[dict]:
    return yaml.safe_load((SEEDED / "manifest.yaml").read_text())["fixtures"]


def dynamic_manifest() -> dict:
    return yaml.safe_load((DYNAMIC / "manifest.yaml").read_text())


def lint(path: Path, baseline: Path | None = None):
    model = ingest_file(path).model
    old = ingest_file(baseline).model if baseline else None
    return evaluate(model, baseline=old)


def replay(spec: Path, log: Path):
    model = ingest_file(spec).model
    records = ingest_exchanges(log.read_text(), source=str(log))
    return evaluate(model, records)


def finding_multiset(outcomes) -> Counter:
    return Counter((f.rule_id, f.location.pointer) for o in outcomes for f in o.findings)


def expected_multiset(pairs) -> Counter:
    return Counter((int(rule), pointer) for rule, pointer in pairs)

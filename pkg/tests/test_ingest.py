from __future__ import annotations

import json

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from restrule.ingest import (
    IngestionError,
    body_fingerprint,
    detect_format,
    dump_exchanges,
    ingest_description,
    ingest_exchanges,
    ingest_file,
)
from restrule.model import (
    ExchangeRecord,
    ExchangeRequest,
    ExchangeResponse,
    escape_pointer,
    model_from_json,
    model_to_json,
    resolve_operation,
)

METHODS = ("get", "put", "post", "delete", "options", "head", "patch")


def walk_paths(doc: dict) -> set[tuple[str, str, tuple[int, ...]]]:
    """Independent reading of a description: (method, path, declared statuses)."""
    out = set()
    for path, item in doc["paths"].items():
        for method in METHODS:
            if method in item:
                statuses = tuple(sorted(int(code) for code in item[method]["responses"] if code != "default"))
                out.add((method.upper(), path, statuses))
    return out


def test_bookstore_matches_path_walk(fixtures):
    path = fixtures / "bookstore.yaml"
    doc = yaml.safe_load(path.read_text())
    report = ingest_file(path)
    model = report.model
    assert report.warnings == []
    assert model.api_title == doc["info"]["title"]
    assert model.version_tag == doc["info"]["version"]
    assert model.entry_uri == doc["servers"][0]["url"]
    assert {t.raw for t in model.resources} == set(doc["paths"])
    assert {(op.method, op.template_ref, op.statuses) for op in model.operations} == walk_paths(doc)
    assert len(model.operations) == len(walk_paths(doc))


def test_bookstore_line_numbers(fixtures):
    path = fixtures / "bookstore.yaml"
    lines = path.read_text().splitlines()
    model = ingest_file(path).model
    for raw in yaml.safe_load(path.read_text())["paths"]:
        expected = lines.index(f"  {raw}:") + 1
        assert model.locate("#/paths/" + escape_pointer(raw)).line == expected


def test_bookstore_request_bodies_and_security(fixtures):
    doc = yaml.safe_load((fixtures / "bookstore.yaml").read_text())
    model = ingest_file(fixtures / "bookstore.yaml").model
    for op in model.operations:
        raw = doc["paths"][op.template_ref][op.method.lower()]
        assert op.has_request_body == ("requestBody" in raw)
        assert op.operation_id == raw.get("operationId", "")


def test_json_dialect_fixture(fixtures):
    report = ingest_file(fixtures / "seeded" / "s16_json_dialect.json")
    assert report.model.operations
    lines = (fixtures / "seeded" / "s16_json_dialect.json").read_text().splitlines()
    assert report.model.locate("#/paths/~1teams").line == lines.index('    "/teams": {') + 1


def test_model_json_round_trip(fixtures):
    model = ingest_file(fixtures / "bookstore.yaml").model
    assert model_from_json(json.loads(json.dumps(model_to_json(model)))) == model


@pytest.mark.parametrize("text, match", [
    ("openapi: 3.0.0\npaths: [", "line"),
    ("- a\n- b\n", "root must be a mapping"),
    ("info: {title: x}\npaths: {}\n", "openapi"),
    ("openapi: 2.0\npaths: {}\n", "unsupported"),
    ("openapi: 3.0.0\ninfo: {title: x}\n", "paths"),
])
def test_bad_descriptions(text, match):
    with pytest.raises(IngestionError, match=match):
        ingest_description(text, "yaml-text")


def test_non_utf8_rejected():
    with pytest.raises(IngestionError, match="UTF-8"):
        ingest_description(b"\xff\xfe openapi", "yaml-text")


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError, match="cannot read"):
        ingest_file(tmp_path / "absent.yaml")


def test_syntax_error_has_position():
    with pytest.raises(IngestionError) as exc:
        ingest_description('{"openapi": "3.0.0", "paths": {', "json-text")
    assert exc.value.line == 1


def test_detect_format():
    assert detect_format("", "api.json") == "json-text"
    assert detect_format("", "api.yml") == "yaml-text"
    assert detect_format('{"openapi": "3.1.0"}') == "json-text"


def test_unresolvable_ref_is_a_warning():
    text = """
openapi: 3.0.0
info: {title: t, version: '1'}
paths:
  /things:
    get:
      responses:
        '200':
          $ref: '#/components/responses/Missing'
"""
    report = ingest_description(text, "yaml-text")
    assert report.warnings
    assert any("Missing" in msg for _, msg in report.warnings)


def test_dialect_mismatch_warns():
    text = "openapi: 3.0.0\ninfo: {title: t, version: '1'}\npaths: {}\n"
    report = ingest_description(text, "yaml-text", "openapi-3.1")
    assert any("analysed as openapi-3.1" in msg for _, msg in report.warnings)


# -- exchanges -----------------------------------------------------------------


def _record(i: int) -> ExchangeRecord:
    body = json.dumps({"id": i, "name": f"p{i}"}) if i % 3 else None
    media = "application/json" if body else None
    req_body = '{"name": "x"}' if i % 5 == 0 else None
    request = ExchangeRequest(
        ["GET", "POST", "PUT", "DELETE", "OPTIONS"][i % 5],
        f"https://api.example.com/v1/players/{i}",
        (("Accept", "application/json"), ("X-Trace", str(i))),
        "application/json" if req_body else None,
        req_body,
    )
    response = ExchangeResponse(
        status=[200, 201, 204, 404, 500][i % 5],
        headers=(("Content-Type", media or "text/plain"), ("ETag", f'"v{i}"')),
        body_media_type=media,
        body_fingerprint=body_fingerprint(media, body),
        body_size=len(body.encode()) if body else 0,
        body_text=body,
        error="connection reset" if i == 49 else None,
    )
    return ExchangeRecord(request, response, f"2024-01-01T00:00:{i:02d}.000Z", i, "<exchanges>")


def test_har_round_trip_50_entries():
    records = [_record(i) for i in range(50)]
    again = ingest_exchanges(json.dumps(dump_exchanges(records)))
    assert again == records


def test_har_skips_bad_entries_with_warnings():
    log = {"log": {"entries": [
        "nonsense",
        {"request": {"method": "GET", "url": "/relative"}, "response": {"status": 200}},
        {"request": {"method": "GET", "url": "https://a.example/x"}, "response": {"status": 999}},
        {"request": {"method": "GET", "url": "https://a.example/x"}, "response": {"status": "abc"}},
        {"request": {"method": "get", "url": "https://a.example/x"}, "response": {"status": 200}},
    ]}}
    warnings: list[str] = []
    records = ingest_exchanges(log, warnings=warnings)
    assert len(records) == 1
    assert records[0].index == 4 and records[0].request.method == "GET"
    assert len(warnings) == 4
    assert all("#/log/entries/" in w for w in warnings)


def test_har_structure_errors():
    with pytest.raises(IngestionError):
        ingest_exchanges("{not json")
    with pytest.raises(IngestionError, match="log.entries"):
        ingest_exchanges({"entries": []})


def test_base64_body_decoded():
    log = {"log": {"entries": [{
        "request": {"method": "GET", "url": "https://a.example/x"},
        "response": {"status": 200, "content": {"mimeType": "application/json",
                                                 "text": "eyJhIjogMX0=", "encoding": "base64"}}}]}}
    rec = ingest_exchanges(log)[0]
    assert rec.response.body_text == '{"a": 1}'
    assert rec.response.body_fingerprint.members() == ("a",)


def test_records_resolve_to_operations(fixtures):
    model = ingest_file(fixtures / "league.yaml").model
    records = ingest_exchanges((fixtures / "dynamic" / "clean.har").read_text())
    assert all(resolve_operation(model, r.effective_method, r.request.uri) is not None
               for r in records if r.request.method != "OPTIONS" or r.is_preflight)


_json = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=5),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=4), inner, max_size=3),
    max_leaves=10,
)


@settings(max_examples=50)
@given(st.lists(_json, min_size=1, max_size=5))
def test_har_round_trip_property(bodies):
    records = []
    for i, value in enumerate(bodies):
        text = json.dumps(value)
        records.append(ExchangeRecord(
            ExchangeRequest("GET", f"https://a.example/r/{i}"),
            ExchangeResponse(200, (("Content-Type", "application/json"),), "application/json",
                             body_fingerprint("application/json", text), len(text.encode()), text),
            "", i))
    assert ingest_exchanges(dump_exchanges(records)) == records

"""Canonical, source-format-independent view of an API and observed exchanges."""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import urlsplit

from restrule.shapes import SchemaShape

METHODS = ("GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS")
SAFE_METHODS = frozenset({"GET", "HEAD", "OPTIONS"})

ARCHETYPES = ("document", "collection", "store", "controller")


@dataclass(frozen=True, order=True)
class SourceLocation:
    file: str
    pointer: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"{self.file}:{self.line}" if self.line else self.file
        return f"{where} {self.pointer}"

    def to_json(self) -> dict[str, Any]:
        return {"file": self.file, "pointer": self.pointer, "line": self.line}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> SourceLocation:
        return cls(data["file"], data["pointer"], data.get("line"))


def escape_pointer(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def unescape_pointer(token: str) -> str:
    return token.replace("~1", "/").replace("~0", "~")


# --------------------------------------------------------------------------
# URI templates


@dataclass(frozen=True)
class PathSegment:
    kind: str  # "literal" | "variable"
    text: str
    archetype: str | None = None

    @property
    def is_variable(self) -> bool:
        return self.kind == "variable"

    def render(self) -> str:
        return "{" + self.text + "}" if self.is_variable else self.text


@dataclass(frozen=True)
class UriTemplate:
    raw: str
    segments: tuple[PathSegment, ...]
    query_params: tuple[str, ...] = ()
    has_trailing_slash: bool = False
    pointer: str = ""

    @property
    def path(self) -> str:
        return "/" + "/".join(s.render() for s in self.segments) + ("/" if self.has_trailing_slash else "")

    @property
    def shape_key(self) -> tuple:
        """Path identity ignoring variable names: ``/a/{x}`` == ``/a/{y}``."""
        return tuple((s.kind, "" if s.is_variable else s.text) for s in self.segments)

    @property
    def final(self) -> PathSegment | None:
        return self.segments[-1] if self.segments else None

    @property
    def literals(self) -> list[PathSegment]:
        return [s for s in self.segments if not s.is_variable]


def parse_template(raw: str, query_params: Iterable[str] = (), pointer: str = "") -> UriTemplate:
    """Lex an OpenAPI path key into segments.

    A segment is a variable only when it is exactly ``{name}``; anything else
    (including ``{id}.json``) is a literal.
    """
    path = raw.split("?", 1)[0].split("#", 1)[0]
    body = path[1:] if path.startswith("/") else path
    trailing = len(body) > 0 and body.endswith("/")
    if trailing:
        body = body[:-1]
    segments = []
    if body or trailing:
        for part in body.split("/"):
            if len(part) > 2 and part.startswith("{") and part.endswith("}") and "{" not in part[1:-1]:
                segments.append(PathSegment("variable", part[1:-1]))
            else:
                segments.append(PathSegment("literal", part))
    if trailing and segments == [PathSegment("literal", "")]:
        segments = []
        trailing = False
    return UriTemplate(raw, tuple(segments), tuple(query_params), trailing, pointer)


# --------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class ResponseDecl:
    status: int
    media_types: tuple[str, ...] = ()
    headers_declared: tuple[str, ...] = ()
    body_schema: SchemaShape | None = None
    pointer: str = ""

    @property
    def has_body(self) -> bool:
        return self.body_schema is not None

    def declares_header(self, name: str) -> bool:
        name = name.lower()
        return any(h.lower() == name for h in self.headers_declared)


@dataclass(frozen=True)
class Operation:
    method: str
    template_ref: str
    request_media_types: tuple[str, ...] = ()
    request_headers_declared: tuple[str, ...] = ()
    responses: Mapping[int, ResponseDecl] = field(default_factory=dict)
    secured: bool = False
    pointer: str = ""
    query_params: tuple[str, ...] = ()
    has_request_body: bool = False
    default_response: ResponseDecl | None = None
    path_examples: Mapping[str, str] = field(default_factory=dict)
    operation_id: str = ""

    @property
    def statuses(self) -> tuple[int, ...]:
        return tuple(sorted(self.responses))

    def declares(self, *codes: int) -> bool:
        return any(code in self.responses for code in codes)

    def declares_request_header(self, name: str) -> bool:
        name = name.lower()
        return any(h.lower() == name for h in self.request_headers_declared)

    def all_responses(self) -> list[ResponseDecl]:
        out = [self.responses[code] for code in sorted(self.responses)]
        if self.default_response is not None:
            out.append(self.default_response)
        return out


@dataclass(frozen=True)
class CanonicalApiModel:
    api_title: str
    version_tag: str
    entry_uri: str | None
    resources: tuple[UriTemplate, ...]
    operations: tuple[Operation, ...]
    security_declared: bool = False
    source_locations: Mapping[str, SourceLocation] = field(default_factory=dict)
    source_file: str = ""
    auth_headers: tuple[str, ...] = ()

    def template(self, raw: str) -> UriTemplate:
        for t in self.resources:
            if t.raw == raw:
                return t
        raise KeyError(raw)

    def operations_for(self, template: UriTemplate | str) -> list[Operation]:
        raw = template if isinstance(template, str) else template.raw
        return [op for op in self.operations if op.template_ref == raw]

    def locate(self, pointer: str) -> SourceLocation:
        loc = self.source_locations.get(pointer)
        if loc is not None:
            return loc
        # nearest ancestor with a known line
        probe = pointer
        line = None
        while "/" in probe:
            probe = probe.rsplit("/", 1)[0]
            known = self.source_locations.get(probe)
            if known is not None and known.line:
                line = known.line
                break
        return SourceLocation(self.source_file, pointer, line)

    @property
    def base_path(self) -> str:
        if not self.entry_uri:
            return ""
        return urlsplit(self.entry_uri).path.rstrip("/")

    def with_archetypes(self, resources: Iterable[UriTemplate]) -> CanonicalApiModel:
        return dataclasses.replace(self, resources=tuple(resources))


# --------------------------------------------------------------------------
# observed exchanges


@dataclass(frozen=True)
class ExchangeRequest:
    method: str
    uri: str
    headers: tuple[tuple[str, str], ...] = ()
    body_media_type: str | None = None
    body_text: str | None = None

    def header(self, name: str) -> str | None:
        return _header(self.headers, name)


@dataclass(frozen=True)
class ExchangeResponse:
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body_media_type: str | None = None
    body_fingerprint: SchemaShape | None = None
    body_size: int = 0
    body_text: str | None = None
    error: str | None = None

    def header(self, name: str) -> str | None:
        return _header(self.headers, name)

    @property
    def has_body(self) -> bool:
        return self.body_size > 0


@dataclass(frozen=True)
class ExchangeRecord:
    request: ExchangeRequest
    response: ExchangeResponse
    timestamp: str = ""
    index: int = 0
    source: str = "<exchanges>"

    @property
    def location(self) -> SourceLocation:
        return SourceLocation(self.source, f"#/log/entries/{self.index}")

    @property
    def effective_method(self) -> str:
        """The method a CORS preflight asks about, or the request method."""
        if self.request.method == "OPTIONS":
            asked = self.request.header("Access-Control-Request-Method")
            if asked:
                return asked.strip().upper()
        return self.request.method

    @property
    def is_preflight(self) -> bool:
        return self.request.method == "OPTIONS" and self.request.header("Origin") is not None \
            and self.request.header("Access-Control-Request-Method") is not None

    @property
    def synthetic(self) -> bool:
        return self.response.status == 0


def _header(headers: Iterable[tuple[str, str]], name: str) -> str | None:
    name = name.lower()
    for key, value in headers:
        if key.lower() == name:
            return value
    return None


# --------------------------------------------------------------------------
# matching concrete URIs onto templates


def _split_path(path: str) -> list[str]:
    body = path.strip("/")
    return body.split("/") if body else []


def match_template(template: UriTemplate, parts: list[str]) -> bool:
    if len(template.segments) != len(parts):
        return False
    for seg, part in zip(template.segments, parts):
        if seg.is_variable:
            if not part:
                return False
        elif seg.text != part:
            return False
    return True


def resolve_template(model: CanonicalApiModel, uri: str) -> UriTemplate | None:
    path = urlsplit(uri).path if "://" in uri else uri.split("?", 1)[0]
    base = model.base_path
    if base and (path == base or path.startswith(base + "/")):
        path = path[len(base):]
    parts = _split_path(path)
    candidates = [t for t in model.resources if match_template(t, parts)]
    if not candidates:
        return None
    # literal segments beat variables, leftmost position first
    return min(candidates, key=lambda t: tuple(1 if s.is_variable else 0 for s in t.segments))


def resolve_operation(model: CanonicalApiModel, method: str, uri: str) -> Operation | None:
    """Find the operation serving ``method uri``, or ``None``."""
    template = resolve_template(model, uri)
    if template is None:
        return None
    method = method.upper()
    for op in model.operations_for(template):
        if op.method == method:
            return op
    return None


# --------------------------------------------------------------------------
# debug dump / reload


def _response_to_json(r: ResponseDecl) -> dict[str, Any]:
    return {
        "status": r.status,
        "media_types": list(r.media_types),
        "headers_declared": list(r.headers_declared),
        "body_schema": r.body_schema.to_json() if r.body_schema else None,
        "pointer": r.pointer,
    }


def _response_from_json(d: Mapping[str, Any]) -> ResponseDecl:
    schema = d.get("body_schema")
    return ResponseDecl(
        status=int(d["status"]),
        media_types=tuple(d.get("media_types", ())),
        headers_declared=tuple(d.get("headers_declared", ())),
        body_schema=SchemaShape.from_json(schema) if schema else None,
        pointer=d.get("pointer", ""),
    )


def model_to_json(model: CanonicalApiModel) -> dict[str, Any]:
    return {
        "api_title": model.api_title,
        "version_tag": model.version_tag,
        "entry_uri": model.entry_uri,
        "security_declared": model.security_declared,
        "source_file": model.source_file,
        "auth_headers": list(model.auth_headers),
        "resources": [
            {
                "raw": t.raw,
                "segments": [[s.kind, s.text, s.archetype] for s in t.segments],
                "query_params": list(t.query_params),
                "has_trailing_slash": t.has_trailing_slash,
                "pointer": t.pointer,
            }
            for t in model.resources
        ],
        "operations": [
            {
                "method": op.method,
                "template_ref": op.template_ref,
                "request_media_types": list(op.request_media_types),
                "request_headers_declared": list(op.request_headers_declared),
                "responses": [_response_to_json(op.responses[c]) for c in sorted(op.responses)],
                "default_response": _response_to_json(op.default_response) if op.default_response else None,
                "secured": op.secured,
                "pointer": op.pointer,
                "query_params": list(op.query_params),
                "has_request_body": op.has_request_body,
                "path_examples": dict(op.path_examples),
                "operation_id": op.operation_id,
            }
            for op in model.operations
        ],
        "source_locations": {k: v.to_json() for k, v in model.source_locations.items()},
    }


def model_from_json(d: Mapping[str, Any]) -> CanonicalApiModel:
    resources = tuple(
        UriTemplate(
            raw=t["raw"],
            segments=tuple(PathSegment(kind, text, arch) for kind, text, arch in t["segments"]),
            query_params=tuple(t.get("query_params", ())),
            has_trailing_slash=bool(t.get("has_trailing_slash", False)),
            pointer=t.get("pointer", ""),
        )
        for t in d["resources"]
    )
    operations = []
    for op in d["operations"]:
        responses = {}
        for r in op.get("responses", ()):
            decl = _response_from_json(r)
            responses[decl.status] = decl
        default = op.get("default_response")
        operations.append(Operation(
            method=op["method"],
            template_ref=op["template_ref"],
            request_media_types=tuple(op.get("request_media_types", ())),
            request_headers_declared=tuple(op.get("request_headers_declared", ())),
            responses=responses,
            secured=bool(op.get("secured", False)),
            pointer=op.get("pointer", ""),
            query_params=tuple(op.get("query_params", ())),
            has_request_body=bool(op.get("has_request_body", False)),
            default_response=_response_from_json(default) if default else None,
            path_examples=dict(op.get("path_examples", {})),
            operation_id=op.get("operation_id", ""),
        ))
    return CanonicalApiModel(
        api_title=d["api_title"],
        version_tag=d["version_tag"],
        entry_uri=d.get("entry_uri"),
        resources=resources,
        operations=tuple(operations),
        security_declared=bool(d.get("security_declared", False)),
        source_locations={k: SourceLocation.from_json(v) for k, v in d.get("source_locations", {}).items()},
        source_file=d.get("source_file", ""),
        auth_headers=tuple(d.get("auth_headers", ())),
    )

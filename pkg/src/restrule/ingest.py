"""Parsers turning OpenAPI descriptions and HAR logs into the canonical model."""

from __future__ import annotations

import base64
import binascii
import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import urlsplit

import yaml

from restrule.model import (
    CanonicalApiModel,
    ExchangeRecord,
    ExchangeRequest,
    ExchangeResponse,
    Operation,
    ResponseDecl,
    SourceLocation,
    escape_pointer,
    parse_template,
    unescape_pointer,
)
from restrule.shapes import ANY, DEFAULT_LINK_MARKERS, SchemaShape, fingerprint, fingerprint_instance

log = logging.getLogger(__name__)

FORMATS = ("json-text", "yaml-text")
DIALECTS = ("openapi-3.0", "openapi-3.1")

_METHOD_KEYS = ("get", "put", "post", "delete", "options", "head", "patch")
_MAX_REF_HOPS = 32
_MAX_LINE_NODES = 500_000

try:  # libyaml is much faster on large documents
    _Loader = yaml.CSafeLoader
except AttributeError:  # pragma: no cover
    _Loader = yaml.SafeLoader


class IngestionError(ValueError):
    """Input cannot be turned into a model (syntax or structure)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


@dataclass
class IngestionReport:
    model: CanonicalApiModel
    warnings: list[tuple[SourceLocation, str]] = field(default_factory=list)
    skipped_nodes: int = 0


# --------------------------------------------------------------------------
# document parsing


def detect_format(text: str, name: str = "") -> str:
    lowered = name.lower()
    if lowered.endswith(".json"):
        return "json-text"
    if lowered.endswith((".yaml", ".yml")):
        return "yaml-text"
    return "json-text" if text.lstrip().startswith(("{", "[")) else "yaml-text"


def _line_map(node: yaml.Node | None) -> dict[str, int]:
    lines: dict[str, int] = {}
    if node is None:
        return lines
    seen: set[int] = set()
    stack = [(node, "#")]
    while stack and len(lines) < _MAX_LINE_NODES:
        current, pointer = stack.pop()
        if id(current) in seen:
            continue
        seen.add(id(current))
        lines.setdefault(pointer, current.start_mark.line + 1)
        if isinstance(current, yaml.MappingNode):
            for key, value in current.value:
                if isinstance(key, yaml.ScalarNode):
                    child = f"{pointer}/{escape_pointer(str(key.value))}"
                    lines.setdefault(child, key.start_mark.line + 1)
                    stack.append((value, child))
        elif isinstance(current, yaml.SequenceNode):
            for i, value in enumerate(current.value):
                stack.append((value, f"{pointer}/{i}"))
    return lines


def _json_lines(text: str) -> dict[str, int]:
    # JSON is almost always valid YAML; the composed node tree gives line numbers
    loader = _Loader(text)
    try:
        return _line_map(loader.get_single_node())
    except (yaml.YAMLError, RecursionError):
        return {}
    finally:
        loader.dispose()


def parse_document(text: str, fmt: str) -> tuple[Any, dict[str, int]]:
    """Parse JSON or YAML text; returns ``(data, pointer -> line)``."""
    if fmt == "json-text":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestionError(exc.msg, exc.lineno, exc.colno) from None
        except RecursionError:
            raise IngestionError("document nesting too deep") from None
        return data, _json_lines(text)
    if fmt != "yaml-text":
        raise IngestionError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    loader = _Loader(text)
    try:
        node = loader.get_single_node()
        data = loader.construct_document(node) if node is not None else None
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise IngestionError(str(exc.problem or exc), line, column) from None
    except yaml.YAMLError as exc:
        raise IngestionError(str(exc)) from None
    except RecursionError:
        raise IngestionError("document nesting too deep") from None
    finally:
        loader.dispose()
    return data, _line_map(node)


# --------------------------------------------------------------------------
# $ref resolution


class _Resolver:
    def __init__(self, root: Any, source: str, external: bool, base_dir: Path | None):
        self.root = root
        self.source = source
        self.external = external
        self.base_dir = base_dir
        self.documents: dict[str, Any] = {}
        self.problems: list[tuple[str, str]] = []

    def _load_external(self, target: str) -> Any:
        if target in self.documents:
            return self.documents[target]
        doc = None
        try:
            if target.startswith(("http://", "https://")):
                import httpx

                text = httpx.get(target, timeout=10.0).text
            else:
                path = Path(target)
                if not path.is_absolute() and self.base_dir is not None:
                    path = self.base_dir / path
                text = path.read_text("utf-8")
            doc, _ = parse_document(text, detect_format(text, target))
        except Exception as exc:  # noqa: BLE001 - any failure is a warning
            self.problems.append((target, f"cannot load external reference: {exc}"))
        self.documents[target] = doc
        return doc

    def lookup(self, ref: str) -> Any:
        target, _, fragment = ref.partition("#")
        if target:
            if not self.external:
                self.problems.append((ref, "external reference resolution is disabled"))
                return None
            doc = self._load_external(target)
        else:
            doc = self.root
        node = doc
        if fragment and fragment != "/":
            for token in fragment.lstrip("/").split("/"):
                token = unescape_pointer(token)
                if isinstance(node, Mapping) and token in node:
                    node = node[token]
                elif isinstance(node, Mapping) and token.isdigit() and int(token) in node:
                    node = node[int(token)]
                elif isinstance(node, list) and token.isdigit() and int(token) < len(node):
                    node = node[int(token)]
                else:
                    self.problems.append((ref, "unresolvable reference"))
                    return None
        return node

    def deref(self, node: Any) -> Any:
        """Follow a ``$ref`` chain; ``None`` when it cannot be resolved."""
        seen: set[str] = set()
        for _ in range(_MAX_REF_HOPS):
            if not isinstance(node, Mapping) or not isinstance(node.get("$ref"), str):
                return node
            ref = node["$ref"]
            if ref in seen:
                self.problems.append((ref, "circular reference"))
                return None
            seen.add(ref)
            node = self.lookup(ref)
            if node is None:
                return None
        self.problems.append(("", "reference chain too long"))
        return None


# --------------------------------------------------------------------------
# OpenAPI -> model


def _is_json_type(media_type: str) -> bool:
    base = media_type.split(";", 1)[0].strip().lower()
    return base == "application/json" or base.endswith("+json")


def _secured(requirements: Any) -> bool:
    if not isinstance(requirements, list) or not requirements:
        return False
    # an empty requirement object means anonymous access is allowed
    return all(isinstance(req, Mapping) and req for req in requirements)


class _Builder:
    def __init__(self, root: Mapping[str, Any], source: str, lines: dict[str, int],
                 resolver: _Resolver, link_markers: Iterable[str]):
        self.root = root
        self.source = source
        self.lines = lines
        self.resolver = resolver
        self.link_markers = tuple(link_markers)
        self.warnings: list[tuple[SourceLocation, str]] = []
        self.skipped = 0
        self.locations: dict[str, SourceLocation] = {}

    def loc(self, pointer: str) -> SourceLocation:
        return SourceLocation(self.source, pointer, self.lines.get(pointer))

    def warn(self, pointer: str, message: str, skip: bool = False) -> None:
        self.warnings.append((self.loc(pointer), message))
        if skip:
            self.skipped += 1

    def deref(self, node: Any, pointer: str) -> Any:
        before = len(self.resolver.problems)
        out = self.resolver.deref(node)
        for ref, problem in self.resolver.problems[before:]:
            self.warn(pointer, f"{problem}: {ref}" if ref else problem)
        return out

    def shape(self, schema: Any, pointer: str) -> SchemaShape:
        before = len(self.resolver.problems)
        shape = fingerprint(schema, self.resolver.lookup, self.link_markers)
        seen = set()
        for ref, problem in self.resolver.problems[before:]:
            if (ref, problem) not in seen:
                seen.add((ref, problem))
                self.warn(pointer, f"{problem}: {ref}")
        return shape

    def parameters(self, raw: Any, pointer: str) -> list[dict[str, Any]]:
        out = []
        if raw is None:
            return out
        if not isinstance(raw, list):
            self.warn(pointer, "parameters must be a list", skip=True)
            return out
        for i, param in enumerate(raw):
            param = self.deref(param, f"{pointer}/{i}")
            if not isinstance(param, Mapping) or "name" not in param or "in" not in param:
                self.warn(f"{pointer}/{i}", "invalid parameter skipped", skip=True)
                continue
            out.append(dict(param))
        return out

    def response(self, status: int, raw: Any, pointer: str) -> ResponseDecl | None:
        resp = self.deref(raw, pointer)
        if not isinstance(resp, Mapping):
            self.warn(pointer, "invalid response skipped", skip=True)
            return None
        headers = resp.get("headers") or {}
        header_names = tuple(str(h) for h in headers) if isinstance(headers, Mapping) else ()
        content = resp.get("content") or {}
        if not isinstance(content, Mapping):
            self.warn(pointer, "response content must be a mapping")
            content = {}
        media_types = tuple(str(m) for m in content)
        body = None
        if media_types:
            chosen = None
            for mt in sorted(media_types, key=lambda m: (not _is_json_type(m), media_types.index(m))):
                entry = content[mt]
                if isinstance(entry, Mapping) and entry.get("schema") is not None:
                    chosen = (mt, entry["schema"])
                    break
            if chosen is None:
                body = SchemaShape(ANY)
            else:
                mt, schema = chosen
                body = self.shape(schema, f"{pointer}/content/{escape_pointer(mt)}/schema")
        self.locations[pointer] = self.loc(pointer)
        return ResponseDecl(status, media_types, header_names, body, pointer)

    def operation(self, raw_path: str, method: str, raw: Mapping[str, Any], path_params: list,
                  top_secured: bool, pointer: str) -> Operation:
        params = {(p["name"], p["in"]): p for p in path_params}
        for p in self.parameters(raw.get("parameters"), f"{pointer}/parameters"):
            params[(p["name"], p["in"])] = p
        query = tuple(str(name) for (name, where) in params if where == "query")
        headers = tuple(str(name) for (name, where) in params if where == "header")
        examples = {}
        for (name, where), p in params.items():
            if where != "path":
                continue
            value = p.get("example")
            if value is None and isinstance(p.get("schema"), Mapping):
                value = p["schema"].get("example")
            if value is None and isinstance(p.get("examples"), Mapping):
                for example in p["examples"].values():
                    example = self.deref(example, f"{pointer}/parameters")
                    if isinstance(example, Mapping) and "value" in example:
                        value = example["value"]
                        break
            if value is not None:
                examples[str(name)] = str(value)

        request_types: tuple[str, ...] = ()
        has_body = False
        if "requestBody" in raw:
            body = self.deref(raw["requestBody"], f"{pointer}/requestBody")
            if isinstance(body, Mapping) and isinstance(body.get("content"), Mapping):
                request_types = tuple(str(m) for m in body["content"])
                has_body = bool(request_types)

        responses: dict[int, ResponseDecl] = {}
        default = None
        raw_responses = raw.get("responses") or {}
        if not isinstance(raw_responses, Mapping):
            self.warn(f"{pointer}/responses", "responses must be a mapping", skip=True)
            raw_responses = {}
        for code, resp in raw_responses.items():
            key = str(code)
            rptr = f"{pointer}/responses/{escape_pointer(key)}"
            if key == "default":
                default = self.response(0, resp, rptr)
                continue
            if not key.isdigit() or not 100 <= int(key) <= 599:
                self.warn(rptr, f"unsupported response key {key!r} skipped", skip=True)
                continue
            status = int(key)
            if status in responses:
                self.warn(rptr, f"duplicate response {status} skipped", skip=True)
                continue
            decl = self.response(status, resp, rptr)
            if decl is not None:
                responses[status] = decl

        secured = _secured(raw["security"]) if "security" in raw else top_secured
        self.locations[pointer] = self.loc(pointer)
        return Operation(
            method=method.upper(),
            template_ref=raw_path,
            request_media_types=request_types,
            request_headers_declared=headers,
            responses=responses,
            secured=secured,
            pointer=pointer,
            query_params=query,
            has_request_body=has_body,
            default_response=default,
            path_examples=examples,
            operation_id=str(raw.get("operationId", "")),
        )

    def build(self) -> CanonicalApiModel:
        root = self.root
        info = root.get("info") if isinstance(root.get("info"), Mapping) else {}
        if "title" not in info:
            self.warn("#/info", "missing info.title")
        title = str(info.get("title", "untitled"))
        version = str(info.get("version", ""))

        entry_uri = None
        servers = root.get("servers")
        if isinstance(servers, list) and servers and isinstance(servers[0], Mapping):
            url = str(servers[0].get("url", ""))
            parts = urlsplit(url)
            if parts.scheme and parts.netloc:
                entry_uri = url
            else:
                self.warn("#/servers/0/url", f"server URL {url!r} is not absolute; no entry URI")

        components = root.get("components") if isinstance(root.get("components"), Mapping) else {}
        schemes = components.get("securitySchemes") if isinstance(components.get("securitySchemes"), Mapping) else {}
        auth_headers = {"Authorization"}
        for scheme in schemes.values():
            scheme = self.deref(scheme, "#/components/securitySchemes")
            if not isinstance(scheme, Mapping):
                continue
            if scheme.get("type") == "apiKey" and scheme.get("in") == "header" and scheme.get("name"):
                auth_headers.add(str(scheme["name"]))
            if scheme.get("type") == "apiKey" and scheme.get("in") == "cookie":
                auth_headers.add("Cookie")
        top_secured = _secured(root.get("security"))

        paths = root["paths"]
        templates = []
        operations = []
        for raw_path, item in paths.items():
            raw_path = str(raw_path)
            pointer = f"#/paths/{escape_pointer(raw_path)}"
            if not raw_path.startswith("/"):
                self.warn(pointer, "path must start with '/'; skipped", skip=True)
                continue
            item = self.deref(item, pointer)
            if not isinstance(item, Mapping):
                self.warn(pointer, "invalid path item skipped", skip=True)
                continue
            path_params = self.parameters(item.get("parameters"), f"{pointer}/parameters")
            ops = []
            for key, raw in item.items():
                if key == "trace":
                    self.warn(f"{pointer}/trace", "TRACE operations are not modelled", skip=True)
                    continue
                if key not in _METHOD_KEYS:
                    continue
                op_ptr = f"{pointer}/{key}"
                if not isinstance(raw, Mapping):
                    self.warn(op_ptr, "invalid operation skipped", skip=True)
                    continue
                ops.append(self.operation(raw_path, key, raw, path_params, top_secured, op_ptr))
            query_names: list[str] = []
            for p in path_params:
                if p["in"] == "query" and p["name"] not in query_names:
                    query_names.append(str(p["name"]))
            for op in ops:
                for name in op.query_params:
                    if name not in query_names:
                        query_names.append(name)
            templates.append(parse_template(raw_path, query_names, pointer))
            self.locations[pointer] = self.loc(pointer)
            operations.extend(ops)

        return CanonicalApiModel(
            api_title=title,
            version_tag=version,
            entry_uri=entry_uri,
            resources=tuple(templates),
            operations=tuple(operations),
            security_declared=bool(schemes) or any(op.secured for op in operations),
            source_locations=dict(self.locations),
            source_file=self.source,
            auth_headers=tuple(sorted(auth_headers)),
        )


def ingest_description(
    document: str | bytes,
    format: str | None = None,
    dialect: str | None = None,
    *,
    source: str = "<memory>",
    external_refs: bool = False,
    base_dir: str | Path | None = None,
    link_markers: Iterable[str] = DEFAULT_LINK_MARKERS,
) -> IngestionReport:
    """Parse an OpenAPI 3.0/3.1 document into a :class:`CanonicalApiModel`."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestionError(f"document is not UTF-8: {exc}") from None
    fmt = format or detect_format(document, source)
    data, lines = parse_document(document, fmt)
    if not isinstance(data, Mapping):
        raise IngestionError("document root must be a mapping")
    version = data.get("openapi")
    if version is None:
        raise IngestionError("missing 'openapi' version field")
    version = str(version)
    detected = "openapi-3.1" if version.startswith("3.1") else "openapi-3.0" if version.startswith("3.0") else None
    if detected is None:
        raise IngestionError(f"unsupported OpenAPI version {version!r}")
    if not isinstance(data.get("paths"), Mapping):
        raise IngestionError("missing 'paths' object")
    if dialect is not None and dialect not in DIALECTS:
        raise IngestionError(f"unknown dialect {dialect!r}; expected one of {DIALECTS}")

    resolver = _Resolver(data, source, external_refs,
                         Path(base_dir) if base_dir is not None else None)
    builder = _Builder(data, source, lines, resolver, link_markers)
    if dialect is not None and dialect != detected:
        builder.warn("#/openapi", f"document declares {version}, analysed as {dialect}")
    model = builder.build()
    return IngestionReport(model, builder.warnings, builder.skipped)


def ingest_file(path: str | Path, **kwargs: Any) -> IngestionReport:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from None
    kwargs.setdefault("base_dir", path.parent)
    return ingest_description(data, kwargs.pop("format", None) or detect_format("", path.name),
                              source=str(path), **kwargs)


# --------------------------------------------------------------------------
# HAR subset


def _headers(raw: Any) -> tuple[tuple[str, str], ...]:
    if not isinstance(raw, list):
        return ()
    out = []
    for h in raw:
        if isinstance(h, Mapping) and "name" in h:
            out.append((str(h["name"]), str(h.get("value", ""))))
    return tuple(out)


def _body_text(content: Mapping[str, Any]) -> str | None:
    text = content.get("text")
    if text is None:
        return None
    text = str(text)
    if content.get("encoding") == "base64":
        try:
            return base64.b64decode(text).decode("utf-8", errors="replace")
        except (binascii.Error, ValueError):
            return None
    return text


def body_fingerprint(media_type: str | None, text: str | None,
                     link_markers: Iterable[str] = DEFAULT_LINK_MARKERS) -> SchemaShape | None:
    """Fingerprint a JSON body; opaque or unparseable bodies get none."""
    if not media_type or text is None or not _is_json_type(media_type):
        return None
    try:
        return fingerprint_instance(json.loads(text), link_markers)
    except (ValueError, RecursionError):
        return None


def ingest_exchanges(
    document: str | bytes | Mapping[str, Any],
    *,
    source: str = "<exchanges>",
    warnings: list[str] | None = None,
    link_markers: Iterable[str] = DEFAULT_LINK_MARKERS,
) -> list[ExchangeRecord]:
    """Read a HAR-subset log. Entries that cannot be used are skipped with a warning."""
    if warnings is None:
        warnings = []
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise IngestionError(exc.msg, exc.lineno, exc.colno) from None
    log_obj = document.get("log") if isinstance(document, Mapping) else None
    entries = log_obj.get("entries") if isinstance(log_obj, Mapping) else None
    if not isinstance(entries, list):
        raise IngestionError("exchange log must be an object with log.entries[]")

    records = []
    for index, entry in enumerate(entries):
        where = f"{source} #/log/entries/{index}"
        if not isinstance(entry, Mapping):
            warnings.append(f"{where}: entry is not an object; skipped")
            continue
        req = entry.get("request")
        resp = entry.get("response")
        if not isinstance(req, Mapping) or not isinstance(resp, Mapping):
            warnings.append(f"{where}: missing request or response; skipped")
            continue
        url = str(req.get("url", ""))
        parts = urlsplit(url)
        if not parts.scheme or not parts.netloc:
            warnings.append(f"{where}: URI {url!r} is not absolute; skipped")
            continue
        try:
            status = int(resp.get("status"))
        except (TypeError, ValueError):
            warnings.append(f"{where}: invalid status; skipped")
            continue
        if status != 0 and not 100 <= status <= 599:
            warnings.append(f"{where}: status {status} out of range; skipped")
            continue

        post = req.get("postData") if isinstance(req.get("postData"), Mapping) else {}
        content = resp.get("content") if isinstance(resp.get("content"), Mapping) else {}
        text = _body_text(content)
        media = str(content.get("mimeType") or "") or None
        size = content.get("size")
        if not isinstance(size, int) or isinstance(size, bool) or size < 0:
            size = len(text.encode()) if text is not None else 0
        request = ExchangeRequest(
            method=str(req.get("method", "GET")).upper(),
            uri=url,
            headers=_headers(req.get("headers")),
            body_media_type=str(post.get("mimeType") or "") or None,
            body_text=None if post.get("text") is None else str(post.get("text")),
        )
        response = ExchangeResponse(
            status=status,
            headers=_headers(resp.get("headers")),
            body_media_type=media,
            body_fingerprint=body_fingerprint(media, text, link_markers),
            body_size=size,
            body_text=text,
            error=resp.get("_error") or resp.get("_errorMessage") or None,
        )
        records.append(ExchangeRecord(request, response, str(entry.get("startedDateTime", "")),
                                      index, source))
    return records


def dump_exchanges(records: Iterable[ExchangeRecord], creator: str = "restrule") -> dict[str, Any]:
    """Serialize records into the HAR-subset structure read by :func:`ingest_exchanges`."""
    from restrule import __version__

    entries = []
    for rec in records:
        req: dict[str, Any] = {
            "method": rec.request.method,
            "url": rec.request.uri,
            "httpVersion": "HTTP/1.1",
            "headers": [{"name": k, "value": v} for k, v in rec.request.headers],
        }
        if rec.request.body_media_type is not None or rec.request.body_text is not None:
            req["postData"] = {"mimeType": rec.request.body_media_type or "",
                               "text": rec.request.body_text or ""}
        content: dict[str, Any] = {"size": rec.response.body_size,
                                   "mimeType": rec.response.body_media_type or ""}
        if rec.response.body_text is not None:
            content["text"] = rec.response.body_text
        resp: dict[str, Any] = {
            "status": rec.response.status,
            "statusText": "",
            "httpVersion": "HTTP/1.1",
            "headers": [{"name": k, "value": v} for k, v in rec.response.headers],
            "content": content,
        }
        if rec.response.error:
            resp["_error"] = rec.response.error
        entries.append({"startedDateTime": rec.timestamp, "request": req, "response": resp})
    return {"log": {"version": "1.2", "creator": {"name": creator, "version": __version__},
                    "entries": entries}}

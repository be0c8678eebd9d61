"""Checks on request methods and response status codes."""

from __future__ import annotations

from email.utils import parsedate_to_datetime
from urllib.parse import parse_qsl, urlsplit

from restrule.checks.engine import (
    CheckResult,
    Context,
    Observed,
    base_media_type,
    dynamic_check,
    is_json_type,
    static_check,
)
from restrule.model import Operation

# markers the prober uses for requests that must fail
STALE_ETAG = '"restrule-stale"'
BOGUS_MEDIA_TYPE = "application/x-restrule-bogus"
UNACCEPTABLE_MEDIA_TYPE = "application/x-restrule-unacceptable"

STANDARD_5XX = frozenset({500, 501, 502, 503, 504, 505, 506, 507, 508, 510, 511})
_EPOCH_YEAR = 1970


def _is_2xx(status: int) -> bool:
    return 200 <= status < 300


def _creates_collection(ctx: Context, op: Operation) -> bool:
    return op.method == "POST" and ctx.archetype(ctx.template_of(op)) == "collection"


def _posted_to_collection(o: Observed) -> bool:
    return (o.record.request.method == "POST" and o.template is not None
            and o.template.final is not None and o.template.final.archetype == "collection")


def _has_override_query(uri: str) -> bool:
    return any(k.lower() == "_method" for k, _ in parse_qsl(urlsplit(uri).query, keep_blank_values=True))


def _where(o: Observed) -> str:
    req = o.record.request
    return f"{req.method} {req.uri} -> {o.record.response.status}"


# -- 17 ---------------------------------------------------------------------


@static_check(17, "Send the intended HTTP method directly; drop method-override headers, "
                  "request bodies on GET, and verb-named POST endpoints.")
def check_tunneling(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        result.checked += 1
        loc = ctx.loc(op.pointer)
        for header in op.request_headers_declared:
            if header.lower() in ctx.override_headers:
                result.add(loc, f"{op.method} {op.template_ref} declares method-override header {header}", header)
        if any(q.lower() == "_method" for q in op.query_params):
            result.add(loc, f"{op.method} {op.template_ref} accepts a _method override parameter", "_method")
        if op.method == "GET" and op.has_request_body:
            result.add(loc, f"GET {op.template_ref} declares a request body", "requestBody")
        final = ctx.template_of(op).final
        if op.method == "POST" and final is not None and not final.is_variable \
                and ctx.analysis(final).is_crud_verb:
            result.add(loc, f"POST {op.template_ref} tunnels a CRUD operation named '{final.text}'", final.text)
    return result


@dynamic_check(17)
def observe_tunneling(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        req = o.record.request
        result.checked += 1
        for name, value in req.headers:
            if name.lower() in ctx.override_headers:
                result.add(o.record.location, f"request overrides its method via {name}: {value}", _where(o))
        if _has_override_query(req.uri):
            result.add(o.record.location, "request overrides its method via _method", _where(o))
    return result


# -- 18 ---------------------------------------------------------------------


@static_check(18, "Declare GET for every document, collection, and store resource.")
def check_get_declared(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t in ctx.model.resources:
        if ctx.archetype(t) not in ("document", "collection", "store"):
            continue
        result.checked += 1
        if not any(op.method == "GET" for op in ctx.ops(t)):
            result.add(ctx.loc(t.pointer), f"{ctx.archetype(t)} {t.raw} cannot be retrieved with GET", t.raw)
    return result


@dynamic_check(18)
def observe_get(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed("GET"):
        resp = o.record.response
        if not _is_2xx(resp.status):
            continue
        result.checked += 1
        if resp.status == 204 or not resp.has_body:
            result.add(o.record.location, "GET returned no representation", _where(o))
    return result


# -- 20 ---------------------------------------------------------------------


@static_check(20, "Let PUT on a store item declare both 201 (inserted) and 200/204 (replaced).")
def check_store_put(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        t = ctx.template_of(op)
        if op.method != "PUT" or ctx.parent_archetype(t) != "store":
            continue
        result.checked += 1
        missing = []
        if not op.declares(201):
            missing.append("201")
        if not op.declares(200, 204):
            missing.append("200 or 204")
        if missing:
            result.add(ctx.loc(op.pointer), f"PUT {op.template_ref} does not declare {' and '.join(missing)}",
                       ",".join(map(str, op.statuses)))
    return result


# -- 22, 26, 28 ---------------------------------------------------------------


def _collection_post_check(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if not _creates_collection(ctx, op):
            continue
        result.checked += 1
        if not op.declares(201):
            result.add(ctx.loc(op.pointer), f"POST {op.template_ref} does not declare 201 Created",
                       ",".join(map(str, op.statuses)))
    return result


def _collection_post_observed(ctx: Context, only_200: bool = False) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed("POST"):
        status = o.record.response.status
        if not _posted_to_collection(o) or not _is_2xx(status):
            continue
        result.checked += 1
        if (status == 200) if only_200 else (status not in (201, 202)):
            result.add(o.record.location, f"POST to collection answered {status} instead of 201", _where(o))
    return result


@static_check(22, "Create collection members with POST and declare 201 Created.")
def check_collection_post(ctx: Context) -> CheckResult:
    return _collection_post_check(ctx)


@dynamic_check(22)
def observe_collection_post(ctx: Context) -> CheckResult:
    return _collection_post_observed(ctx)


@static_check(28, "Answer successful creation with 201 Created.")
def check_created(ctx: Context) -> CheckResult:
    return _collection_post_check(ctx)


@dynamic_check(28)
def observe_created(ctx: Context) -> CheckResult:
    return _collection_post_observed(ctx)


@static_check(26, "Reserve 200 for nonspecific success; use 201 for creation.")
def check_nonspecific_success(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if not _creates_collection(ctx, op):
            continue
        result.checked += 1
        if op.declares(200) and not op.declares(201):
            result.add(ctx.loc(op.responses[200].pointer),
                       f"POST {op.template_ref} signals creation with 200", "200")
    return result


@dynamic_check(26)
def observe_nonspecific_success(ctx: Context) -> CheckResult:
    return _collection_post_observed(ctx, only_200=True)


# -- 23, 24 -------------------------------------------------------------------


@static_check(23, "Expose procedural actions as controllers invoked with POST only.")
def check_controller_methods(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if op.method in ("OPTIONS", "HEAD"):
            continue
        archetype = ctx.archetype(ctx.template_of(op))
        if archetype == "controller":
            result.checked += 1
            if op.method != "POST":
                result.add(ctx.loc(op.pointer), f"controller {op.template_ref} is invoked with {op.method}",
                           op.method)
        elif op.method == "POST" and archetype == "document":
            result.checked += 1
            result.add(ctx.loc(op.pointer), f"POST on document {op.template_ref}; POST belongs to "
                                            "collections and controllers", op.method)
    return result


@static_check(24, "Declare DELETE on the member resource being removed, not on containers or controllers.")
def check_delete_target(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if op.method != "DELETE":
            continue
        result.checked += 1
        archetype = ctx.archetype(ctx.template_of(op))
        if archetype in ("controller", "collection", "store"):
            result.add(ctx.loc(op.pointer), f"DELETE declared on {archetype} {op.template_ref}", archetype)
    return result


@dynamic_check(24)
def observe_delete(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed("DELETE"):
        status = o.record.response.status
        if not _is_2xx(status):
            continue
        result.checked += 1
        if status not in (200, 202, 204):
            result.add(o.record.location, f"DELETE answered {status}", _where(o))
    return result


# -- 27, 30, 31 ---------------------------------------------------------------


@static_check(27, "Send errors with a 4xx/5xx status instead of 200.")
def check_errors_as_200(ctx: Context) -> CheckResult:
    result = CheckResult()
    markers = set(ctx.settings.error_markers)
    for op in ctx.model.operations:
        decl = op.responses.get(200)
        if decl is None or decl.body_schema is None:
            continue
        result.checked += 1
        hits = sorted(markers & set(decl.body_schema.members()))
        if hits:
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} 200 body carries error member(s) "
                                              f"{', '.join(hits)}", ",".join(hits))
    return result


@dynamic_check(27)
def observe_errors_as_200(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not _is_2xx(resp.status) or resp.body_fingerprint is None:
            continue
        result.checked += 1
        if ctx.is_error_shape(resp.body_fingerprint):
            result.add(o.record.location, f"{resp.status} response carries an error body", _where(o))
    return result


@static_check(30, "Use 204 No Content for responses without a body.")
def check_empty_200(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        decl = op.responses.get(200)
        if decl is None or op.method in ("HEAD", "OPTIONS"):
            continue
        result.checked += 1
        if not decl.has_body:
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} declares 200 without a body", "200")
    return result


@dynamic_check(30)
def observe_empty_200(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not _is_2xx(resp.status) or o.record.request.method in ("HEAD", "OPTIONS"):
            continue
        result.checked += 1
        if resp.status == 200 and not resp.has_body:
            result.add(o.record.location, "200 response with an empty body", _where(o))
    return result


@static_check(31, "Declare the Location header on 301 responses.")
def check_redirect_location(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        decl = op.responses.get(301)
        if decl is None:
            continue
        result.checked += 1
        if not decl.declares_header("Location"):
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} 301 lacks a Location header", "301")
    return result


@dynamic_check(31)
def observe_redirect_location(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        if o.record.response.status != 301:
            continue
        result.checked += 1
        if not o.record.response.header("Location"):
            result.add(o.record.location, "301 response without Location", _where(o))
    return result


# -- 34 ---------------------------------------------------------------------


@static_check(34, "Declare 304 Not Modified for GETs that send ETag or Last-Modified.")
def check_not_modified(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        decl = op.responses.get(200)
        if op.method != "GET" or decl is None:
            continue
        if not (decl.declares_header("ETag") or decl.declares_header("Last-Modified")):
            continue
        result.checked += 1
        if not op.declares(304):
            result.add(ctx.loc(op.pointer), f"GET {op.template_ref} sends validators but never answers 304",
                       ",".join(map(str, op.statuses)))
    return result


def _etags(value: str) -> set[str]:
    return {t.strip().removeprefix("W/") for t in value.split(",") if t.strip()}


def _not_modified_since(since: str, last_modified: str | None) -> bool:
    if not last_modified:
        return False
    try:
        return parsedate_to_datetime(last_modified) <= parsedate_to_datetime(since)
    except (TypeError, ValueError):
        return False


@dynamic_check(34)
def observe_not_modified(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed("GET"):
        req, resp = o.record.request, o.record.response
        inm = req.header("If-None-Match")
        ims = req.header("If-Modified-Since")
        if inm is None and ims is None:
            continue
        if resp.status == 304:
            result.checked += 1
            continue
        if resp.status != 200:
            continue
        unchanged = False
        if inm is not None:
            current = resp.header("ETag")
            tags = _etags(inm)
            unchanged = "*" in tags or (current is not None and current.strip().removeprefix("W/") in tags)
        elif ims is not None:
            unchanged = _not_modified_since(ims, resp.header("Last-Modified"))
        if unchanged:
            result.checked += 1
            result.add(o.record.location, "conditional GET for an unchanged resource answered 200", _where(o))
    return result


# -- 37, 38 -------------------------------------------------------------------


def _secured_check(ctx: Context, status: int, label: str) -> CheckResult:
    result = CheckResult()
    if not ctx.model.security_declared:
        return result
    for op in ctx.model.operations:
        if not op.secured:
            continue
        result.checked += 1
        if not op.declares(status):
            result.add(ctx.loc(op.pointer), f"secured {op.method} {op.template_ref} does not declare {status} {label}",
                       ",".join(map(str, op.statuses)))
    return result


def _unauthenticated(ctx: Context) -> list[Observed]:
    out = []
    for o in ctx.observed():
        if o.operation is None or not o.operation.secured or o.record.is_preflight:
            continue
        if any(name.lower() in ctx.auth_headers for name, _ in o.record.request.headers):
            continue
        out.append(o)
    return out


@static_check(37, "Declare 401 Unauthorized on secured operations.")
def check_unauthorized(ctx: Context) -> CheckResult:
    return _secured_check(ctx, 401, "Unauthorized")


@dynamic_check(37)
def observe_unauthorized(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in _unauthenticated(ctx):
        status = o.record.response.status
        result.checked += 1
        if _is_2xx(status):
            result.add(o.record.location, "secured operation served a request without credentials", _where(o))
        elif status == 403:
            result.add(o.record.location, "missing credentials answered 403 instead of 401", _where(o))
    return result


@static_check(38, "Declare 403 Forbidden on secured operations.")
def check_forbidden(ctx: Context) -> CheckResult:
    return _secured_check(ctx, 403, "Forbidden")


@dynamic_check(38)
def observe_forbidden(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in _unauthenticated(ctx):
        result.checked += 1
        if _is_2xx(o.record.response.status):
            result.add(o.record.location, "secured operation granted access without credentials", _where(o))
    return result


# -- 41, 43, 44 ---------------------------------------------------------------


def _media_ranges(header: str) -> list[str]:
    out = []
    for part in header.split(","):
        fields = [f.strip() for f in part.split(";")]
        if not fields[0]:
            continue
        q = 1.0
        for f in fields[1:]:
            if f.lower().startswith("q="):
                try:
                    q = float(f[2:])
                except ValueError:
                    q = 1.0
        if q > 0:
            out.append(fields[0].lower())
    return out


def accepts(ranges: list[str], media_type: str) -> bool:
    media_type = base_media_type(media_type)
    major = media_type.split("/", 1)[0]
    for r in ranges:
        if r in ("*/*", "*", media_type) or (r.endswith("/*") and r[:-2] == major):
            return True
    return False


@static_check(41, "Declare 406 Not Acceptable on operations offering several media types.")
def check_not_acceptable(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        types = {base_media_type(m) for d in op.all_responses() if _is_2xx(d.status) for m in d.media_types}
        if len(types) < 2:
            continue
        result.checked += 1
        if not op.declares(406):
            result.add(ctx.loc(op.pointer), f"{op.method} {op.template_ref} offers {', '.join(sorted(types))} "
                                            "but does not declare 406", ",".join(sorted(types)))
    return result


@dynamic_check(41)
def observe_not_acceptable(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        accept = o.record.request.header("Accept")
        if not accept:
            continue
        ranges = _media_ranges(accept)
        if not ranges or "*/*" in ranges:
            continue
        resp = o.record.response
        if resp.status == 406:
            result.checked += 1
        elif _is_2xx(resp.status) and resp.has_body and resp.body_media_type:
            result.checked += 1
            if not accepts(ranges, resp.body_media_type):
                result.add(o.record.location, f"served {base_media_type(resp.body_media_type)} although the "
                                              f"client accepts only {accept}", _where(o))
    return result


@static_check(43, "Declare 412 Precondition Failed where If-Match or If-Unmodified-Since is accepted.")
def check_precondition(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if not (op.declares_request_header("If-Match") or op.declares_request_header("If-Unmodified-Since")):
            continue
        result.checked += 1
        if not op.declares(412):
            result.add(ctx.loc(op.pointer), f"{op.method} {op.template_ref} accepts preconditions "
                                            "but does not declare 412", ",".join(map(str, op.statuses)))
    return result


def _stale_precondition(o: Observed) -> bool:
    req = o.record.request
    if_match = req.header("If-Match")
    if if_match is not None and STALE_ETAG in _etags(if_match):
        return True
    since = req.header("If-Unmodified-Since")
    if since is not None:
        try:
            return parsedate_to_datetime(since).year <= _EPOCH_YEAR
        except (TypeError, ValueError):
            return False
    return False


@dynamic_check(43)
def observe_precondition(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        if not _stale_precondition(o):
            continue
        result.checked += 1
        status = o.record.response.status
        if _is_2xx(status):
            result.add(o.record.location, f"request with a failed precondition answered {status}", _where(o))
    return result


@static_check(44, "Declare 415 Unsupported Media Type on operations that accept a request body.")
def check_unsupported_media(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        if not op.has_request_body:
            continue
        result.checked += 1
        if not op.declares(415):
            result.add(ctx.loc(op.pointer), f"{op.method} {op.template_ref} accepts a body but does not declare 415",
                       ",".join(map(str, op.statuses)))
    return result


def _unsupported_payload(o: Observed) -> bool:
    req = o.record.request
    content_type = req.header("Content-Type") or req.body_media_type
    if not content_type:
        return False
    base = base_media_type(content_type)
    if base == BOGUS_MEDIA_TYPE:
        return True
    declared = o.operation.request_media_types if o.operation else ()
    if not declared:
        return False
    return not accepts([base_media_type(m) for m in declared], base)


@dynamic_check(44)
def observe_unsupported_media(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        if not _unsupported_payload(o):
            continue
        result.checked += 1
        status = o.record.response.status
        if _is_2xx(status):
            result.add(o.record.location, f"payload of an unsupported media type answered {status}", _where(o))
    return result


# -- 45 ---------------------------------------------------------------------


@dynamic_check(45, "Report malfunctions with a standard 5xx status and the API's error body.")
def observe_server_errors(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not 500 <= resp.status <= 599:
            continue
        result.checked += 1
        if resp.status not in STANDARD_5XX:
            result.add(o.record.location, f"nonstandard server error status {resp.status}", _where(o))
            continue
        if not resp.has_body:
            continue
        media = resp.body_media_type or ""
        problem = base_media_type(media).endswith("problem+json")
        if not problem and (not is_json_type(media) or not ctx.is_error_shape(resp.body_fingerprint)):
            result.add(o.record.location, f"{resp.status} body is not an error representation",
                       f"{_where(o)} ({base_media_type(media) or 'no media type'})")
    return result

"""Checks on HTTP header metadata."""

from __future__ import annotations

from restrule.checks.engine import CheckResult, Context, Observed, base_media_type, dynamic_check, static_check

_CACHE_HEADERS = ("Cache-Control", "Expires", "ETag", "Last-Modified")


def _where(o: Observed) -> str:
    req = o.record.request
    return f"{req.method} {req.uri} -> {o.record.response.status}"


def _is_wildcard(media_type: str) -> bool:
    return "*" in base_media_type(media_type)


@static_check(46, "Declare a concrete media type for every response body.")
def check_content_type(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        for decl in op.all_responses():
            if not decl.has_body:
                continue
            result.checked += 1
            vague = [m for m in decl.media_types if _is_wildcard(m)]
            if vague:
                result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} response {decl.status or 'default'} "
                                                  f"has no concrete Content-Type ({', '.join(vague)})",
                           ",".join(vague))
    return result


@dynamic_check(46)
def observe_content_type(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not resp.has_body or o.record.request.method == "HEAD":
            continue
        result.checked += 1
        if not resp.header("Content-Type") and not resp.body_media_type:
            result.add(o.record.location, "response body sent without Content-Type", _where(o))
    return result


@dynamic_check(47, "Send Content-Length (or chunked Transfer-Encoding) with response bodies.")
def observe_content_length(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not resp.has_body:
            continue
        result.checked += 1
        if resp.header("Content-Length") is None and resp.header("Transfer-Encoding") is None:
            result.add(o.record.location, "response body sent without Content-Length", _where(o), advisory=True)
    return result


@static_check(51, "Declare the Location header on 201 Created responses.")
def check_created_location(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        decl = op.responses.get(201)
        if decl is None:
            continue
        result.checked += 1
        if not decl.declares_header("Location"):
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} 201 lacks a Location header", "201")
    return result


@dynamic_check(51)
def observe_created_location(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        if o.record.response.status != 201:
            continue
        result.checked += 1
        if not o.record.response.header("Location"):
            result.add(o.record.location, "201 response without Location", _where(o))
    return result


@static_check(54, "Declare Cache-Control (or ETag/Last-Modified validators) on GET responses.")
def check_caching(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        decl = op.responses.get(200)
        if op.method != "GET" or decl is None:
            continue
        result.checked += 1
        if not any(decl.declares_header(h) for h in _CACHE_HEADERS):
            result.add(ctx.loc(decl.pointer), f"GET {op.template_ref} 200 declares no caching metadata", "200")
    return result


@dynamic_check(54)
def observe_caching(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed("GET"):
        resp = o.record.response
        if resp.status != 200:
            continue
        result.checked += 1
        if not any(resp.header(h) for h in _CACHE_HEADERS):
            result.add(o.record.location, "GET 200 response carries no caching metadata", _where(o))
    return result


def _custom_header_issues(ctx: Context, names, add) -> int:
    checked = 0
    for name in names:
        lowered = name.lower()
        if lowered in ctx.auth_headers:
            continue
        checked += 1
        if lowered in ctx.override_headers:
            add(f"custom header {name} changes the request method", name, False)
        elif lowered not in ctx.standard_headers and not lowered.startswith("sec-"):
            add(f"custom header {name}", name, True)
    return checked


@static_check(57, "Use standard headers and methods; move custom header semantics into the representation.")
def check_custom_headers(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        loc = ctx.loc(op.pointer)

        def add(message, evidence, advisory, _loc=loc, _op=op):
            result.add(_loc, f"{_op.method} {_op.template_ref}: {message}", evidence, advisory=advisory)

        result.checked += _custom_header_issues(ctx, op.request_headers_declared, add)
    return result


@dynamic_check(57)
def observe_custom_headers(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        def add(message, evidence, advisory, _o=o):
            result.add(_o.record.location, message, f"{evidence} on {_where(_o)}", advisory=advisory)

        result.checked += _custom_header_issues(ctx, [n for n, _ in o.record.request.headers], add)
    return result

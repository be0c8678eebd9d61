"""Checks on representation formats and their consistency."""

from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Iterable

from restrule.checks.engine import CheckResult, Context, Observed, base_media_type, dynamic_check, is_json_type, static_check
from restrule.shapes import conforms, form_to_json, unwrap_envelope


def _where(o: Observed) -> str:
    req = o.record.request
    return f"{req.method} {req.uri} -> {o.record.response.status}"


def _minority(items: Iterable[tuple[Hashable, object]]) -> list[tuple[Hashable, object]]:
    """Items whose key is not the most common one (ties broken by key order)."""
    items = list(items)
    counts = Counter(key for key, _ in items)
    if len(counts) < 2:
        return []
    majority = min(counts, key=lambda k: (-counts[k], str(k)))
    return [(key, item) for key, item in items if key != majority]


@static_check(61, "Offer application/json (or a +json type) for every response body.")
def check_json(ctx: Context) -> CheckResult:
    result = CheckResult()
    for op in ctx.model.operations:
        for decl in op.all_responses():
            if not decl.media_types:
                continue
            result.checked += 1
            if not any(is_json_type(m) for m in decl.media_types):
                result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} response {decl.status or 'default'} "
                                                  "offers no JSON representation", ",".join(decl.media_types))
    return result


@dynamic_check(61)
def observe_json(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        resp = o.record.response
        if not resp.has_body or not resp.body_media_type:
            continue
        accept = (o.record.request.header("Accept") or "*/*").lower()
        if "json" not in accept and "*/*" not in accept and "application/*" not in accept:
            continue
        result.checked += 1
        if not is_json_type(resp.body_media_type):
            result.add(o.record.location, f"served {base_media_type(resp.body_media_type)} where JSON "
                                          "was acceptable", _where(o))
    return result


@static_check(63, "No action needed; alternative formats are optional.")
def check_other_formats(ctx: Context) -> CheckResult:
    result = CheckResult()
    formats = set()
    for op in ctx.model.operations:
        for decl in op.all_responses():
            for m in decl.media_types:
                result.checked += 1
                if not is_json_type(m):
                    formats.add(base_media_type(m))
    if formats:
        result.add(ctx.loc("#/paths"), "non-JSON formats offered: " + ", ".join(sorted(formats)),
                   ",".join(sorted(formats)), advisory=True)
    return result


@static_check(69, "Serve the API below a single root path.")
def check_entry_points(ctx: Context) -> CheckResult:
    result = CheckResult()
    roots = sorted({t.segments[0].render() if t.segments else "/" for t in ctx.model.resources})
    if not roots:
        return result
    result.checked = 1
    limit = ctx.settings.entry_point_threshold
    if len(roots) > limit:
        result.add(ctx.loc("#/paths"), f"{len(roots)} entry point URIs advertised (limit {limit})",
                   ", ".join("/" + r.lstrip("/") for r in roots))
    return result


def _family(media_type: str) -> str | None:
    base = base_media_type(media_type)
    if "/" not in base:
        return None
    _, sub = base.split("/", 1)
    if sub.endswith(("+json", "json")) or sub in ("json",):
        return "json"
    if sub.endswith(("+xml", "xml")):
        return "xml"
    return None


@static_check(71, "Use one spelling per format family across the API (e.g. always application/json).")
def check_media_type_forms(ctx: Context) -> CheckResult:
    result = CheckResult()
    by_family: dict[str, list] = {}
    for op in ctx.model.operations:
        for decl in op.all_responses():
            if not 200 <= decl.status < 300:
                continue
            for m in decl.media_types:
                family = _family(m)
                if family is None:
                    continue
                result.checked += 1
                by_family.setdefault(family, []).append((base_media_type(m), (op, decl)))
    for family in sorted(by_family):
        for form, (op, decl) in _minority(by_family[family]):
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} uses {form}, unlike the "
                                              f"prevailing {family} media type", form)
    return result


def _concept_key(ctx: Context, op) -> tuple | None:
    t = ctx.template_of(op)
    if not t.segments:
        return None
    final = t.final
    if final.is_variable:
        return t.shape_key[:-1]
    if final.archetype in ("collection", "store"):
        return t.shape_key
    return None


@static_check(72, "Represent the same resource with the same schema in every operation.")
def check_schema_forms(ctx: Context) -> CheckResult:
    result = CheckResult()
    envelope = ctx.settings.envelope_members
    groups: dict[tuple, list] = {}
    for op in ctx.model.operations:
        key = _concept_key(ctx, op)
        if key is None:
            continue
        for decl in op.all_responses():
            if not 200 <= decl.status < 300 or decl.body_schema is None:
                continue
            form = unwrap_envelope(decl.body_schema.form, envelope)
            if form[0] != "object":
                continue
            groups.setdefault(key, []).append((form_to_json(form), (op, decl)))
    for key in sorted(groups, key=str):
        items = groups[key]
        result.checked += len(items)
        for _, (op, decl) in _minority(items):
            result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} {decl.status} represents the "
                                              "resource with a different schema", decl.body_schema.digest)
    return result


@static_check(73, "Share one error schema across all 4xx/5xx responses.")
def check_error_forms(ctx: Context) -> CheckResult:
    result = CheckResult()
    items = [(decl.body_schema.digest, (op, decl)) for op, decl in ctx.error_responses()]
    result.checked = len(items)
    for _, (op, decl) in _minority(items):
        result.add(ctx.loc(decl.pointer), f"{op.method} {op.template_ref} response {decl.status or 'default'} "
                                          "uses a different error schema", decl.body_schema.digest)
    return result


@dynamic_check(73)
def observe_error_forms(ctx: Context) -> CheckResult:
    result = CheckResult()
    declared = ctx.error_responses()
    observed = [o for o in ctx.observed()
                if o.record.response.status >= 400 and o.record.response.body_fingerprint is not None]
    if declared:
        counts = Counter(decl.body_schema.digest for _, decl in declared)
        digest = min(counts, key=lambda k: (-counts[k], k))
        reference = next(d.body_schema.form for _, d in declared if d.body_schema.digest == digest)
        for o in observed:
            result.checked += 1
            if not conforms(o.record.response.body_fingerprint.form, reference):
                result.add(o.record.location, "error body does not match the API's error schema", _where(o))
        return result
    items = [(form_to_json(o.record.response.body_fingerprint.form), o) for o in observed]
    result.checked = len(items)
    for _, o in _minority(items):
        result.add(o.record.location, "error body differs from the other observed error bodies", _where(o))
    return result

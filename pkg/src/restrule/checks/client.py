"""Client-facing checks: concept evolution, partial responses, CORS."""

from __future__ import annotations

from restrule.checks.engine import CheckResult, Context, Observed, dynamic_check, static_check
from restrule.model import CanonicalApiModel
from restrule.shapes import breaking_changes


def _where(o: Observed) -> str:
    req = o.record.request
    return f"{req.method} {req.uri} -> {o.record.response.status}"


def _bodies(model: CanonicalApiModel) -> dict[tuple, dict[tuple[str, int], tuple]]:
    """template shape -> (method, status) -> 2xx body form."""
    out: dict[tuple, dict[tuple[str, int], tuple]] = {}
    for op in model.operations:
        t = model.template(op.template_ref)
        for decl in op.all_responses():
            if 200 <= decl.status < 300 and decl.body_schema is not None:
                out.setdefault(t.shape_key, {})[(op.method, decl.status)] = decl.body_schema.form
    return out


def concept_changes(old: CanonicalApiModel, new: CanonicalApiModel) -> list[tuple[str, str, str]]:
    """``(template, method/status, change)`` for each incompatible change kept under the same URI."""
    old_bodies = _bodies(old)
    new_bodies = _bodies(new)
    changes = []
    for t in new.resources:
        before = old_bodies.get(t.shape_key)
        after = new_bodies.get(t.shape_key)
        if not before or not after:
            continue
        for key in sorted(set(before) & set(after)):
            for change in breaking_changes(before[key], after[key]):
                changes.append((t.raw, f"{key[0]} {key[1]}", change))
    return changes


@static_check(74, "Publish an incompatible representation under a new URI instead of changing the old one.")
def check_new_concepts(ctx: Context) -> CheckResult:
    result = CheckResult()
    if ctx.baseline is None:
        return result
    result.checked = max(1, len(ctx.baseline.resources))
    for raw, where, change in concept_changes(ctx.baseline, ctx.model):
        t = ctx.templates[raw]
        result.add(ctx.loc(t.pointer), f"{raw} ({where}) changed incompatibly: {change}", change)
    return result


@static_check(79, "Offer a field-selection query parameter (e.g. ?fields=) for large representations.")
def check_partial_response(ctx: Context) -> CheckResult:
    result = CheckResult()
    threshold = ctx.settings.large_object_properties
    names = {n.lower() for n in ctx.settings.partial_response_params}
    for op in ctx.model.operations:
        decl = op.responses.get(200)
        if op.method != "GET" or decl is None or decl.body_schema is None:
            continue
        size = decl.body_schema.property_count()
        if size < threshold:
            continue
        result.checked += 1
        params = {q.lower() for q in op.query_params} | {q.lower() for q in ctx.template_of(op).query_params}
        if not params & names:
            result.add(ctx.loc(op.pointer), f"GET {op.template_ref} returns {size} properties without a "
                                            "field-selection parameter", str(size), advisory=True)
    return result


@static_check(82, "Support CORS: answer OPTIONS preflights and declare Access-Control-Allow-Origin.")
def check_cors(ctx: Context) -> CheckResult:
    result = CheckResult()
    if not ctx.model.operations:
        return result
    result.checked = 1
    if any(op.method == "OPTIONS" for op in ctx.model.operations):
        return result
    for op in ctx.model.operations:
        if any(d.declares_header("Access-Control-Allow-Origin") for d in op.all_responses()):
            return result
    result.add(ctx.loc("#/paths"), "no OPTIONS operation or CORS response header is declared", "")
    return result


@dynamic_check(82)
def observe_cors(ctx: Context) -> CheckResult:
    result = CheckResult()
    for o in ctx.observed():
        if o.record.request.header("Origin") is None or o.record.response.status >= 500:
            continue
        result.checked += 1
        if not o.record.response.header("Access-Control-Allow-Origin"):
            kind = "preflight" if o.record.is_preflight else "cross-origin request"
            result.add(o.record.location, f"{kind} answered without Access-Control-Allow-Origin", _where(o))
    return result

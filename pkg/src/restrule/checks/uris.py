"""Checks on URI template shape and naming."""

from __future__ import annotations

from fnmatch import fnmatchcase

from restrule.checks.engine import CheckResult, Context, static_check


def _literals(ctx: Context):
    for template in ctx.model.resources:
        for seg in template.segments:
            if not seg.is_variable and seg.text:
                yield template, seg, ctx.analysis(seg)


@static_check(1, "Use '/' only between a parent and its child: name each collection "
                 "before its member variable and avoid empty segments.")
def check_hierarchy(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t in ctx.model.resources:
        result.checked += 1
        loc = ctx.loc(t.pointer)
        if any(not s.is_variable and s.text == "" for s in t.segments):
            result.add(loc, f"empty path segment in {t.raw}", t.raw)
            continue
        for prev, cur in zip(t.segments, t.segments[1:]):
            if prev.is_variable and cur.is_variable:
                result.add(loc, f"variable {{{cur.text}}} directly follows {{{prev.text}}} "
                                "without a collection naming the relationship", t.raw)
                break
    return result


@static_check(2, "Remove the trailing '/' from the path.")
def check_trailing_slash(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t in ctx.model.resources:
        result.checked += 1
        if t.has_trailing_slash:
            result.add(ctx.loc(t.pointer), f"path {t.raw} ends with '/'", t.raw)
    return result


@static_check(3, "Separate words in a path segment with hyphens, e.g. 'player-stats'.")
def check_hyphens(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        if info.is_multi_token or "_" in seg.text:
            result.checked += 1
        if info.camel_case:
            result.add(ctx.loc(t.pointer), f"segment '{seg.text}' joins words without hyphens", seg.text)
    return result


@static_check(4, "Replace underscores with hyphens.")
def check_underscores(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, _ in _literals(ctx):
        result.checked += 1
        if "_" in seg.text:
            result.add(ctx.loc(t.pointer), f"segment '{seg.text}' contains an underscore", seg.text)
    return result


@static_check(5, "Use lowercase letters in path segments.")
def check_lowercase(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        result.checked += 1
        if info.casing != "lower":
            result.add(ctx.loc(t.pointer), f"segment '{seg.text}' is not lowercase", seg.text)
    return result


@static_check(6, "Drop the file extension and negotiate the format with the Accept header.")
def check_extensions(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        result.checked += 1
        if info.has_extension:
            result.add(ctx.loc(t.pointer), f"segment '{seg.text}' carries the file extension "
                                           f"'.{info.extension}'", seg.text)
    return result


def _number_check(ctx: Context, archetypes: tuple[str, ...], expected: str, noun: str,
                  heuristic: bool = False) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        if seg.archetype not in archetypes or info.number == "unknown":
            continue
        result.checked += 1
        if info.number != expected:
            result.add(ctx.loc(t.pointer),
                       f"{seg.archetype} segment '{seg.text}' should be a {expected} noun",
                       seg.text, heuristic=heuristic)
    return result


@static_check(9, "Name documents with a singular noun.")
def check_document_names(ctx: Context) -> CheckResult:
    return _number_check(ctx, ("document",), "singular", "document")


@static_check(10, "Name collections with a plural noun.")
def check_collection_names(ctx: Context) -> CheckResult:
    return _number_check(ctx, ("collection",), "plural", "collection")


@static_check(11, "Name stores with a plural noun.")
def check_store_names(ctx: Context) -> CheckResult:
    # stores are inferred from PUT-with-201 on a child, so findings are heuristic
    return _number_check(ctx, ("store",), "plural", "store", heuristic=True)


@static_check(12, "Name controllers with a verb or verb phrase, e.g. '/players/{id}/promote'.")
def check_controller_names(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        if seg.archetype != "controller":
            continue
        result.checked += 1
        if not info.is_verb_phrase:
            result.add(ctx.loc(t.pointer), f"controller segment '{seg.text}' is not a verb phrase", seg.text)
    return result


@static_check(13, "Name path variables after the identity they carry, e.g. '{playerId}'.")
def check_identity_variables(ctx: Context) -> CheckResult:
    result = CheckResult()
    patterns = ctx.settings.identity_patterns
    for t in ctx.model.resources:
        for seg in t.segments:
            if not seg.is_variable:
                continue
            result.checked += 1
            if not any(fnmatchcase(seg.text, p) for p in patterns):
                result.add(ctx.loc(t.pointer), f"variable '{{{seg.text}}}' does not look like an identifier",
                           seg.text, advisory=True)
    return result


@static_check(14, "Express the operation with the HTTP method instead of a CRUD verb in the path.")
def check_crud_names(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t, seg, info in _literals(ctx):
        result.checked += 1
        if info.is_crud_verb:
            result.add(ctx.loc(t.pointer), f"segment '{seg.text}' contains a CRUD function name", seg.text)
    return result


@static_check(15, "Consider query parameters for filtering, sorting, or paging the collection.")
def check_collection_queries(ctx: Context) -> CheckResult:
    result = CheckResult()
    for t in ctx.model.resources:
        if ctx.archetype(t) not in ("collection", "store"):
            continue
        gets = [op for op in ctx.ops(t) if op.method == "GET"]
        if not gets:
            continue
        result.checked += 1
        if not t.query_params and not any(op.query_params for op in gets):
            result.add(ctx.loc(t.pointer), f"collection {t.raw} declares no query parameters",
                       t.raw, advisory=True)
    return result

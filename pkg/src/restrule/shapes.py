"""Structural fingerprints of JSON schemas and JSON instances.

A fingerprint is a canonical nested tuple:

* ``("string",)``, ``("integer",)``, ``("number",)``, ``("boolean",)``,
  ``("null",)``, ``("any",)`` for primitives / unconstrained values
* ``("array", item)``
* ``("object", ((name, member), ...))`` with members sorted by name
* ``("map", value)`` for objects with only ``additionalProperties``
* ``("union", (alt, ...))`` sorted and de-duplicated
* ``("cycle", ref)`` at a back-edge of a recursive ``$ref``
* ``("truncated",)`` when the node budget or depth limit is hit
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from typing import Any

DEFAULT_LINK_MARKERS = ("links", "_links", "href")

PRIMITIVES = ("string", "integer", "number", "boolean", "null")
ANY = ("any",)
TRUNCATED = ("truncated",)

MAX_DEPTH = 64
MAX_NODES = 50_000

Form = tuple


@dataclass(frozen=True)
class SchemaShape:
    form: Form
    hypermedia_hint: bool = False

    @property
    def digest(self) -> str:
        return hashlib.sha256(form_to_json(self.form).encode()).hexdigest()[:16]

    @property
    def kind(self) -> str:
        return self.form[0]

    def members(self) -> tuple[str, ...]:
        """Top-level member names (empty for non-objects)."""
        if self.form[0] != "object":
            return ()
        return tuple(name for name, _ in self.form[1])

    def property_count(self) -> int:
        return _count_members(self.form)

    def to_json(self) -> Any:
        return {"form": _jsonable(self.form), "hypermedia_hint": self.hypermedia_hint}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> SchemaShape:
        return cls(_tupled(data["form"]), bool(data.get("hypermedia_hint", False)))


def form_to_json(form: Form) -> str:
    return json.dumps(_jsonable(form), separators=(",", ":"))


def _jsonable(form: Any) -> Any:
    if isinstance(form, tuple):
        return [_jsonable(x) for x in form]
    return form


def _tupled(data: Any) -> Any:
    if isinstance(data, list):
        return tuple(_tupled(x) for x in data)
    return data


def _count_members(form: Form) -> int:
    kind = form[0]
    if kind == "object":
        return sum(1 + _count_members(member) for _, member in form[1])
    if kind in ("array", "map"):
        return _count_members(form[1])
    if kind == "union":
        return max((_count_members(alt) for alt in form[1]), default=0)
    return 0


def _union(forms: Iterable[Form]) -> Form:
    unique = sorted(set(forms), key=form_to_json)
    if not unique:
        return ANY
    if len(unique) == 1:
        return unique[0]
    return ("union", tuple(unique))


def _merge_objects(forms: list[Form]) -> Form:
    members: dict[str, Form] = {}
    for form in forms:
        if form[0] != "object":
            continue
        for name, member in form[1]:
            members[name] = member
    return ("object", tuple(sorted(members.items())))


class _Walker:
    def __init__(self, resolve: Callable[[str], Any] | None, link_markers: Iterable[str]):
        self.resolve = resolve
        self.link_markers = frozenset(link_markers)
        self.nodes = 0
        self.hypermedia = False

    def walk(self, schema: Any, stack: tuple[str, ...], depth: int) -> Form:
        self.nodes += 1
        if self.nodes > MAX_NODES or depth > MAX_DEPTH:
            return TRUNCATED
        if isinstance(schema, bool) or not isinstance(schema, Mapping):
            return ANY

        ref = schema.get("$ref")
        if isinstance(ref, str):
            if ref in stack:
                return ("cycle", ref)
            target = self.resolve(ref) if self.resolve else None
            if target is None:
                return ANY
            return self.walk(target, stack + (ref,), depth + 1)

        parts = schema.get("allOf")
        if isinstance(parts, list) and parts:
            forms = [self.walk(p, stack, depth + 1) for p in parts]
            rest = {k: v for k, v in schema.items() if k != "allOf"}
            if rest.get("properties") or rest.get("type"):
                forms.append(self.walk(rest, stack, depth + 1))
            objects = [f for f in forms if f[0] == "object"]
            if objects:
                return _merge_objects(objects)
            return _union(forms)

        for key in ("oneOf", "anyOf"):
            alts = schema.get(key)
            if isinstance(alts, list) and alts:
                return _union(self.walk(a, stack, depth + 1) for a in alts)

        kinds = schema.get("type")
        if isinstance(kinds, list):
            kinds = [k for k in kinds if isinstance(k, str)]
            non_null = [k for k in kinds if k != "null"]
            if len(non_null) == 1:
                kinds = non_null[0]
            elif non_null:
                return _union(self.walk({**schema, "type": k}, stack, depth + 1) for k in non_null)
            else:
                kinds = "null"

        if kinds is None:
            if "properties" in schema or "additionalProperties" in schema:
                kinds = "object"
            elif "items" in schema:
                kinds = "array"

        if kinds == "object":
            props = schema.get("properties")
            members = []
            if isinstance(props, Mapping):
                for name in sorted(props, key=str):
                    if str(name) in self.link_markers:
                        self.hypermedia = True
                    members.append((str(name), self.walk(props[name], stack, depth + 1)))
            if not members:
                extra = schema.get("additionalProperties")
                if isinstance(extra, Mapping):
                    return ("map", self.walk(extra, stack, depth + 1))
            return ("object", tuple(members))
        if kinds == "array":
            return ("array", self.walk(schema.get("items", {}), stack, depth + 1))
        if kinds in PRIMITIVES:
            return (kinds,)
        return ANY


def fingerprint(
    schema: Any,
    resolve: Callable[[str], Any] | None = None,
    link_markers: Iterable[str] = DEFAULT_LINK_MARKERS,
) -> SchemaShape:
    """Fingerprint a JSON-schema document.

    ``resolve`` maps a ``$ref`` string to its target schema (or ``None`` when
    unresolvable). Recursive references yield a ``("cycle", ref)`` marker.
    """
    walker = _Walker(resolve, link_markers)
    form = walker.walk(schema, (), 0)
    return SchemaShape(form, walker.hypermedia)


def fingerprint_instance(value: Any, link_markers: Iterable[str] = DEFAULT_LINK_MARKERS) -> SchemaShape:
    """Fingerprint a parsed JSON value using the same canonical form."""
    markers = frozenset(link_markers)
    state = {"nodes": 0, "links": False}

    def walk(v: Any, depth: int) -> Form:
        state["nodes"] += 1
        if state["nodes"] > MAX_NODES or depth > MAX_DEPTH:
            return TRUNCATED
        if v is None:
            return ("null",)
        if isinstance(v, bool):
            return ("boolean",)
        if isinstance(v, int):
            return ("integer",)
        if isinstance(v, float):
            return ("number",)
        if isinstance(v, str):
            return ("string",)
        if isinstance(v, list):
            if not v:
                return ("array", ANY)
            return ("array", _union(walk(x, depth + 1) for x in v))
        if isinstance(v, Mapping):
            members = []
            for name in sorted(v, key=str):
                if str(name) in markers:
                    state["links"] = True
                members.append((str(name), walk(v[name], depth + 1)))
            return ("object", tuple(members))
        return ANY

    form = walk(value, 0)
    return SchemaShape(form, bool(state["links"]))


def conforms(instance: Form, schema: Form) -> bool:
    """True when an instance fingerprint fits a schema fingerprint."""
    skind = schema[0]
    ikind = instance[0]
    if skind in ("any", "cycle", "truncated") or ikind in ("null", "truncated"):
        return True
    if ikind == "union":
        return all(conforms(alt, schema) for alt in instance[1])
    if skind == "union":
        return any(conforms(instance, alt) for alt in schema[1])
    if ikind == "any":
        return True
    if skind == "number" and ikind == "integer":
        return True
    if skind == "map":
        if ikind != "object":
            return False
        return all(conforms(member, schema[1]) for _, member in instance[1])
    if skind != ikind:
        return False
    if skind == "array":
        return conforms(instance[1], schema[1])
    if skind == "object":
        declared = dict(schema[1])
        for name, member in instance[1]:
            if name not in declared or not conforms(member, declared[name]):
                return False
        return True
    return True


def breaking_changes(old: Form, new: Form, path: str = "$") -> list[str]:
    """List response-side incompatibilities going from ``old`` to ``new``.

    Removed members and changed primitive kinds are breaking; added members
    and loosening to ``any`` are not.
    """
    okind, nkind = old[0], new[0]
    if okind in ("any", "truncated") or nkind in ("any", "truncated"):
        return []
    if okind == "cycle" or nkind == "cycle":
        return [] if old == new else [f"{path}: recursive structure changed"]
    if okind == "union" or nkind == "union":
        old_alts = set(old[1]) if okind == "union" else {old}
        new_alts = set(new[1]) if nkind == "union" else {new}
        if new_alts <= old_alts:
            return []
        return [f"{path}: alternatives changed"]
    if okind == "number" and nkind == "integer":
        return []
    if okind != nkind:
        return [f"{path}: kind changed {okind} -> {nkind}"]
    if okind in ("array", "map"):
        return breaking_changes(old[1], new[1], f"{path}[]")
    if okind == "object":
        new_members = dict(new[1])
        out = []
        for name, member in old[1]:
            if name not in new_members:
                out.append(f"{path}.{name}: removed")
            else:
                out.extend(breaking_changes(member, new_members[name], f"{path}.{name}"))
        return out
    return []


def unwrap_envelope(form: Form, envelope_members: Iterable[str]) -> Form:
    """Strip a single-member envelope object and collection arrays.

    ``{"data": [Player]}`` and ``[Player]`` both reduce to ``Player``.
    """
    names = frozenset(envelope_members)
    for _ in range(4):
        if form[0] == "array":
            form = form[1]
            continue
        if form[0] == "object" and len(form[1]) == 1 and form[1][0][0] in names:
            form = form[1][0][1]
            continue
        break
    return form

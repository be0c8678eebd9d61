"""Lexical analysis of URI path segments and resource-archetype assignment."""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from restrule.model import CanonicalApiModel, Operation, PathSegment, UriTemplate


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    crud_verbs: frozenset[str]
    common_verbs: frozenset[str]
    irregular_plurals: tuple[tuple[str, str], ...]  # (singular, plural)
    uncountable: frozenset[str]

    def __post_init__(self) -> None:
        singulars = [s for s, _ in self.irregular_plurals]
        plurals = [p for _, p in self.irregular_plurals]
        if len(set(singulars)) != len(singulars) or len(set(plurals)) != len(plurals):
            raise LexiconError("irregular plural map must be one-to-one")
        if any(v != v.lower() for v in self.crud_verbs):
            raise LexiconError("crud verbs must be lowercase")

    @property
    def singulars(self) -> frozenset[str]:
        return frozenset(s for s, _ in self.irregular_plurals)

    @property
    def plurals(self) -> frozenset[str]:
        return frozenset(p for _, p in self.irregular_plurals)

    def is_verb(self, token: str) -> bool:
        return token in self.crud_verbs or token in self.common_verbs


def _words(values: Any, key: str) -> frozenset[str]:
    if values is None:
        return frozenset()
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise LexiconError(f"lexicon key {key!r} must be a list of strings")
    return frozenset(v.strip().lower() for v in values if v.strip())


def _lexicon_from(doc: Mapping[str, Any], base: Lexicon | None = None) -> Lexicon:
    known = {"version", "replace", "crud_verbs", "common_verbs", "irregular_plurals", "uncountable"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise LexiconError(f"unknown lexicon keys: {', '.join(unknown)}")
    irregular = doc.get("irregular_plurals") or {}
    if not isinstance(irregular, Mapping):
        raise LexiconError("irregular_plurals must map singular to plural")
    pairs = {str(s).lower(): str(p).lower() for s, p in irregular.items()}
    crud = _words(doc.get("crud_verbs"), "crud_verbs")
    common = _words(doc.get("common_verbs"), "common_verbs")
    uncountable = _words(doc.get("uncountable"), "uncountable")
    if base is not None and not doc.get("replace", False):
        merged = dict(base.irregular_plurals)
        merged.update(pairs)
        pairs = merged
        crud |= base.crud_verbs
        common |= base.common_verbs
        uncountable |= base.uncountable
    return Lexicon(crud, common, tuple(sorted(pairs.items())), uncountable)


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files("restrule.data").joinpath("lexicon.yaml").read_text("utf-8")
    return _lexicon_from(yaml.safe_load(text))


def load_lexicon(path: str | Path) -> Lexicon:
    """Load a lexicon file; its lists extend the shipped defaults unless ``replace: true``."""
    try:
        doc = yaml.safe_load(Path(path).read_text("utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise LexiconError(f"cannot read lexicon {path}: {exc}") from None
    if not isinstance(doc, Mapping):
        raise LexiconError(f"lexicon {path} must be a mapping")
    return _lexicon_from(doc, default_lexicon())


# --------------------------------------------------------------------------
# segment analysis


@dataclass(frozen=True)
class SegmentAnalysis:
    tokens: tuple[str, ...]
    casing: str  # lower | upper | mixed
    number: str  # singular | plural | unknown
    is_crud_verb: bool
    is_verb_phrase: bool
    has_extension: bool
    extension: str = ""
    camel_case: bool = False

    @property
    def is_multi_token(self) -> bool:
        return len(self.tokens) > 1


_EXTENSION_RE = re.compile(r"^(.+?)\.([A-Za-z0-9]{1,5})$")
_SEPARATORS_RE = re.compile(r"[-_.~\s]+")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_VERSION_RE = re.compile(r"^v?\d+([._]\d+)*$")


def _casing(text: str) -> str:
    letters = [c for c in text if c.isalpha()]
    if all(c.islower() for c in letters):
        return "lower"
    if all(c.isupper() for c in letters):
        return "upper"
    return "mixed"


def split_extension(text: str) -> tuple[str, str]:
    m = _EXTENSION_RE.match(text)
    if m and any(c.isalpha() for c in m.group(2)) and not _VERSION_RE.match(text):
        return m.group(1), m.group(2)
    return text, ""


def tokenize(text: str) -> list[str]:
    tokens = []
    for chunk in _SEPARATORS_RE.split(text):
        if chunk:
            tokens.extend(t.lower() for t in _CAMEL_RE.split(chunk) if t)
    return tokens


def noun_number(token: str, lexicon: Lexicon) -> str:
    """Classify an English noun token as singular, plural, or unknown."""
    if token in lexicon.plurals:
        return "plural"
    if token in lexicon.singulars:
        return "singular"
    if token in lexicon.uncountable:
        return "unknown"
    if not token.isalpha() or len(token) <= 2 or _VERSION_RE.match(token):
        return "unknown"
    if token.endswith(("ss", "us", "is")):
        return "singular"
    if token.endswith("s"):
        return "plural"
    return "singular"


@lru_cache(maxsize=4096)
def _analyze(text: str, variable: bool, lexicon: Lexicon) -> SegmentAnalysis:
    stem, ext = ("", "") if variable else split_extension(text)
    if variable:
        stem = text
    tokens = tokenize(stem) or ([text.lower()] if text else [])
    casing = _casing(text)
    camel = any(_CAMEL_RE.search(chunk) for chunk in _SEPARATORS_RE.split(stem) if chunk)
    crud = bool(tokens) and (tokens[0] in lexicon.crud_verbs or tokens[-1] in lexicon.crud_verbs)
    verb = bool(tokens) and lexicon.is_verb(tokens[0])
    number = "unknown" if variable or not tokens else noun_number(tokens[-1], lexicon)
    if verb and len(tokens) == 1:
        number = "unknown"
    return SegmentAnalysis(tuple(tokens), casing, number, crud, verb, bool(ext), ext, camel)


def analyze_segment(segment: PathSegment, lexicon: Lexicon | None = None) -> SegmentAnalysis:
    return _analyze(segment.text, segment.is_variable, lexicon or default_lexicon())


# --------------------------------------------------------------------------
# archetypes


def _prefix_key(template: UriTemplate, length: int) -> tuple:
    return template.shape_key[:length]


def _child_templates(template: UriTemplate, index: int, templates: Iterable[UriTemplate]) -> list[UriTemplate]:
    """Templates that continue ``template[:index+1]`` with a variable segment."""
    key = _prefix_key(template, index + 1)
    out = []
    for t in templates:
        if len(t.segments) == index + 2 and _prefix_key(t, index + 1) == key and t.segments[index + 1].is_variable:
            out.append(t)
    return out


def _get_body_kind(operations: Sequence[Operation]) -> str | None:
    for op in operations:
        if op.method != "GET":
            continue
        decl = op.responses.get(200)
        if decl is None or decl.body_schema is None:
            continue
        form = decl.body_schema.form
        if form[0] == "array":
            return "array"
        if form[0] == "object":
            # {"items": [...]} style list envelopes
            if len(form[1]) == 1 and form[1][0][1][0] == "array":
                return "array"
            return "object"
    return None


def classify_archetypes(
    template: UriTemplate,
    operations: Sequence[Operation],
    lexicon: Lexicon | None = None,
    *,
    templates: Sequence[UriTemplate] = (),
    operations_by_template: Mapping[str, Sequence[Operation]] | None = None,
) -> UriTemplate:
    """Return ``template`` with an archetype on each classifiable segment.

    Structural evidence wins over noun number so that number agreement can
    be checked afterwards: a literal followed by a variable segment names a
    collection (a store when that child accepts PUT with 201); a final verb
    names a controller; a final literal otherwise takes its kind from its
    operations (POST only, never creating: controller; POST with 201 or
    list GET: collection; object GET: document) and falls back to noun
    number.
    """
    lexicon = lexicon or default_lexicon()
    by_template = operations_by_template or {}
    all_templates = list(templates) or [template]
    if template not in all_templates:
        all_templates.append(template)
    segments = []
    last = len(template.segments) - 1
    for i, seg in enumerate(template.segments):
        if seg.is_variable:
            segments.append(PathSegment(seg.kind, seg.text, "document"))
            continue
        info = analyze_segment(seg, lexicon)
        archetype = None
        followed_by_variable = i < last and template.segments[i + 1].is_variable
        children = _child_templates(template, i, all_templates)
        if i == last and info.is_verb_phrase:
            archetype = "controller"
        elif followed_by_variable or children:
            archetype = "collection"
            for child in children:
                child_ops = by_template.get(child.raw, ())
                if any(op.method == "PUT" and op.declares(201) for op in child_ops):
                    archetype = "store"
                    break
        elif i == last:
            methods = {op.method for op in operations} - {"OPTIONS", "HEAD"}
            if methods == {"POST"} and not any(op.declares(201) for op in operations):
                archetype = "controller"  # executes something rather than creating
            elif any(op.method == "POST" and op.declares(201) for op in operations):
                archetype = "collection"
            else:
                kind = _get_body_kind(operations)
                if kind == "array":
                    archetype = "collection"
                elif kind == "object":
                    archetype = "document"
        if archetype is None and seg.text:
            if info.number == "plural":
                archetype = "collection"
            elif info.number == "singular":
                archetype = "document"
        segments.append(PathSegment(seg.kind, seg.text, archetype))
    return UriTemplate(template.raw, tuple(segments), template.query_params,
                       template.has_trailing_slash, template.pointer)


def annotate_model(model: CanonicalApiModel, lexicon: Lexicon | None = None) -> CanonicalApiModel:
    """Assign archetypes to every template of ``model``."""
    by_template: dict[str, list[Operation]] = {}
    for op in model.operations:
        by_template.setdefault(op.template_ref, []).append(op)
    annotated = [
        classify_archetypes(t, by_template.get(t.raw, ()), lexicon,
                            templates=model.resources, operations_by_template=by_template)
        for t in model.resources
    ]
    return model.with_archetypes(annotated)

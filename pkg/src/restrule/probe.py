"""Opt-in live prober that turns a running API into exchange records.

Safe mode (the default) only ever sends GET, HEAD and OPTIONS.
"""

from __future__ import annotations

import asyncio
import logging
import socket
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from urllib.parse import quote, urlsplit

import httpx

from restrule import __version__
from restrule.checks.http import BOGUS_MEDIA_TYPE, UNACCEPTABLE_MEDIA_TYPE
from restrule.config import Config, ProbeSettings
from restrule.ingest import body_fingerprint
from restrule.model import (
    CanonicalApiModel,
    ExchangeRecord,
    ExchangeRequest,
    ExchangeResponse,
    Operation,
    UriTemplate,
)

log = logging.getLogger(__name__)

PROBE_KINDS = ("plain_get", "conditional_get", "unacceptable_accept", "bogus_content_type",
               "unauthenticated", "preflight")
SAFE_METHODS = frozenset({"GET", "HEAD", "OPTIONS"})
PROBE_ORIGIN = "https://probe.restrule.invalid"
SOURCE = "<probe>"


class ProbeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbeTarget:
    index: int
    kind: str
    method: str
    uri: str
    operation: str  # "METHOD /template" of the operation the target exercises
    headers: tuple[tuple[str, str], ...] = ()
    body_media_type: str | None = None
    body_text: str | None = None


@dataclass(frozen=True)
class ProbePlan:
    base_uri: str
    targets: tuple[ProbeTarget, ...]
    rate_limit: float
    safe_mode: bool = True
    concurrency: int = 2
    timeout: float = 10.0
    retries: int = 1
    deadline: float = 300.0
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ProbeError("rate limit must be positive")
        if self.concurrency < 1:
            raise ProbeError("concurrency must be at least 1")
        if self.safe_mode:
            unsafe = [t for t in self.targets if t.method not in SAFE_METHODS or t.body_text is not None]
            if unsafe:
                raise ProbeError(f"safe mode forbids {unsafe[0].method} {unsafe[0].uri}")


def _fill(template: UriTemplate, op: Operation, examples) -> tuple[str | None, list[str]]:
    parts, missing = [], []
    for seg in template.segments:
        if not seg.is_variable:
            parts.append(seg.text)
            continue
        value = examples.get(seg.text, op.path_examples.get(seg.text))
        if value is None:
            missing.append(seg.text)
        else:
            parts.append(quote(str(value), safe=""))
    if missing:
        return None, missing
    path = "/" + "/".join(parts)
    if template.has_trailing_slash and parts:
        path += "/"
    return path, []


def _declares_etag(op: Operation) -> bool:
    return any(200 <= d.status < 300 and d.declares_header("ETag") for d in op.all_responses())


def plan(model: CanonicalApiModel, config: Config | None = None, *,
         base_uri: str | None = None, safe_mode: bool | None = None,
         rate: float | None = None) -> ProbePlan:
    """Build the list of probe targets. Keyword arguments override config."""
    settings: ProbeSettings = (config or Config()).probe
    base = base_uri or settings.base_url or model.entry_uri
    if not base:
        raise ProbeError("no base URI: the description declares no servers and none was configured")
    parts = urlsplit(base)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise ProbeError(f"base URI {base!r} is not an absolute http(s) URI")
    base = base.rstrip("/")
    safe = settings.safe_mode if safe_mode is None else safe_mode
    credentials = tuple(sorted(settings.credentials.items()))
    send_unauth = model.security_declared and settings.unauthenticated

    warnings: list[str] = []
    specs: list[tuple[str, str, str, str, tuple, str | None, str | None]] = []
    skipped_unsafe = 0
    for op in model.operations:
        if safe and op.method not in SAFE_METHODS:
            skipped_unsafe += 1
            continue
        template = model.template(op.template_ref)
        path, missing = _fill(template, op, settings.examples)
        if path is None:
            warnings.append(f"{op.method} {op.template_ref}: no example value for "
                            + ", ".join(missing) + "; skipped")
            continue
        uri = base + path
        label = f"{op.method} {op.template_ref}"

        def add(kind, method, headers=(), media=None, body=None, auth=True):
            hdrs = (credentials if auth else ()) + tuple(headers)
            specs.append((kind, method, uri, label, hdrs, media, body))

        if op.method in ("GET", "HEAD"):
            add("plain_get", op.method)
            if op.method == "GET":
                if _declares_etag(op):
                    # "*" matches any current representation, so no prior fetch is needed
                    add("conditional_get", "GET", [("If-None-Match", "*")])
                add("unacceptable_accept", "GET", [("Accept", UNACCEPTABLE_MEDIA_TYPE)])
                add("preflight", "OPTIONS", [("Origin", PROBE_ORIGIN),
                                             ("Access-Control-Request-Method", "GET")])
        elif op.method == "OPTIONS":
            add("preflight", "OPTIONS", [("Origin", PROBE_ORIGIN)])
        else:
            if op.has_request_body:
                add("bogus_content_type", op.method, [("Content-Type", BOGUS_MEDIA_TYPE)],
                    BOGUS_MEDIA_TYPE, "{}")
            add("preflight", "OPTIONS", [("Origin", PROBE_ORIGIN),
                                         ("Access-Control-Request-Method", op.method)])
        if send_unauth and op.secured and op.method != "OPTIONS":
            add("unauthenticated", op.method, auth=False)

    if skipped_unsafe:
        warnings.append(f"safe mode: {skipped_unsafe} operation(s) with unsafe methods not probed")
    if not specs:
        warnings.append("probe plan is empty")
    targets = tuple(ProbeTarget(i, kind, method, uri, label, hdrs, media, body)
                    for i, (kind, method, uri, label, hdrs, media, body) in enumerate(specs))
    return ProbePlan(base, targets, rate if rate is not None else settings.rate, safe,
                     settings.concurrency, settings.timeout, settings.retries, settings.deadline,
                     tuple(warnings))


# --------------------------------------------------------------------------
# execution


class TokenBucket:
    """Bucket of size one: consecutive acquisitions are at least 1/rate apart."""

    def __init__(self, rate: float, clock=time.monotonic):
        self.interval = 1.0 / rate
        self.clock = clock
        self._next = None
        self._lock = asyncio.Lock()

    async def acquire(self) -> None:
        async with self._lock:
            now = self.clock()
            if self._next is None:
                self._next = now
            wait = self._next - now
            if wait > 0:
                await asyncio.sleep(wait)
            self._next = max(self._next, self.clock()) + self.interval


def check_reachable(base_uri: str, timeout: float = 5.0) -> None:
    parts = urlsplit(base_uri)
    host = parts.hostname
    port = parts.port or (443 if parts.scheme == "https" else 80)
    try:
        with socket.create_connection((host, port), timeout=timeout):
            pass
    except OSError as exc:
        raise ProbeError(f"cannot connect to {host}:{port}: {exc}") from None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def _request_of(t: ProbeTarget) -> ExchangeRequest:
    return ExchangeRequest(t.method, t.uri, t.headers, t.body_media_type, t.body_text)


def _record(t: ProbeTarget, resp: httpx.Response | None, started: str, error: str | None) -> ExchangeRecord:
    if resp is None:
        response = ExchangeResponse(0, error=error or "no response")
    else:
        media = resp.headers.get("content-type")
        data = resp.content
        text = None
        if data:
            try:
                text = data.decode(resp.encoding or "utf-8")
            except (UnicodeDecodeError, LookupError):
                text = None
        response = ExchangeResponse(
            status=resp.status_code,
            headers=tuple(resp.headers.multi_items()),
            body_media_type=media,
            body_fingerprint=body_fingerprint(media, text),
            body_size=len(data),
            body_text=text,
        )
    return ExchangeRecord(_request_of(t), response, started, t.index, SOURCE)


async def _run(p: ProbePlan, transport: httpx.AsyncBaseTransport | None) -> list[ExchangeRecord]:
    bucket = TokenBucket(p.rate_limit)
    gate = asyncio.Semaphore(p.concurrency)
    stop_at = time.monotonic() + p.deadline
    headers = {"User-Agent": f"restrule/{__version__}"}

    async with httpx.AsyncClient(transport=transport, headers=headers, follow_redirects=False,
                                 timeout=p.timeout) as client:

        async def one(t: ProbeTarget) -> ExchangeRecord:
            async with gate:
                error = None
                started = _now()
                for _attempt in range(p.retries + 1):
                    remaining = stop_at - time.monotonic()
                    if remaining <= 0:
                        error = error or "deadline exceeded before the request was sent"
                        break
                    await bucket.acquire()
                    started = _now()
                    try:
                        resp = await client.request(
                            t.method, t.uri, headers=list(t.headers),
                            content=t.body_text.encode() if t.body_text is not None else None,
                            timeout=min(p.timeout, max(remaining, 0.01)))
                        return _record(t, resp, started, None)
                    except httpx.TimeoutException as exc:
                        error = f"timeout: {exc}" if str(exc) else "timeout"
                    except httpx.TransportError as exc:
                        error = f"transport error: {exc}"
                log.info("probe %s %s failed: %s", t.method, t.uri, error)
                return _record(t, None, started, error)

        records = await asyncio.gather(*(one(t) for t in p.targets))
    return sorted(records, key=lambda r: r.index)


def execute(p: ProbePlan, *, transport: httpx.AsyncBaseTransport | None = None) -> list[ExchangeRecord]:
    """Send every target; one record per target, ordered by target index.

    The base URI must accept a TCP connection before anything is sent.
    ``transport`` replaces the network (the reachability check is skipped).
    """
    if p.safe_mode:
        # re-checked here in case the plan was assembled by hand
        bad = [t for t in p.targets if t.method not in SAFE_METHODS]
        if bad:
            raise ProbeError(f"safe mode forbids {bad[0].method}")
    if transport is None:
        check_reachable(p.base_uri, min(p.timeout, 5.0))
    if not p.targets:
        return []
    return asyncio.run(_run(p, transport))

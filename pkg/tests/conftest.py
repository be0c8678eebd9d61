from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


class StubHandler(BaseHTTPRequestHandler):
    """A tiny API that honours content negotiation, conditionals and CORS."""

    protocol_version = "HTTP/1.1"
    seen: list = []
    lock = threading.Lock()

    def log_message(self, *args):
        pass

    def _send(self, status, body=b"", headers=()):
        self.send_response(status)
        for k, v in headers:
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body and self.command != "HEAD":
            self.wfile.write(body)

    def _record(self):
        with self.lock:
            self.seen.append((self.command, self.path, dict(self.headers.items())))

    def do_GET(self):
        self._record()
        accept = self.headers.get("Accept", "*/*")
        if "json" not in accept and "*/*" not in accept:
            return self._send(406)
        if self.path.rstrip("/").endswith("/slow"):
            return self._send(200, b"{}", [("Content-Type", "application/json")])
        if self.headers.get("If-None-Match"):
            return self._send(304, headers=[("ETag", '"v1"')])
        if self.path.startswith("/v1/players/"):
            body = json.dumps({"id": self.path.rsplit("/", 1)[-1], "name": "Ada"}).encode()
        else:
            body = b"[]"
        self._send(200, body, [("Content-Type", "application/json"), ("ETag", '"v1"'),
                               ("Cache-Control", "max-age=60")])

    do_HEAD = do_GET

    def do_OPTIONS(self):
        self._record()
        self._send(204, headers=[("Access-Control-Allow-Origin", "*"),
                                 ("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE")])

    def _unsafe(self):
        self._record()
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            self.rfile.read(length)
        if "json" not in (self.headers.get("Content-Type") or "json"):
            return self._send(415, b'{"code": 415, "message": "unsupported"}',
                              [("Content-Type", "application/json")])
        self._send(204)

    do_POST = do_PUT = do_DELETE = do_PATCH = _unsafe


@pytest.fixture()
def stub_server():
    StubHandler.seen = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_port}/v1", StubHandler
    finally:
        server.shutdown()
        server.server_close()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")

"""Local OpenAI-compatible stub server with scriptable fault injection.

Responses can be scripted per request (status codes, delays, canned bodies) or
computed from the incoming payload; the server also tracks total and peak
concurrent requests so admission-control behavior can be asserted.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def chat_body(text: str, finish_reason: str = "stop") -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish_reason}]}


class StubServer:
    """`responder(payload, index) -> spec` computes a response when the script
    queue is empty. A spec dict may set: status (int), text (str), body (dict),
    delay (seconds), finish_reason (str)."""

    def __init__(self, responder=None):
        self.responder = responder
        self.lock = threading.Lock()
        self.script: list[dict] = []
        self.calls: list[dict] = []
        self.concurrent = 0
        self.max_concurrent = 0
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "StubServer":
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    payload = {}
                with stub.lock:
                    index = len(stub.calls)
                    stub.calls.append(payload)
                    stub.concurrent += 1
                    stub.max_concurrent = max(stub.max_concurrent, stub.concurrent)
                    spec = stub.script.pop(0) if stub.script else None
                try:
                    if spec is None:
                        if stub.responder is not None:
                            spec = stub.responder(payload, index)
                        spec = spec or {}
                    delay = spec.get("delay", 0.0)
                    if delay:
                        time.sleep(delay)
                    status = spec.get("status", 200)
                    if "body" in spec:
                        body = spec["body"]
                    else:
                        body = chat_body(
                            spec.get("text", f"stub reply {index}"),
                            spec.get("finish_reason", "stop"),
                        )
                    raw = json.dumps(body).encode("utf-8")
                    try:
                        self.send_response(status)
                        self.send_header("Content-Type", "application/json")
                        self.send_header("Content-Length", str(len(raw)))
                        self.end_headers()
                        self.wfile.write(raw)
                    except (BrokenPipeError, ConnectionResetError):
                        pass  # client already gave up (timeout test)
                finally:
                    with stub.lock:
                        stub.concurrent -= 1

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    # -- scripting -----------------------------------------------------------

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/v1"

    def enqueue(self, *specs: dict) -> None:
        with self.lock:
            self.script.extend(specs)

    def reset(self) -> None:
        with self.lock:
            self.script.clear()
            self.calls.clear()
            self.concurrent = 0
            self.max_concurrent = 0

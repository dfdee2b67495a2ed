"""HTTP front end exposing a classifier through the hard-label protocol.

Routes:
  POST /predict   {"w", "h", "c", "data_b64"} -> {"label": int}
  GET  /healthz   -> {"status": "ok", "num_classes": int, ...metadata}

data_b64 is base64 of little-endian float64 values in (h, w, c) row-major
order. Anything wrong with the request itself (bad JSON, bad base64, shape
mismatch, unsupported channel count, non-finite values) is a 400; only a
failure inside the model is a 500. The service keeps no per-client state.
"""

from __future__ import annotations

import base64
import binascii
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .models import ServedModel, load_model

MAX_BODY_BYTES = 512 * 1024 * 1024  # refuses absurd payloads before reading


class _BadRequest(Exception):
    """Client-side request defect, reported as HTTP 400."""


def decode_predict_body(raw: bytes) -> np.ndarray:
    """Parse a /predict body into an (h, w, c) float64 tensor or raise."""
    try:
        body = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise _BadRequest(f"body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise _BadRequest(f"body must be a JSON object, got {type(body).__name__}")
    dims = {}
    for key in ("w", "h", "c"):
        if key not in body:
            raise _BadRequest(f"missing field {key!r}")
        value = body[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise _BadRequest(f"field {key!r} must be an integer")
        if value < 1:
            raise _BadRequest(f"field {key!r} must be positive, got {value}")
        dims[key] = value
    if "data_b64" not in body:
        raise _BadRequest("missing field 'data_b64'")
    if not isinstance(body["data_b64"], str):
        raise _BadRequest("field 'data_b64' must be a string")
    try:
        blob = base64.b64decode(body["data_b64"], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _BadRequest(f"data_b64 is not valid base64: {exc}") from exc
    count = dims["h"] * dims["w"] * dims["c"]
    if len(blob) != count * 8:
        raise _BadRequest(
            f"payload holds {len(blob)} bytes, dimensions require {count * 8}"
        )
    arr = np.frombuffer(blob, dtype="<f8").reshape(dims["h"], dims["w"], dims["c"])
    if not np.isfinite(arr).all():
        raise _BadRequest("tensor contains non-finite values")
    if dims["c"] not in (1, 3):
        raise _BadRequest(f"unsupported channel count {dims['c']}, expected 1 or 3")
    return arr


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # buffer each response into one TCP segment; unbuffered writes plus
    # Nagle and delayed ACK otherwise stall every reply by tens of ms
    wbufsize = -1
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    def _reply(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("ascii")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/healthz":
            self._reply(404, {"error": f"no route GET {self.path}"})
            return
        model: ServedModel = self.server.served_model
        self._reply(200, {"status": "ok", "num_classes": model.num_classes,
                          **model.metadata()})

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self.close_connection = True
            self._reply(400, {"error": "missing or invalid Content-Length"})
            return
        if not 0 <= length <= MAX_BODY_BYTES:
            self.close_connection = True
            self._reply(400, {"error": f"refusing body of {length} bytes"})
            return
        # drain the body before any reply so keep-alive stays in sync
        raw = self.rfile.read(length)
        if self.path != "/predict":
            self._reply(404, {"error": f"no route POST {self.path}"})
            return
        try:
            img = decode_predict_body(raw)
        except _BadRequest as exc:
            self._reply(400, {"error": str(exc)})
            return
        try:
            label = self.server.served_model.predict(img)
        except Exception as exc:  # model internals are a 500, never a crash
            self._reply(500, {"error": f"inference failed: {exc}"})
            return
        self._reply(200, {"label": label})


def build_server(
    model: ServedModel, host: str = "127.0.0.1", port: int = 0, verbose: bool = False
) -> ThreadingHTTPServer:
    """Bind the service without starting it; port 0 picks a free port.

    The caller drives serve_forever(), typically on a thread in tests.
    Handlers run in parallel; inference is read-only so no lock is needed.
    """
    server = ThreadingHTTPServer((host, port), _Handler)
    server.served_model = model
    server.verbose = verbose
    return server


def serve(
    model_id: str,
    port: int,
    device: str = "cpu",
    host: str = "127.0.0.1",
    verbose: bool = False,
) -> None:
    """Load a model and serve it until interrupted. Blocks the caller."""
    model = load_model(model_id, device)
    server = build_server(model, host, port, verbose)
    bound_host, bound_port = server.server_address[:2]
    print(f"serving {model_id} on http://{bound_host}:{bound_port}")
    print("metadata: " + json.dumps(model.metadata()))
    try:
        server.serve_forever()
    finally:
        server.server_close()

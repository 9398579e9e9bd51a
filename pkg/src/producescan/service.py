"""HTTP service: simulated scale and camera events in, session state and
labels out. One active session per instance, mirroring the one-scale,
one-display prototype.

All session mutations are serialized under a single lock. Classification
runs on a worker thread off the request path; its completion is delivered
through the same lock and dropped if the session was cancelled or re-armed
in the meantime (epoch check). Read endpoints never wait on classification.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .datasets import decode_ppm, to_model_input
from .errors import InvalidArgumentError, ParseError, UnsupportedFormatError
from .kiosk import (
    Catalog,
    Clock,
    InvalidTransitionError,
    KioskSession,
    ScaleReading,
    SYSTEM_CLOCK,
    append_label,
    load_catalog,
    read_labels,
    search_products,
)
from .models import Model, forward, load_model
from .tensor import Tensor


@dataclass
class ServiceConfig:
    model_path: str
    catalog_path: str
    port: int
    labels_path: str
    captures_dir: str
    host: str = "127.0.0.1"

    def validate(self) -> None:
        if not Path(self.model_path).is_file():
            raise InvalidArgumentError(f"model_path: no such file {self.model_path!r}")
        if not Path(self.catalog_path).is_file():
            raise InvalidArgumentError(f"catalog_path: no such file {self.catalog_path!r}")
        if not isinstance(self.port, int) or not 0 <= self.port <= 65535:
            raise InvalidArgumentError(f"port: bad value {self.port!r}")
        parent = Path(self.labels_path).parent
        if not parent.is_dir():
            raise InvalidArgumentError(f"labels_path: directory {parent} does not exist")
        if not Path(self.captures_dir).is_dir():
            raise InvalidArgumentError(f"captures_dir: no such directory {self.captures_dir!r}")


def product_doc(product, score: float | None = None) -> dict:
    doc = {
        "class_id": product.class_id,
        "name": product.display_name,
        "price_per_kg": product.price_per_kg,
        "frequent": product.frequent,
    }
    if score is not None:
        doc["score"] = score
    return doc


def session_view(session: KioskSession) -> dict:
    """Deterministic serialization of the session for polling clients."""
    return {
        "session_id": session.session_id,
        "state": session.state.value,
        "weight_g": session.stable_weight_g,
        "candidates": [product_doc(p, score) for p, score in (session.candidates or [])],
        "selected_class_id": session.selected.class_id if session.selected else None,
        "label": session.label.to_doc() if session.label else None,
        "error_note": session.error_note,
    }


class KioskService:
    """Endpoint logic, independent of the HTTP plumbing."""

    def __init__(self, model: Model, catalog: Catalog, labels_path,
                 captures_dir, clock: Clock = SYSTEM_CLOCK):
        self.model = model
        self.catalog = catalog
        self.labels_path = str(labels_path)
        self.clock = clock
        self._lock = threading.Lock()
        self.session = KioskSession()
        self._captures = sorted(Path(captures_dir).glob("*.ppm"))
        self._capture_index = 0
        self._workers: list[threading.Thread] = []

    # -- camera stub ---------------------------------------------------------

    def _next_capture(self) -> Tensor | None:
        while self._capture_index < len(self._captures):
            path = self._captures[self._capture_index]
            self._capture_index += 1
            try:
                return decode_ppm(path.read_bytes())
            except (ParseError, UnsupportedFormatError, OSError):
                continue
        return None

    def _classify_async(self, epoch: int, image: Tensor | None) -> None:
        def work():
            if image is None:
                with self._lock:
                    self.session.deliver_classification(
                        epoch, error="no camera image available")
                return
            try:
                h, w, _ = self.model.spec.input_shape
                result = forward(self.model, to_model_input(image, h, w))
            except Exception as exc:
                with self._lock:
                    self.session.deliver_classification(
                        epoch, error=f"identification failed: {exc}")
                return
            with self._lock:
                self.session.deliver_classification(
                    epoch, ranking=result.ranking, catalog=self.catalog)

        worker = threading.Thread(target=work, daemon=True)
        self._workers.append(worker)
        worker.start()

    # -- endpoint handlers: each returns (status, body) -----------------------

    def get_catalog(self):
        return 200, [product_doc(p) for p in self.catalog]

    def get_session(self):
        with self._lock:
            return 200, session_view(self.session)

    def post_scale(self, body: dict):
        if not isinstance(body, dict) or "weight_g" not in body:
            return 400, {"code": "bad_request", "message": "weight_g is required"}
        weight = body["weight_g"]
        if not isinstance(weight, (int, float)) or weight < 0:
            return 400, {"code": "bad_request", "message": "weight_g must be a nonnegative number"}
        image = None
        if body.get("image_b64") is not None:
            try:
                image = decode_ppm(base64.b64decode(body["image_b64"], validate=True))
            except (binascii.Error, ParseError, UnsupportedFormatError) as exc:
                return 400, {"code": "bad_request", "message": f"bad image payload: {exc}"}
        with self._lock:
            was = self.session.state
            reading = ScaleReading(grams=float(weight),
                                   timestamp_ms=self.clock.monotonic_ms())
            self.session.on_scale_reading(reading)
            now = self.session.state
            if now.value == "classifying" and was != now:
                if image is None:
                    image = self._next_capture()
                self._classify_async(self.session.epoch, image)
            return 202, session_view(self.session)

    def post_select(self, body: dict):
        if not isinstance(body, dict) or not isinstance(body.get("class_id"), int):
            return 400, {"code": "bad_request", "message": "class_id (integer) is required"}
        with self._lock:
            try:
                self.session.select_product(body["class_id"], self.catalog)
            except InvalidTransitionError as exc:
                return 409, {"code": exc.code, "message": str(exc)}
            except InvalidArgumentError as exc:
                return 409, {"code": "unknown_product", "message": str(exc)}
            return 200, session_view(self.session)

    def post_print(self, _body: dict):
        with self._lock:
            try:
                label = self.session.print_label(self.clock)
            except InvalidTransitionError as exc:
                return 409, {"code": exc.code, "message": str(exc)}
            append_label(self.labels_path, label)
            return 200, label.to_doc()

    def post_cancel(self, _body: dict):
        with self._lock:
            self.session.cancel()
            return 200, session_view(self.session)

    def get_search(self, query: str):
        return 200, [product_doc(p) for p in search_products(self.catalog, query)]

    def get_labels(self):
        return 200, [label.to_doc() for label in read_labels(self.labels_path)]


class _Handler(BaseHTTPRequestHandler):
    service: KioskService  # set by the server factory

    def log_message(self, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return None

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/catalog":
            self._send(*self.service.get_catalog())
        elif url.path == "/api/session":
            self._send(*self.service.get_session())
        elif url.path == "/api/search":
            query = parse_qs(url.query).get("q", [""])[0]
            self._send(*self.service.get_search(query))
        elif url.path == "/api/labels":
            self._send(*self.service.get_labels())
        else:
            self._send(404, {"code": "not_found", "message": f"no route {url.path}"})

    def do_POST(self):
        body = self._read_body()
        if body is None:
            self._send(400, {"code": "bad_request", "message": "body must be JSON"})
            return
        url = urlparse(self.path)
        if url.path == "/api/scale":
            self._send(*self.service.post_scale(body))
        elif url.path == "/api/session/select":
            self._send(*self.service.post_select(body))
        elif url.path == "/api/session/print":
            self._send(*self.service.post_print(body))
        elif url.path == "/api/session/cancel":
            self._send(*self.service.post_cancel(body))
        else:
            self._send(404, {"code": "not_found", "message": f"no route {url.path}"})


class KioskServer:
    """ThreadingHTTPServer wrapper; start() returns once the port is bound."""

    def __init__(self, config: ServiceConfig, clock: Clock = SYSTEM_CLOCK):
        config.validate()
        self.config = config
        model = load_model(config.model_path)
        catalog = load_catalog(config.catalog_path)
        self.service = KioskService(model, catalog, config.labels_path,
                                    config.captures_dir, clock)
        handler = type("BoundHandler", (_Handler,), {"service": self.service})
        self._httpd = ThreadingHTTPServer((config.host, config.port), handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self) -> "KioskServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(config: ServiceConfig, clock: Clock = SYSTEM_CLOCK) -> KioskServer:
    """Build and start a server in the background; caller stops it."""
    return KioskServer(config, clock).start()

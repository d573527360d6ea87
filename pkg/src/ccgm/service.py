"""HTTP facade over a loaded checkpoint: predictions, the learnt graph,
interventions, counterfactuals, and PNS tables for the interactive
workbench and scripts.

The model snapshot is immutable; the only mutable state is the active
sample and pending intervention spec, guarded by one lock per server.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import engine, wire
from .checkpoint import load_model
from .data import load_csv


class Session:
    def __init__(self, model, dataset=None):
        self.model = model
        self.dataset = dataset
        self.sample: np.ndarray | None = None
        self.spec: list[engine.Action] = []
        self.lock = threading.Lock()


def make_server(checkpoint_path: str, addr: str = "127.0.0.1:8321",
                data_path: str | None = None) -> ThreadingHTTPServer:
    model = load_model(checkpoint_path)
    dataset = load_csv(data_path) if data_path else None
    session = Session(model, dataset)
    host, port = addr.rsplit(":", 1)

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # keep test output quiet
            pass

        def _send(self, code: int, payload: dict | list) -> None:
            body = wire.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(body)

        def _error(self, code: int, message: str) -> None:
            self._send(code, {"error": message})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            return json.loads(raw.decode("utf-8"))

        def do_OPTIONS(self):
            self._send(204, {})

        def do_GET(self):
            try:
                if self.path == "/health":
                    self._send(200, {"status": "ok", "nodes": len(model.concept_names)})
                elif self.path == "/graph":
                    x = dataset.features if dataset is not None else None
                    self._send(200, wire.graph_payload(model, x))
                elif self.path == "/pns":
                    if dataset is None:
                        self._error(409, "no dataset configured for PNS estimation")
                    else:
                        self._send(200, {"rows": wire.pns_table(model, dataset.features)})
                else:
                    self._error(404, f"unknown path {self.path}")
            except Exception as exc:  # surface, never crash the thread
                self._error(500, str(exc))

        def do_POST(self):
            try:
                body = self._body()
            except (ValueError, json.JSONDecodeError) as exc:
                self._error(400, f"malformed body: {exc}")
                return
            try:
                if self.path == "/sample":
                    features = np.asarray(body.get("features", []), dtype=np.float64)
                    if features.shape != (model.config.d,):
                        self._error(422, f"expected feature vector of dim {model.config.d}")
                        return
                    with session.lock:
                        session.sample = features
                        session.spec = []
                    self._send(200, {"status": "ok"})
                elif self.path == "/predict":
                    features = body.get("features")
                    if features is None:
                        with session.lock:
                            if session.sample is None:
                                self._error(409, "no active sample")
                                return
                            features = session.sample
                    features = np.asarray(features, dtype=np.float64)
                    if features.shape != (model.config.d,):
                        self._error(422, f"expected feature vector of dim {model.config.d}")
                        return
                    states = engine.unfold_predict(model, features, [])
                    self._send(200, wire.states_payload(states))
                elif self.path == "/intervene":
                    with session.lock:
                        sample = session.sample
                    if sample is None:
                        self._error(409, "no active sample")
                        return
                    spec = wire.spec_from_payload(body.get("spec", []))
                    before = engine.unfold_predict(model, sample, [])
                    after = engine.unfold_predict(model, sample, spec)
                    with session.lock:
                        session.spec = spec
                    changed = [model.concept_names[i] for i in range(model.config.k)
                               if before.probs[i] != after.probs[i]]
                    self._send(200, {"before": wire.states_payload(before),
                                     "after": wire.states_payload(after),
                                     "changed": changed,
                                     "spec": wire.spec_payload(spec)})
                elif self.path == "/counterfactual":
                    with session.lock:
                        sample = session.sample
                    if sample is None:
                        self._error(409, "no active sample")
                        return
                    spec = wire.spec_from_payload(body.get("spec", []))
                    report = engine.counterfactual_query(model, sample, spec)
                    self._send(200, wire.report_payload(report))
                else:
                    self._error(404, f"unknown path {self.path}")
            except (KeyError, ValueError) as exc:
                self._error(422, str(exc))
            except Exception as exc:
                self._error(500, str(exc))

    server = ThreadingHTTPServer((host, int(port)), Handler)
    server.session = session
    return server


def serve(checkpoint_path: str, addr: str, data_path: str | None = None) -> None:
    server = make_server(checkpoint_path, addr, data_path)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()

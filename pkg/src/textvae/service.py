"""HTTP JSON playground API over a frozen checkpoint.

Endpoints (all JSON, UTF-8):
  POST /encode      {"text"}            -> {"z": [P floats]}
  POST /decode      {"z"}               -> {"text"}
  POST /interpolate {"a","b","steps"}   -> {"rows": [{"tau","text"}]}
  POST /arith       {"a","b","c"}       -> {"z_d","text"}
  GET  /model/info                      -> model config + training step

The model is read-only, so the service is stateless: identical request,
identical response. A semaphore bounds in-flight decodes.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import checkpoint as ckpt
from . import latent
from .tokenizer import Vocabulary


class ApiError(Exception):
    def __init__(self, status, message):
        super().__init__(message)
        self.status = status
        self.message = message


class PlaygroundService:
    def __init__(self, params, cfg, vocab, step=0, max_inflight=8):
        self.params = params
        self.cfg = cfg
        self.vocab = vocab
        self.step = step
        self._gate = threading.Semaphore(max_inflight)

    @classmethod
    def from_files(cls, checkpoint_path, vocab_path, **kw):
        params, cfg, manifest = ckpt.load(checkpoint_path)
        vocab = Vocabulary.load(vocab_path)
        if manifest.get("vocab_hash") and ckpt.vocab_hash(vocab) != manifest["vocab_hash"]:
            raise ValueError("vocabulary file does not match the checkpoint")
        return cls(params, cfg, vocab, step=manifest.get("step", 0), **kw)

    # ----- request handlers (shared by HTTP layer and direct tests) -----

    def _text(self, body, key):
        v = body.get(key)
        if not isinstance(v, str) or not v.strip():
            raise ApiError(400, f"field {key!r} must be a nonempty string")
        if len(self.vocab.split(v)) > self.cfg.max_len - 2:
            raise ApiError(413, f"field {key!r} exceeds the maximum sentence length")
        return v

    def _z(self, body, key="z"):
        v = body.get(key)
        if not isinstance(v, list) or len(v) != self.cfg.P:
            raise ApiError(400, f"field {key!r} must be a list of {self.cfg.P} floats")
        try:
            return np.asarray([float(x) for x in v])
        except (TypeError, ValueError):
            raise ApiError(400, f"field {key!r} must contain numbers")

    def encode(self, body):
        z = latent.embed_mean(self.params, self.cfg, self.vocab, self._text(body, "text"))
        return {"z": [float(x) for x in z]}

    def decode(self, body):
        z = self._z(body)
        with self._gate:
            text = latent.decode_latent(self.params, self.cfg, self.vocab, z)
        return {"text": text}

    def interpolate(self, body):
        a = self._text(body, "a")
        b = self._text(body, "b")
        steps = body.get("steps", 11)
        if not isinstance(steps, int) or steps < 2:
            raise ApiError(400, "field 'steps' must be an integer >= 2")
        with self._gate:
            res = latent.interpolate(self.params, self.cfg, self.vocab, a, b, steps)
        return {"rows": [{"tau": t, "text": s} for t, s in zip(res.taus, res.sentences)]}

    def arith(self, body):
        a, b, c = (self._text(body, k) for k in ("a", "b", "c"))
        with self._gate:
            zd, text = latent.arithmetic(self.params, self.cfg, self.vocab, a, b, c)
        return {"z_d": [float(x) for x in zd], "text": text}

    def model_info(self):
        return {"config": self.cfg.to_dict(), "step": self.step,
                "vocab_size": len(self.vocab)}

    def dispatch(self, method, path, body):
        if method == "GET" and path == "/model/info":
            return self.model_info()
        routes = {"/encode": self.encode, "/decode": self.decode,
                  "/interpolate": self.interpolate, "/arith": self.arith}
        if method == "POST" and path in routes:
            try:
                return routes[path](body)
            except latent.UnencodableSentence as e:
                raise ApiError(413, str(e))
        raise ApiError(404, f"no such endpoint: {method} {path}")


class _Handler(BaseHTTPRequestHandler):
    service = None
    protocol_version = "HTTP/1.1"

    def log_message(self, *a):
        pass

    def _reply(self, status, payload):
        raw = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _handle(self, method):
        body = {}
        if method == "POST":
            try:
                n = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(n) or b"{}")
                if not isinstance(body, dict):
                    raise ValueError
            except (ValueError, json.JSONDecodeError):
                self._reply(400, {"error": "request body must be a JSON object"})
                return
        try:
            self._reply(200, self.service.dispatch(method, self.path, body))
        except ApiError as e:
            self._reply(e.status, {"error": e.message})
        except Exception as e:   # keep the server alive on surprises
            self._reply(500, {"error": str(e)})

    def do_GET(self):
        self._handle("GET")

    def do_POST(self):
        self._handle("POST")


def make_server(service, addr="127.0.0.1:8080"):
    host, port = addr.rsplit(":", 1)
    handler = type("Handler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, int(port)), handler)


def serve(checkpoint_path, vocab_path, addr="127.0.0.1:8080"):
    service = PlaygroundService.from_files(checkpoint_path, vocab_path)
    server = make_server(service, addr)
    print(f"serving on http://{server.server_address[0]}:{server.server_address[1]}")
    server.serve_forever()

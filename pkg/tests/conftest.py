import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from tabembed.schema import FeatureDef, FeatureSchema, clinical_deterioration_schema
from tabembed.tabular import Record, RecordSet


@pytest.fixture(scope="session")
def clinical_schema():
    return clinical_deterioration_schema()


@pytest.fixture
def small_schema():
    return FeatureSchema(
        schema_id="small",
        features=(
            FeatureDef("age", "years", "static-numeric", (18, 105)),
            FeatureDef("sodium", "mmol/L", "static-numeric", (110, 175)),
            FeatureDef("avpu_scale", "", "static-categorical", None),
            FeatureDef("glucose", "mg/dL", "timeseries-numeric", (20, 1000)),
        ),
    )


@pytest.fixture
def small_recordset(small_schema):
    records = (
        Record(
            id="p1",
            static_values={"age": 70.0, "sodium": 138.0, "avpu_scale": "Alert"},
            series_values={"glucose": [(1.0, 100.0), (5.0, 140.0), (7.0, 100.0)]},
        ),
        Record(
            id="p2",
            static_values={"age": 55.0},
            series_values={},
        ),
        Record(
            id="p3",
            static_values={"sodium": 142.0, "avpu_scale": "Voice"},
            series_values={"glucose": [(2.0, 90.0)]},
        ),
        Record(
            id="p4",
            static_values={"age": 81.0, "sodium": 129.0},
            series_values={},
        ),
    )
    return RecordSet(
        schema=small_schema,
        records=records,
        tasks={"sepsis": (1, 0, 1, 0)},
    )


class _ModelHandler(BaseHTTPRequestHandler):
    """Minimal inference server implementing the embedding/logprob wire
    contract; behavior knobs live on the server object."""

    def log_message(self, *args):
        pass

    def _reply(self, obj, status=200):
        payload = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        mode = self.server.mode
        if self.path == "/token_embeddings":
            tokens = max(1, len(body.get("text", "").split()))
            dim = self.server.dim
            rng = np.random.default_rng(abs(hash(body.get("text", ""))) % (2**32))
            values = rng.normal(size=(tokens, dim)).round(6).tolist()
            if mode == "shape-mismatch":
                self._reply({"dim": dim, "tokens": tokens + 1, "values": values})
            elif mode == "non-finite":
                values[0][0] = None  # json null -> nan downstream
                self._reply({"dim": dim, "tokens": tokens, "values": values})
            else:
                self._reply({"dim": dim, "tokens": tokens, "values": values})
        elif self.path == "/logprobs":
            continuation = body.get("continuation", "")
            toks = continuation.split()
            lps = [-0.1 * (i + 1) for i in range(len(toks))]
            cands = {
                str(c): -0.5 - 0.25 * (i + 1)
                for i, c in enumerate(body.get("candidates", []))
            }
            if mode == "missing-candidate" and cands:
                cands.pop(next(iter(cands)))
            self._reply({"continuation_logprobs": lps, "candidate_logprobs": cands})
        else:
            self._reply({"error": "not found"}, status=404)


@pytest.fixture
def model_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ModelHandler)
    server.mode = "ok"
    server.dim = 8
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.endpoint = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()
    thread.join(timeout=5)

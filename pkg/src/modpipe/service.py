"""HTTP scoring and labeling service.

Stdlib threading HTTP server exposing the /v1 API the console consumes:
moderation scoring, a leased labeling queue, red-team case capture, and a
few read endpoints (stats, regression results, audit report, metadata).
Labels are written through to the corpus store immediately, so a training
or selection run picks them up on its next invocation.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from filelock import FileLock

from .corpus import Dataset, LabelRecord, Sample, consolidate, import_jsonl, mask_pii, sample_line
from .evalx import regression_section
from .net import Model, load as load_checkpoint
from .probe import RedTeamStore
from .select import LoopConfig, StrategyMix, select_batch
from .taxonomy import CATEGORIES, TaxonomyError, normalize

MAX_BODY_BYTES = 32 * 1024


class ServiceError(Exception):
    pass


@dataclass
class ServiceConfig:
    checkpoint: str
    store: str
    redteam: str
    host: str = "127.0.0.1"
    port: int = 8700
    pool: Optional[str] = None
    audit_report: Optional[str] = None
    thresholds: dict = field(default_factory=dict)
    token: Optional[str] = None
    lease_seconds: float = 600.0
    select_seed: int = 0

    def threshold_map(self) -> dict[str, float]:
        out = {}
        for cat in CATEGORIES:
            value = float(self.thresholds.get(cat.value, 0.5))
            if not (0.0 < value < 1.0):
                raise ServiceError(f"threshold for {cat.value} must lie in (0,1)")
            out[cat.value] = value
        return out

    @classmethod
    def from_section(cls, sec: dict) -> "ServiceConfig":
        return cls(
            checkpoint=sec["checkpoint"],
            store=sec["store"],
            redteam=sec["redteam"],
            host=sec.get("host", "127.0.0.1"),
            port=int(sec.get("port", 8700)),
            pool=sec.get("pool"),
            audit_report=sec.get("audit_report"),
            thresholds=sec.get("thresholds") or {},
            token=sec.get("token"),
            lease_seconds=float(sec.get("lease_seconds", 600.0)),
            select_seed=int(sec.get("select_seed", 0)),
        )


class LabelStore:
    """Corpus store with write-through persistence.  Mutations rewrite the
    JSONL file atomically under a cross-process file lock."""

    def __init__(self, path):
        self.path = Path(path)
        self._file_lock = FileLock(str(self.path) + ".lock")
        self._mutex = threading.RLock()
        self.dataset = import_jsonl(self.path) if self.path.exists() else Dataset(name=self.path.stem)

    def has(self, sample_id: str) -> bool:
        with self._mutex:
            return sample_id in self.dataset

    def labeled_ids(self) -> set[str]:
        with self._mutex:
            return {s.id for s in self.dataset if s.labels}

    def add_label(self, sample: Sample, vector, annotator_id: str, timestamp: Optional[int] = None):
        """Attach an annotator record to the sample (adding the sample to the
        store first if it is new) and persist."""
        record = LabelRecord(
            annotator_id=annotator_id,
            role="annotator",
            vector=vector,
            timestamp=int(time.time()) if timestamp is None else timestamp,
        )
        with self._mutex:
            if sample.id in self.dataset:
                target = self.dataset.get(sample.id)
            else:
                target = Sample(
                    id=sample.id,
                    text=sample.text,
                    domain=sample.domain,
                    metadata=dict(sample.metadata),
                )
                self.dataset.add(target)
            target.labels.append(record)
            target.consolidated = consolidate(target)
            self._persist()

    def _persist(self):
        with self._file_lock:
            fd, tmp = tempfile.mkstemp(dir=str(self.path.parent) or ".", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    for s in self.dataset:
                        fh.write(sample_line(s))
                        fh.write("\n")
                os.replace(tmp, self.path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


@dataclass
class QueueItem:
    sample: Sample
    scores: dict[str, float]


class LabelQueue:
    """Lease-based labeling queue.  An item is handed to one caller at a
    time; an expired lease makes it available again."""

    def __init__(self, lease_seconds: float):
        self.lease_seconds = lease_seconds
        self._items: list[QueueItem] = []
        self._by_id: dict[str, QueueItem] = {}
        self._leases: dict[str, float] = {}
        self._completed: set[str] = set()
        self._mutex = threading.Lock()

    def load(self, items: list[QueueItem]) -> int:
        added = 0
        with self._mutex:
            for item in items:
                if item.sample.id in self._by_id:
                    continue
                self._items.append(item)
                self._by_id[item.sample.id] = item
                added += 1
        return added

    def next(self, now: Optional[float] = None) -> Optional[tuple[QueueItem, float]]:
        now = time.monotonic() if now is None else now
        with self._mutex:
            for item in self._items:
                sid = item.sample.id
                if sid in self._completed:
                    continue
                expiry = self._leases.get(sid)
                if expiry is not None and expiry > now:
                    continue
                new_expiry = now + self.lease_seconds
                self._leases[sid] = new_expiry
                return item, new_expiry - now
            return None

    def complete(self, sample_id: str) -> str:
        """Returns 'ok', 'unknown', or 'completed'."""
        with self._mutex:
            if sample_id not in self._by_id:
                return "unknown"
            if sample_id in self._completed:
                return "completed"
            self._completed.add(sample_id)
            self._leases.pop(sample_id, None)
            return "ok"

    def stats(self, now: Optional[float] = None) -> dict[str, int]:
        now = time.monotonic() if now is None else now
        with self._mutex:
            leased = sum(
                1
                for sid, expiry in self._leases.items()
                if expiry > now and sid not in self._completed
            )
            completed = len(self._completed)
            pending = len(self._items) - completed - leased
            return {"pending": pending, "leased": leased, "completed": completed}


class ModerationService:
    def __init__(self, cfg: ServiceConfig, model: Optional[Model] = None):
        self.cfg = cfg
        self.model = model if model is not None else load_checkpoint(cfg.checkpoint)
        self.thresholds = cfg.threshold_map()
        self.store = LabelStore(cfg.store)
        self.redteam = RedTeamStore(cfg.redteam)
        self.queue = LabelQueue(cfg.lease_seconds)
        self.pool: Optional[Dataset] = None
        if cfg.pool:
            pool_path = Path(cfg.pool)
            if pool_path.exists():
                self.pool = import_jsonl(pool_path)

    def moderate(self, text: str) -> dict:
        masked = mask_pii(text)
        probs = self.model.score_map(masked)
        return {
            "scores": probs,
            "flagged": {c: probs[c] > self.thresholds[c] for c in probs},
            "checkpoint_id": self.model.checkpoint_id(),
        }

    def enqueue_ids(self, ids: list[str]) -> int:
        if self.pool is None:
            raise ServiceError("no pool configured to enqueue from")
        items = []
        for sid in ids:
            sample = self.pool.get(sid)
            masked = mask_pii(sample.text)
            queued = Sample(id=sample.id, text=masked, domain=sample.domain, metadata=dict(sample.metadata))
            items.append(QueueItem(sample=queued, scores=self.model.score_map(masked)))
        return self.queue.load(items)

    def next_select_batch(self, n: int, seed: Optional[int] = None) -> dict:
        if self.pool is None:
            raise ServiceError("no pool configured to select from")
        labeled = self.store.labeled_ids()
        candidates = [sid for sid in self.pool.ids() if sid not in labeled]
        subset = self.pool.subset(candidates, name=self.pool.name)
        scores = {}
        samples = list(subset)
        if samples:
            P = self.model.score_texts([s.text for s in samples])
            scores = {s.id: P[:, i].copy() for i, s in enumerate(samples)}
        batch = select_batch(
            subset,
            scores,
            StrategyMix(),
            min(n, len(candidates)),
            self.cfg.select_seed if seed is None else seed,
        )
        return batch.as_obj()

    def regression(self) -> dict:
        cases = self.redteam.load()
        section = regression_section(self.model, cases, threshold=self.thresholds.get("H", 0.5))
        return {
            "cases": [case.as_obj() for case in section],
            "passed": sum(case.passed for case in section),
            "total": len(section),
        }

    def meta(self) -> dict:
        return {
            "categories": [c.value for c in CATEGORIES],
            "thresholds": self.thresholds,
            "checkpoint_id": self.model.checkpoint_id(),
            "lease_seconds": self.queue.lease_seconds,
            "queue": self.queue.stats(),
        }


class _Handler(BaseHTTPRequestHandler):
    service: ModerationService  # set by make_server
    protocol_version = "HTTP/1.1"

    # Silence per-request stderr logging.
    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload: Optional[dict] = None):
        body = b"" if payload is None else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors()
        if body:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")

    def _error(self, status: int, message: str):
        self._send(status, {"error": message})

    def _authorized(self) -> bool:
        token = self.service.cfg.token
        if not token:
            return True
        header = self.headers.get("Authorization", "")
        return header == f"Bearer {token}"

    def _body(self) -> Optional[dict]:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            self._error(413, f"body exceeds {MAX_BODY_BYTES} bytes")
            return None
        raw = self.rfile.read(length) if length else b""
        if not raw:
            self._error(400, "empty request body")
            return None
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError:
            self._error(400, "request body is not valid JSON")
            return None
        if not isinstance(obj, dict):
            self._error(400, "request body must be a JSON object")
            return None
        return obj

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        if not self._authorized():
            return self._error(401, "missing or invalid bearer token")
        if self.path == "/v1/queue/next":
            return self._queue_next()
        if self.path == "/v1/queue/stats":
            return self._send(200, self.service.queue.stats())
        if self.path == "/v1/eval/regression":
            return self._send(200, self.service.regression())
        if self.path == "/v1/audit/report":
            return self._audit_report()
        if self.path == "/v1/meta":
            return self._send(200, self.service.meta())
        return self._error(404, f"no route for GET {self.path}")

    def do_POST(self):
        if not self._authorized():
            return self._error(401, "missing or invalid bearer token")
        if self.path == "/v1/moderate":
            return self._moderate()
        if self.path == "/v1/labels":
            return self._submit_label()
        if self.path == "/v1/redteam":
            return self._submit_redteam()
        if self.path == "/v1/queue":
            return self._load_queue()
        if self.path == "/v1/select/next":
            return self._select_next()
        return self._error(404, f"no route for POST {self.path}")

    def _moderate(self):
        obj = self._body()
        if obj is None:
            return
        text = obj.get("text")
        if not isinstance(text, str) or not text.strip():
            return self._error(400, "field 'text' must be a non-empty string")
        self._send(200, self.service.moderate(text))

    def _queue_next(self):
        nxt = self.service.queue.next()
        if nxt is None:
            return self._send(204)
        item, expires_in = nxt
        self._send(
            200,
            {
                "id": item.sample.id,
                "text": item.sample.text,
                "scores": item.scores,
                "lease_expires_in": expires_in,
            },
        )

    def _submit_label(self):
        obj = self._body()
        if obj is None:
            return
        sid = obj.get("id")
        annotator = obj.get("annotator") or "console"
        if not sid:
            return self._error(400, "field 'id' is required")
        try:
            vector = normalize(obj.get("vector") or {})
        except TaxonomyError as exc:
            return self._error(400, str(exc))
        state = self.service.queue.complete(str(sid))
        if state == "unknown":
            return self._error(404, f"unknown sample id {sid!r}")
        if state == "completed":
            return self._error(409, f"sample {sid!r} was already labeled")
        item = self.service.queue._by_id[str(sid)]
        self.service.store.add_label(item.sample, vector, str(annotator))
        self._send(200, {"id": sid, "status": "stored"})

    def _submit_redteam(self):
        obj = self._body()
        if obj is None:
            return
        text = obj.get("text")
        if not isinstance(text, str) or not text.strip():
            return self._error(400, "field 'text' must be a non-empty string")
        try:
            expected = normalize(obj.get("expected") or {})
        except TaxonomyError as exc:
            return self._error(400, str(exc))
        scores = self.service.moderate(text)["scores"]
        sample, duplicate = self.service.redteam.append(text, scores, expected, note=str(obj.get("note") or ""))
        self._send(200, {"id": sample.id, "duplicate": duplicate, "scores": scores})

    def _load_queue(self):
        obj = self._body()
        if obj is None:
            return
        ids = obj.get("ids")
        if not isinstance(ids, list) or not ids:
            return self._error(400, "field 'ids' must be a non-empty list")
        try:
            added = self.service.enqueue_ids([str(i) for i in ids])
        except Exception as exc:
            return self._error(400, str(exc))
        self._send(200, {"queued": added})

    def _select_next(self):
        obj = self._body()
        if obj is None:
            return
        n = int(obj.get("n") or 10)
        seed = obj.get("seed")
        try:
            batch = self.service.next_select_batch(n, seed=None if seed is None else int(seed))
        except ServiceError as exc:
            return self._error(400, str(exc))
        self._send(200, batch)

    def _audit_report(self):
        path = self.service.cfg.audit_report
        if not path or not Path(path).exists():
            return self._error(404, "no audit report available")
        with open(path, encoding="utf-8") as fh:
            try:
                report = json.load(fh)
            except json.JSONDecodeError:
                return self._error(500, "stored audit report is malformed")
        self._send(200, report)


def make_server(service: ModerationService) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((service.cfg.host, service.cfg.port), handler)
    return server


def serve(cfg: ServiceConfig):
    service = ModerationService(cfg)
    server = make_server(service)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} (checkpoint {service.model.checkpoint_id()})")
    try:
        server.serve_forever()
    finally:
        server.server_close()

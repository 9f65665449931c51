"""Local adjudication service: pending-case queue over HTTP and an
append-only decision log.

The log is line-delimited JSON.  Appends are flushed per entry so a crash
can lose at most the line being written; the loader skips any trailing
partial line.  Re-decisions append a new entry and reads apply
last-write-wins, preserving the full audit trail.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .cleaning import adjudication_queue, clean
from .records import group_by_subject

ALLOWED_VALUES = {
    "race_no_majority": ("B", "W", "A", "H", "O"),
    "gender_tie": ("M", "F"),
}


class DecisionLog:
    """Append-only JSONL decision store with last-write-wins reads."""

    def __init__(self, path):
        self.path = Path(path)

    def append(self, item_id: str, decision: str, annotator: str) -> dict:
        entry = {
            "item_id": item_id,
            "decision": decision,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "annotator": annotator,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        return entry

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue  # partial line from an interrupted write
            if isinstance(entry, dict) and "item_id" in entry:
                out.append(entry)
        return out

    def current(self) -> dict:
        """item_id -> latest entry."""
        state = {}
        for entry in self.entries():
            state[entry["item_id"]] = entry
        return state

    def decisions(self) -> dict:
        """item_id -> decision value, for the cleaning engine."""
        return {i: e["decision"] for i, e in self.current().items()}

    def content_hash(self) -> str:
        data = self.path.read_bytes() if self.path.exists() else b""
        return hashlib.sha256(data).hexdigest()[:16]


class LogLocked(RuntimeError):
    pass


class Lockfile:
    """Guards the decision log against concurrent clean/serve sessions."""

    def __init__(self, log_path):
        self.path = Path(str(log_path) + ".lock")

    def acquire(self, owner: str):
        if self.path.exists():
            raise LogLocked(f"log locked by {self.path.read_text().strip()}")
        self.path.write_text(f"{owner} pid={os.getpid()}\n")

    def release(self):
        self.path.unlink(missing_ok=True)

    def held(self) -> bool:
        return self.path.exists()


class DecisionBody(BaseModel):
    decision: str
    annotator: str = "anonymous"
    override: bool = False


def _item_payload(item, log_state, image_base=""):
    entry = log_state.get(item.item_id)
    evidence = dict(item.evidence)
    if image_base and "records" in evidence:
        evidence["image_urls"] = [f"{image_base}/{r['image_path']}"
                                  for r in evidence["records"]
                                  if r.get("image_path")]
    return {
        "item_id": item.item_id,
        "subject_id": item.subject_id,
        "kind": item.kind,
        "evidence": evidence,
        "status": "decided" if entry else "pending",
        "decision": entry["decision"] if entry else None,
        "decided_at": entry["timestamp"] if entry else None,
        "decided_by": entry["annotator"] if entry else None,
        "allowed_values": list(ALLOWED_VALUES.get(item.kind, ())),
    }


def build_app(items, log: DecisionLog, static_dir=None, image_dir=None):
    """Assemble the HTTP app over a fixed queue and one decision log."""
    app = FastAPI(title="adjudication service")
    by_id = {item.item_id: item for item in items}
    image_base = "/images" if image_dir else ""

    @app.get("/items")
    def list_items(status: str | None = None, page: int = 1,
                   page_size: int = 50):
        state = log.current()
        rows = [_item_payload(i, state, image_base) for i in items]
        if status:
            rows = [r for r in rows if r["status"] == status]
        start = (page - 1) * page_size
        return {"items": rows[start:start + page_size], "total": len(rows),
                "page": page, "page_size": page_size}

    @app.get("/summary")
    def summary():
        state = log.current()
        counts: dict = {}
        for item in items:
            status = "decided" if item.item_id in state else "pending"
            counts.setdefault(item.kind, {"pending": 0, "decided": 0})
            counts[item.kind][status] += 1
        return {"by_kind": counts,
                "total": len(items),
                "pending": sum(c["pending"] for c in counts.values()),
                "log_hash": log.content_hash()}

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        if item_id not in by_id:
            raise HTTPException(404, detail=f"unknown item {item_id!r}")
        return _item_payload(by_id[item_id], log.current(), image_base)

    @app.post("/items/{item_id}/decision")
    def post_decision(item_id: str, body: DecisionBody):
        if item_id not in by_id:
            raise HTTPException(404, detail=f"unknown item {item_id!r}")
        item = by_id[item_id]
        allowed = ALLOWED_VALUES.get(item.kind, ())
        if body.decision not in allowed:
            raise HTTPException(422, detail={
                "message": f"invalid decision {body.decision!r} for {item.kind}",
                "allowed_values": list(allowed)})
        if item_id in log.current() and not body.override:
            raise HTTPException(409, detail={
                "message": f"{item_id} already decided",
                "decision": log.current()[item_id]["decision"]})
        entry = log.append(item_id, body.decision, body.annotator)
        return {"item": _item_payload(item, {item_id: entry}, image_base),
                "log_hash": log.content_hash()}

    if image_dir:
        app.mount("/images", StaticFiles(directory=str(image_dir)),
                  name="images")
    if static_dir:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app


def queue_from_records(records):
    return adjudication_queue(group_by_subject(records))


def apply_log(records, log: DecisionLog):
    """Run the cleaner with the log's current decisions; returns the
    clean result plus the log hash it consumed."""
    result = clean(records, decisions=log.decisions())
    return result, log.content_hash()

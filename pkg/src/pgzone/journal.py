"""Append-only journal with periodic full-state snapshots.

Layout inside the journal directory:

  journal.log          one JSON object per line:
                       {"seq": n, "op": "...", "args": {...}, "when": us}
  snapshot-<seq>.json  full state as of seq, with an integrity hash

Recovery is latest snapshot plus tail replay. A torn final line (the mark
of a crash mid-append) is dropped; a malformed line anywhere else means
the journal is corrupt. Sequence numbers must be contiguous from 1.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .common import now_us, sha256_hex
from .errors import CorruptJournal

JOURNAL_NAME = "journal.log"
SNAPSHOT_EVERY = 1000

_RECORD_KEYS = {"seq", "op", "args", "when"}


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)


def validate_record(record: Any) -> dict:
    if not isinstance(record, dict) or set(record) != _RECORD_KEYS:
        raise CorruptJournal(f"malformed record: {record!r}")
    if not isinstance(record["seq"], int) or not isinstance(record["op"], str) \
            or not isinstance(record["args"], dict) \
            or not isinstance(record["when"], int):
        raise CorruptJournal(f"malformed record: {record!r}")
    return record


class Journal:
    """File-backed journal. All methods assume the caller serializes."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / JOURNAL_NAME
        self._file = None

    # -- write side -----------------------------------------------------

    def _ensure_open(self):
        if self._file is None:
            self._file = open(self.path, "a", encoding="utf-8")
        return self._file

    def append(self, record: dict) -> None:
        f = self._ensure_open()
        f.write(canonical_json(record) + "\n")
        f.flush()

    def write_snapshot(self, seq: int, state: dict) -> Path:
        body = canonical_json(state)
        doc = {
            "seq": seq,
            "when": now_us(),
            "state": state,
            "state_hash": sha256_hex(body.encode("utf-8")),
        }
        target = self.dir / f"snapshot-{seq}.json"
        tmp = target.with_suffix(".tmp")
        tmp.write_text(canonical_json(doc), encoding="utf-8")
        os.replace(tmp, target)
        return target

    def close(self) -> None:
        if self._file is not None:
            self._file.flush()
            os.fsync(self._file.fileno())
            self._file.close()
            self._file = None

    # -- read side ------------------------------------------------------

    def read_records(self) -> list[dict]:
        """Parse journal.log; tolerate only a torn final line."""
        if not self.path.exists():
            return []
        records: list[dict] = []
        with open(self.path, "r", encoding="utf-8", errors="replace") as f:
            lines = f.read().split("\n")
        # Trailing "" after a final newline is not a torn line.
        if lines and lines[-1] == "":
            lines.pop()
        for i, line in enumerate(lines):
            try:
                rec = validate_record(json.loads(line))
            except (json.JSONDecodeError, CorruptJournal):
                if i == len(lines) - 1:
                    break  # torn final line from a crash mid-append
                raise CorruptJournal(f"malformed journal line {i + 1}")
            records.append(rec)
        return records

    def latest_snapshot(self) -> tuple[int, dict] | None:
        """Return (seq, state) of the newest valid-looking snapshot file."""
        best_seq, best_path = -1, None
        for p in self.dir.glob("snapshot-*.json"):
            try:
                seq = int(p.stem.split("-", 1)[1])
            except (IndexError, ValueError):
                continue
            if seq > best_seq:
                best_seq, best_path = seq, p
        if best_path is None:
            return None
        try:
            doc = json.loads(best_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CorruptJournal(f"unreadable snapshot {best_path.name}: {e}")
        state = doc.get("state")
        want_hash = doc.get("state_hash")
        if not isinstance(state, dict) or not isinstance(want_hash, str):
            raise CorruptJournal(f"malformed snapshot {best_path.name}")
        got_hash = sha256_hex(canonical_json(state).encode("utf-8"))
        if got_hash != want_hash:
            raise CorruptJournal(f"snapshot hash mismatch in {best_path.name}")
        return best_seq, state

"""Append-only, hash-chained audit ledger.

One writer per ledger; every entry commits to its predecessor through
``entry_hash = sha256(prev_hash || canonical-json(fields))``, so any
mutation or deletion downstream of the genesis entry is detectable. The
same chain backs incident audit trails, custody records and remote-session
authentication events.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .model import GENESIS_HASH, IRTClass


class AuditAction(Enum):
    OPEN = "Open"
    ACK = "Ack"
    VALIDATE = "Validate"
    DISMISS = "Dismiss"
    ESCALATE = "Escalate"
    RESOLVE = "Resolve"
    IMAGE_REQUESTED = "ImageRequested"
    RETENTION_PURGE = "RetentionPurge"
    AUTH_SESSION = "AuthSession"


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    actor_id: str
    actor_class: IRTClass
    action: AuditAction
    subject: str
    at: int
    prev_hash: str
    entry_hash: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "actor_id": self.actor_id,
            "actor_class": self.actor_class.value,
            "action": self.action.value,
            "subject": self.subject,
            "at": self.at,
            "prev_hash": self.prev_hash,
            "entry_hash": self.entry_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditEntry":
        return cls(
            seq=data["seq"],
            actor_id=data["actor_id"],
            actor_class=IRTClass(data["actor_class"]),
            action=AuditAction(data["action"]),
            subject=data["subject"],
            at=data["at"],
            prev_hash=data["prev_hash"],
            entry_hash=data["entry_hash"],
        )


def _canonical_body(seq: int, actor_id: str, actor_class: str, action: str, subject: str, at: int) -> bytes:
    body = {
        "seq": seq,
        "actor_id": actor_id,
        "actor_class": actor_class,
        "action": action,
        "subject": subject,
        "at": at,
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def compute_entry_hash(prev_hash: str, seq: int, actor_id: str, actor_class: str,
                       action: str, subject: str, at: int) -> str:
    body = _canonical_body(seq, actor_id, actor_class, action, subject, at)
    return hashlib.sha256(bytes.fromhex(prev_hash) + body).hexdigest()


class AuditLedger:
    """Single-writer, append-only hash chain, optionally persisted as JSONL."""

    def __init__(self, path: Optional[Path] = None):
        self._entries: list[AuditEntry] = []
        self._lock = threading.Lock()
        self._path = Path(path) if path else None
        if self._path and self._path.exists():
            for line in self._path.read_text().splitlines():
                if line.strip():
                    self._entries.append(AuditEntry.from_dict(json.loads(line)))

    def append(self, actor_id: str, actor_class: IRTClass, action: AuditAction,
               subject: str, at: int) -> AuditEntry:
        with self._lock:
            seq = len(self._entries)
            prev = self._entries[-1].entry_hash if self._entries else GENESIS_HASH
            entry_hash = compute_entry_hash(
                prev, seq, actor_id, actor_class.value, action.value, subject, at)
            entry = AuditEntry(
                seq=seq,
                actor_id=actor_id,
                actor_class=actor_class,
                action=action,
                subject=subject,
                at=at,
                prev_hash=prev,
                entry_hash=entry_hash,
            )
            self._entries.append(entry)
            if self._path:
                with self._path.open("a") as fh:
                    fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
            return entry

    @property
    def entries(self) -> tuple[AuditEntry, ...]:
        return tuple(self._entries)

    def verify(self) -> Optional[int]:
        return verify_chain(self._entries)

    def entries_for(self, subject: str) -> list[AuditEntry]:
        return [e for e in self._entries if e.subject == subject]


def verify_chain(entries: Iterable[AuditEntry]) -> Optional[int]:
    """Recompute the chain; return the seq of the first broken entry, or
    None when the ledger is intact. Detects field mutation, reordering and
    deletion (a gap breaks the next entry's linkage)."""
    prev = GENESIS_HASH
    expected_seq = 0
    for entry in entries:
        if entry.seq != expected_seq or entry.prev_hash != prev:
            return entry.seq
        recomputed = compute_entry_hash(
            entry.prev_hash, entry.seq, entry.actor_id, entry.actor_class.value,
            entry.action.value, entry.subject, entry.at)
        if recomputed != entry.entry_hash:
            return entry.seq
        prev = entry.entry_hash
        expected_seq += 1
    return None

"""Canonical domain types shared by every stage of the evidence pipeline.

Evidence records are immutable value objects: once constructed they are safe
to share across threads and pipeline stages. Integrity is anchored in a
SHA-256 content hash over the payload bytes; all timestamps are integer UTC
epoch milliseconds.
"""

from __future__ import annotations

import base64
import hashlib
import json
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Any, Optional, Union


class DataClass(Enum):
    """Broad structural class of an evidential payload."""

    STRUCTURED = "Structured"
    SEMI_STRUCTURED = "SemiStructured"
    UNSTRUCTURED = "Unstructured"


class SourceZone(Enum):
    """Network segment a record originated from. The set is closed:
    unknown zones are rejected at ingest rather than coerced."""

    IOT_WVLAN = "IoTWVLAN"
    OPEN_WVLAN = "OpenWVLAN"
    SECURE_WVLAN = "SecureWVLAN"
    SECURE_WIRED_VLAN = "SecureWiredVLAN"
    EDW = "EDW"
    BDDFR = "BdDFR"
    EXTERNAL = "External"


class EventKind(Enum):
    """Fixed vocabulary of event types the pipeline understands."""

    LOGIN = "Login"
    FAILED_LOGIN = "FailedLogin"
    ACCESS_ATTEMPT = "AccessAttempt"
    DOOR_ACCESS = "DoorAccess"
    CABINET_ACCESS = "CabinetAccess"
    MEDICATION_ADMIN = "MedicationAdmin"
    DEVICE_INTERACTION = "DeviceInteraction"
    DEVICE_ERROR = "DeviceError"
    FILE_TRANSFER = "FileTransfer"
    ACCOUNT_CHANGE = "AccountChange"
    EMAIL_MESSAGE = "EmailMessage"
    CHAT_MESSAGE = "ChatMessage"
    DIAGNOSTIC_NOTE = "DiagnosticNote"
    MEDIA_BLOB = "MediaBlob"
    SENSOR_READING = "SensorReading"
    BILLING_RECORD = "BillingRecord"
    EHR_UPDATE = "EHRUpdate"
    ADMISSION_DISCHARGE = "AdmissionDischarge"


class Severity(IntEnum):
    """Four-level severity with total order LOW < MEDIUM < HIGH < CRITICAL."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3
    CRITICAL = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def from_label(cls, label: str) -> "Severity":
        return cls[label.upper()]


class IRTClass(Enum):
    """Incident response tiers: A = 1st responder, B = 2nd, C = 3rd."""

    A = "A"
    B = "B"
    C = "C"

    @property
    def responder_level(self) -> int:
        return {"A": 1, "B": 2, "C": 3}[self.value]

    @property
    def role_titles(self) -> tuple[str, ...]:
        return IRT_ROLE_TITLES[self]


IRT_ROLE_TITLES: dict[IRTClass, tuple[str, ...]] = {
    IRTClass.A: ("Network Security Specialist", "System Administrator"),
    IRTClass.B: ("IRT Leader", "Incident Manager", "Technical Lead (Forensics Specialist)"),
    IRTClass.C: ("Data Privacy Officer", "Legal Counsel", "HR Representative"),
}

# Payloads above this size are stored by reference, not inline (bytes).
INLINE_PAYLOAD_LIMIT = 1 << 20

GENESIS_HASH = "0" * 64


def compute_content_hash(payload: bytes) -> str:
    """SHA-256 digest of payload bytes, hex-encoded. Empty payload is valid."""
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class EvidenceRecord:
    """A single ingested event or artifact.

    ``occurred_at`` is what the source observed and is never mutated;
    ``canonical_at`` is filled in by the router after clock-offset
    normalisation. When the payload is oversized it lives at ``payload_ref``
    and ``payload`` holds empty bytes.

    ``source_zone`` and ``kind`` keep whatever raw string arrived on the wire
    when it is not a known enum member, so that ``validate_record`` can report
    the violation instead of the parser throwing it away.
    """

    record_id: str
    source_zone: Union[SourceZone, str]
    source_device: str
    entity_id: str
    kind: Union[EventKind, str]
    data_class: Union[DataClass, str]
    occurred_at: int
    content_hash: str
    payload: bytes = b""
    payload_ref: Optional[str] = None
    subject_id: Optional[str] = None
    canonical_at: Optional[int] = None
    pii_fields: tuple[str, ...] = ()
    scenario_tags: tuple[str, ...] = ()
    original_hash: Optional[str] = None

    def payload_fields(self) -> dict[str, Any]:
        """Decode the payload as a JSON object; {} when it is not one."""
        try:
            decoded = json.loads(self.payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return {}
        return decoded if isinstance(decoded, dict) else {}


def make_record(
    *,
    source_zone: SourceZone,
    source_device: str,
    entity_id: str,
    kind: EventKind,
    data_class: DataClass,
    occurred_at: int,
    payload: bytes = b"",
    payload_ref: Optional[str] = None,
    record_id: Optional[str] = None,
    subject_id: Optional[str] = None,
    pii_fields: tuple[str, ...] = (),
    scenario_tags: tuple[str, ...] = (),
) -> EvidenceRecord:
    """Build a well-formed record, computing the content hash."""
    return EvidenceRecord(
        record_id=record_id or uuid.uuid4().hex,
        source_zone=source_zone,
        source_device=source_device,
        entity_id=entity_id,
        kind=kind,
        data_class=data_class,
        occurred_at=occurred_at,
        content_hash=compute_content_hash(payload),
        payload=payload,
        payload_ref=payload_ref,
        subject_id=subject_id,
        pii_fields=pii_fields,
        scenario_tags=scenario_tags,
    )


def validate_record(record: EvidenceRecord) -> list[str]:
    """Return all invariant violations; an empty list means the record is ok.

    Violations are data, not faults: this never raises and never mutates.
    """
    violations = []
    if not record.record_id:
        violations.append("missing-record-id")
    if not isinstance(record.source_zone, SourceZone):
        violations.append("unknown-zone")
    if not isinstance(record.kind, EventKind):
        violations.append("unknown-kind")
    if not isinstance(record.data_class, DataClass):
        violations.append("unknown-data-class")
    if not isinstance(record.occurred_at, int) or record.occurred_at < 0:
        violations.append("missing-timestamp")
    if record.content_hash != compute_content_hash(record.payload):
        violations.append("hash-mismatch")
    return violations


def _enum_value(value: Union[Enum, str]) -> str:
    return value.value if isinstance(value, Enum) else value


def to_envelope(record: EvidenceRecord) -> dict[str, Any]:
    """Serializable wire form of a record (payload as base64 or a ref)."""
    env: dict[str, Any] = {
        "record_id": record.record_id,
        "source_zone": _enum_value(record.source_zone),
        "source_device": record.source_device,
        "entity_id": record.entity_id,
        "subject_id": record.subject_id,
        "kind": _enum_value(record.kind),
        "data_class": _enum_value(record.data_class),
        "occurred_at": record.occurred_at,
        "canonical_at": record.canonical_at,
        "content_hash": record.content_hash,
        "pii_fields": list(record.pii_fields),
        "scenario_tags": list(record.scenario_tags),
        "original_hash": record.original_hash,
    }
    if record.payload_ref is not None:
        env["payload_ref"] = record.payload_ref
    else:
        env["payload"] = base64.b64encode(record.payload).decode("ascii")
    return env


def _coerce(enum_cls: type, raw: Any) -> Any:
    """Map a wire string onto an enum member, keeping the raw value when it
    is not a member so validation can flag it."""
    try:
        return enum_cls(raw)
    except ValueError:
        return raw


def from_envelope(env: dict[str, Any]) -> EvidenceRecord:
    """Parse a wire envelope. Unknown zone/kind strings are preserved as-is
    for ``validate_record`` to report."""
    payload = base64.b64decode(env["payload"]) if "payload" in env else b""
    data_class = _coerce(DataClass, env.get("data_class") or "")
    return EvidenceRecord(
        record_id=env.get("record_id", ""),
        source_zone=_coerce(SourceZone, env.get("source_zone")),
        source_device=env.get("source_device", ""),
        entity_id=env.get("entity_id", ""),
        subject_id=env.get("subject_id"),
        kind=_coerce(EventKind, env.get("kind")),
        data_class=data_class,
        occurred_at=env.get("occurred_at", -1),
        canonical_at=env.get("canonical_at"),
        content_hash=env.get("content_hash", ""),
        payload=payload,
        payload_ref=env.get("payload_ref"),
        pii_fields=tuple(env.get("pii_fields") or ()),
        scenario_tags=tuple(env.get("scenario_tags") or ()),
        original_hash=env.get("original_hash"),
    )


def envelope_line(record: EvidenceRecord) -> str:
    """One newline-delimited JSON line for fixtures and wire transport."""
    return json.dumps(to_envelope(record), sort_keys=True, separators=(",", ":"))


def read_envelopes(text: str) -> list[EvidenceRecord]:
    """Parse newline-delimited envelopes, skipping blank lines."""
    return [from_envelope(json.loads(line)) for line in text.splitlines() if line.strip()]


def with_canonical_at(record: EvidenceRecord, canonical_at: int) -> EvidenceRecord:
    return replace(record, canonical_at=canonical_at)

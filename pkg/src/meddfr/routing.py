"""Ingest pipeline: clock normalisation, classification, and routing.

Every record is validated on its ingress bytes, clock-normalised against the
per-device offset table, sanitized at the storage boundary, then routed:
structured records go to the exterior monitoring store AND a copy to the
DFR1 group; semi-structured and unstructured records go to DFR2. Invalid
records are quarantined, never dropped: potential evidence must not be lost
silently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

from .anonymise import AnonymisationError, AnonymisationPolicy, PseudonymKey, apply_policy
from .model import (
    DataClass,
    EvidenceRecord,
    EventKind,
    envelope_line,
    validate_record,
    with_canonical_at,
)
from .store import Cluster, InsufficientNodesError, NodeGroup

logger = logging.getLogger(__name__)


class Destination(Enum):
    DFR1 = "DFR1"
    DFR2 = "DFR2"
    SIEM_STORE = "SIEMStore"


class UnknownKindError(Exception):
    pass


@dataclass(frozen=True)
class RoutingDecision:
    destination: Destination
    data_class: DataClass
    reason: str


@dataclass(frozen=True)
class Receipt:
    record_id: str
    destinations: tuple[Destination, ...]
    content_hash: str
    canonical_at: int


# Missing device => offset 0 (already on the reference clock).
ClockOffsetTable = Mapping[str, int]


def normalize_timestamp(occurred_at: int, device: str, offsets: ClockOffsetTable) -> int:
    """canonical_at = occurred_at - offset(device), offsets relative to the
    reference NTP clock."""
    return occurred_at - offsets.get(device, 0)


def classify(record: EvidenceRecord,
             kind_classes: Mapping[EventKind, DataClass]) -> RoutingDecision:
    """Route by the kind -> class table: structured to DFR1 (the exterior
    copy is handled at ingest), everything else to DFR2."""
    if not isinstance(record.kind, EventKind) or record.kind not in kind_classes:
        raise UnknownKindError(str(record.kind))
    data_class = kind_classes[record.kind]
    if data_class == DataClass.STRUCTURED:
        return RoutingDecision(Destination.DFR1, data_class, f"kind-table:{record.kind.value}")
    return RoutingDecision(Destination.DFR2, data_class, f"kind-table:{record.kind.value}")


class ExteriorStore:
    """The monitoring store outside the DFR cluster: structured records kept
    for day-to-day triage, deduplicated by record id."""

    def __init__(self):
        self._records: dict[str, EvidenceRecord] = {}

    def add(self, record: EvidenceRecord) -> bool:
        if record.record_id in self._records:
            return False
        self._records[record.record_id] = record
        return True

    def get(self, record_id: str) -> Optional[EvidenceRecord]:
        return self._records.get(record_id)

    def all_records(self) -> list[EvidenceRecord]:
        return list(self._records.values())

    def __len__(self) -> int:
        return len(self._records)


class IngestRouter:
    """Stateful ingest front end over the cluster and exterior store."""

    def __init__(self, cluster: Cluster, exterior: ExteriorStore,
                 kind_classes: Mapping[EventKind, DataClass],
                 offsets: Optional[ClockOffsetTable] = None,
                 policy: Optional[AnonymisationPolicy] = None,
                 key: Optional[PseudonymKey] = None,
                 replication_factor: int = 3):
        self.cluster = cluster
        self.exterior = exterior
        self.kind_classes = dict(kind_classes)
        self.offsets = dict(offsets or {})
        self.policy = policy
        self.key = key
        self.replication_factor = replication_factor
        self._receipts: dict[str, Receipt] = {}
        self._quarantine: dict[str, tuple[EvidenceRecord, str]] = {}
        self._retry_queue: list[EvidenceRecord] = []
        # record_id -> (destination, object_id) for evidence retrieval
        self.record_index: dict[str, tuple[Destination, str]] = {}
        self.stored: dict[str, EvidenceRecord] = {}

    # ---- ingest -----------------------------------------------------------

    def ingest(self, record: EvidenceRecord) -> Optional[Receipt]:
        """Normalize, sanitize and store one record.

        Returns the receipt, or None when the record was quarantined
        (introspect via quarantine_list) or parked for retry after a store
        outage (pending_retries). Re-ingesting an already-seen record id is
        a no-op returning the original receipt.
        """
        if record.record_id in self._receipts:
            return self._receipts[record.record_id]

        violations = validate_record(record)
        if violations:
            self._add_quarantine(record, ",".join(violations))
            return None

        canonical = normalize_timestamp(record.occurred_at, record.source_device, self.offsets)
        record = with_canonical_at(record, canonical)

        try:
            decision = classify(record, self.kind_classes)
        except UnknownKindError as exc:
            self._add_quarantine(record, f"unknown-kind:{exc}")
            return None

        if self.policy is not None and self.key is not None:
            try:
                record = apply_policy(record, self.policy, self.key)
            except AnonymisationError as exc:
                self._add_quarantine(record, f"anonymisation:{exc}")
                return None

        try:
            receipt = self._store(record, decision)
        except InsufficientNodesError:
            logger.warning("store unavailable, parking record %s", record.record_id)
            self._retry_queue.append(record)
            return None

        self._receipts[record.record_id] = receipt
        self.stored[record.record_id] = record
        return receipt

    def _store(self, record: EvidenceRecord, decision: RoutingDecision) -> Receipt:
        payload = envelope_line(record).encode("utf-8")
        assert record.canonical_at is not None
        if decision.data_class == DataClass.STRUCTURED:
            # Exterior copy first, then the DFR1 forward of the same bytes.
            self.exterior.add(record)
            manifest = self.cluster.put(NodeGroup.DFR1, payload,
                                        r=self.replication_factor,
                                        created_at=record.canonical_at)
            destinations = (Destination.SIEM_STORE, Destination.DFR1)
            self.record_index[record.record_id] = (Destination.DFR1, manifest.object_id)
        else:
            manifest = self.cluster.put(NodeGroup.DFR2, payload,
                                        r=self.replication_factor,
                                        created_at=record.canonical_at)
            destinations = (Destination.DFR2,)
            self.record_index[record.record_id] = (Destination.DFR2, manifest.object_id)
        return Receipt(
            record_id=record.record_id,
            destinations=destinations,
            content_hash=record.content_hash,
            canonical_at=record.canonical_at,
        )

    def retry_parked(self) -> int:
        """Re-attempt every parked record; returns how many were stored."""
        parked, self._retry_queue = self._retry_queue, []
        stored = 0
        for record in parked:
            if self.ingest(record) is not None:
                stored += 1
        return stored

    # ---- introspection ------------------------------------------------------

    def quarantine_list(self) -> list[tuple[EvidenceRecord, str]]:
        return list(self._quarantine.values())

    def pending_retries(self) -> list[EvidenceRecord]:
        return list(self._retry_queue)

    def receipt_for(self, record_id: str) -> Optional[Receipt]:
        return self._receipts.get(record_id)

    def _add_quarantine(self, record: EvidenceRecord, reason: str) -> None:
        if record.record_id not in self._quarantine:
            self._quarantine[record.record_id] = (record, reason)

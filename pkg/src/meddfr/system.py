"""Full-system facade: one object wiring ingest, stores, detection, triage
and imaging together, shared by the CLI, the gateway and the simulator.

All timestamps flow from the data (virtual time), never from the wall
clock, so a seeded scenario reproduces its ledgers and metrics byte for
byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import ueba
from .anonymise import AnonymisationPolicy, PseudonymKey
from .config import Config
from .forensics import ForensicImage, acquire_image, export_image, verify_image
from .incidents import IncidentEngine, Notifier
from .ledger import AuditAction, AuditLedger
from .model import EvidenceRecord, IRTClass, Severity, from_envelope
from .routing import ExteriorStore, IngestRouter, Receipt
from .siem import AlertRecord, AllowDenyLists, evaluate
from .store import Cluster, NodeGroup, build_cluster


@dataclass(frozen=True)
class Principal:
    principal_id: str
    secret: str
    irt_class: Optional[IRTClass]  # None for external third parties
    admin: bool = False
    third_party: bool = False


def default_principals() -> dict[str, Principal]:
    return {
        "ana.alvarez": Principal("ana.alvarez", "alpha-secret", IRTClass.A),
        "sam.okoro": Principal("sam.okoro", "alpha2-secret", IRTClass.A),
        "bela.novak": Principal("bela.novak", "bravo-secret", IRTClass.B),
        "tech.lead": Principal("tech.lead", "bravo2-secret", IRTClass.B, admin=True),
        "cleo.dupont": Principal("cleo.dupont", "charlie-secret", IRTClass.C),
        "ext.investigator": Principal("ext.investigator", "remote-secret", None,
                                      third_party=True),
    }


class System:
    """Everything behind the service surface, built from one Config."""

    def __init__(self, config: Optional[Config] = None,
                 key: Optional[PseudonymKey] = None,
                 root: Optional[Path] = None,
                 principals: Optional[dict[str, Principal]] = None):
        self.config = config or Config()
        store_cfg = self.config.store
        store_root = Path(store_cfg.root) if store_cfg.root else root
        self.cluster: Cluster = build_cluster(
            dfr1_nodes=store_cfg.dfr1_nodes,
            dfr2_nodes=store_cfg.dfr2_nodes,
            imaging_nodes=store_cfg.imaging_nodes,
            chunk_size=store_cfg.chunk_size,
            root=(store_root / "store") if store_root else None,
        )
        self.exterior = ExteriorStore()
        if key is None and self.config.anonymiser.key_file:
            from .anonymise import load_key_file

            key = load_key_file(self.config.anonymiser.key_file)
        self.key = key or PseudonymKey.generate("k-default")
        self.policy = AnonymisationPolicy.from_config(
            self.config.anonymiser.policy, self.config.anonymiser.applies_to)
        self.router = IngestRouter(
            cluster=self.cluster,
            exterior=self.exterior,
            kind_classes=self.config.routing.kind_classes,
            offsets=self.config.routing.clock_offsets,
            policy=self.policy,
            key=self.key,
            replication_factor=store_cfg.replication_factor,
        )
        self.ledger = AuditLedger((store_root / "audit.jsonl") if store_root else None)
        outbox = self.config.ir.outbox_dir
        self.notifier = Notifier(Path(outbox) if outbox else
                                 ((store_root / "outbox") if store_root else None))
        self.engine = IncidentEngine(self.ledger, self.notifier,
                                     ack_sla_ms=self.config.ir.ack_sla_ms)
        self.session_ledger = AuditLedger(
            (store_root / "sessions.jsonl") if store_root else None)
        self.principals = principals or default_principals()
        self.alerts: list[AlertRecord] = []
        self.profiles: dict[str, ueba.EntityProfile] = {}
        self.images: dict[str, ForensicImage] = {}
        self._latest_time = 0
        self._root = store_root
        if self._root:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load_state()

    # ---- ingest ---------------------------------------------------------------

    def ingest(self, record: EvidenceRecord) -> Optional[Receipt]:
        known = record.record_id in self.router.stored
        receipt = self.router.ingest(record)
        if receipt is not None and receipt.canonical_at > self._latest_time:
            self._latest_time = receipt.canonical_at
        if receipt is not None and not known and self._root:
            from .model import envelope_line

            with (self._root / "records.jsonl").open("a") as fh:
                fh.write(envelope_line(self.router.stored[record.record_id]) + "\n")
        return receipt

    def latest_time(self) -> int:
        return self._latest_time

    # ---- detection -------------------------------------------------------------

    def structured_records(self) -> list[EvidenceRecord]:
        records = self.exterior.all_records()
        records.sort(key=lambda r: (r.canonical_at or 0, r.record_id))
        return records

    def stored_records(self) -> list[EvidenceRecord]:
        records = list(self.router.stored.values())
        records.sort(key=lambda r: (r.canonical_at or 0, r.record_id))
        return records

    def run_siem(self) -> list[AlertRecord]:
        lists = AllowDenyLists(allow=set(self.config.siem.allow),
                               deny=set(self.config.siem.deny))
        alerts = evaluate(self.structured_records(), self.config.siem.rules, lists)
        self._merge_alerts(alerts)
        return alerts

    def build_profiles(self, cutoff_ms: int) -> dict[str, ueba.EntityProfile]:
        """Baselines from everything stored strictly before the cutoff."""
        history: dict[str, list[EvidenceRecord]] = {}
        for record in self.stored_records():
            if (record.canonical_at or 0) < cutoff_ms:
                history.setdefault(record.entity_id, []).append(record)
        self.profiles = {
            entity: ueba.build_profile(entity, records, self.config.ueba)
            for entity, records in history.items()
        }
        return self.profiles

    def run_ueba(self, cutoff_ms: int) -> list[AlertRecord]:
        batch = [r for r in self.stored_records() if (r.canonical_at or 0) >= cutoff_ms]
        alerts = ueba.detect(batch, self.profiles, self.config.ueba)
        self._merge_alerts(alerts)
        return alerts

    def profiled_event_count(self, cutoff_ms: int) -> int:
        count = 0
        for record in self.stored_records():
            if (record.canonical_at or 0) < cutoff_ms:
                continue
            profile = self.profiles.get(record.entity_id)
            if profile is not None and not profile.provisional:
                count += 1
        return count

    def save_profiles(self) -> int:
        """Persist profiles into DFR1 (they are structured, security-relevant
        artifacts); returns the number written."""
        written = 0
        for entity in sorted(self.profiles):
            payload = ueba.profile_to_json(self.profiles[entity])
            self.cluster.put(NodeGroup.DFR1, payload,
                             r=self.config.store.replication_factor,
                             created_at=self._latest_time)
            written += 1
        return written

    def _merge_alerts(self, alerts: list[AlertRecord]) -> None:
        known = {a.alert_id for a in self.alerts}
        fresh = []
        for alert in alerts:
            if alert.alert_id not in known:
                self.alerts.append(alert)
                fresh.append(alert)
                known.add(alert.alert_id)
        if fresh and self._root:
            import json as _json

            with (self._root / "alerts.jsonl").open("a") as fh:
                for alert in fresh:
                    fh.write(_json.dumps(alert.to_dict(), sort_keys=True) + "\n")

    # ---- triage -------------------------------------------------------------

    def open_incidents(self) -> int:
        """Open incidents for all known alerts in alert-time order."""
        opened = 0
        for alert in sorted(self.alerts, key=lambda a: (a.created_at, a.alert_id)):
            before = len(self.engine.incidents)
            self.engine.open_incident(alert)
            opened += len(self.engine.incidents) - before
        return opened

    def alert_by_id(self, alert_id: str) -> Optional[AlertRecord]:
        for alert in self.alerts:
            if alert.alert_id == alert_id:
                return alert
        return None

    # ---- evidence ---------------------------------------------------------------

    def evidence(self, record_id: str) -> Optional[EvidenceRecord]:
        """Sanitized record as stored in DFR1/DFR2 (read back from the
        cluster, not from memory)."""
        import json as _json

        entry = self.router.record_index.get(record_id)
        if entry is None:
            return None
        _, object_id = entry
        data = self.cluster.get(object_id)
        return from_envelope(_json.loads(data.decode("utf-8")))

    # ---- forensics ---------------------------------------------------------------

    def acquire_image(self, group: NodeGroup, selection: Optional[list[str]],
                      actor_id: str, actor_class: IRTClass,
                      at: Optional[int] = None) -> ForensicImage:
        snapshot = self.cluster.snapshot_readonly(group, taken_at=at or self._latest_time)
        image = acquire_image(snapshot, selection, actor_id, actor_class,
                              self.cluster, self.ledger,
                              at if at is not None else self._latest_time)
        self.images[image.image_id] = image
        return image

    def verify_image(self, image_id: str) -> list[str]:
        image = self.images[image_id]
        return verify_image(image, self.cluster)

    def export_image(self, image_id: str, path: Path) -> Path:
        image = self.images[image_id]
        return export_image(image, path, self.cluster, self.ledger)

    # ---- persistence ---------------------------------------------------------------

    def _load_state(self) -> None:
        """Rehydrate router/alert/incident/image state from a prior CLI run.
        Chunk bytes and manifests come back through the cluster's own disk
        layout; this covers the in-memory indices on top of them."""
        import json as _json

        from .model import compute_content_hash, envelope_line
        from .routing import Destination
        from .siem import AlertRecord as _Alert

        records_path = self._root / "records.jsonl"
        if records_path.exists():
            for line in records_path.read_text().splitlines():
                if not line.strip():
                    continue
                record = from_envelope(_json.loads(line))
                self.router.stored[record.record_id] = record
                object_id = compute_content_hash(envelope_line(record).encode("utf-8"))
                if object_id in self.cluster.manifests:
                    group = self.cluster.manifests[object_id].group
                    destination = (Destination.DFR1 if group == NodeGroup.DFR1
                                   else Destination.DFR2)
                    self.router.record_index[record.record_id] = (destination, object_id)
                    if destination == Destination.DFR1:
                        self.exterior.add(record)
                if (record.canonical_at or 0) > self._latest_time:
                    self._latest_time = record.canonical_at or 0

        alerts_path = self._root / "alerts.jsonl"
        if alerts_path.exists():
            for line in alerts_path.read_text().splitlines():
                if line.strip():
                    self.alerts.append(_Alert.from_dict(_json.loads(line)))

        incidents_path = self._root / "incidents.json"
        if incidents_path.exists():
            from .incidents import Incident, IncidentState
            from .siem import Origin

            doc = _json.loads(incidents_path.read_text())
            for item in doc.get("incidents", []):
                incident = Incident(
                    incident_id=item["incident_id"],
                    alert_refs=list(item["alert_refs"]),
                    origin=Origin(item["origin"]),
                    severity=Severity.from_label(item["severity"]),
                    state=IncidentState(item["state"]),
                    assignee_class=IRTClass(item["assignee_class"]),
                    opened_at=item["opened_at"],
                    sla_deadline=item["sla_deadline"],
                    ack_pending=item["ack_pending"],
                    validated=item["validated"],
                    resolution_note=item.get("resolution_note"),
                )
                self.engine.incidents[incident.incident_id] = incident
                for alert_id in incident.alert_refs:
                    self.engine._alert_binding[alert_id] = incident.incident_id

        images_path = self._root / "images.jsonl"
        if images_path.exists():
            for line in images_path.read_text().splitlines():
                if line.strip():
                    image = ForensicImage.from_dict(_json.loads(line))
                    self.images[image.image_id] = image

    def save_state(self) -> None:
        """Snapshot mutable triage/imaging state for the next CLI run."""
        if not self._root:
            return
        import json as _json

        doc = {"incidents": [i.to_dict() for i in self.engine.list_incidents()]}
        (self._root / "incidents.json").write_text(_json.dumps(doc, sort_keys=True, indent=1))
        with (self._root / "images.jsonl").open("w") as fh:
            for image_id in sorted(self.images):
                fh.write(_json.dumps(self.images[image_id].to_dict(), sort_keys=True) + "\n")

    # ---- retention -----------------------------------------------------------------

    def apply_retention(self, now: int) -> list[str]:
        policy = dict(self.config.store.retention)

        def custody_log(object_id: str, at: int) -> None:
            self.ledger.append("system", IRTClass.A, AuditAction.RETENTION_PURGE,
                               object_id, at)

        return self.cluster.apply_retention(policy, now, custody_log)

"""Single-document YAML configuration for the whole pipeline.

Sections: ``routing``, ``siem``, ``ueba``, ``anonymiser``, ``ir``, ``store``,
``sim``. Every knob has a default so an empty file is a valid deployment;
the config path can also come from the ``MEDDFR_CONFIG`` env var.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .model import DataClass, EventKind, Severity

ENV_CONFIG_PATH = "MEDDFR_CONFIG"

# Default kind -> data class table. Table-driven and overridable per
# deployment under routing.kind_classes.
DEFAULT_KIND_CLASSES: dict[EventKind, DataClass] = {
    EventKind.LOGIN: DataClass.STRUCTURED,
    EventKind.FAILED_LOGIN: DataClass.STRUCTURED,
    EventKind.ACCESS_ATTEMPT: DataClass.STRUCTURED,
    EventKind.DOOR_ACCESS: DataClass.STRUCTURED,
    EventKind.CABINET_ACCESS: DataClass.STRUCTURED,
    EventKind.MEDICATION_ADMIN: DataClass.STRUCTURED,
    EventKind.DEVICE_INTERACTION: DataClass.STRUCTURED,
    EventKind.DEVICE_ERROR: DataClass.STRUCTURED,
    EventKind.FILE_TRANSFER: DataClass.STRUCTURED,
    EventKind.ACCOUNT_CHANGE: DataClass.STRUCTURED,
    EventKind.BILLING_RECORD: DataClass.STRUCTURED,
    EventKind.EHR_UPDATE: DataClass.STRUCTURED,
    EventKind.ADMISSION_DISCHARGE: DataClass.STRUCTURED,
    EventKind.EMAIL_MESSAGE: DataClass.SEMI_STRUCTURED,
    EventKind.CHAT_MESSAGE: DataClass.SEMI_STRUCTURED,
    EventKind.DIAGNOSTIC_NOTE: DataClass.SEMI_STRUCTURED,
    EventKind.SENSOR_READING: DataClass.SEMI_STRUCTURED,
    EventKind.MEDIA_BLOB: DataClass.UNSTRUCTURED,
}


@dataclass
class RoutingConfig:
    kind_classes: dict[EventKind, DataClass] = field(
        default_factory=lambda: dict(DEFAULT_KIND_CLASSES))
    clock_offsets: dict[str, int] = field(default_factory=dict)


@dataclass
class RuleConfig:
    rule_id: str
    kind: Optional[EventKind]
    threshold: int
    window_ms: int
    group_by: str = "entity_id"
    severity: Severity = Severity.MEDIUM
    description: str = ""
    field_equals: dict[str, Any] = field(default_factory=dict)
    dedup_window_ms: Optional[int] = None  # defaults to window_ms


def default_siem_rules() -> "list[RuleConfig]":
    return [
        RuleConfig(
            rule_id="failed-login-burst",
            kind=EventKind.FAILED_LOGIN,
            threshold=5,
            window_ms=60_000,
            group_by="entity_id",
            severity=Severity.HIGH,
            description="5+ failed logins within a minute for one entity",
        ),
        RuleConfig(
            rule_id="bulk-file-transfer",
            kind=EventKind.FILE_TRANSFER,
            threshold=10,
            window_ms=600_000,
            group_by="entity_id",
            severity=Severity.MEDIUM,
            description="10+ file transfers within ten minutes",
        ),
    ]


@dataclass
class SiemConfig:
    rules: list[RuleConfig] = field(default_factory=default_siem_rules)
    allow: set[str] = field(default_factory=set)
    deny: set[str] = field(default_factory=set)


@dataclass
class UebaConfig:
    threshold: float = 3.0
    critical_multiplier: float = 2.0
    stddev_floor: float = 1e-6
    min_profile_events: int = 30
    # Floor (in nats) for the stddev of access-hour surprisal; this is the
    # fixed mapping that puts -log(bin probability) onto the z-score scale.
    hour_surprisal_floor: float = 0.5
    dedup_window_ms: int = 3_600_000


@dataclass
class AnonymiserConfig:
    # field name -> method spec: "pseudonymise" | "mask" | "drop" | {perturb: sigma}
    policy: dict[str, Any] = field(
        default_factory=lambda: {"subject_id": "pseudonymise",
                                 "entity_id": "pseudonymise",
                                 "patient_name": "pseudonymise"})
    applies_to: set[DataClass] = field(
        default_factory=lambda: {DataClass.STRUCTURED, DataClass.SEMI_STRUCTURED,
                                 DataClass.UNSTRUCTURED})
    key_file: Optional[str] = None


@dataclass
class IRConfig:
    ack_sla_ms: int = 30 * 60 * 1000
    outbox_dir: Optional[str] = None


@dataclass
class StoreConfig:
    replication_factor: int = 3
    chunk_size: int = 64 * 1024
    dfr1_nodes: int = 5
    dfr2_nodes: int = 5
    imaging_nodes: int = 1
    root: Optional[str] = None
    retention: dict[str, int] = field(default_factory=dict)  # class -> max age ms


@dataclass
class SimConfig:
    training_fraction: float = 0.5
    false_positive_budget: float = 0.01


@dataclass
class Config:
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    siem: SiemConfig = field(default_factory=SiemConfig)
    ueba: UebaConfig = field(default_factory=UebaConfig)
    anonymiser: AnonymiserConfig = field(default_factory=AnonymiserConfig)
    ir: IRConfig = field(default_factory=IRConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    sim: SimConfig = field(default_factory=SimConfig)


def _parse_routing(raw: dict) -> RoutingConfig:
    cfg = RoutingConfig()
    for kind_name, class_name in (raw.get("kind_classes") or {}).items():
        cfg.kind_classes[EventKind(kind_name)] = DataClass(class_name)
    cfg.clock_offsets = {str(k): int(v) for k, v in (raw.get("clock_offsets") or {}).items()}
    return cfg


def _parse_rule(raw: dict) -> RuleConfig:
    return RuleConfig(
        rule_id=raw["rule_id"],
        kind=EventKind(raw["kind"]) if raw.get("kind") else None,
        threshold=int(raw["threshold"]),
        window_ms=int(raw["window_ms"]),
        group_by=raw.get("group_by", "entity_id"),
        severity=Severity.from_label(raw.get("severity", "Medium")),
        description=raw.get("description", ""),
        field_equals=dict(raw.get("field_equals") or {}),
        dedup_window_ms=raw.get("dedup_window_ms"),
    )


def _parse_siem(raw: dict) -> SiemConfig:
    return SiemConfig(
        rules=[_parse_rule(r) for r in raw.get("rules") or []],
        allow=set(raw.get("allow") or []),
        deny=set(raw.get("deny") or []),
    )


def _apply_simple(target: Any, raw: dict) -> None:
    for key, value in raw.items():
        if hasattr(target, key):
            setattr(target, key, value)


def load_config(path: Optional[Path] = None) -> Config:
    """Load config from path, the MEDDFR_CONFIG env var, or defaults."""
    if path is None:
        env = os.environ.get(ENV_CONFIG_PATH)
        path = Path(env) if env else None
    cfg = Config()
    if path is None or not Path(path).exists():
        return cfg
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if "routing" in raw:
        cfg.routing = _parse_routing(raw["routing"] or {})
    if "siem" in raw:
        cfg.siem = _parse_siem(raw["siem"] or {})
    if "ueba" in raw:
        _apply_simple(cfg.ueba, raw["ueba"] or {})
    if "anonymiser" in raw:
        section = dict(raw["anonymiser"] or {})
        if "applies_to" in section:
            section["applies_to"] = {DataClass(v) for v in section["applies_to"]}
        _apply_simple(cfg.anonymiser, section)
    if "ir" in raw:
        _apply_simple(cfg.ir, raw["ir"] or {})
    if "store" in raw:
        _apply_simple(cfg.store, raw["store"] or {})
    if "sim" in raw:
        _apply_simple(cfg.sim, raw["sim"] or {})
    return cfg

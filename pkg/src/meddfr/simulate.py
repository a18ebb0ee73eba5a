"""Deterministic synthetic-event generation and end-to-end evaluation runs.

A scenario is a seeded recipe: staff entities follow daily shift routines
(scheduled events with small clamped jitter) for the behaviorally profiled
kinds, background kinds arrive as Poisson processes, and anomalies are
injected on top as explicit ground truth. The seed fully determines the
stream, and therefore everything downstream: alerts, incidents, ledgers,
metrics.

Routine kinds are scheduled rather than Poisson because the profiled
interval/rate features must have bounded clean-stream deviations for the
false-positive budget to hold; pure Poisson gaps are exponential and exceed
three sigma about 1.8% of the time, which would blow the 1% budget by
construction.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .anonymise import pseudonymise
from .config import Config
from .model import (
    DataClass,
    EvidenceRecord,
    EventKind,
    SourceZone,
    compute_content_hash,
)
from .siem import AlertRecord, Origin
from .ueba import (
    ACCESS_HOUR,
    DEVICE_RATE,
    DOSE_MAGNITUDE,
    MEDICATION_INTERVAL,
    RESTRICTED_COUNT,
)

HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS


class ScenarioId(Enum):
    INSURANCE_CLAIMS = "InsuranceClaims"
    MEDICAL_NEGLIGENCE = "MedicalNegligence"
    IOMT_MALFUNCTION = "IoMTMalfunction"
    INCORRECT_DIAGNOSIS = "IncorrectDiagnosis"
    EMPLOYEE_MISCONDUCT = "EmployeeMisconduct"
    LETBY_PRESET = "LetbyPreset"


class InjectionUnit(Enum):
    ACCESS_PATTERN = "AccessPattern"
    MEDICATION_ADMIN = "MedicationAdmin"
    DEVICE_INTERACTION = "DeviceInteraction"


# Which scored features evidence which injected behaviour.
UNIT_FEATURES = {
    InjectionUnit.ACCESS_PATTERN: {ACCESS_HOUR, RESTRICTED_COUNT},
    InjectionUnit.MEDICATION_ADMIN: {DOSE_MAGNITUDE, MEDICATION_INTERVAL},
    InjectionUnit.DEVICE_INTERACTION: {DEVICE_RATE},
}


class InvalidConfig(Exception):
    pass


@dataclass(frozen=True)
class InjectionSpec:
    unit: InjectionUnit
    target_entity: str
    at: int
    magnitude: float
    count: int = 1


@dataclass(frozen=True)
class RoutineSpec:
    """A daily scheduled behaviour for one staff role."""

    kind: EventKind
    daily_hours: tuple[float, ...]
    source_zone: SourceZone
    device: str
    jitter_ms: int = 8 * 60 * 1000
    jitter_clamp_ms: int = 20 * 60 * 1000


@dataclass
class ScenarioConfig:
    scenario_id: ScenarioId
    duration_ms: int
    entities: dict[str, int]
    event_rates: dict[EventKind, float]  # background, per entity per hour
    injections: list[InjectionSpec]
    seed: int
    routines: list[RoutineSpec] = field(default_factory=list)
    scenario_tags: tuple[str, ...] = ()
    patients: int = 6
    target_entity: Optional[str] = None

    def validate(self) -> None:
        if self.duration_ms <= 0:
            raise InvalidConfig("duration must be positive")
        if any(rate < 0 for rate in self.event_rates.values()):
            raise InvalidConfig("event rates must be >= 0")
        for injection in self.injections:
            if not 0 <= injection.at < self.duration_ms:
                raise InvalidConfig(
                    f"injection at {injection.at} outside scenario duration")


@dataclass
class GeneratedScenario:
    config: ScenarioConfig
    records: list[EvidenceRecord]
    injected_record_ids: list[list[str]]  # parallel to config.injections


@dataclass
class DetectionMetrics:
    injected: int
    detected: int
    time_to_detect_ms: list[Optional[int]]
    false_positives: int
    precision: Optional[float]
    recall: Optional[float]
    profiled_events: int
    false_positive_rate: float
    alerts_total: int
    alerts_bddfr: int
    alerts_siem: int

    def to_dict(self) -> dict:
        return {
            "injected": self.injected,
            "detected": self.detected,
            "time_to_detect_ms": self.time_to_detect_ms,
            "false_positives": self.false_positives,
            "precision": self.precision,
            "recall": self.recall,
            "profiled_events": self.profiled_events,
            "false_positive_rate": self.false_positive_rate,
            "alerts_total": self.alerts_total,
            "alerts_bddfr": self.alerts_bddfr,
            "alerts_siem": self.alerts_siem,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


# ---- event generation ------------------------------------------------------

ZONE_BY_KIND = {
    EventKind.LOGIN: SourceZone.SECURE_WIRED_VLAN,
    EventKind.FAILED_LOGIN: SourceZone.SECURE_WIRED_VLAN,
    EventKind.ACCESS_ATTEMPT: SourceZone.SECURE_WVLAN,
    EventKind.EHR_UPDATE: SourceZone.SECURE_WIRED_VLAN,
    EventKind.CHAT_MESSAGE: SourceZone.OPEN_WVLAN,
    EventKind.EMAIL_MESSAGE: SourceZone.OPEN_WVLAN,
    EventKind.DIAGNOSTIC_NOTE: SourceZone.SECURE_WIRED_VLAN,
    EventKind.SENSOR_READING: SourceZone.IOT_WVLAN,
    EventKind.MEDIA_BLOB: SourceZone.SECURE_WIRED_VLAN,
    EventKind.BILLING_RECORD: SourceZone.EDW,
    EventKind.ADMISSION_DISCHARGE: SourceZone.SECURE_WIRED_VLAN,
    EventKind.FILE_TRANSFER: SourceZone.SECURE_WIRED_VLAN,
    EventKind.ACCOUNT_CHANGE: SourceZone.SECURE_WIRED_VLAN,
    EventKind.DEVICE_ERROR: SourceZone.IOT_WVLAN,
}


class _StreamBuilder:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self.events: list[dict] = []
        self._order = 0
        self.dose_mean: dict[str, float] = {}
        self.dose_sigma = 0.5

    def entity_ids(self, role: str) -> list[str]:
        return [f"{role}-{i:02d}" for i in range(self.config.entities.get(role, 0))]

    def add(self, *, kind: EventKind, entity: str, at: int, zone: SourceZone,
            device: str, payload: dict, subject: Optional[str],
            tags: tuple[str, ...], injected_index: Optional[int] = None) -> None:
        if not 0 <= at < self.config.duration_ms:
            return
        self.events.append({
            "order": self._order,
            "kind": kind,
            "entity": entity,
            "at": at,
            "zone": zone,
            "device": device,
            "payload": payload,
            "subject": subject,
            "tags": tags,
            "injected_index": injected_index,
        })
        self._order += 1

    def entity_dose_mean(self, entity: str) -> float:
        if entity not in self.dose_mean:
            self.dose_mean[entity] = 4.5 + self.rng.random()
        return self.dose_mean[entity]

    def clamped_jitter(self, sigma_ms: int, clamp_ms: int) -> int:
        value = self.rng.gauss(0.0, sigma_ms)
        return int(max(-clamp_ms, min(clamp_ms, value)))

    def pick_subject(self) -> str:
        return f"patient-{self.rng.randrange(self.config.patients):02d}"


def _payload_for(builder: _StreamBuilder, kind: EventKind, entity: str,
                 subject: Optional[str]) -> dict:
    rng = builder.rng
    if kind == EventKind.MEDICATION_ADMIN:
        dose = rng.gauss(builder.entity_dose_mean(entity), builder.dose_sigma)
        return {"dose": round(dose, 4), "medication": "med-sim",
                "patient_name": f"Name Of {subject}"}
    if kind == EventKind.CABINET_ACCESS:
        return {"cabinet": "controlled-drugs", "unit": "neonatal-2"}
    if kind == EventKind.DOOR_ACCESS:
        return {"door": "unit-2-entry", "restricted": True}
    if kind in (EventKind.DEVICE_INTERACTION, EventKind.DEVICE_ERROR):
        return {"device_kind": "incubator", "operation": "adjust"}
    if kind == EventKind.SENSOR_READING:
        return {"metric": "heart_rate", "value": round(rng.gauss(130, 8), 2)}
    if kind == EventKind.CHAT_MESSAGE:
        return {"chars": rng.randrange(20, 400)}
    if kind == EventKind.EMAIL_MESSAGE:
        return {"chars": rng.randrange(100, 2000)}
    if kind == EventKind.DIAGNOSTIC_NOTE:
        return {"note_len": rng.randrange(50, 800), "patient_name": f"Name Of {subject}"}
    if kind == EventKind.MEDIA_BLOB:
        return {"camera": "cam-2", "bytes_len": 512}
    if kind == EventKind.BILLING_RECORD:
        return {"amount": round(rng.uniform(10, 5000), 2), "code": "B-SIM"}
    if kind == EventKind.EHR_UPDATE:
        return {"field": "observations", "patient_name": f"Name Of {subject}"}
    if kind == EventKind.FAILED_LOGIN:
        return {"terminal": "ward-terminal"}
    return {}


_SUBJECT_KINDS = (EventKind.MEDICATION_ADMIN, EventKind.EHR_UPDATE,
                  EventKind.DIAGNOSTIC_NOTE, EventKind.BILLING_RECORD,
                  EventKind.ADMISSION_DISCHARGE)


def _generate_background(builder: _StreamBuilder) -> None:
    config = builder.config
    roles = {
        EventKind.BILLING_RECORD: "clerk",
        EventKind.SENSOR_READING: "device",
        EventKind.DEVICE_ERROR: "device",
    }
    for kind, rate_per_hour in sorted(config.event_rates.items(), key=lambda kv: kv[0].value):
        if rate_per_hour <= 0:
            continue
        role = roles.get(kind, "nurse")
        for entity in builder.entity_ids(role):
            # Poisson process via exponential inter-arrival accumulation.
            rate_per_ms = rate_per_hour / HOUR_MS
            t = 0.0
            while True:
                t += -math.log(1.0 - builder.rng.random()) / rate_per_ms
                if t >= config.duration_ms:
                    break
                at = int(t)
                subject = builder.pick_subject() if kind in _SUBJECT_KINDS else None
                builder.add(
                    kind=kind, entity=entity, at=at,
                    zone=ZONE_BY_KIND.get(kind, SourceZone.SECURE_WVLAN),
                    device=f"{kind.value.lower()}-src",
                    payload=_payload_for(builder, kind, entity, subject),
                    subject=subject, tags=config.scenario_tags)


def _generate_routines(builder: _StreamBuilder) -> None:
    config = builder.config
    days = config.duration_ms // DAY_MS
    for routine in config.routines:
        for entity in builder.entity_ids("nurse"):
            for day in range(days):
                for hour in routine.daily_hours:
                    at = (day * DAY_MS + int(hour * HOUR_MS)
                          + builder.clamped_jitter(routine.jitter_ms,
                                                   routine.jitter_clamp_ms))
                    subject = (builder.pick_subject()
                               if routine.kind in _SUBJECT_KINDS else None)
                    builder.add(
                        kind=routine.kind, entity=entity, at=at,
                        zone=routine.source_zone, device=routine.device,
                        payload=_payload_for(builder, routine.kind, entity, subject),
                        subject=subject, tags=config.scenario_tags)


def _realize_injections(builder: _StreamBuilder) -> None:
    config = builder.config
    tags = tuple(sorted(set(config.scenario_tags) | {"MedicalNegligence"})) \
        if config.scenario_id == ScenarioId.LETBY_PRESET else config.scenario_tags
    for index, spec in enumerate(config.injections):
        if spec.unit == InjectionUnit.ACCESS_PATTERN:
            for i in range(spec.count):
                builder.add(
                    kind=EventKind.CABINET_ACCESS, entity=spec.target_entity,
                    at=spec.at + i * 5 * 60 * 1000,
                    zone=SourceZone.SECURE_WVLAN, device="cabinet-door-unit2",
                    payload={"cabinet": "controlled-drugs", "unit": "neonatal-2"},
                    subject=None, tags=tags, injected_index=index)
        elif spec.unit == InjectionUnit.MEDICATION_ADMIN:
            mean = builder.entity_dose_mean(spec.target_entity)
            dose = mean + spec.magnitude * builder.dose_sigma
            for i in range(spec.count):
                subject = builder.pick_subject()
                builder.add(
                    kind=EventKind.MEDICATION_ADMIN, entity=spec.target_entity,
                    at=spec.at + i * 10 * 60 * 1000,
                    zone=SourceZone.SECURE_WVLAN, device="medcart-unit2",
                    payload={"dose": round(dose, 4), "medication": "med-sim",
                             "patient_name": f"Name Of {subject}"},
                    subject=subject, tags=tags, injected_index=index)
        elif spec.unit == InjectionUnit.DEVICE_INTERACTION:
            # Burst within half an hour.
            step = max(1, (30 * 60 * 1000) // max(spec.count, 1))
            for i in range(spec.count):
                builder.add(
                    kind=EventKind.DEVICE_INTERACTION, entity=spec.target_entity,
                    at=spec.at + i * step,
                    zone=SourceZone.IOT_WVLAN, device="incubator-07",
                    payload={"device_kind": "incubator", "operation": "override"},
                    subject=None, tags=tags, injected_index=index)


def generate(config: ScenarioConfig) -> GeneratedScenario:
    """Deterministic stream for a scenario: same (config, seed) twice gives
    byte-identical envelope dumps."""
    config.validate()
    builder = _StreamBuilder(config)
    _generate_routines(builder)
    _generate_background(builder)
    _realize_injections(builder)

    ordered = sorted(builder.events, key=lambda e: (e["at"], e["order"]))
    records: list[EvidenceRecord] = []
    injected: list[list[str]] = [[] for _ in config.injections]
    for i, event in enumerate(ordered):
        payload = json.dumps(event["payload"], sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
        pii = []
        if event["subject"] is not None:
            pii.append("subject_id")
        pii.append("entity_id")
        if "patient_name" in event["payload"]:
            pii.append("patient_name")
        record = EvidenceRecord(
            record_id=f"ev{config.seed & 0xFFFFFFFF:08x}-{i:06d}",
            source_zone=event["zone"],
            source_device=event["device"],
            entity_id=event["entity"],
            subject_id=event["subject"],
            kind=event["kind"],
            data_class=DataClass.STRUCTURED,  # router re-derives from kind
            occurred_at=event["at"],
            content_hash=compute_content_hash(payload),
            payload=payload,
            pii_fields=tuple(pii),
            scenario_tags=tuple(event["tags"]),
        )
        records.append(record)
        if event["injected_index"] is not None:
            injected[event["injected_index"]].append(record.record_id)
    return GeneratedScenario(config=config, records=records, injected_record_ids=injected)


# ---- presets ------------------------------------------------------------------

SHIFT_ROUTINES = [
    RoutineSpec(kind=EventKind.CABINET_ACCESS, daily_hours=(8.5, 11.5, 14.5, 17.5),
                source_zone=SourceZone.SECURE_WVLAN, device="cabinet-door-unit2"),
    # Scheduled mid-hour: the +/-20 min jitter clamp must not cross an hour
    # boundary or baseline histograms grow spurious thin bins.
    RoutineSpec(kind=EventKind.DOOR_ACCESS, daily_hours=(8.4, 17.6),
                source_zone=SourceZone.SECURE_WVLAN, device="unit2-door"),
    RoutineSpec(kind=EventKind.MEDICATION_ADMIN, daily_hours=(8.75, 11.75, 14.75, 17.25),
                source_zone=SourceZone.SECURE_WVLAN, device="medcart-unit2"),
    RoutineSpec(kind=EventKind.DEVICE_INTERACTION, daily_hours=(9.5, 12.5, 16.5),
                source_zone=SourceZone.IOT_WVLAN, device="incubator-07"),
]

BACKGROUND_RATES = {
    EventKind.LOGIN: 0.08,
    EventKind.FAILED_LOGIN: 0.01,
    EventKind.EHR_UPDATE: 0.12,
    EventKind.CHAT_MESSAGE: 0.10,
    EventKind.EMAIL_MESSAGE: 0.05,
    EventKind.DIAGNOSTIC_NOTE: 0.03,
    EventKind.MEDIA_BLOB: 0.01,
    EventKind.SENSOR_READING: 0.40,
    EventKind.DEVICE_ERROR: 0.005,
    EventKind.BILLING_RECORD: 0.20,
}


def letby_preset(seed: int, duration_days: int = 60, with_injections: bool = True,
                 injection_magnitude: float = 4.0) -> ScenarioConfig:
    """Neonatal-unit scenario: a nurse cohort with shift-hour baselines and
    one target entity receiving an off-hours access burst, an excessive
    dose, and a device-tampering burst, all in the post-training half."""
    duration_ms = duration_days * DAY_MS
    target = "nurse-03"
    injection_day = int(duration_days * 0.75)
    injections = []
    if with_injections:
        base = injection_day * DAY_MS
        injections = [
            InjectionSpec(unit=InjectionUnit.ACCESS_PATTERN, target_entity=target,
                          at=base + int(3.0 * HOUR_MS), magnitude=injection_magnitude,
                          count=3),
            InjectionSpec(unit=InjectionUnit.MEDICATION_ADMIN, target_entity=target,
                          at=base + int(3.4 * HOUR_MS), magnitude=injection_magnitude,
                          count=1),
            InjectionSpec(unit=InjectionUnit.DEVICE_INTERACTION, target_entity=target,
                          at=base + int(2.2 * HOUR_MS), magnitude=injection_magnitude,
                          count=6),
        ]
    return ScenarioConfig(
        scenario_id=ScenarioId.LETBY_PRESET,
        duration_ms=duration_ms,
        entities={"nurse": 8, "device": 3, "clerk": 2},
        event_rates=dict(BACKGROUND_RATES),
        injections=injections,
        seed=seed,
        routines=list(SHIFT_ROUTINES),
        scenario_tags=(),
        target_entity=target,
    )


_SCENARIO_TAGS = {
    ScenarioId.INSURANCE_CLAIMS: "Insurance claims",
    ScenarioId.MEDICAL_NEGLIGENCE: "Medical negligence",
    ScenarioId.IOMT_MALFUNCTION: "IoMT malfunctions",
    ScenarioId.INCORRECT_DIAGNOSIS: "Incorrect diagnoses",
    ScenarioId.EMPLOYEE_MISCONDUCT: "Employee misconduct",
}

_SCENARIO_RATES = {
    ScenarioId.INSURANCE_CLAIMS: {
        EventKind.BILLING_RECORD: 0.5, EventKind.EHR_UPDATE: 0.2,
        EventKind.EMAIL_MESSAGE: 0.2, EventKind.CHAT_MESSAGE: 0.2,
        EventKind.MEDIA_BLOB: 0.05,
    },
    ScenarioId.MEDICAL_NEGLIGENCE: {
        EventKind.EHR_UPDATE: 0.3, EventKind.LOGIN: 0.2,
        EventKind.ADMISSION_DISCHARGE: 0.1, EventKind.DIAGNOSTIC_NOTE: 0.1,
        EventKind.CHAT_MESSAGE: 0.1, EventKind.MEDIA_BLOB: 0.05,
    },
    ScenarioId.IOMT_MALFUNCTION: {
        EventKind.DEVICE_ERROR: 0.3, EventKind.DEVICE_INTERACTION: 0.2,
        EventKind.SENSOR_READING: 0.5, EventKind.MEDIA_BLOB: 0.05,
    },
    ScenarioId.INCORRECT_DIAGNOSIS: {
        EventKind.EHR_UPDATE: 0.3, EventKind.DIAGNOSTIC_NOTE: 0.2,
        EventKind.ADMISSION_DISCHARGE: 0.1, EventKind.CHAT_MESSAGE: 0.1,
        EventKind.MEDIA_BLOB: 0.05,
    },
    ScenarioId.EMPLOYEE_MISCONDUCT: {
        EventKind.DOOR_ACCESS: 0.3, EventKind.CHAT_MESSAGE: 0.2,
        EventKind.EMAIL_MESSAGE: 0.2, EventKind.MEDIA_BLOB: 0.05,
    },
}


def scenario_preset(scenario_id: ScenarioId, seed: int,
                    duration_days: int = 7) -> ScenarioConfig:
    """Catalogue presets for the non-evaluation scenarios: background-only
    streams carrying the appropriate scenario tag."""
    if scenario_id == ScenarioId.LETBY_PRESET:
        return letby_preset(seed)
    return ScenarioConfig(
        scenario_id=scenario_id,
        duration_ms=duration_days * DAY_MS,
        entities={"nurse": 4, "device": 2, "clerk": 2},
        event_rates=dict(_SCENARIO_RATES[scenario_id]),
        injections=[],
        seed=seed,
        routines=[],
        scenario_tags=(_SCENARIO_TAGS[scenario_id],),
    )


# ---- end-to-end pipeline -----------------------------------------------------


def run_pipeline(scenario: GeneratedScenario, system) -> DetectionMetrics:
    """Feed a generated stream through the full system (ingest, correlate,
    profile, detect, open incidents) and grade BdDFR alerts against the
    injection ground truth.

    An alert matches an injection when it names the injected entity (its
    pseudonym token), its window covers the injection timestamp, and its
    feature belongs to the injected unit.
    """
    config = scenario.config
    for record in scenario.records:
        system.ingest(record)

    system.run_siem()
    training_cutoff = int(config.duration_ms * system.config.sim.training_fraction)
    system.build_profiles(training_cutoff)
    system.save_profiles()  # profiles are structured artifacts, kept in DFR1
    bddfr_alerts = system.run_ueba(training_cutoff)
    system.open_incidents()

    token = {spec.target_entity: pseudonymise(spec.target_entity, system.key)
             for spec in config.injections}

    detected = 0
    ttd: list[Optional[int]] = []
    matched_alert_ids: set[str] = set()
    for spec in config.injections:
        hit = None
        for alert in bddfr_alerts:
            if alert.entity_id != token[spec.target_entity]:
                continue
            if alert.rule_or_feature not in UNIT_FEATURES[spec.unit]:
                continue
            if alert.window[0] <= spec.at <= alert.window[1]:
                if hit is None or alert.created_at < hit.created_at:
                    hit = alert
        if hit is not None:
            detected += 1
            ttd.append(max(0, hit.created_at - spec.at))
            matched_alert_ids.add(hit.alert_id)
        else:
            ttd.append(None)

    # Any BdDFR alert that matches no injection at all is a false positive.
    false_positives = 0
    for alert in bddfr_alerts:
        matches_any = any(
            alert.entity_id == token[spec.target_entity]
            and alert.rule_or_feature in UNIT_FEATURES[spec.unit]
            and alert.window[0] <= spec.at <= alert.window[1]
            for spec in config.injections)
        if not matches_any:
            false_positives += 1

    profiled_events = system.profiled_event_count(training_cutoff)
    injected_count = len(config.injections)
    siem_alerts = [a for a in system.alerts if a.origin == Origin.SIEM]
    return DetectionMetrics(
        injected=injected_count,
        detected=detected,
        time_to_detect_ms=ttd,
        false_positives=false_positives,
        precision=(len(matched_alert_ids) / len(bddfr_alerts)) if bddfr_alerts else None,
        recall=(detected / injected_count) if injected_count else None,
        profiled_events=profiled_events,
        false_positive_rate=(false_positives / profiled_events) if profiled_events else 0.0,
        alerts_total=len(system.alerts),
        alerts_bddfr=len(bddfr_alerts),
        alerts_siem=len(siem_alerts),
    )


def run_scenario(config: ScenarioConfig, system_config: Optional[Config] = None):
    """Fresh deterministic end-to-end run: seed-derived pseudonym key, one
    new system, generate + pipeline. Returns (system, scenario, metrics)."""
    from .anonymise import PseudonymKey
    from .system import System

    system = System(config=system_config,
                    key=PseudonymKey.from_seed("sim", config.seed))
    scenario = generate(config)
    metrics = run_pipeline(scenario, system)
    return system, scenario, metrics

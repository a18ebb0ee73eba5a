"""Behavioral anomaly scoring over the evidence store.

Transparent statistical baselines per entity: scalar features are scored as
|x - mean| / max(stddev, floor); the cyclic access-hour feature keeps a
Laplace-smoothed 24-bin histogram and scores the surprisal -log p(hour)
against the baseline's own surprisal statistics, with a configured stddev
floor (in nats) acting as the fixed mapping onto the z-score scale.

Feature extraction is a stateful pass over a time-ordered stream:

* CabinetAccess / DoorAccess emit the hour of day and the running count of
  restricted-area accesses for the current day (every cabinet access is a
  restricted access; door accesses count when flagged restricted in the
  payload or originating from a secure zone).
* MedicationAdmin emits the dose magnitude and, from the second
  administration on, the interval since the entity's previous one.
* DeviceInteraction / DeviceError emit the count of such events in the
  trailing hour (including the current one).
* Everything else emits nothing.

The per-day access frequency baseline is derived at profile-build time from
daily access totals.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .config import UebaConfig
from .model import EvidenceRecord, EventKind, Severity, SourceZone
from .siem import AlertRecord, Origin, make_alert_id

ACCESS_HOUR = "access_hour_histogram"
ACCESS_FREQUENCY = "access_frequency_per_day"
DOSE_MAGNITUDE = "dose_magnitude"
MEDICATION_INTERVAL = "medication_interval_ms"
DEVICE_RATE = "device_interaction_rate"
RESTRICTED_COUNT = "restricted_area_access_count"

FEATURE_IDS = (ACCESS_HOUR, ACCESS_FREQUENCY, DOSE_MAGNITUDE,
               MEDICATION_INTERVAL, DEVICE_RATE, RESTRICTED_COUNT)

HOUR_MS = 3_600_000
DAY_MS = 24 * HOUR_MS

SECURE_ZONES = (SourceZone.SECURE_WVLAN, SourceZone.SECURE_WIRED_VLAN)


@dataclass(frozen=True)
class FeatureBaseline:
    feature_id: str
    mean: float
    stddev: float
    support: int
    histogram: Optional[tuple[int, ...]] = None  # 24 bins, access-hour only


@dataclass(frozen=True)
class EntityProfile:
    entity_id: str
    features: Mapping[str, FeatureBaseline]
    trained_on: int
    window: tuple[int, int]
    provisional: bool = False


@dataclass(frozen=True)
class RiskScore:
    value: float
    contributing_feature: Optional[str]
    threshold_exceeded: bool
    flags: tuple[str, ...] = ()


def _event_time(record: EvidenceRecord) -> int:
    return record.canonical_at if record.canonical_at is not None else record.occurred_at


def _is_restricted_access(record: EvidenceRecord) -> bool:
    if record.kind == EventKind.CABINET_ACCESS:
        return True
    if record.kind == EventKind.DOOR_ACCESS:
        if record.payload_fields().get("restricted") is True:
            return True
        return record.source_zone in SECURE_ZONES
    return False


class FeatureExtractor:
    """Stateful feature pass; feed records in canonical time order."""

    def __init__(self):
        self._last_medication: dict[str, int] = {}
        self._device_times: dict[str, deque] = {}
        self._restricted_day: dict[str, tuple[int, int]] = {}  # entity -> (day, count)

    def extract(self, record: EvidenceRecord) -> list[tuple[str, float]]:
        entity = record.entity_id
        t = _event_time(record)
        kind = record.kind
        features: list[tuple[str, float]] = []

        if kind in (EventKind.CABINET_ACCESS, EventKind.DOOR_ACCESS):
            hour = (t % DAY_MS) // HOUR_MS
            features.append((ACCESS_HOUR, float(hour)))
            day = t // DAY_MS
            prev_day, count = self._restricted_day.get(entity, (day, 0))
            if prev_day != day:
                count = 0
            if _is_restricted_access(record):
                count += 1
            self._restricted_day[entity] = (day, count)
            features.append((RESTRICTED_COUNT, float(count)))
        elif kind == EventKind.MEDICATION_ADMIN:
            dose = record.payload_fields().get("dose")
            if isinstance(dose, (int, float)) and not isinstance(dose, bool):
                features.append((DOSE_MAGNITUDE, float(dose)))
            last = self._last_medication.get(entity)
            if last is not None:
                features.append((MEDICATION_INTERVAL, float(t - last)))
            self._last_medication[entity] = t
        elif kind in (EventKind.DEVICE_INTERACTION, EventKind.DEVICE_ERROR):
            times = self._device_times.setdefault(entity, deque())
            times.append(t)
            while times and times[0] <= t - HOUR_MS:
                times.popleft()
            features.append((DEVICE_RATE, float(len(times))))

        return features


def extract_features(record: EvidenceRecord) -> list[tuple[str, float]]:
    """Context-free extraction for a single record (no interval/rate
    history); use FeatureExtractor over a stream for the stateful features."""
    return FeatureExtractor().extract(record)


def _surprisal(histogram: Sequence[int], hour: int) -> float:
    """-log of the Laplace-smoothed bin probability."""
    total = sum(histogram) + 24
    return -math.log((histogram[hour] + 1) / total)


def build_profile(entity_id: str, history: Sequence[EvidenceRecord],
                  config: Optional[UebaConfig] = None) -> EntityProfile:
    """Per-feature baselines from an entity's history. Empty history yields
    a Provisional profile; sparse history (< min_profile_events) is also
    marked Provisional. Zero-variance features keep stddev 0 here; the
    scoring floor is applied at score time."""
    config = config or UebaConfig()
    for record in history:
        if record.entity_id != entity_id:
            raise ValueError(f"history record {record.record_id} belongs to "
                             f"{record.entity_id}, not {entity_id}")
    if not history:
        return EntityProfile(entity_id=entity_id, features={}, trained_on=0,
                             window=(0, 0), provisional=True)

    ordered = sorted(history, key=_event_time)
    extractor = FeatureExtractor()
    values: dict[str, list[float]] = {}
    hour_histogram = [0] * 24
    daily_access: dict[int, int] = {}
    for record in ordered:
        for feature_id, value in extractor.extract(record):
            if feature_id == ACCESS_HOUR:
                hour_histogram[int(value)] += 1
                daily_access[_event_time(record) // DAY_MS] = \
                    daily_access.get(_event_time(record) // DAY_MS, 0) + 1
            else:
                values.setdefault(feature_id, []).append(value)
    if daily_access:
        values[ACCESS_FREQUENCY] = [float(v) for v in daily_access.values()]

    features: dict[str, FeatureBaseline] = {}
    for feature_id, feature_values in values.items():
        mean = sum(feature_values) / len(feature_values)
        variance = sum((v - mean) ** 2 for v in feature_values) / len(feature_values)
        features[feature_id] = FeatureBaseline(
            feature_id=feature_id, mean=mean, stddev=math.sqrt(variance),
            support=len(feature_values))
    if sum(hour_histogram) > 0:
        surprisals = []
        for hour, count in enumerate(hour_histogram):
            surprisals.extend([_surprisal(hour_histogram, hour)] * count)
        mean = sum(surprisals) / len(surprisals)
        variance = sum((s - mean) ** 2 for s in surprisals) / len(surprisals)
        features[ACCESS_HOUR] = FeatureBaseline(
            feature_id=ACCESS_HOUR, mean=mean, stddev=math.sqrt(variance),
            support=len(surprisals), histogram=tuple(hour_histogram))

    return EntityProfile(
        entity_id=entity_id,
        features=features,
        trained_on=len(ordered),
        window=(_event_time(ordered[0]), _event_time(ordered[-1])),
        provisional=len(ordered) < config.min_profile_events,
    )


def score_features(features: Sequence[tuple[str, float]], profile: EntityProfile,
                   config: Optional[UebaConfig] = None) -> RiskScore:
    """Max per-feature deviation score; deterministic in (features, profile)."""
    config = config or UebaConfig()
    if profile.provisional:
        return RiskScore(value=0.0, contributing_feature=None,
                         threshold_exceeded=False, flags=("insufficient-baseline",))
    best_value = 0.0
    best_feature = None
    for feature_id, x in features:
        baseline = profile.features.get(feature_id)
        if baseline is None:
            continue
        if feature_id == ACCESS_HOUR and baseline.histogram is not None:
            s = _surprisal(baseline.histogram, int(x))
            z = (s - baseline.mean) / max(baseline.stddev, config.hour_surprisal_floor)
            z = max(z, 0.0)
        else:
            z = abs(x - baseline.mean) / max(baseline.stddev, config.stddev_floor)
        if best_feature is None or z > best_value:
            best_value = z
            best_feature = feature_id
    return RiskScore(
        value=best_value,
        contributing_feature=best_feature,
        threshold_exceeded=best_value >= config.threshold,
    )


def score_event(record: EvidenceRecord, profile: EntityProfile,
                config: Optional[UebaConfig] = None,
                features: Optional[Sequence[tuple[str, float]]] = None) -> RiskScore:
    if features is None:
        features = extract_features(record)
    return score_features(features, profile, config)


@dataclass
class _Candidate:
    record: EvidenceRecord
    value: float
    at: int
    window_start: int


def _feature_window_start(feature_id: str, value: float, at: int) -> int:
    """Start of the behaviour an anomalous feature value summarizes: a rate
    covers its trailing hour, an interval reaches back to the previous
    event, a daily count covers the day so far."""
    if feature_id == DEVICE_RATE:
        return at - HOUR_MS
    if feature_id == MEDICATION_INTERVAL:
        return at - int(value)
    if feature_id == RESTRICTED_COUNT:
        return at - (at % DAY_MS)
    return at


def detect(batch: Sequence[EvidenceRecord], profiles: Mapping[str, EntityProfile],
           config: Optional[UebaConfig] = None) -> list[AlertRecord]:
    """Score a batch against profiles and emit one alert per (entity,
    feature, detection window) exceeding the threshold, sorted by
    descending risk; severity High, Critical at >= critical multiplier."""
    config = config or UebaConfig()
    ordered = sorted(batch, key=lambda r: (_event_time(r), r.record_id))
    extractor = FeatureExtractor()
    candidates: dict[tuple[str, str], list[_Candidate]] = {}
    for record in ordered:
        profile = profiles.get(record.entity_id)
        features = extractor.extract(record)
        if profile is None or profile.provisional or not features:
            continue
        for feature_id, value in features:
            score = score_features([(feature_id, value)], profile, config)
            if score.threshold_exceeded:
                at = _event_time(record)
                candidates.setdefault((record.entity_id, feature_id), []).append(
                    _Candidate(record=record, value=score.value, at=at,
                               window_start=_feature_window_start(feature_id, value, at)))

    alerts = []
    for (entity_id, feature_id), items in candidates.items():
        group: list[_Candidate] = []
        for candidate in items:
            if group and candidate.at >= group[0].at + config.dedup_window_ms:
                alerts.append(_emit(entity_id, feature_id, group, config))
                group = []
            group.append(candidate)
        if group:
            alerts.append(_emit(entity_id, feature_id, group, config))

    alerts.sort(key=lambda a: (-(a.risk_score or 0.0), a.created_at, a.entity_id,
                               a.rule_or_feature))
    return alerts


def _emit(entity_id: str, feature_id: str, group: list[_Candidate],
          config: UebaConfig) -> AlertRecord:
    peak = max(c.value for c in group)
    severity = Severity.HIGH
    if peak >= config.threshold * config.critical_multiplier:
        severity = Severity.CRITICAL
    return AlertRecord(
        alert_id=make_alert_id(feature_id, entity_id, group[0].at, Origin.BDDFR),
        origin=Origin.BDDFR,
        rule_or_feature=feature_id,
        severity=severity,
        entity_id=entity_id,
        window=(min(c.window_start for c in group), group[-1].at),
        evidence_refs=tuple(c.record.record_id for c in group),
        risk_score=peak,
        created_at=group[0].at,
    )


def clean_history(history: Iterable[EvidenceRecord],
                  alerts: Iterable[AlertRecord]) -> list[EvidenceRecord]:
    """Drop events already flagged by alerts so profile updates never learn
    from contaminated behaviour."""
    flagged = {ref for alert in alerts for ref in alert.evidence_refs}
    return [r for r in history if r.record_id not in flagged]


def profile_to_json(profile: EntityProfile) -> bytes:
    doc = {
        "entity_id": profile.entity_id,
        "trained_on": profile.trained_on,
        "window": list(profile.window),
        "provisional": profile.provisional,
        "features": {
            fid: {
                "mean": fb.mean,
                "stddev": fb.stddev,
                "support": fb.support,
                "histogram": list(fb.histogram) if fb.histogram else None,
            }
            for fid, fb in sorted(profile.features.items())
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def profile_from_json(data: bytes) -> EntityProfile:
    doc = json.loads(data.decode("utf-8"))
    features = {
        fid: FeatureBaseline(
            feature_id=fid,
            mean=fb["mean"],
            stddev=fb["stddev"],
            support=fb["support"],
            histogram=tuple(fb["histogram"]) if fb.get("histogram") else None,
        )
        for fid, fb in doc["features"].items()
    }
    return EntityProfile(
        entity_id=doc["entity_id"],
        features=features,
        trained_on=doc["trained_on"],
        window=tuple(doc["window"]),
        provisional=doc["provisional"],
    )

"""PII obfuscation applied at the evidence-store write boundary.

Pseudonyms are keyed HMAC-SHA256 tokens: deterministic under a fixed key so
the same actor correlates across records, unlinkable once the key rotates.
Keys live outside the store directories and are escrowed for manual,
key-holder re-identification only. Fail-closed: a record whose PII fields
are not fully covered by the policy never reaches storage.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .model import DataClass, EvidenceRecord, compute_content_hash

TOKEN_PREFIX = "pn_"
TOKEN_HEX_LEN = 32
MASK_VALUE = "***"


class AnonymisationError(Exception):
    pass


class UncoveredFieldError(AnonymisationError):
    """A pii_fields entry has no policy entry (closed-world violation)."""


@dataclass(frozen=True)
class PseudonymKey:
    key_id: str
    secret: bytes
    rotation_epoch: int = 0

    @classmethod
    def generate(cls, key_id: str, rotation_epoch: int = 0) -> "PseudonymKey":
        return cls(key_id=key_id, secret=secrets.token_bytes(32), rotation_epoch=rotation_epoch)

    @classmethod
    def from_seed(cls, key_id: str, seed: int, rotation_epoch: int = 0) -> "PseudonymKey":
        """Deterministic key material for reproducible simulation runs."""
        secret = hashlib.sha256(f"{key_id}:{seed}".encode()).digest()
        return cls(key_id=key_id, secret=secret, rotation_epoch=rotation_epoch)


def load_key_file(path) -> PseudonymKey:
    """Key files live OUTSIDE the store directories; escrow and rotation are
    manual key-holder procedures, never an API."""
    doc = json.loads(Path(path).read_text())
    return PseudonymKey(
        key_id=doc["key_id"],
        secret=bytes.fromhex(doc["secret_hex"]),
        rotation_epoch=doc.get("rotation_epoch", 0),
    )


def save_key_file(key: PseudonymKey, path) -> None:
    doc = {
        "key_id": key.key_id,
        "secret_hex": key.secret.hex(),
        "rotation_epoch": key.rotation_epoch,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


@dataclass(frozen=True)
class Method:
    """One obfuscation method: pseudonymise, mask, drop, or perturb(sigma)."""

    name: str
    sigma: float = 0.0

    @classmethod
    def parse(cls, spec: Any) -> "Method":
        if isinstance(spec, str):
            name = spec.lower()
            if name not in ("pseudonymise", "mask", "drop"):
                raise AnonymisationError(f"unknown method: {spec}")
            return cls(name=name)
        if isinstance(spec, Mapping) and "perturb" in spec:
            return cls(name="perturb", sigma=float(spec["perturb"]))
        raise AnonymisationError(f"unknown method spec: {spec!r}")


@dataclass
class AnonymisationPolicy:
    fields: dict[str, Method]
    applies_to: set[DataClass] = field(
        default_factory=lambda: set(DataClass))

    @classmethod
    def from_config(cls, policy: Mapping[str, Any], applies_to: Optional[set[DataClass]] = None
                    ) -> "AnonymisationPolicy":
        return cls(
            fields={name: Method.parse(spec) for name, spec in policy.items()},
            applies_to=set(applies_to) if applies_to else set(DataClass),
        )


def pseudonymise(value: str, key: PseudonymKey) -> str:
    """Fixed-length keyed token; reveals nothing about value length/content."""
    digest = hmac.new(key.secret, value.encode("utf-8"), hashlib.sha256).hexdigest()
    return TOKEN_PREFIX + digest[:TOKEN_HEX_LEN]


def is_token(value: str) -> bool:
    return (
        isinstance(value, str)
        and value.startswith(TOKEN_PREFIX)
        and len(value) == len(TOKEN_PREFIX) + TOKEN_HEX_LEN
        and all(c in "0123456789abcdef" for c in value[len(TOKEN_PREFIX):])
    )


def _perturb(value: float, sigma: float, key: PseudonymKey, record_id: str, fieldname: str) -> float:
    """Seeded Gaussian noise: deterministic per (key, record, field) so runs
    reproduce exactly; Box-Muller over two 64-bit hash-derived uniforms."""
    material = hmac.new(key.secret, f"{record_id}:{fieldname}".encode(), hashlib.sha256).digest()
    u1 = (int.from_bytes(material[:8], "big") + 1) / (2**64 + 1)
    u2 = int.from_bytes(material[8:16], "big") / 2**64
    gauss = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return value + sigma * gauss


def _apply_method(method: Method, value: Any, key: PseudonymKey, record_id: str,
                  fieldname: str) -> tuple[bool, Any]:
    """Returns (keep, new_value); keep=False means the field is dropped."""
    if method.name == "drop":
        return False, None
    if method.name == "mask":
        return True, MASK_VALUE
    if method.name == "pseudonymise":
        return True, pseudonymise(str(value), key)
    if method.name == "perturb":
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise AnonymisationError(
                f"perturb requires numeric value for field {fieldname!r}")
        return True, _perturb(float(value), method.sigma, key, record_id, fieldname)
    raise AnonymisationError(f"unknown method: {method.name}")


RECORD_LEVEL_FIELDS = ("subject_id", "entity_id")


def apply_policy(record: EvidenceRecord, policy: AnonymisationPolicy,
                 key: PseudonymKey) -> EvidenceRecord:
    """Sanitize one record.

    PII fields may name the record-level ``subject_id``/``entity_id`` or keys
    inside a JSON payload. Non-PII fields are untouched; the content hash is
    recomputed over the sanitized payload with the pre-sanitization hash kept
    as ``original_hash`` for custody linkage.

    Raises UncoveredFieldError when any pii_fields entry lacks a policy entry.
    """
    uncovered = [f for f in record.pii_fields if f not in policy.fields]
    if uncovered:
        raise UncoveredFieldError(f"no policy entry for PII fields: {uncovered}")
    if record.data_class not in policy.applies_to or not record.pii_fields:
        return record

    changes: dict[str, Any] = {}
    payload_fields = [f for f in record.pii_fields if f not in RECORD_LEVEL_FIELDS]
    for name in record.pii_fields:
        if name not in RECORD_LEVEL_FIELDS:
            continue
        value = getattr(record, name)
        if value is None:
            continue
        keep, new_value = _apply_method(policy.fields[name], value, key, record.record_id, name)
        changes[name] = new_value if keep else None

    payload = record.payload
    if payload_fields:
        doc = record.payload_fields()
        if not doc:
            raise AnonymisationError(
                f"pii field(s) {payload_fields} reference a non-JSON payload")
        for name in payload_fields:
            if name not in doc:
                continue
            keep, new_value = _apply_method(policy.fields[name], doc[name], key,
                                            record.record_id, name)
            if keep:
                doc[name] = new_value
            else:
                del doc[name]
        payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    original_hash = record.content_hash
    return replace(
        record,
        payload=payload,
        content_hash=compute_content_hash(payload),
        original_hash=original_hash,
        **changes,
    )


@dataclass(frozen=True)
class LinkageFinding:
    kind: str  # "raw-leak" | "token-collision" | "token-inconsistency"
    record_id: Optional[str]
    detail: str


@dataclass
class LinkageReport:
    findings: list[LinkageFinding]

    @property
    def clean(self) -> bool:
        return not self.findings


def linkage_check(records: Iterable[EvidenceRecord], pii_values: Iterable[str],
                  key: Optional[PseudonymKey] = None,
                  subject_truth: Optional[Mapping[str, str]] = None) -> LinkageReport:
    """Audit a sanitized corpus.

    Reports any raw PII dictionary value surviving in payloads or identity
    fields, any token collision between distinct raw values under ``key``,
    and (given ground truth record_id -> raw subject) any subject mapped to
    more than one token.
    """
    findings: list[LinkageFinding] = []
    values = [v for v in pii_values if v]
    records = list(records)

    for record in records:
        haystacks = [record.payload.decode("utf-8", errors="ignore")]
        for name in RECORD_LEVEL_FIELDS:
            v = getattr(record, name)
            if v:
                haystacks.append(str(v))
        for raw in values:
            if any(raw in h for h in haystacks):
                findings.append(LinkageFinding(
                    kind="raw-leak", record_id=record.record_id,
                    detail=f"raw PII value {raw!r} present"))

    if key is not None:
        seen: dict[str, str] = {}
        for raw in values:
            token = pseudonymise(raw, key)
            if token in seen and seen[token] != raw:
                findings.append(LinkageFinding(
                    kind="token-collision", record_id=None,
                    detail=f"values {seen[token]!r} and {raw!r} share token {token}"))
            seen[token] = raw

    if key is not None and subject_truth:
        observed: dict[str, set[str]] = {}
        by_id = {r.record_id: r for r in records}
        for record_id, raw in subject_truth.items():
            record = by_id.get(record_id)
            if record is None or record.subject_id is None:
                continue
            observed.setdefault(raw, set()).add(record.subject_id)
        for raw, tokens in observed.items():
            expected = pseudonymise(raw, key)
            if tokens != {expected}:
                findings.append(LinkageFinding(
                    kind="token-inconsistency", record_id=None,
                    detail=f"subject {raw!r} maps to tokens {sorted(tokens)}"))

    return LinkageReport(findings=findings)

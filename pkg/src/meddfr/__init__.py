"""Desk-scale forensic-readiness pipeline for wireless medical networks:
evidence ingest and routing, a replicated content-addressed store, rule and
behavioral detection, tiered incident response, and write-blocked imaging.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DataClass,
    EventKind,
    EvidenceRecord,
    IRTClass,
    Severity,
    SourceZone,
    compute_content_hash,
    validate_record,
)

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from meddfr.model import (
    DataClass,
    EventKind,
    SourceZone,
    make_record,
)


def record_of(kind=EventKind.FAILED_LOGIN, entity="nurse-01", at=1_000_000,
              zone=SourceZone.SECURE_WIRED_VLAN, device="terminal-1",
              payload=None, subject=None, pii=(), tags=(),
              data_class=DataClass.STRUCTURED, record_id=None):
    body = json.dumps(payload or {}, sort_keys=True).encode()
    return make_record(
        source_zone=zone,
        source_device=device,
        entity_id=entity,
        kind=kind,
        data_class=data_class,
        occurred_at=at,
        payload=body,
        subject_id=subject,
        pii_fields=tuple(pii),
        scenario_tags=tuple(tags),
        record_id=record_id,
    )


@pytest.fixture
def small_cluster():
    from meddfr.store import Cluster, NodeGroup

    cluster = Cluster(chunk_size=64)
    for i in range(5):
        cluster.add_node(f"dfr1-{i:02d}", NodeGroup.DFR1)
    for i in range(3):
        cluster.add_node(f"dfr2-{i:02d}", NodeGroup.DFR2)
    cluster.add_node("imaging-00", NodeGroup.IMAGING)
    return cluster

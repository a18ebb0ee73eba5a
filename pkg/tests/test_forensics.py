import random

import pytest

from meddfr.forensics import (
    UnauthorizedActor,
    VerificationFailed,
    acquire_image,
    canonical_manifest,
    compute_image_hash,
    export_image,
    import_image,
    verify_image,
)
from meddfr.ledger import AuditAction, AuditLedger
from meddfr.model import IRTClass
from meddfr.store import NodeGroup, build_cluster


def cluster_with_objects(n=5, seed=1):
    rng = random.Random(seed)
    cluster = build_cluster(3, 2, 1, chunk_size=64)
    manifests = [cluster.put(NodeGroup.DFR1, rng.randbytes(rng.randrange(10, 400)), r=3)
                 for _ in range(n)]
    return cluster, manifests


def acquire(cluster, selection=None, actor="tech.lead", at=5_000):
    snapshot = cluster.snapshot_readonly(NodeGroup.DFR1, taken_at=at)
    ledger = AuditLedger()
    image = acquire_image(snapshot, selection, actor, IRTClass.B, cluster, ledger, at)
    return image, ledger, snapshot


def test_empty_selection_gives_valid_image_with_defined_hash():
    cluster, _ = cluster_with_objects()
    image, ledger, snapshot = acquire(cluster, selection=[])
    assert image.included_objects == ()
    assert image.image_hash == compute_image_hash(snapshot.snapshot_id, [], {})
    assert verify_image(image, cluster) == []


def test_acquire_then_verify_round_trip():
    cluster, manifests = cluster_with_objects()
    image, _, _ = acquire(cluster)
    assert set(image.included_objects) == set(m.object_id for m in manifests)
    assert verify_image(image, cluster) == []


def test_acquisition_never_changes_source_store():
    cluster, _ = cluster_with_objects()
    before = cluster.sweep_digests()
    image, _, _ = acquire(cluster)
    verify_image(image, cluster)
    assert cluster.sweep_digests() == before  # full-store digest oracle


def test_only_class_b_may_acquire():
    cluster, _ = cluster_with_objects()
    snapshot = cluster.snapshot_readonly(NodeGroup.DFR1)
    for actor_class in (IRTClass.A, IRTClass.C):
        with pytest.raises(UnauthorizedActor):
            acquire_image(snapshot, None, "x", actor_class, cluster, AuditLedger(), 0)


def test_same_selection_same_snapshot_reproduces_image_hash():
    cluster, manifests = cluster_with_objects()
    snapshot = cluster.snapshot_readonly(NodeGroup.DFR1, taken_at=5_000)
    ledger = AuditLedger()
    first = acquire_image(snapshot, None, "tech.lead", IRTClass.B, cluster, ledger, 5_000)
    second = acquire_image(snapshot, None, "tech.lead", IRTClass.B, cluster, ledger, 6_000)
    assert first.image_hash == second.image_hash
    assert first.custody_seq != second.custody_seq


def test_custody_entry_links_actor_and_image():
    cluster, _ = cluster_with_objects()
    image, ledger, _ = acquire(cluster, actor="tech.lead")
    entry = ledger.entries[image.custody_seq]
    assert entry.action == AuditAction.IMAGE_REQUESTED
    assert entry.actor_id == "tech.lead" == image.acquired_by
    assert entry.subject == image.image_id


def test_flipping_byte_in_imaged_object_is_reported():
    cluster, _ = cluster_with_objects()
    image, _, _ = acquire(cluster)
    victim = image.included_objects[0]
    manifest = cluster.image_manifests[victim]
    chunk_id = manifest.chunk_list[0]
    node_id = sorted(manifest.placements[chunk_id])[0]
    data = bytearray(cluster.nodes[node_id].read_chunk(chunk_id))
    data[0] ^= 0x01
    cluster.nodes[node_id].corrupt_chunk(chunk_id, bytes(data))
    assert victim in verify_image(image, cluster)


def test_missing_imaged_object_is_reported():
    cluster, _ = cluster_with_objects()
    image, _, _ = acquire(cluster)
    victim = image.included_objects[0]
    manifest = cluster.image_manifests[victim]
    for chunk_id in manifest.chunk_list:
        for node_id in list(manifest.placements[chunk_id]):
            cluster.nodes[node_id].delete_chunk(chunk_id)
    assert victim in verify_image(image, cluster)


def test_export_import_verify_round_trip(tmp_path):
    cluster, _ = cluster_with_objects()
    image, ledger, _ = acquire(cluster)
    archive = export_image(image, tmp_path / "evidence.img", cluster, ledger)
    imported, objects = import_image(archive)
    assert imported.image_hash == image.image_hash
    assert set(objects) == set(image.included_objects)
    for object_id, data in objects.items():
        assert cluster.get(object_id) == data


def test_archive_manifest_hash_matches_image_hash(tmp_path):
    cluster, _ = cluster_with_objects()
    image, ledger, _ = acquire(cluster)
    archive = export_image(image, tmp_path / "evidence.img", cluster, ledger)
    imported, _ = import_image(archive)
    # Digest comparison oracle: recompute from the archive's own manifest.
    assert compute_image_hash(imported.source_snapshot, imported.included_objects,
                              imported.object_hashes) == image.image_hash


def test_tampered_archive_fails_import(tmp_path):
    rng = random.Random(7)
    cluster, _ = cluster_with_objects()
    image, ledger, _ = acquire(cluster)
    archive = export_image(image, tmp_path / "evidence.img", cluster, ledger)
    original = archive.read_bytes()
    for _ in range(25):
        tampered = bytearray(original)
        i = rng.randrange(len(tampered))
        tampered[i] ^= (1 << rng.randrange(8))
        target = tmp_path / "tampered.img"
        target.write_bytes(bytes(tampered))
        with pytest.raises(VerificationFailed):
            import_image(target)


def test_export_refuses_unverifiable_image(tmp_path):
    cluster, _ = cluster_with_objects()
    image, ledger, _ = acquire(cluster)
    victim = image.included_objects[0]
    manifest = cluster.image_manifests[victim]
    chunk_id = manifest.chunk_list[0]
    for node_id in list(manifest.placements[chunk_id]):
        cluster.nodes[node_id].corrupt_chunk(chunk_id, b"junk")
    with pytest.raises(VerificationFailed):
        export_image(image, tmp_path / "evidence.img", cluster, ledger)


def test_canonical_manifest_is_order_independent():
    hashes = {"b": "2" * 64, "a": "1" * 64}
    first = canonical_manifest("snap-1", ["b", "a"], hashes)
    second = canonical_manifest("snap-1", ["a", "b"], dict(reversed(hashes.items())))
    assert first == second


def test_acquisition_reads_through_snapshot_only():
    # The imaging entry point takes the read-only handle; handing it the
    # cluster instead would defeat the write blocker, so the capability is
    # what gets type-checked here.
    cluster, _ = cluster_with_objects()
    snapshot = cluster.snapshot_readonly(NodeGroup.DFR1)
    assert not hasattr(snapshot, "nodes")
    assert not hasattr(snapshot, "manifests")

"""Write-blocked forensic imaging from store snapshots.

The write blocker is structural: acquisition code receives only the
read-only SnapshotHandle capability, never the cluster, so there is no code
path that could mutate the source. Image copies land on the dedicated
imaging nodes; every acquisition appends an ImageRequested entry to the
custody ledger.

Export format: a tar archive (objects/ by id, manifest.json, custody.json)
followed by a 64-byte hex SHA-256 trailer over the tar bytes, so any
single-byte tamper of the exported file is detectable before content
verification even starts.
"""

from __future__ import annotations

import hashlib
import io
import json
import tarfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .ledger import AuditAction, AuditEntry, AuditLedger, compute_entry_hash
from .model import IRTClass, compute_content_hash
from .store import Cluster, SnapshotHandle


class ForensicsError(Exception):
    pass


class UnauthorizedActor(ForensicsError):
    pass


class VerificationFailed(ForensicsError):
    pass


@dataclass(frozen=True)
class ForensicImage:
    image_id: str
    source_snapshot: str
    included_objects: tuple[str, ...]
    object_hashes: dict[str, str]
    image_hash: str
    acquired_at: int
    acquired_by: str
    custody_seq: int

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "source_snapshot": self.source_snapshot,
            "included_objects": list(self.included_objects),
            "object_hashes": dict(sorted(self.object_hashes.items())),
            "image_hash": self.image_hash,
            "acquired_at": self.acquired_at,
            "acquired_by": self.acquired_by,
            "custody_seq": self.custody_seq,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForensicImage":
        return cls(
            image_id=data["image_id"],
            source_snapshot=data["source_snapshot"],
            included_objects=tuple(data["included_objects"]),
            object_hashes=dict(data["object_hashes"]),
            image_hash=data["image_hash"],
            acquired_at=data["acquired_at"],
            acquired_by=data["acquired_by"],
            custody_seq=data["custody_seq"],
        )


def canonical_manifest(source_snapshot: str, included_objects: Iterable[str],
                       object_hashes: dict[str, str]) -> bytes:
    """Bit-exact unit of verification: fixed field order, sorted object
    lists, decimal integers."""
    doc = {
        "included_objects": sorted(included_objects),
        "object_hashes": {k: object_hashes[k] for k in sorted(object_hashes)},
        "source_snapshot": source_snapshot,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def compute_image_hash(source_snapshot: str, included_objects: Iterable[str],
                       object_hashes: dict[str, str]) -> str:
    return hashlib.sha256(
        canonical_manifest(source_snapshot, included_objects, object_hashes)).hexdigest()


def acquire_image(snapshot: SnapshotHandle, selection: Optional[Iterable[str]],
                  actor_id: str, actor_class: IRTClass, imaging_cluster: Cluster,
                  ledger: AuditLedger, at: int) -> ForensicImage:
    """Copy the selected snapshot objects onto the imaging nodes and record
    the acquisition in the custody chain.

    Only class B (the technical/forensics lead tier) may acquire. The same
    selection from the same snapshot always yields the same image hash.
    """
    if actor_class != IRTClass.B:
        raise UnauthorizedActor(
            f"image acquisition requires class B, got {actor_class.value}")
    object_ids = sorted(selection) if selection is not None else snapshot.object_ids()

    object_hashes = {}
    for object_id in object_ids:
        data = snapshot.get(object_id)
        object_hashes[object_id] = compute_content_hash(data)
        imaging_cluster.put_image_artifact(data, created_at=at)

    image_hash = compute_image_hash(snapshot.snapshot_id, object_ids, object_hashes)
    entry = ledger.append(actor_id, actor_class, AuditAction.IMAGE_REQUESTED,
                          f"img_{image_hash[:16]}", at)
    return ForensicImage(
        image_id=f"img_{image_hash[:16]}",
        source_snapshot=snapshot.snapshot_id,
        included_objects=tuple(object_ids),
        object_hashes=object_hashes,
        image_hash=image_hash,
        acquired_at=at,
        acquired_by=actor_id,
        custody_seq=entry.seq,
    )


def verify_image(image: ForensicImage, imaging_cluster: Cluster) -> list[str]:
    """Recompute every imaged object's digest from the imaging nodes and the
    manifest hash; returns the mismatched/missing object ids (empty = ok)."""
    mismatched = []
    recomputed: dict[str, str] = {}
    for object_id in image.included_objects:
        try:
            data = imaging_cluster.get_image_artifact(object_id)
        except Exception:
            mismatched.append(object_id)
            continue
        digest = compute_content_hash(data)
        recomputed[object_id] = digest
        if digest != image.object_hashes.get(object_id):
            mismatched.append(object_id)
    if not mismatched:
        expected = compute_image_hash(image.source_snapshot, image.included_objects,
                                      image.object_hashes)
        if expected != image.image_hash:
            mismatched.append("<manifest>")
    return mismatched


def _custody_extract(image: ForensicImage, ledger: AuditLedger) -> dict:
    entries = [e.to_dict() for e in ledger.entries
               if e.seq == image.custody_seq or e.subject == image.image_id]
    return {"image_id": image.image_id, "entries": entries}


DIGEST_TRAILER_LEN = 64


def export_image(image: ForensicImage, path: Path, imaging_cluster: Cluster,
                 ledger: AuditLedger) -> Path:
    """Pack a verified image into a single self-checking archive file."""
    mismatched = verify_image(image, imaging_cluster)
    if mismatched:
        raise VerificationFailed(f"cannot export, mismatched objects: {mismatched}")

    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode="w") as tar:
        def add_bytes(name: str, data: bytes):
            info = tarfile.TarInfo(name=name)
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            tar.addfile(info, io.BytesIO(data))

        manifest_doc = image.to_dict()
        add_bytes("manifest.json",
                  json.dumps(manifest_doc, sort_keys=True, indent=1).encode("utf-8"))
        add_bytes("custody.json",
                  json.dumps(_custody_extract(image, ledger), sort_keys=True,
                             indent=1).encode("utf-8"))
        for object_id in image.included_objects:
            add_bytes(f"objects/{object_id}", imaging_cluster.get_image_artifact(object_id))

    tar_bytes = buffer.getvalue()
    trailer = hashlib.sha256(tar_bytes).hexdigest().encode("ascii")
    path = Path(path)
    path.write_bytes(tar_bytes + trailer)
    return path


def import_image(path: Path) -> tuple[ForensicImage, dict[str, bytes]]:
    """Unpack and fully re-verify an exported archive. Raises
    VerificationFailed on any tamper: container digest, object digests,
    manifest hash, or custody entry hash."""
    raw = Path(path).read_bytes()
    if len(raw) <= DIGEST_TRAILER_LEN:
        raise VerificationFailed("archive truncated")
    tar_bytes, trailer = raw[:-DIGEST_TRAILER_LEN], raw[-DIGEST_TRAILER_LEN:]
    if hashlib.sha256(tar_bytes).hexdigest().encode("ascii") != trailer:
        raise VerificationFailed("archive digest mismatch")

    try:
        with tarfile.open(fileobj=io.BytesIO(tar_bytes), mode="r") as tar:
            members = {m.name: tar.extractfile(m).read() for m in tar.getmembers()
                       if m.isfile()}
    except tarfile.TarError as exc:
        raise VerificationFailed(f"unreadable archive: {exc}") from exc

    if "manifest.json" not in members or "custody.json" not in members:
        raise VerificationFailed("archive missing manifest or custody extract")
    image = ForensicImage.from_dict(json.loads(members["manifest.json"]))

    objects: dict[str, bytes] = {}
    for object_id in image.included_objects:
        name = f"objects/{object_id}"
        if name not in members:
            raise VerificationFailed(f"archive missing object {object_id}")
        data = members[name]
        if compute_content_hash(data) != image.object_hashes.get(object_id):
            raise VerificationFailed(f"object {object_id} digest mismatch")
        objects[object_id] = data

    expected = compute_image_hash(image.source_snapshot, image.included_objects,
                                  image.object_hashes)
    if expected != image.image_hash:
        raise VerificationFailed("manifest hash mismatch")

    custody = json.loads(members["custody.json"])
    for entry_doc in custody.get("entries", []):
        entry = AuditEntry.from_dict(entry_doc)
        recomputed = compute_entry_hash(
            entry.prev_hash, entry.seq, entry.actor_id, entry.actor_class.value,
            entry.action.value, entry.subject, entry.at)
        if recomputed != entry.entry_hash:
            raise VerificationFailed(f"custody entry {entry.seq} hash mismatch")
    return image, objects

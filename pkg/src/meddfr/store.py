"""Decentralised, content-addressed evidence store.

Implements the replicated-file-system contract at desk scale: payloads are
split into fixed-size chunks, each chunk is placed on ``r`` distinct live
nodes of its group via rendezvous (highest-random-weight) hashing, failed
nodes are crash-stop, and ``re_replicate`` restores the replication factor
from any surviving valid replica. Objects are immutable; the only deletion
path is the retention policy, and that is custody-logged.

Storage is in-memory by default; given a root directory the cluster also
persists chunk files (one per digest, one directory per node), an
append-only manifest log, and node states, so separate CLI invocations see
the same store.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .model import compute_content_hash

DEFAULT_CHUNK_SIZE = 64 * 1024
DEFAULT_REPLICATION = 3


class StoreError(Exception):
    pass


class InsufficientNodesError(StoreError):
    pass


class ObjectMissingError(StoreError):
    pass


class ChunkUnavailableError(StoreError):
    pass


class IntegrityFailureError(StoreError):
    pass


class UnknownNodeError(StoreError):
    pass


class ReadOnlyViolation(StoreError):
    pass


class NodeGroup(Enum):
    DFR1 = "DFR1"
    DFR2 = "DFR2"
    IMAGING = "Imaging"


class NodeState(Enum):
    LIVE = "Live"
    FAILED = "Failed"


class StorageNode:
    """One logical storage node. A Failed node serves no reads or writes."""

    def __init__(self, node_id: str, group: NodeGroup, capacity: int = 1 << 40,
                 directory: Optional[Path] = None):
        self.node_id = node_id
        self.group = group
        self.state = NodeState.LIVE
        self.capacity = capacity
        self._directory = directory
        self._chunks: dict[str, bytes] = {}
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)

    @property
    def live(self) -> bool:
        return self.state == NodeState.LIVE

    @property
    def stored_chunks(self) -> set[str]:
        if self._directory is not None:
            return {p.name for p in self._directory.iterdir() if p.is_file()}
        return set(self._chunks)

    def has_chunk(self, chunk_id: str) -> bool:
        if self._directory is not None:
            return (self._directory / chunk_id).exists()
        return chunk_id in self._chunks

    def read_chunk(self, chunk_id: str) -> bytes:
        if not self.live:
            raise ChunkUnavailableError(f"node {self.node_id} is failed")
        if self._directory is not None:
            return (self._directory / chunk_id).read_bytes()
        return self._chunks[chunk_id]

    def write_chunk(self, chunk_id: str, data: bytes) -> None:
        if not self.live:
            raise StoreError(f"node {self.node_id} is failed")
        if self._directory is not None:
            (self._directory / chunk_id).write_bytes(data)
        else:
            self._chunks[chunk_id] = data

    def delete_chunk(self, chunk_id: str) -> None:
        if self._directory is not None:
            (self._directory / chunk_id).unlink(missing_ok=True)
        else:
            self._chunks.pop(chunk_id, None)

    def corrupt_chunk(self, chunk_id: str, data: bytes) -> None:
        """Test hook: overwrite replica bytes without integrity bookkeeping."""
        if self._directory is not None:
            (self._directory / chunk_id).write_bytes(data)
        else:
            self._chunks[chunk_id] = data


@dataclass
class ObjectManifest:
    object_id: str
    group: NodeGroup
    chunk_list: list[str]
    chunk_hashes: dict[str, str]
    replication_factor: int
    placements: dict[str, set[str]]
    created_at: int
    retention_class: str = "default"
    size: int = 0

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "group": self.group.value,
            "chunk_list": list(self.chunk_list),
            "chunk_hashes": dict(sorted(self.chunk_hashes.items())),
            "replication_factor": self.replication_factor,
            "placements": {c: sorted(ns) for c, ns in sorted(self.placements.items())},
            "created_at": self.created_at,
            "retention_class": self.retention_class,
            "size": self.size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectManifest":
        return cls(
            object_id=data["object_id"],
            group=NodeGroup(data["group"]),
            chunk_list=list(data["chunk_list"]),
            chunk_hashes=dict(data["chunk_hashes"]),
            replication_factor=data["replication_factor"],
            placements={c: set(ns) for c, ns in data["placements"].items()},
            created_at=data["created_at"],
            retention_class=data.get("retention_class", "default"),
            size=data.get("size", 0),
        )


def rendezvous_rank(chunk_id: str, node_ids: Iterable[str]) -> list[str]:
    """Nodes ordered by highest-random-weight for this chunk; ties broken by
    lexicographic node id. Deterministic in (chunk_id, node set)."""
    def weight(node_id: str) -> tuple[int, str]:
        digest = hashlib.sha256(f"{chunk_id}|{node_id}".encode()).digest()
        return (-int.from_bytes(digest[:8], "big"), node_id)

    return sorted(node_ids, key=weight)


def split_chunks(payload: bytes, chunk_size: int) -> list[bytes]:
    return [payload[i:i + chunk_size] for i in range(0, len(payload), chunk_size)]


class SnapshotHandle:
    """Point-in-time, read-only view of one group's objects.

    The handle captures the manifest map at snapshot time and exposes only
    retrieval. Chunk bytes are shared with the live store (objects are
    immutable and content-addressed, so shared bytes cannot drift). Every
    mutating operation name a caller might reach for refuses with
    ReadOnlyViolation; this is the write-blocker capability handed to
    forensic imaging.
    """

    def __init__(self, snapshot_id: str, group: NodeGroup, cluster: "Cluster",
                 manifests: dict[str, ObjectManifest], taken_at: int):
        self.snapshot_id = snapshot_id
        self.group = group
        self.taken_at = taken_at
        self._cluster = cluster
        self._manifests = manifests

    def object_ids(self) -> list[str]:
        return sorted(self._manifests)

    def manifest_for(self, object_id: str) -> ObjectManifest:
        if object_id not in self._manifests:
            raise ObjectMissingError(object_id)
        return self._manifests[object_id]

    def get(self, object_id: str) -> bytes:
        manifest = self.manifest_for(object_id)
        return self._cluster.read_manifest(manifest)

    # Write-blocker: refuse every mutation by name.
    def _refuse(self, operation: str):
        raise ReadOnlyViolation(f"{operation} through a read-only snapshot")

    def put(self, *args, **kwargs):
        self._refuse("put")

    def delete(self, *args, **kwargs):
        self._refuse("delete")

    def apply_retention(self, *args, **kwargs):
        self._refuse("apply_retention")

    def fail_node(self, *args, **kwargs):
        self._refuse("fail_node")

    def revive_node(self, *args, **kwargs):
        self._refuse("revive_node")

    def re_replicate(self, *args, **kwargs):
        self._refuse("re_replicate")


class Cluster:
    """The evidence store: nodes, manifests, and repair bookkeeping."""

    def __init__(self, chunk_size: int = DEFAULT_CHUNK_SIZE, root: Optional[Path] = None):
        self.chunk_size = chunk_size
        self.root = Path(root) if root else None
        self.nodes: dict[str, StorageNode] = {}
        self.manifests: dict[str, ObjectManifest] = {}
        # Forensic image copies live in their own namespace so a copy of an
        # already stored object still lands on the imaging nodes.
        self.image_manifests: dict[str, ObjectManifest] = {}
        self.under_replicated: set[tuple[str, str]] = set()
        self.flagged_replicas: list[tuple[str, str]] = []
        self._snapshot_counter = 0
        self._lock = threading.RLock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load_disk_state()

    # ---- topology -------------------------------------------------------

    def add_node(self, node_id: str, group: NodeGroup, capacity: int = 1 << 40) -> StorageNode:
        directory = (self.root / "nodes" / node_id) if self.root else None
        node = StorageNode(node_id, group, capacity, directory)
        self.nodes[node_id] = node
        self._persist_node_states()
        return node

    def live_nodes(self, group: NodeGroup) -> list[StorageNode]:
        return [n for n in self.nodes.values() if n.group == group and n.live]

    def fail_node(self, node_id: str) -> None:
        node = self._node(node_id)
        node.state = NodeState.FAILED
        self._recompute_under_replicated()
        self._persist_node_states()

    def revive_node(self, node_id: str) -> None:
        node = self._node(node_id)
        node.state = NodeState.LIVE
        self._recompute_under_replicated()
        self._persist_node_states()

    def _node(self, node_id: str) -> StorageNode:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return self.nodes[node_id]

    # ---- write path -----------------------------------------------------

    def put(self, group: NodeGroup, payload: bytes, r: int = DEFAULT_REPLICATION,
            created_at: int = 0, retention_class: str = "default") -> ObjectManifest:
        """Store a payload in DFR1 or DFR2. Content-addressed: re-putting an
        already stored payload returns the existing manifest unchanged."""
        if group == NodeGroup.IMAGING:
            raise StoreError("imaging nodes accept only image artifacts")
        return self._put_to_group(group, payload, r, created_at, retention_class)

    def put_image_artifact(self, payload: bytes, r: int = 1, created_at: int = 0) -> ObjectManifest:
        """Imaging-node write path, reserved for forensic image copies."""
        return self._put_to_group(NodeGroup.IMAGING, payload, r, created_at,
                                  retention_class="image")

    def get_image_artifact(self, object_id: str) -> bytes:
        if object_id not in self.image_manifests:
            raise ObjectMissingError(object_id)
        return self.read_manifest(self.image_manifests[object_id])

    def _put_to_group(self, group: NodeGroup, payload: bytes, r: int,
                      created_at: int, retention_class: str) -> ObjectManifest:
        if r < 1:
            raise StoreError(f"replication factor must be >= 1, got {r}")
        namespace = self.image_manifests if group == NodeGroup.IMAGING else self.manifests
        with self._lock:
            object_id = compute_content_hash(payload)
            existing = namespace.get(object_id)
            if existing is not None:
                return existing

            live = [n.node_id for n in self.live_nodes(group)]
            if len(live) < r:
                raise InsufficientNodesError(
                    f"group {group.value} has {len(live)} live nodes, need {r}")

            chunks = split_chunks(payload, self.chunk_size)
            chunk_ids = [compute_content_hash(c) for c in chunks]
            # Placement decided for every chunk before any byte is written,
            # so a failed put never leaves partial state.
            placements = {cid: rendezvous_rank(cid, live)[:r] for cid in chunk_ids}
            for data, cid in zip(chunks, chunk_ids):
                for node_id in placements[cid]:
                    self.nodes[node_id].write_chunk(cid, data)

            manifest = ObjectManifest(
                object_id=object_id,
                group=group,
                chunk_list=chunk_ids,
                chunk_hashes={cid: cid for cid in chunk_ids},
                replication_factor=r,
                placements={cid: set(ns) for cid, ns in placements.items()},
                created_at=created_at,
                retention_class=retention_class,
                size=len(payload),
            )
            namespace[object_id] = manifest
            self._append_manifest_log(manifest)
            return manifest

    # ---- read path ------------------------------------------------------

    def get(self, object_id: str) -> bytes:
        if object_id not in self.manifests:
            raise ObjectMissingError(object_id)
        return self.read_manifest(self.manifests[object_id])

    def read_manifest(self, manifest: ObjectManifest) -> bytes:
        """Assemble an object, verifying each chunk against its digest before
        use. Corrupt replicas are flagged, dropped, and left to repair; a
        chunk with no live valid replica raises."""
        with self._lock:
            parts = []
            for chunk_id in manifest.chunk_list:
                parts.append(self._read_chunk_verified(manifest, chunk_id))
            return b"".join(parts)

    def _read_chunk_verified(self, manifest: ObjectManifest, chunk_id: str) -> bytes:
        """Verify EVERY live replica, not just the first good one: a flipped
        byte anywhere must surface as a flagged replica on the next read,
        never sit silently behind a healthy copy."""
        expected = manifest.chunk_hashes[chunk_id]
        live_holders = [nid for nid in sorted(manifest.placements.get(chunk_id, ()))
                        if nid in self.nodes and self.nodes[nid].live
                        and self.nodes[nid].has_chunk(chunk_id)]
        result = None
        saw_corruption = False
        for node_id in live_holders:
            data = self.nodes[node_id].read_chunk(chunk_id)
            if compute_content_hash(data) == expected:
                if result is None:
                    result = data
            else:
                saw_corruption = True
                self._flag_corrupt_replica(manifest, node_id, chunk_id)
        if result is not None:
            return result
        if saw_corruption:
            raise IntegrityFailureError(
                f"all live replicas of chunk {chunk_id[:12]} are corrupt")
        raise ChunkUnavailableError(
            f"no live replica for chunk {chunk_id[:12]} of {manifest.object_id[:12]}")

    def _flag_corrupt_replica(self, manifest: ObjectManifest, node_id: str, chunk_id: str) -> None:
        self.flagged_replicas.append((node_id, chunk_id))
        self.nodes[node_id].delete_chunk(chunk_id)
        manifest.placements[chunk_id].discard(node_id)
        self._recompute_under_replicated()

    # ---- failures and repair --------------------------------------------

    def _live_holders(self, manifest: ObjectManifest, chunk_id: str) -> set[str]:
        return {nid for nid in manifest.placements.get(chunk_id, ())
                if nid in self.nodes and self.nodes[nid].live
                and self.nodes[nid].has_chunk(chunk_id)}

    def _all_manifests(self) -> list[ObjectManifest]:
        return list(self.manifests.values()) + list(self.image_manifests.values())

    def _recompute_under_replicated(self) -> None:
        listed = set()
        for manifest in self._all_manifests():
            for chunk_id in manifest.chunk_list:
                if len(self._live_holders(manifest, chunk_id)) < manifest.replication_factor:
                    listed.add((manifest.object_id, chunk_id))
        self.under_replicated = listed

    def re_replicate(self) -> int:
        """Best-effort repair: copy every under-replicated chunk from a
        surviving valid replica onto fresh live nodes until the replication
        factor holds again. Returns how many chunks were fully restored."""
        with self._lock:
            restored = 0
            for object_id, chunk_id in sorted(self.under_replicated):
                manifest = self.manifests.get(object_id) or self.image_manifests.get(object_id)
                if manifest is None:
                    continue
                expected = manifest.chunk_hashes[chunk_id]
                source_data = None
                for node_id in sorted(self._live_holders(manifest, chunk_id)):
                    data = self.nodes[node_id].read_chunk(chunk_id)
                    if compute_content_hash(data) == expected:
                        source_data = data
                        break
                    self._flag_corrupt_replica(manifest, node_id, chunk_id)
                if source_data is None:
                    continue

                holders = self._live_holders(manifest, chunk_id)
                live = [n.node_id for n in self.live_nodes(manifest.group)]
                for node_id in rendezvous_rank(chunk_id, live):
                    if len(holders) >= manifest.replication_factor:
                        break
                    if node_id in holders:
                        continue
                    self.nodes[node_id].write_chunk(chunk_id, source_data)
                    holders.add(node_id)
                if len(holders) >= manifest.replication_factor:
                    restored += 1
                # Placements now reflect live holders; dead nodes drop out.
                manifest.placements[chunk_id] = set(holders)
                self._append_manifest_log(manifest)
            self._recompute_under_replicated()
            return restored

    # ---- snapshots and retention ------------------------------------------

    def snapshot_readonly(self, group: NodeGroup, taken_at: int = 0) -> SnapshotHandle:
        with self._lock:
            self._snapshot_counter += 1
            manifests = {oid: ObjectManifest.from_dict(m.to_dict())
                         for oid, m in self.manifests.items() if m.group == group}
            return SnapshotHandle(
                snapshot_id=f"snap-{group.value}-{self._snapshot_counter}",
                group=group, cluster=self, manifests=manifests, taken_at=taken_at)

    def apply_retention(self, policy: dict[str, int], now: int,
                        custody_log: Optional[Callable[[str, int], None]] = None) -> list[str]:
        """Purge objects strictly older than their retention-class limit.
        An object exactly at the age limit is retained. Chunk bytes shared
        with a surviving object (content-addressed dedup) are kept."""
        with self._lock:
            purged = []
            for object_id, manifest in list(self.manifests.items()):
                limit = policy.get(manifest.retention_class)
                if limit is None:
                    continue
                if now - manifest.created_at > limit:
                    self._purge(manifest)
                    purged.append(object_id)
                    if custody_log is not None:
                        custody_log(object_id, now)
            self._recompute_under_replicated()
            return purged

    def _purge(self, manifest: ObjectManifest) -> None:
        del self.manifests[manifest.object_id]
        # Chunk bytes are deleted per placement, and only where no surviving
        # manifest (including forensic images) still places the same chunk
        # on the same node: content-addressed dedup must not lose data.
        for chunk_id in manifest.chunk_list:
            for node_id in manifest.placements.get(chunk_id, ()):
                still_needed = any(
                    node_id in m.placements.get(chunk_id, ())
                    for m in self._all_manifests())
                if not still_needed and node_id in self.nodes:
                    self.nodes[node_id].delete_chunk(chunk_id)
        self._append_manifest_log(manifest, purge=True)

    # ---- verification helpers ---------------------------------------------

    def sweep_digests(self) -> dict[str, str]:
        """Full-store digest map: object_id -> digest of assembled bytes for
        every retrievable object. Used to prove non-interference."""
        digests = {}
        for object_id in sorted(self.manifests):
            digests[object_id] = compute_content_hash(self.get(object_id))
        return digests

    # ---- disk persistence ---------------------------------------------------

    def _manifest_log_path(self) -> Optional[Path]:
        return (self.root / "manifests.jsonl") if self.root else None

    def _node_state_path(self) -> Optional[Path]:
        return (self.root / "cluster_state.json") if self.root else None

    def _append_manifest_log(self, manifest: ObjectManifest, purge: bool = False) -> None:
        path = self._manifest_log_path()
        if path is None:
            return
        entry = {"purged": manifest.object_id} if purge else manifest.to_dict()
        with path.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def _persist_node_states(self) -> None:
        path = self._node_state_path()
        if path is None:
            return
        states = {nid: {"group": n.group.value, "state": n.state.value,
                        "capacity": n.capacity}
                  for nid, n in self.nodes.items()}
        path.write_text(json.dumps(states, sort_keys=True, indent=1))

    def _load_disk_state(self) -> None:
        state_path = self._node_state_path()
        if state_path and state_path.exists():
            for node_id, info in json.loads(state_path.read_text()).items():
                node = StorageNode(node_id, NodeGroup(info["group"]), info["capacity"],
                                   self.root / "nodes" / node_id)
                node.state = NodeState(info["state"])
                self.nodes[node_id] = node
        log_path = self._manifest_log_path()
        if log_path and log_path.exists():
            for line in log_path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                if "purged" in entry:
                    self.manifests.pop(entry["purged"], None)
                else:
                    manifest = ObjectManifest.from_dict(entry)
                    if manifest.group == NodeGroup.IMAGING:
                        self.image_manifests[manifest.object_id] = manifest
                    else:
                        self.manifests[manifest.object_id] = manifest
        self._recompute_under_replicated()


def build_cluster(dfr1_nodes: int = 5, dfr2_nodes: int = 5, imaging_nodes: int = 1,
                  chunk_size: int = DEFAULT_CHUNK_SIZE, root: Optional[Path] = None) -> Cluster:
    """Standard desk-scale topology with disjoint node groups."""
    cluster = Cluster(chunk_size=chunk_size, root=root)
    if cluster.nodes:
        return cluster  # loaded from disk
    for i in range(dfr1_nodes):
        cluster.add_node(f"dfr1-{i:02d}", NodeGroup.DFR1)
    for i in range(dfr2_nodes):
        cluster.add_node(f"dfr2-{i:02d}", NodeGroup.DFR2)
    for i in range(imaging_nodes):
        cluster.add_node(f"imaging-{i:02d}", NodeGroup.IMAGING)
    return cluster

"""Durable triple storage split into a batch layer and a speed layer.

The speed layer is an append-only binary log of recent triples; the batch
layer is a chain of immutable snapshot files.  Compaction folds the log
prefix up to a cut timestamp into a new snapshot and prunes the log, so a
serving read is always: snapshot triples, plus log triples, merged with the
shared dedup rule.

Record framing, shared by log and snapshot files:

    length: u32 LE | crc32: u32 LE | payload

where the payload is a kind byte followed by TLV fields (tag u8, length
u16 LE, value bytes).  The CRC covers the payload only.  A torn final
record (crash mid-append) is detected by the CRC or by running out of
bytes and is discarded on replay; snapshots get no such tolerance since
they are written atomically and never rewritten.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from .knowledge import SemanticTriple, dedup_triples
from .patterns import QueryMatcher

log = logging.getLogger(__name__)

KIND_TRIPLE = 1
KIND_MARKER = 2
KIND_META = 3

# TLV field tags.
T_UID = 1
T_SUBJECT = 2
T_PREDICATE = 3
T_OBJECT = 4
T_CONFIDENCE = 5
T_OBSERVED = 6
T_FRAME = 7
T_MODEL = 8
T_EPOCH = 9
T_SUBJECT_TYPE = 10
T_OBJECT_TYPE = 11
T_BOXES = 12
T_REASON = 13
T_SNAP_ID = 14
T_COUNT = 15

_F64_TAGS = {T_CONFIDENCE, T_OBSERVED}
_U32_TAGS = {T_FRAME, T_EPOCH, T_SNAP_ID, T_COUNT}

_HEADER = struct.Struct("<II")
_MAX_PAYLOAD = 1 << 24

_SNAP_RE = re.compile(r"snap-(\d+)\.bin$")


class OutOfOrder(Exception):
    """Appended record's timestamp regressed below the log's high water."""


class SnapshotTampered(Exception):
    pass


def _tlv(tag: int, value) -> bytes:
    if tag in _F64_TAGS:
        raw = struct.pack("<d", float(value))
    elif tag in _U32_TAGS:
        raw = struct.pack("<I", int(value))
    elif tag == T_BOXES:
        raw = json.dumps(value).encode()
    else:
        raw = str(value).encode()
    if len(raw) > 0xFFFF:
        raise ValueError(f"field {tag} too large ({len(raw)} bytes)")
    return struct.pack("<BH", tag, len(raw)) + raw


def encode_record(kind: int, fields: dict[int, object]) -> bytes:
    payload = bytes([kind]) + b"".join(
        _tlv(tag, value) for tag, value in sorted(fields.items()) if value is not None
    )
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def _decode_payload(payload: bytes) -> tuple[int, dict[int, object]]:
    kind = payload[0]
    fields: dict[int, object] = {}
    pos = 1
    while pos < len(payload):
        if pos + 3 > len(payload):
            raise ValueError("truncated field header")
        tag, size = struct.unpack_from("<BH", payload, pos)
        pos += 3
        raw = payload[pos:pos + size]
        if len(raw) != size:
            raise ValueError("truncated field value")
        pos += size
        if tag in _F64_TAGS:
            fields[tag] = struct.unpack("<d", raw)[0]
        elif tag in _U32_TAGS:
            fields[tag] = struct.unpack("<I", raw)[0]
        elif tag == T_BOXES:
            fields[tag] = json.loads(raw.decode())
        else:
            fields[tag] = raw.decode()
    return kind, fields


def read_records(data: bytes) -> tuple[list[tuple[int, dict[int, object]]], int]:
    """Decode records until the bytes stop making sense.

    Returns (records, clean_length): clean_length is the offset just past
    the last record that framed and checksummed correctly, so callers can
    truncate a crashed log back to it.
    """
    records: list[tuple[int, dict[int, object]]] = []
    offset = 0
    while offset + _HEADER.size <= len(data):
        length, crc = _HEADER.unpack_from(data, offset)
        if length == 0 or length > _MAX_PAYLOAD:
            break
        payload = data[offset + _HEADER.size:offset + _HEADER.size + length]
        if len(payload) != length or zlib.crc32(payload) != crc:
            break
        try:
            records.append(_decode_payload(payload))
        except (ValueError, UnicodeDecodeError, json.JSONDecodeError):
            break
        offset += _HEADER.size + length
    return records, offset


def _triple_fields(t: SemanticTriple) -> dict[int, object]:
    return {
        T_UID: t.uid,
        T_SUBJECT: t.subject,
        T_PREDICATE: t.predicate,
        T_OBJECT: t.object,
        T_CONFIDENCE: t.confidence,
        T_OBSERVED: t.observed_at_ms,
        T_FRAME: t.frame_seq,
        T_MODEL: t.model_id,
        T_EPOCH: t.epoch,
        T_SUBJECT_TYPE: t.subject_type,
        T_OBJECT_TYPE: t.object_type,
        T_BOXES: [list(b) for b in t.boxes] if t.boxes else None,
    }


def _triple_from_fields(fields: dict[int, object]) -> SemanticTriple:
    boxes = fields.get(T_BOXES)
    return SemanticTriple(
        uid=fields[T_UID],
        subject=fields[T_SUBJECT],
        predicate=fields[T_PREDICATE],
        object=fields[T_OBJECT],
        confidence=fields[T_CONFIDENCE],
        observed_at_ms=fields[T_OBSERVED],
        frame_seq=fields[T_FRAME],
        model_id=fields[T_MODEL],
        epoch=fields[T_EPOCH],
        subject_type=fields.get(T_SUBJECT_TYPE),
        object_type=fields.get(T_OBJECT_TYPE),
        boxes=tuple(tuple(b) for b in boxes) if boxes else None,
    )


@dataclass
class LogMarker:
    reason: str
    at_ms: float
    epoch: int


class SpeedLog:
    """Append-only record log holding the not-yet-compacted triples.

    Triples are stamped with observation time and markers with engine time;
    the two bases drift apart by inference latency, so each kind keeps its
    own nondecreasing water mark.  A regression within a kind raises
    OutOfOrder and nothing is written.  Replay truncates a torn tail in
    place.
    """

    def __init__(self, path: Path) -> None:
        self.path = path
        self.triples: list[SemanticTriple] = []
        self.markers: list[LogMarker] = []
        self.high_water_ms = float("-inf")
        self._marker_water_ms = float("-inf")
        self._replay()
        self._fh = open(self.path, "ab")

    def _replay(self) -> None:
        if not self.path.exists():
            self.path.touch()
            return
        data = self.path.read_bytes()
        records, clean = read_records(data)
        if clean < len(data):
            log.warning("log %s: discarding %d torn bytes at tail", self.path, len(data) - clean)
            with open(self.path, "r+b") as fh:
                fh.truncate(clean)
        for kind, fields in records:
            if kind == KIND_TRIPLE:
                t = _triple_from_fields(fields)
                self.triples.append(t)
                self.high_water_ms = max(self.high_water_ms, t.observed_at_ms)
            elif kind == KIND_MARKER:
                m = LogMarker(fields.get(T_REASON, ""), fields[T_OBSERVED], fields.get(T_EPOCH, 0))
                self.markers.append(m)
                self._marker_water_ms = max(self._marker_water_ms, m.at_ms)

    def append(self, triple: SemanticTriple) -> None:
        if triple.observed_at_ms < self.high_water_ms:
            raise OutOfOrder(
                f"triple at {triple.observed_at_ms}ms behind high water {self.high_water_ms}ms"
            )
        self._fh.write(encode_record(KIND_TRIPLE, _triple_fields(triple)))
        self._fh.flush()
        self.triples.append(triple)
        self.high_water_ms = triple.observed_at_ms

    def append_marker(self, reason: str, at_ms: float, epoch: int) -> None:
        if at_ms < self._marker_water_ms:
            raise OutOfOrder(f"marker at {at_ms}ms behind marker water {self._marker_water_ms}ms")
        self._fh.write(encode_record(
            KIND_MARKER, {T_REASON: reason, T_OBSERVED: at_ms, T_EPOCH: epoch}))
        self._fh.flush()
        self.markers.append(LogMarker(reason, at_ms, epoch))
        self._marker_water_ms = at_ms

    def prune(self, cut_ms: float) -> int:
        """Drop records observed at or before the cut.  Atomic rewrite."""
        keep_triples = [t for t in self.triples if t.observed_at_ms > cut_ms]
        keep_markers = [m for m in self.markers if m.at_ms > cut_ms]
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            for t in keep_triples:
                fh.write(encode_record(KIND_TRIPLE, _triple_fields(t)))
            for m in keep_markers:
                fh.write(encode_record(
                    KIND_MARKER, {T_REASON: m.reason, T_OBSERVED: m.at_ms, T_EPOCH: m.epoch}))
            fh.flush()
            os.fsync(fh.fileno())
        self._fh.close()
        os.replace(tmp, self.path)
        self._fh = open(self.path, "ab")
        removed = len(self.triples) - len(keep_triples)
        self.triples = keep_triples
        self.markers = keep_markers
        return removed

    def sync(self) -> None:
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __len__(self) -> int:
        return len(self.triples)


class BatchSnapshot:
    """One immutable snapshot file: a meta record then its triples."""

    def __init__(self, path: Path | None, snapshot_id: int, covers_up_to_ms: float,
                 triples: list[SemanticTriple]) -> None:
        self.path = path
        self.snapshot_id = snapshot_id
        self.covers_up_to_ms = covers_up_to_ms
        self.triples = triples

    @staticmethod
    def empty() -> BatchSnapshot:
        return BatchSnapshot(None, 0, float("-inf"), [])

    @staticmethod
    def write(root: Path, snapshot_id: int, covers_up_to_ms: float,
              triples: list[SemanticTriple]) -> BatchSnapshot:
        path = root / f"snap-{snapshot_id:06d}.bin"
        if path.exists():
            raise SnapshotTampered(f"{path} already exists; snapshots are never rewritten")
        blob = encode_record(KIND_META, {
            T_SNAP_ID: snapshot_id,
            T_OBSERVED: covers_up_to_ms,
            T_COUNT: len(triples),
        })
        blob += b"".join(encode_record(KIND_TRIPLE, _triple_fields(t)) for t in triples)
        digest = hashlib.sha256(blob).hexdigest()
        path.with_suffix(".bin.sha256").write_text(digest + "\n")
        tmp = path.with_suffix(".bin.tmp")
        with open(tmp, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        return BatchSnapshot(path, snapshot_id, covers_up_to_ms, list(triples))

    @staticmethod
    def open(path: Path) -> BatchSnapshot:
        blob = path.read_bytes()
        digest_path = path.with_suffix(".bin.sha256")
        if not digest_path.exists():
            raise SnapshotTampered(f"{path}: checksum sidecar missing")
        expected = digest_path.read_text().strip()
        if hashlib.sha256(blob).hexdigest() != expected:
            raise SnapshotTampered(f"{path}: sha256 mismatch")
        records, clean = read_records(blob)
        if clean != len(blob) or not records or records[0][0] != KIND_META:
            raise SnapshotTampered(f"{path}: malformed contents")
        meta = records[0][1]
        triples = [_triple_from_fields(f) for kind, f in records[1:] if kind == KIND_TRIPLE]
        if meta.get(T_COUNT) != len(triples):
            raise SnapshotTampered(f"{path}: triple count mismatch")
        return BatchSnapshot(path, meta[T_SNAP_ID], meta[T_OBSERVED], triples)


class LambdaStore:
    """Facade over the snapshot chain and the speed log."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.snapshot = self._open_latest_snapshot()
        self.log = SpeedLog(self.root / "log.bin")
        self.compactions = 0

    def _open_latest_snapshot(self) -> BatchSnapshot:
        best_id, best_path = 0, None
        for child in self.root.iterdir():
            m = _SNAP_RE.match(child.name)
            if m and int(m.group(1)) > best_id:
                best_id, best_path = int(m.group(1)), child
        if best_path is None:
            return BatchSnapshot.empty()
        return BatchSnapshot.open(best_path)

    def append(self, triple: SemanticTriple) -> None:
        self.log.append(triple)

    def append_marker(self, reason: str, at_ms: float, epoch: int) -> None:
        self.log.append_marker(reason, at_ms, epoch)

    def compact(self, cut_ms: float) -> int | None:
        """Fold log entries observed at or before the cut into a new
        snapshot.  A cut that captures nothing leaves the previous snapshot
        untouched and returns None."""
        pending = [t for t in self.log.triples if t.observed_at_ms <= cut_ms]
        if not pending:
            return None
        if cut_ms <= self.snapshot.covers_up_to_ms:
            raise ValueError(
                f"compaction cut {cut_ms}ms does not advance past "
                f"{self.snapshot.covers_up_to_ms}ms")
        merged = dedup_triples(self.snapshot.triples + pending)
        new_id = self.snapshot.snapshot_id + 1
        self.snapshot = BatchSnapshot.write(self.root, new_id, cut_ms, merged)
        self.log.prune(cut_ms)
        self.compactions += 1
        return new_id

    def serve(
        self,
        window: tuple[float, float] | None = None,
        matcher: QueryMatcher | None = None,
        epoch: int | None = None,
    ) -> list[SemanticTriple]:
        """Merged view: snapshot plus log, deduplicated, chronological."""
        pool = self.snapshot.triples + self.log.triples
        if epoch is not None:
            pool = [t for t in pool if t.epoch == epoch]
        if window is not None:
            start, end = window
            pool = [t for t in pool if start <= t.observed_at_ms <= end]
        if matcher is not None:
            pool = [t for t in pool if matcher.matches(t)]
        return dedup_triples(pool)

    def stats(self) -> dict[str, object]:
        return {
            "log_entries": len(self.log),
            "snapshot_id": self.snapshot.snapshot_id,
            "snapshot_triples": len(self.snapshot.triples),
            "covers_up_to_ms": self.snapshot.covers_up_to_ms,
            "compactions": self.compactions,
        }

    def close(self) -> None:
        self.log.close()

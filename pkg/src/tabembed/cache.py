"""Persistent embedding cache: append-only record log plus a JSON index.

Entries are keyed by (prompt hash, backend fingerprint).  Frames carry a
CRC32 so torn writes and corruption read back as misses with a warning
instead of wrong data.  The index file is replaced atomically, which
keeps concurrent readers consistent; writers serialize on a thread lock
within the process.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import warnings
import zlib
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CacheCorrupt

_FRAME_MAGIC = b"TEC1"


def _frame(key: str, values: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    key_b = key.encode("utf-8")
    body = (
        struct.pack("<I", len(key_b))
        + key_b
        + struct.pack("<II", values.shape[0], values.shape[1])
        + payload
    )
    return _FRAME_MAGIC + body + struct.pack("<I", zlib.crc32(body))


class EmbeddingCache:
    def __init__(self, path):
        self.root = Path(path)
        self.root.mkdir(parents=True, exist_ok=True)
        self.log_path = self.root / "log.bin"
        self.index_path = self.root / "index.json"
        self._lock = threading.Lock()
        self._index: Optional[dict] = None
        self._index_stamp = None

    @staticmethod
    def key(prompt_hash: str, fingerprint: str) -> str:
        return f"{prompt_hash}|{fingerprint}"

    def _load_index(self) -> dict:
        try:
            stamp = self.index_path.stat().st_mtime_ns
        except FileNotFoundError:
            self._index = {}
            self._index_stamp = None
            return self._index
        if self._index is None or stamp != self._index_stamp:
            try:
                self._index = json.loads(self.index_path.read_text())
            except (json.JSONDecodeError, OSError):
                warnings.warn("cache index unreadable; treating cache as empty",
                              CacheCorrupt)
                self._index = {}
            self._index_stamp = stamp
        return self._index

    def get(self, prompt_hash: str, fingerprint: str) -> Optional[np.ndarray]:
        """Return the stored matrix byte-identically, or None on a miss."""
        entry = self._load_index().get(self.key(prompt_hash, fingerprint))
        if entry is None:
            return None
        offset, length = entry
        try:
            with self.log_path.open("rb") as fh:
                fh.seek(offset)
                raw = fh.read(length)
        except OSError:
            warnings.warn("cache log unreadable; miss", CacheCorrupt)
            return None
        if len(raw) != length or raw[:4] != _FRAME_MAGIC:
            warnings.warn("cache frame truncated or mismagic; miss", CacheCorrupt)
            return None
        body, (crc,) = raw[4:-4], struct.unpack("<I", raw[-4:])
        if zlib.crc32(body) != crc:
            warnings.warn("cache frame checksum mismatch; miss", CacheCorrupt)
            return None
        key_len = struct.unpack("<I", body[:4])[0]
        pos = 4 + key_len
        rows, cols = struct.unpack("<II", body[pos : pos + 8])
        values = np.frombuffer(body[pos + 8 :], dtype="<f8").reshape(rows, cols)
        return values.copy()

    def put(self, prompt_hash: str, fingerprint: str, values: np.ndarray) -> None:
        """Append one frame and atomically republish the index."""
        key = self.key(prompt_hash, fingerprint)
        frame = _frame(key, values)
        with self._lock:
            index = dict(self._load_index())
            with self.log_path.open("ab") as fh:
                offset = fh.tell()
                fh.write(frame)
                fh.flush()
                os.fsync(fh.fileno())
            index[key] = [offset, len(frame)]
            tmp = self.index_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(index))
            os.replace(tmp, self.index_path)
            self._index = index
            self._index_stamp = self.index_path.stat().st_mtime_ns

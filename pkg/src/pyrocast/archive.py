"""Binary weight container for named tensors.

File layout: magic bytes ``NTA1``, an 8-byte little-endian manifest length,
a UTF-8 JSON manifest (list of ``{name, dtype, shape, byte_offset}``), then
the raw payload of little-endian IEEE-754 values, row-major.  Offsets are
relative to the payload start.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArchiveFormatError, DimensionError, ManifestError

MAGIC = b"NTA1"

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


@dataclass
class ArchiveEntry:
    name: str
    dtype: str
    shape: tuple[int, ...]
    byte_offset: int

    @property
    def nbytes(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * _DTYPES[self.dtype].itemsize


class NamedTensorArchive:
    """In-memory archive of named arrays with a bit-exact file round trip."""

    def __init__(self, tensors: dict[str, np.ndarray] | None = None):
        self._tensors: dict[str, np.ndarray] = {}
        for name, arr in (tensors or {}).items():
            self.add(name, arr)

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self._tensors:
            raise ManifestError(f"duplicate tensor name {name!r}")
        arr = np.ascontiguousarray(array)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self._tensors[name] = arr

    def names(self) -> list[str]:
        return list(self._tensors)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._tensors:
            raise ManifestError(f"archive has no tensor named {name!r}")
        return self._tensors[name]

    def items(self):
        return self._tensors.items()

    @property
    def scalar_count(self) -> int:
        return sum(a.size for a in self._tensors.values())

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        manifest = []
        payload = bytearray()
        for name, arr in self._tensors.items():
            dtype = "f8" if arr.dtype == np.float64 else "f4"
            manifest.append({
                "name": name,
                "dtype": dtype,
                "shape": list(arr.shape),
                "byte_offset": len(payload),
            })
            payload += arr.astype(_DTYPES[dtype], copy=False).tobytes()
        mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
        return MAGIC + len(mbytes).to_bytes(8, "little") + mbytes + bytes(payload)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "NamedTensorArchive":
        if blob[:4] != MAGIC:
            raise ArchiveFormatError(
                f"bad magic bytes {blob[:4]!r}, expected {MAGIC!r}")
        if len(blob) < 12:
            raise ArchiveFormatError("truncated header")
        mlen = int.from_bytes(blob[4:12], "little")
        if len(blob) < 12 + mlen:
            raise ArchiveFormatError(
                f"truncated manifest: need {mlen} bytes, have {len(blob) - 12}")
        try:
            manifest = json.loads(blob[12:12 + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ArchiveFormatError(f"unreadable manifest: {exc}") from exc
        payload = blob[12 + mlen:]
        entries = []
        for rec in manifest:
            try:
                entry = ArchiveEntry(rec["name"], rec["dtype"],
                                     tuple(rec["shape"]), rec["byte_offset"])
            except (KeyError, TypeError) as exc:
                raise ArchiveFormatError(f"bad manifest record {rec!r}") from exc
            if entry.dtype not in _DTYPES:
                raise ArchiveFormatError(f"unknown dtype {entry.dtype!r}")
            entries.append(entry)
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ManifestError("duplicate tensor names in manifest")
        spans = sorted((e.byte_offset, e.byte_offset + e.nbytes, e.name)
                       for e in entries)
        for (lo1, hi1, n1), (lo2, hi2, n2) in zip(spans, spans[1:]):
            if lo2 < hi1:
                raise ArchiveFormatError(
                    f"overlapping payload spans for {n1!r} and {n2!r}")
        arch = cls()
        for e in entries:
            end = e.byte_offset + e.nbytes
            if end > len(payload):
                raise ArchiveFormatError(
                    f"tensor {e.name!r} needs payload bytes up to {end}, "
                    f"have {len(payload)}")
            arr = np.frombuffer(payload, dtype=_DTYPES[e.dtype],
                                count=int(np.prod(e.shape, dtype=np.int64)),
                                offset=e.byte_offset)
            arch.add(e.name, arr.reshape(e.shape).copy())
        return arch

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "NamedTensorArchive":
        return cls.from_bytes(Path(path).read_bytes())

    # -- validation helpers ------------------------------------------------

    def require(self, expected: dict[str, tuple[int, ...]]) -> None:
        """Check that names and shapes exactly match `expected`."""
        missing = sorted(set(expected) - set(self._tensors))
        extra = sorted(set(self._tensors) - set(expected))
        if missing or extra:
            parts = []
            if missing:
                parts.append("missing: " + ", ".join(missing))
            if extra:
                parts.append("unexpected: " + ", ".join(extra))
            raise ManifestError("; ".join(parts))
        for name, shape in expected.items():
            got = self._tensors[name].shape
            if tuple(got) != tuple(shape):
                raise DimensionError(
                    f"tensor {name!r}: expected shape {tuple(shape)}, got {tuple(got)}")

"""Binary containers for partitioned grids and appended solutions, and run-file parsing.

Grid container (``.jzg``), all integers little-endian::

    header   magic b"JZG1" | u32 version | i32 rank | 3 x u64 global dims
             | 3 x (u64 start, u64 stop) interior ranges | u32 fringe | u32 nsections
    index    nsections x (16-byte name, u64 offset, u64 length)
    sections "coords": float64 LE padded coordinates, xi fastest, then eta,
             zeta, component slowest; "meta": UTF-8 JSON (pad modes, periods)

Solution container (``.jzs``)::

    header   magic b"JZS1" | u32 version | i32 rank | 3 x u64 dims | u32 ncomp
    records  b"REC1" | u64 payload length | u64 iteration | f64 time
             | u32 crc32(payload) | payload (float64 LE, xi fastest)
    trailer  index of u64 record offsets | u64 count | u64 index offset | b"END1"

An append writes the new record over the old trailer and then writes a fresh
trailer.  A reader that finds no valid trailer scans records from the header
and keeps only those whose length and checksum are intact.
"""

from __future__ import annotations

import json
import logging
import os
import re
import struct
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import FRINGE, NCOMP, ConservativeField, CurvilinearBlock, FlowConfig

log = logging.getLogger(__name__)

GRID_MAGIC = b"JZG1"
SOL_MAGIC = b"JZS1"
REC_MAGIC = b"REC1"
END_MAGIC = b"END1"
VERSION = 1

_GRID_HEAD = struct.Struct("<4sIi3Q6QII")
_SECTION = struct.Struct("<16sQQ")
_SOL_HEAD = struct.Struct("<4sIi3QI")
_REC_HEAD = struct.Struct("<4sQQdI")
_FOOTER = struct.Struct("<QQ4s")


class ContainerError(IOError):
    pass


class MagicMismatch(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class Truncated(ContainerError):
    def __init__(self, section, message=None):
        super().__init__(message or f"file truncated in section {section!r}")
        self.section = section


class DimensionMismatch(ContainerError):
    pass


class RankMismatch(ContainerError):
    pass


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# grids


@dataclass
class GridContainer:
    rank: int
    global_dims: Tuple[int, int, int]
    ranges: Tuple[Tuple[int, int], ...]
    fringe: int
    coords: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_block(self) -> CurvilinearBlock:
        modes = tuple(tuple(m) for m in self.meta.get("pad_modes"))
        periods = self.meta.get("periods")
        if periods is not None:
            periods = tuple(tuple(p) for p in periods)
        return CurvilinearBlock(
            self.coords,
            global_offset=tuple(r[0] for r in self.ranges),
            global_dims=tuple(self.global_dims),
            pad_modes=modes,
            periods=periods,
        )


def _to_disk(arr: np.ndarray) -> bytes:
    # component slowest, xi fastest
    return np.ascontiguousarray(arr.transpose(0, 3, 2, 1)).astype("<f8", copy=False).tobytes()


def _from_disk(buf: bytes, shape) -> np.ndarray:
    c, nx, ny, nz = shape
    arr = np.frombuffer(buf, dtype="<f8").reshape(c, nz, ny, nx)
    return np.ascontiguousarray(arr.transpose(0, 3, 2, 1)).astype(np.float64)


def write_grid(path, block: CurvilinearBlock, rank: int = 0) -> None:
    """Write ``block`` (padded coordinates and pad modes) as ``rank``'s container."""
    ranges = [(o, o + n) for o, n in zip(block.global_offset, block.dims)]
    meta = json.dumps({"pad_modes": block.pad_modes, "periods": block.periods}).encode()
    payload = _to_disk(block.coords)
    sections = [(b"coords", payload), (b"meta", meta)]
    head = _GRID_HEAD.pack(GRID_MAGIC, VERSION, rank, *block.global_dims,
                           *[v for r in ranges for v in r], FRINGE, len(sections))
    offset = _GRID_HEAD.size + _SECTION.size * len(sections)
    index = b""
    for name, data in sections:
        index += _SECTION.pack(name, offset, len(data))
        offset += len(data)
    with open(path, "wb") as fh:
        fh.write(head + index)
        for _, data in sections:
            fh.write(data)


def read_grid(path, rank: Optional[int] = None) -> GridContainer:
    """Read and validate a grid container; ``rank`` must match when given."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != GRID_MAGIC:
        raise MagicMismatch(f"{path}: not a grid container (magic {data[:4]!r})")
    if len(data) < _GRID_HEAD.size:
        raise Truncated("header")
    vals = _GRID_HEAD.unpack_from(data)
    _, version, frank = vals[:3]
    dims = tuple(vals[3:6])
    flat = vals[6:12]
    ranges = tuple((flat[2 * a], flat[2 * a + 1]) for a in range(3))
    fringe, nsec = vals[12], vals[13]
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
    if rank is not None and frank != rank:
        raise RankMismatch(f"{path}: container belongs to rank {frank}, not {rank}")
    if len(data) < _GRID_HEAD.size + nsec * _SECTION.size:
        raise Truncated("index")
    sections = {}
    for s in range(nsec):
        name, off, length = _SECTION.unpack_from(data, _GRID_HEAD.size + s * _SECTION.size)
        name = name.rstrip(b"\0").decode()
        if off + length > len(data):
            raise Truncated(name)
        sections[name] = data[off:off + length]
    for name in ("coords", "meta"):
        if name not in sections:
            raise ContainerError(f"{path}: missing section {name!r}")
    if any(not (0 <= r0 < r1 <= n) for (r0, r1), n in zip(ranges, dims)):
        raise DimensionMismatch(f"{path}: ranges {ranges} outside global dims {dims}")
    shape = (3,) + tuple(r1 - r0 + 2 * fringe for r0, r1 in ranges)
    if len(sections["coords"]) != 8 * int(np.prod(shape)):
        raise DimensionMismatch(
            f"{path}: coordinate payload of {len(sections['coords'])} bytes does not match {shape}")
    coords = _from_disk(sections["coords"], shape)
    try:
        meta = json.loads(sections["meta"].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable meta section: {exc}") from None
    return GridContainer(frank, dims, ranges, fringe, coords, meta)


# ----------------------------------------------------------------------------
# solutions


@dataclass
class Snapshot:
    iteration: int
    time: float
    q: np.ndarray


class SolutionContainer:
    """Appendable per-rank snapshot file."""

    def __init__(self, path, rank: int, dims, ncomp: int = NCOMP):
        self.path = Path(path)
        self.rank = rank
        self.dims = tuple(int(d) for d in dims)
        self.ncomp = ncomp
        self.offsets: List[int] = []
        self.times: List[float] = []

    @classmethod
    def create(cls, path, rank: int, dims, ncomp: int = NCOMP) -> "SolutionContainer":
        sol = cls(path, rank, dims, ncomp)
        head = _SOL_HEAD.pack(SOL_MAGIC, VERSION, rank, *sol.dims, ncomp)
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(sol._trailer(_SOL_HEAD.size))
        return sol

    @classmethod
    def open(cls, path, rank: Optional[int] = None) -> "SolutionContainer":
        data = Path(path).read_bytes()
        frank, dims, ncomp = _sol_header(data, path)
        if rank is not None and frank != rank:
            raise RankMismatch(f"{path}: container belongs to rank {frank}, not {rank}")
        sol = cls(path, frank, dims, ncomp)
        sol.offsets, sol.times, intact = _scan(data, sol.payload_bytes)
        if not intact:
            # drop the torn tail and restore the trailer so appends land correctly
            end = sol.offsets[-1] + _REC_HEAD.size + sol.payload_bytes if sol.offsets else _SOL_HEAD.size
            log.warning("%s: repairing container, keeping %d record(s)", path, len(sol.offsets))
            with open(path, "r+b") as fh:
                fh.truncate(end)
                fh.seek(end)
                fh.write(sol._trailer(end))
        return sol

    @property
    def payload_bytes(self) -> int:
        return 8 * self.ncomp * int(np.prod(self.dims))

    def _trailer(self, index_offset: int) -> bytes:
        body = struct.pack(f"<{len(self.offsets)}Q", *self.offsets)
        return body + _FOOTER.pack(len(self.offsets), index_offset, END_MAGIC)

    def append(self, q, iteration: int, time: float) -> None:
        arr = q.inner if isinstance(q, ConservativeField) else np.asarray(q)
        if arr.shape != (self.ncomp,) + self.dims:
            raise DimensionMismatch(f"snapshot shape {arr.shape} != {(self.ncomp,) + self.dims}")
        if self.times and not time > self.times[-1]:
            raise ValueError(f"snapshot time {time} not after {self.times[-1]}")
        payload = _to_disk(arr)
        rec = _REC_HEAD.pack(REC_MAGIC, len(payload), iteration, float(time), zlib.crc32(payload))
        size = os.path.getsize(self.path)
        data_end = size - _FOOTER.size - 8 * len(self.offsets)
        with open(self.path, "r+b") as fh:
            fh.seek(data_end)
            fh.write(rec + payload)
            end = fh.tell()
            self.offsets.append(data_end)
            self.times.append(float(time))
            fh.truncate(end)
            fh.write(self._trailer(end))
            fh.flush()

    def __len__(self) -> int:
        return len(self.offsets)

    def read(self, i: int = -1) -> Snapshot:
        return read_snapshots(self.path)[i]


def _sol_header(data: bytes, path):
    if len(data) < 4 or data[:4] != SOL_MAGIC:
        raise MagicMismatch(f"{path}: not a solution container (magic {data[:4]!r})")
    if len(data) < _SOL_HEAD.size:
        raise Truncated("header")
    _, version, rank, n0, n1, n2, ncomp = _SOL_HEAD.unpack_from(data)
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
    return rank, (n0, n1, n2), ncomp


def _scan(data: bytes, payload_bytes: int):
    """Record offsets/times, trusting the trailer when it is consistent."""
    offsets, times, ok = _from_trailer(data, payload_bytes)
    if ok:
        return offsets, times, True
    offsets, times = [], []
    pos = _SOL_HEAD.size
    while pos + _REC_HEAD.size <= len(data):
        magic, length, _, t, crc = _REC_HEAD.unpack_from(data, pos)
        if magic != REC_MAGIC or length != payload_bytes:
            break
        start = pos + _REC_HEAD.size
        if start + length > len(data) or zlib.crc32(data[start:start + length]) != crc:
            break
        offsets.append(pos)
        times.append(t)
        pos = start + length
    return offsets, times, False


def _from_trailer(data, payload_bytes):
    if len(data) < _SOL_HEAD.size + _FOOTER.size:
        return [], [], False
    count, index_off, magic = _FOOTER.unpack_from(data, len(data) - _FOOTER.size)
    if magic != END_MAGIC or index_off + 8 * count + _FOOTER.size != len(data):
        return [], [], False
    offsets = list(struct.unpack_from(f"<{count}Q", data, index_off))
    times = []
    for off in offsets:
        if off + _REC_HEAD.size > index_off:
            return [], [], False
        rm, length, _, t, crc = _REC_HEAD.unpack_from(data, off)
        start = off + _REC_HEAD.size
        if rm != REC_MAGIC or length != payload_bytes or start + length > index_off:
            return [], [], False
        if zlib.crc32(data[start:start + length]) != crc:
            return [], [], False
        times.append(t)
    return offsets, times, True


def read_snapshots(path, rank: Optional[int] = None) -> List[Snapshot]:
    """All complete snapshots; torn or corrupt records are never returned."""
    data = Path(path).read_bytes()
    frank, dims, ncomp = _sol_header(data, path)
    if rank is not None and frank != rank:
        raise RankMismatch(f"{path}: container belongs to rank {frank}, not {rank}")
    payload = 8 * ncomp * int(np.prod(dims))
    offsets, _, intact = _scan(data, payload)
    if not intact:
        log.warning("%s: trailer missing or damaged, recovered %d record(s) by scanning", path, len(offsets))
    out = []
    for off in offsets:
        _, length, it, t, _ = _REC_HEAD.unpack_from(data, off)
        start = off + _REC_HEAD.size
        out.append(Snapshot(it, t, _from_disk(data[start:start + length], (ncomp,) + tuple(dims))))
    return out


def append_snapshot(sol: SolutionContainer, q, iteration: int, time: float) -> None:
    sol.append(q, iteration, time)


# ----------------------------------------------------------------------------
# configuration

ALIASES = {"mach": "mach_jet", "pr": "prandtl", "re": "reynolds", "tr": "temperature_ratio"}
REQUIRED = ("mach_jet", "gamma", "prandtl", "dt")
FLOW_KEYS = {f.name for f in fields(FlowConfig)}


@dataclass
class RunParameters:
    """Run settings next to the flow constants.  Defaults are listed here."""

    mesh: Optional[Tuple[int, int, int]] = (32, 32, 37)
    grid_dir: Optional[str] = None
    length: float = 30.0
    height: float = 10.0
    npx: int = 1
    npz: int = 1
    steps: int = 100
    snapshot_interval: int = 0
    exchange: str = "nonblocking"
    output: str = "run_output"


RUN_KEYS = {f.name for f in fields(RunParameters)}


def _parse_mesh(value):
    parts = re.split(r"[x,\s]+", value.strip().lower())
    if len(parts) != 3:
        raise ValueError(f"mesh needs three extents, got {value!r}")
    return tuple(int(p) for p in parts)


_RUN_TYPES = {
    "mesh": _parse_mesh, "grid_dir": str, "length": float, "height": float, "npx": int, "npz": int,
    "steps": int, "snapshot_interval": int, "exchange": str, "output": str,
}


def parse_config(text: str) -> Tuple[FlowConfig, RunParameters]:
    """Parse ``key = value`` lines (``#`` starts a comment).

    Required: mach, gamma, pr, dt.  Unknown keys are rejected; a repeated key
    keeps its last value and logs a warning.
    """
    raw: Dict[str, Tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key.lower(), key.lower())
        if key not in FLOW_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            log.warning("line %d: duplicate key %r, last value wins", lineno, key)
        raw[key] = (lineno, value)
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    flow, run = {}, {}
    for key, (lineno, value) in raw.items():
        try:
            if key in FLOW_KEYS:
                flow[key] = float(value)
            else:
                run[key] = _RUN_TYPES[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: cannot parse {key} = {value!r}") from None
    try:
        cfg = FlowConfig(**flow)
    except ValueError as exc:
        raise ConfigError(f"invalid flow configuration: {exc}") from None
    params = RunParameters(**run)
    if params.exchange not in ("nonblocking", "legacy"):
        raise ConfigError(f"exchange must be 'nonblocking' or 'legacy', got {params.exchange!r}")
    for name in ("npx", "npz", "steps"):
        if getattr(params, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if params.snapshot_interval < 0:
        raise ConfigError("snapshot_interval must be non-negative")
    return cfg, params


def load_config(path) -> Tuple[FlowConfig, RunParameters]:
    return parse_config(Path(path).read_text())

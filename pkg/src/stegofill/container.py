"""Serialized purified-model container.

Binary layout (all integers and floats little-endian):

    offset  field
    0       magic  b"PUSN"
    4       format version        u32  (currently 1)
    8       spec JSON length      u32
    12      spec JSON             utf-8, sorted keys
    .       keep ratio S          f64
    .       maskable count N      u64
    .       kept count p          u64
    .       mask bitmap           ceil(N/8) bytes, packed little-endian bits
    .       kernel payload        N * f32, canonical order, zeros at holes
    .       aux count             u64
    .       aux payload           (biases + GN affine) * f32, canonical order
    .       metadata JSON length  u32
    .       metadata JSON         utf-8

The container is the publishable artifact: it never holds keys, fill
weights, or key hashes. Loading validates the magic, version, bitmap
popcount, payload sizes, the exact-zero constraint at every hole, and that
no trailing bytes follow the metadata.

`digest()` covers the structural content only (spec, S/N/p, bitmap, both
payloads); free-form metadata such as the creation timestamp is excluded so
that identically-seeded training runs produce identical digests.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .netspec import NetworkSpec, ParameterStore, num_aux, num_maskable
from .sparsity import SparseMask

MAGIC = b"PUSN"
VERSION = 1


class ContainerError(ValueError):
    """Raised for malformed, truncated, or constraint-violating containers."""


@dataclass
class ModelContainer:
    spec: NetworkSpec
    mask: SparseMask
    store: ParameterStore          # dense float32, holes exactly zero
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        n = num_maskable(self.spec)
        if self.mask.total != n:
            raise ContainerError(
                f"mask covers {self.mask.total} weights, spec has {n}"
            )
        if int(self.mask.bits.sum()) != self.mask.kept:
            raise ContainerError("bitmap popcount does not match kept count")
        flat = self.store.flat_kernels()
        if flat.size != n:
            raise ContainerError(f"kernel payload has {flat.size} values, expected {n}")
        holes = np.flatnonzero((~self.mask.bits) & (flat != 0.0))
        if holes.size:
            raise ContainerError(f"hole violation at index {int(holes[0])}")
        if self.store.flat_aux().size != num_aux(self.spec):
            raise ContainerError("aux payload size mismatch")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(MAGIC)
        h.update(struct.pack("<I", VERSION))
        h.update(_spec_json(self.spec))
        h.update(struct.pack("<dQQ", self.mask.ratio, self.mask.total, self.mask.kept))
        h.update(self.mask.pack())
        h.update(self.store.flat_kernels().astype("<f4").tobytes())
        h.update(self.store.flat_aux().astype("<f4").tobytes())
        return h.hexdigest()


def _spec_json(spec: NetworkSpec) -> bytes:
    return json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")


def save_container(path: str | Path, container: ModelContainer) -> None:
    container.validate()
    spec_json = _spec_json(container.spec)
    meta_json = json.dumps(container.metadata, sort_keys=True).encode("utf-8")
    kernels = container.store.flat_kernels().astype("<f4")
    aux = container.store.flat_aux().astype("<f4")
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(spec_json)),
        spec_json,
        struct.pack(
            "<dQQ", container.mask.ratio, container.mask.total, container.mask.kept
        ),
        container.mask.pack(),
        kernels.tobytes(),
        struct.pack("<Q", aux.size),
        aux.tobytes(),
        struct.pack("<I", len(meta_json)),
        meta_json,
    ]
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError("truncated container")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)


def load_container(path: str | Path) -> ModelContainer:
    cur = _Cursor(Path(path).read_bytes())
    if cur.take(4) != MAGIC:
        raise ContainerError("bad magic; not a model container")
    (version,) = cur.unpack("<I")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (spec_len,) = cur.unpack("<I")
    try:
        spec = NetworkSpec.from_dict(json.loads(cur.take(spec_len)))
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise ContainerError(f"invalid spec record: {e}") from e
    ratio, total, kept = cur.unpack("<dQQ")
    n = num_maskable(spec)
    if total != n:
        raise ContainerError(f"mask covers {total} weights, spec has {n}")
    bitmap = cur.take((n + 7) // 8)
    try:
        mask = SparseMask.unpack(bitmap, n, ratio, kept)
    except ValueError as e:
        raise ContainerError(str(e)) from e
    kernels = np.frombuffer(cur.take(4 * n), dtype="<f4").copy()
    (aux_count,) = cur.unpack("<Q")
    if aux_count != num_aux(spec):
        raise ContainerError(
            f"aux payload has {aux_count} values, expected {num_aux(spec)}"
        )
    aux = np.frombuffer(cur.take(4 * aux_count), dtype="<f4").copy()
    (meta_len,) = cur.unpack("<I")
    try:
        metadata = json.loads(cur.take(meta_len))
    except json.JSONDecodeError as e:
        raise ContainerError(f"invalid metadata record: {e}") from e
    if not cur.done():
        raise ContainerError("trailing data after container")

    store = ParameterStore.empty(spec, dtype=np.float32)
    store.set_flat_kernels(kernels)
    store.set_flat_aux(aux)
    mask.threshold = _kept_floor(kernels, mask)
    container = ModelContainer(spec=spec, mask=mask, store=store, metadata=metadata)
    container.validate()
    return container


def _kept_floor(kernels: np.ndarray, mask: SparseMask) -> float:
    """Smallest kept-weight magnitude; the live analog of the mask threshold."""
    if mask.kept == 0:
        return math.inf
    return float(np.abs(kernels[mask.bits]).min())

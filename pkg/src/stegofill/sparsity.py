"""Weight initialization and magnitude-ranked sparse mask generation.

The mask decides which kernel positions the purified network keeps; the
complement positions become the key-fillable holes. Ranking is by absolute
value, descending, with ties broken by ascending traversal index, so the
kept count is exactly floor(S * N) for any input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .keymat import xavier_kernel_stream
from .netspec import NetworkSpec, ParameterStore, layout, GN_SCALE


@dataclass
class SparseMask:
    """Bit array over the maskable subset, in canonical traversal order."""

    bits: np.ndarray        # bool, True = kept
    ratio: float            # requested keep-ratio S
    total: int              # N, maskable count
    kept: int               # p = floor(S * N)
    threshold: float        # |w| of the last kept weight; +inf when kept == 0
    w0_seed: int | None = None

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.size != self.total:
            raise ValueError(f"bit count {self.bits.size} != total {self.total}")
        if int(self.bits.sum()) != self.kept:
            raise ValueError(
                f"popcount {int(self.bits.sum())} != kept count {self.kept}"
            )

    @property
    def holes(self) -> np.ndarray:
        """Complement mask: True where a position is key-fillable."""
        return ~self.bits

    def pack(self) -> bytes:
        """Packed little-endian bits (bit i of byte j is index 8*j + i)."""
        return np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def unpack(
        cls,
        data: bytes,
        total: int,
        ratio: float,
        kept: int,
        threshold: float = math.inf,
        w0_seed: int | None = None,
    ) -> "SparseMask":
        expected = (total + 7) // 8
        if len(data) != expected:
            raise ValueError(f"bitmap is {len(data)} bytes, expected {expected}")
        bits = np.unpackbits(
            np.frombuffer(data, dtype=np.uint8), count=total, bitorder="little"
        ).astype(bool)
        return cls(bits, ratio, total, kept, threshold, w0_seed)


def init_weights(spec: NetworkSpec, seed: int, dtype=np.float32) -> ParameterStore:
    """Draw the full starting store: Glorot-uniform kernels from the seeded
    deterministic stream, zero biases, unit group-norm scale, zero shift."""
    store = ParameterStore.empty(spec, dtype=dtype)
    for name, arr in xavier_kernel_stream(spec, seed, dtype=dtype).items():
        store[name] = arr
    for info in layout(spec):
        if info.kind == GN_SCALE:
            store[info.name] = np.ones(info.shape, dtype=dtype)
    return store


def generate_mask(w0: ParameterStore, ratio: float, w0_seed: int | None = None) -> SparseMask:
    """Keep the floor(S*N) largest-magnitude maskable weights of w0."""
    if not (0.0 < ratio <= 1.0):
        raise ValueError(f"keep-ratio must be in (0, 1], got {ratio}")
    mag = np.abs(w0.flat_kernels().astype(np.float64))
    total = mag.size
    if total == 0:
        raise ValueError("store has no maskable weights")
    kept = math.floor(ratio * total)
    # stable sort on descending magnitude: equal magnitudes keep ascending index
    order = np.argsort(-mag, kind="stable")
    bits = np.zeros(total, dtype=bool)
    bits[order[:kept]] = True
    threshold = float(mag[order[kept - 1]]) if kept > 0 else math.inf
    return SparseMask(bits, float(ratio), total, kept, threshold, w0_seed)


def apply_mask(store: ParameterStore, mask: SparseMask) -> ParameterStore:
    """Zero the hole positions of a store (out of place)."""
    out = store.copy()
    flat = out.flat_kernels()
    if flat.size != mask.total:
        raise ValueError(f"mask covers {mask.total} weights, store has {flat.size}")
    flat[mask.holes] = 0.0
    out.set_flat_kernels(flat)
    return out

"""Declarative network layout and ordered parameter storage.

The layer stack is a plain chain of convolutions. A group-norm plus
leaky-ReLU block precedes every conv except the first and the last one,
and additive identity shortcuts span pairs of convs inside ``skip_range``,
merged on the raw conv outputs (before the next normalization).

Everything downstream (mask generation, key-derived fills, the container
format) depends on one canonical parameter traversal order, defined here:

    layer index ascending; within a layer: conv kernel (row-major over
    [out_channel, in_channel, row, col]), then bias if the layer has one,
    then the scale and shift of the group-norm that feeds this layer.

The "maskable subset" is exactly the conv kernel entries. Biases and
group-norm parameters are never maskable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

KERNEL = "kernel"
BIAS = "bias"
GN_SCALE = "gn_scale"
GN_SHIFT = "gn_shift"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; all structural choices live here."""

    num_conv_layers: int = 19
    channels: int = 64
    kernel: int = 3
    gn_groups: int = 8
    lrelu_slope: float = 0.2
    skip_range: tuple[int, int] | None = (4, 16)
    split_layer: int = 10
    io_channels: int = 3
    bias_layers: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.bias_layers:
            object.__setattr__(self, "bias_layers", (1, self.num_conv_layers))
        object.__setattr__(self, "bias_layers", tuple(sorted(set(self.bias_layers))))
        self.validate()

    def validate(self) -> None:
        L = self.num_conv_layers
        if L < 3:
            raise ValueError(f"need at least 3 conv layers, got {L}")
        if self.channels < 2:
            raise ValueError(f"hidden channel count must be >= 2, got {self.channels}")
        if self.channels % 2 != 0:
            raise ValueError("split layer needs even filter count")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.kernel}")
        if self.gn_groups < 1 or self.channels % self.gn_groups != 0:
            raise ValueError(
                f"gn_groups={self.gn_groups} must divide channels={self.channels}"
            )
        if not (1 < self.split_layer < L):
            raise ValueError(
                f"split_layer={self.split_layer} must satisfy 1 < split < {L}"
            )
        if self.io_channels < 1:
            raise ValueError("io_channels must be positive")
        if self.lrelu_slope < 0:
            raise ValueError("lrelu_slope must be non-negative")
        if self.skip_range is not None:
            lo, hi = self.skip_range
            if not (1 <= lo < hi <= L - 1):
                raise ValueError(
                    f"skip_range endpoints ({lo}, {hi}) outside layer range 1..{L - 1}"
                )
        for k in self.bias_layers:
            if not (1 <= k <= L):
                raise ValueError(f"bias layer {k} outside 1..{L}")

    # -- structural helpers ------------------------------------------------

    def conv_channels(self, k: int) -> tuple[int, int]:
        """(out_channels, in_channels) of conv layer k (1-based)."""
        cin = self.io_channels if k == 1 else self.channels
        cout = self.io_channels if k == self.num_conv_layers else self.channels
        return cout, cin

    def has_gn(self, k: int) -> bool:
        return 2 <= k <= self.num_conv_layers - 1

    def skip_pairs(self) -> list[tuple[int, int]]:
        """(source, target) layer pairs of the identity shortcuts."""
        if self.skip_range is None:
            return []
        lo, hi = self.skip_range
        return [(s, s + 2) for s in range(lo, hi - 1, 2)]

    def to_dict(self) -> dict:
        return {
            "num_conv_layers": self.num_conv_layers,
            "channels": self.channels,
            "kernel": self.kernel,
            "gn_groups": self.gn_groups,
            "lrelu_slope": self.lrelu_slope,
            "skip_range": list(self.skip_range) if self.skip_range else None,
            "split_layer": self.split_layer,
            "io_channels": self.io_channels,
            "bias_layers": list(self.bias_layers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        if d.get("skip_range") is not None:
            d["skip_range"] = tuple(d["skip_range"])
        d["bias_layers"] = tuple(d.get("bias_layers") or ())
        return cls(**d)


@dataclass(frozen=True)
class ParamInfo:
    name: str
    kind: str
    layer: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def layout(spec: NetworkSpec) -> list[ParamInfo]:
    """Canonical traversal order of every parameter in the network."""
    infos: list[ParamInfo] = []
    K = spec.kernel
    for k in range(1, spec.num_conv_layers + 1):
        cout, cin = spec.conv_channels(k)
        infos.append(ParamInfo(f"conv{k:02d}.weight", KERNEL, k, (cout, cin, K, K)))
        if k in spec.bias_layers:
            infos.append(ParamInfo(f"conv{k:02d}.bias", BIAS, k, (cout,)))
        if spec.has_gn(k):
            infos.append(ParamInfo(f"gn{k:02d}.scale", GN_SCALE, k, (spec.channels,)))
            infos.append(ParamInfo(f"gn{k:02d}.shift", GN_SHIFT, k, (spec.channels,)))
    return infos


def kernel_layout(spec: NetworkSpec) -> list[ParamInfo]:
    return [i for i in layout(spec) if i.kind == KERNEL]


def num_maskable(spec: NetworkSpec) -> int:
    """Total count of maskable (conv kernel) entries."""
    return sum(i.size for i in kernel_layout(spec))


def num_aux(spec: NetworkSpec) -> int:
    """Total count of non-maskable entries (biases + group-norm affine)."""
    return sum(i.size for i in layout(spec) if i.kind != KERNEL)


class ParameterStore:
    """Ordered, named collection of weight arrays.

    Holds a subset of (or the whole) canonical layout. Arrays are numpy,
    float32 unless built otherwise; iteration order is the traversal order.
    """

    def __init__(self, infos: list[ParamInfo], arrays: dict[str, np.ndarray]):
        self.infos = list(infos)
        self.arrays = {}
        for info in self.infos:
            arr = np.asarray(arrays[info.name])
            if tuple(arr.shape) != info.shape:
                raise ValueError(
                    f"{info.name}: shape {arr.shape} != layout shape {info.shape}"
                )
            self.arrays[info.name] = arr

    @classmethod
    def empty(cls, spec: NetworkSpec, dtype=np.float32) -> "ParameterStore":
        infos = layout(spec)
        return cls(infos, {i.name: np.zeros(i.shape, dtype=dtype) for i in infos})

    @classmethod
    def kernels_only(cls, spec: NetworkSpec, dtype=np.float32) -> "ParameterStore":
        infos = kernel_layout(spec)
        return cls(infos, {i.name: np.zeros(i.shape, dtype=dtype) for i in infos})

    def __iter__(self) -> Iterator[tuple[ParamInfo, np.ndarray]]:
        for info in self.infos:
            yield info, self.arrays[info.name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        info = next((i for i in self.infos if i.name == name), None)
        if info is None:
            raise KeyError(name)
        value = np.asarray(value)
        if tuple(value.shape) != info.shape:
            raise ValueError(f"{name}: shape {value.shape} != {info.shape}")
        self.arrays[name] = value

    def __len__(self) -> int:
        return len(self.infos)

    @property
    def total_size(self) -> int:
        return sum(i.size for i in self.infos)

    def kernel_infos(self) -> list[ParamInfo]:
        return [i for i in self.infos if i.kind == KERNEL]

    @property
    def num_maskable(self) -> int:
        return sum(i.size for i in self.kernel_infos())

    def flat_kernels(self) -> np.ndarray:
        """All maskable entries, 1-D, canonical order."""
        ks = [self.arrays[i.name].ravel() for i in self.kernel_infos()]
        if not ks:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate(ks)

    def set_flat_kernels(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat)
        if flat.size != self.num_maskable:
            raise ValueError(f"expected {self.num_maskable} values, got {flat.size}")
        off = 0
        for info in self.kernel_infos():
            chunk = flat[off : off + info.size]
            self.arrays[info.name] = (
                chunk.reshape(info.shape).astype(self.arrays[info.name].dtype)
            )
            off += info.size

    def flat_aux(self) -> np.ndarray:
        """All non-maskable entries (biases, GN affine), 1-D, canonical order."""
        xs = [self.arrays[i.name].ravel() for i in self.infos if i.kind != KERNEL]
        if not xs:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate(xs)

    def set_flat_aux(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat)
        aux = [i for i in self.infos if i.kind != KERNEL]
        if flat.size != sum(i.size for i in aux):
            raise ValueError("aux payload size mismatch")
        off = 0
        for info in aux:
            chunk = flat[off : off + info.size]
            self.arrays[info.name] = (
                chunk.reshape(info.shape).astype(self.arrays[info.name].dtype)
            )
            off += info.size

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.infos, {n: a.copy() for n, a in self.arrays.items()})

    def astype(self, dtype) -> "ParameterStore":
        return ParameterStore(
            self.infos, {n: a.astype(dtype) for n, a in self.arrays.items()}
        )

    def digest(self) -> str:
        """SHA-256 over the canonical little-endian float32 payload."""
        h = hashlib.sha256()
        h.update(self.flat_kernels().astype("<f4").tobytes())
        h.update(self.flat_aux().astype("<f4").tobytes())
        return h.hexdigest()

    def allfinite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays.values())


def default_spec() -> NetworkSpec:
    return NetworkSpec()


def toy_spec(num_conv_layers: int = 9, channels: int = 16, **overrides) -> NetworkSpec:
    """Reduced geometry with the same structural character as the default.

    Shortcut range and split layer scale down with depth unless overridden.
    """
    fields = dict(
        num_conv_layers=num_conv_layers,
        channels=channels,
        gn_groups=min(8, channels) if channels % min(8, channels) == 0 else 1,
        split_layer=(num_conv_layers + 1) // 2,
    )
    if num_conv_layers >= 9:
        fields["skip_range"] = (4, num_conv_layers - 1)
    else:
        fields["skip_range"] = None
    fields.update(overrides)
    return NetworkSpec(**fields)

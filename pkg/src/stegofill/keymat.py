"""Key-to-weights derivation and network triggering.

Everything here is pinned bit-for-bit so two independent parties holding the
same key material reconstruct identical weights on any platform:

  * key -> seed: FNV-1a, 64-bit (offset 0xcbf29ce484222325, prime 0x100000001b3)
    over the key's UTF-8 bytes.
  * seed -> stream: SplitMix64. State advances by 0x9E3779B97F4A7C15 per
    output; each output word is finalized with the standard two xor-multiply
    rounds.
  * word -> uniform: top 53 bits divided by 2**53, giving u in [0, 1).
  * uniform -> weight: Glorot-uniform, (2u - 1) * sqrt(6 / (fan_in + fan_out))
    with fan_in = in_channels * kh * kw, fan_out = out_channels * kh * kw.

Fill weights are drawn densely for every maskable position in canonical
traversal order, independent of any mask, so the value generated for a given
position never depends on which positions happen to be holes.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .netspec import NetworkSpec, ParameterStore, kernel_layout

if TYPE_CHECKING:
    from .container import ModelContainer

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

MODES = ("denoise", "encode", "decode")


def derive_seed(key: str | bytes) -> int:
    """FNV-1a 64-bit hash of the key bytes."""
    data = key.encode("utf-8") if isinstance(key, str) else bytes(key)
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of a SplitMix64 stream, as uint64."""
    if count < 0:
        raise ValueError("count must be non-negative")
    with np.errstate(over="ignore"):
        steps = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + steps * _SPLITMIX_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform01(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to float64 in [0, 1) via their top 53 bits."""
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def kernel_fans(shape: tuple[int, ...]) -> tuple[int, int]:
    cout, cin, kh, kw = shape
    return cin * kh * kw, cout * kh * kw


def xavier_kernel_stream(
    spec: NetworkSpec, seed: int, dtype=np.float32
) -> dict[str, np.ndarray]:
    """Glorot-uniform values for every conv kernel, in traversal order.

    One uninterrupted SplitMix64 stream covers all layers; each kernel
    consumes its entries row-major, so any position's value is a pure
    function of (spec, seed).
    """
    infos = kernel_layout(spec)
    total = sum(i.size for i in infos)
    u = uniform01(splitmix64(seed, total))
    out: dict[str, np.ndarray] = {}
    off = 0
    for info in infos:
        fan_in, fan_out = kernel_fans(info.shape)
        a = glorot_bound(fan_in, fan_out)
        vals = (2.0 * u[off : off + info.size] - 1.0) * a
        out[info.name] = vals.reshape(info.shape).astype(dtype)
        off += info.size
    return out


def synthesize_fill(
    spec: NetworkSpec, key: str | bytes, dtype=np.float32
) -> ParameterStore:
    """Dense fill weights over the maskable subset, derived from the key."""
    kernels = xavier_kernel_stream(spec, derive_seed(key), dtype=dtype)
    return ParameterStore(kernel_layout(spec), kernels)


def trigger(
    container: "ModelContainer", key: str | bytes | None, mode: str
) -> ParameterStore:
    """Compose the purified weights with key-derived fill at the holes.

    ``denoise`` returns the purified weights with holes exactly zero and
    ignores the key; ``encode``/``decode`` substitute the fill values at
    every hole. Biases and group-norm parameters pass through unchanged.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    container.validate()
    dense = container.store.copy()
    if mode == "denoise":
        return dense
    if key is None:
        raise ValueError(f"mode {mode!r} requires a key")
    fill = synthesize_fill(container.spec, key)
    bits = container.mask.bits
    flat = dense.flat_kernels()
    flat[~bits] = fill.flat_kernels()[~bits]
    dense.set_flat_kernels(flat)
    return dense

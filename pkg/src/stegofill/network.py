"""Network executor: denoise, encode, and decode forward modes.

One parameter set drives all three modes. Encode duplicates the prefix
(layers before the split) into two weight-shared branches for the cover and
the secret image, convolves each branch with one half of the split layer's
filters (output-channel split), concatenates, and continues through the
suffix. Shortcut pairs that would cross the split boundary cannot be formed
in encode mode (the per-branch tensors have half the channel count at the
merge point) and are skipped there; all other pairs behave identically in
every mode.

Kernels are composed at use time as where(mask, W, fill): gradients reach
only the kept positions, and a missing fill means holes read as zero.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .netspec import NetworkSpec, ParameterStore, layout
from .sparsity import SparseMask

GN_EPS = 1e-5

FillTensors = dict[int, torch.Tensor]


class FillNet(nn.Module):
    """Executor bound to a spec; parameters follow the canonical layout."""

    def __init__(self, spec: NetworkSpec, dtype: torch.dtype = torch.float32):
        super().__init__()
        spec.validate()
        self.spec = spec
        self._dtype = dtype
        L = spec.num_conv_layers
        K = spec.kernel
        self.pad = K // 2

        kernels = []
        for k in range(1, L + 1):
            cout, cin = spec.conv_channels(k)
            kernels.append(nn.Parameter(torch.zeros(cout, cin, K, K, dtype=dtype)))
            self.register_buffer(
                f"mask_{k}", torch.ones(cout, cin, K, K, dtype=torch.bool)
            )
        self.kernels = nn.ParameterList(kernels)
        self.biases = nn.ParameterDict(
            {
                str(k): nn.Parameter(torch.zeros(spec.conv_channels(k)[0], dtype=dtype))
                for k in spec.bias_layers
            }
        )
        self.gn_scales = nn.ParameterDict(
            {
                str(k): nn.Parameter(torch.ones(spec.channels, dtype=dtype))
                for k in range(1, L + 1)
                if spec.has_gn(k)
            }
        )
        self.gn_shifts = nn.ParameterDict(
            {
                str(k): nn.Parameter(torch.zeros(spec.channels, dtype=dtype))
                for k in range(1, L + 1)
                if spec.has_gn(k)
            }
        )
        self._sources = {s for s, _ in spec.skip_pairs()}
        self._targets = {t for _, t in spec.skip_pairs()}

    # -- parameter plumbing -------------------------------------------------

    def mask_buffer(self, k: int) -> torch.Tensor:
        return getattr(self, f"mask_{k}")

    def set_mask(self, mask: SparseMask | None) -> None:
        """Install kept/hole bits; None means fully dense."""
        if mask is None:
            for k in range(1, self.spec.num_conv_layers + 1):
                self.mask_buffer(k).fill_(True)
            return
        flat = torch.from_numpy(np.ascontiguousarray(mask.bits))
        off = 0
        for k in range(1, self.spec.num_conv_layers + 1):
            buf = self.mask_buffer(k)
            n = buf.numel()
            buf.copy_(flat[off : off + n].view(buf.shape))
            off += n
        if off != flat.numel():
            raise ValueError(f"mask covers {flat.numel()} weights, net has {off}")

    def load_store(self, store: ParameterStore) -> None:
        with torch.no_grad():
            for info in layout(self.spec):
                t = self._param_for(info.name)
                t.copy_(torch.from_numpy(np.ascontiguousarray(store[info.name])))

    def extract_store(self, dtype=np.float32) -> ParameterStore:
        infos = layout(self.spec)
        arrays = {
            i.name: self._param_for(i.name).detach().cpu().numpy().astype(dtype)
            for i in infos
        }
        return ParameterStore(infos, arrays)

    def _param_for(self, name: str) -> torch.Tensor:
        head, kind = name.split(".")
        if head.startswith("conv"):
            k = int(head[4:])
            if kind == "weight":
                return self.kernels[k - 1]
            if kind == "bias":
                return self.biases[str(k)]
        elif head.startswith("gn"):
            k = int(head[2:])
            if kind == "scale":
                return self.gn_scales[str(k)]
            if kind == "shift":
                return self.gn_shifts[str(k)]
        raise KeyError(name)

    def fill_tensors(self, fill: ParameterStore | None) -> FillTensors | None:
        """Convert a kernels-only store into per-layer tensors for forward."""
        if fill is None:
            return None
        out: FillTensors = {}
        for k in range(1, self.spec.num_conv_layers + 1):
            arr = fill[f"conv{k:02d}.weight"]
            out[k] = torch.from_numpy(np.ascontiguousarray(arr)).to(self._dtype)
        return out

    # -- forward machinery ----------------------------------------------------

    def _kernel(self, k: int, fill: FillTensors | None) -> torch.Tensor:
        w = self.kernels[k - 1]
        mask = self.mask_buffer(k)
        if fill is None:
            return torch.where(mask, w, torch.zeros((), dtype=w.dtype))
        return torch.where(mask, w, fill[k])

    def _bias(self, k: int) -> torch.Tensor | None:
        return self.biases[str(k)] if str(k) in self.biases else None

    def _pre(self, k: int, x: torch.Tensor) -> torch.Tensor:
        """GN + LReLU block preceding conv k (identity on first/last)."""
        if not self.spec.has_gn(k):
            return x
        x = F.group_norm(
            x, self.spec.gn_groups, self.gn_scales[str(k)], self.gn_shifts[str(k)], GN_EPS
        )
        return F.leaky_relu(x, self.spec.lrelu_slope)

    def _conv(self, k: int, x: torch.Tensor, fill: FillTensors | None) -> torch.Tensor:
        return F.conv2d(x, self._kernel(k, fill), self._bias(k), padding=self.pad)

    def _run_chain(
        self,
        x: torch.Tensor,
        first: int,
        last: int,
        fill: FillTensors | None,
        stash: torch.Tensor | None,
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Run convs first..last on an already-produced signal x."""
        for k in range(first, last + 1):
            h = self._conv(k, self._pre(k, x), fill)
            if k in self._targets and stash is not None:
                h = h + stash
            if k in self._sources:
                stash = h
            x = h
        return x, stash

    def forward_denoise(self, x: torch.Tensor, fill: FillTensors | None = None) -> torch.Tensor:
        x = self._check_input(x)
        h = self._conv(1, x, fill)
        stash = h if 1 in self._sources else None
        out, _ = self._run_chain(h, 2, self.spec.num_conv_layers, fill, stash)
        return out

    forward_decode = forward_denoise

    def prefix_features(
        self, x: torch.Tensor, fill: FillTensors | None = None
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """One branch of the shared prefix: layers 1 .. split-1."""
        x = self._check_input(x)
        h = self._conv(1, x, fill)
        stash = h if 1 in self._sources else None
        return self._run_chain(h, 2, self.spec.split_layer - 1, fill, stash)

    def forward_encode(
        self, x_co: torch.Tensor, x_se: torch.Tensor, fill: FillTensors | None = None
    ) -> torch.Tensor:
        if x_co.shape != x_se.shape:
            raise ValueError(
                f"mismatched cover/secret shapes: {tuple(x_co.shape)} vs {tuple(x_se.shape)}"
            )
        split = self.spec.split_layer
        f_co, _ = self.prefix_features(x_co, fill)
        f_se, _ = self.prefix_features(x_se, fill)

        w = self._kernel(split, fill)
        half = w.shape[0] // 2
        b = self._bias(split)
        b_co, b_se = (b[:half], b[half:]) if b is not None else (None, None)
        pad = self.pad
        h = torch.cat(
            [
                F.conv2d(self._pre(split, f_co), w[:half], b_co, padding=pad),
                F.conv2d(self._pre(split, f_se), w[half:], b_se, padding=pad),
            ],
            dim=1,
        )
        # shortcut pairs crossing the split cannot merge (per-branch tensors);
        # the chain restarts from the merged signal
        stash = h if split in self._sources else None
        out, _ = self._run_chain(h, split + 1, self.spec.num_conv_layers, fill, stash)
        return out

    def _check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() not in (3, 4):
            raise ValueError(f"expected (C,H,W) or (B,C,H,W), got {tuple(x.shape)}")
        c = x.shape[-3]
        if c != self.spec.io_channels:
            raise ValueError(
                f"input has {c} channels, spec expects {self.spec.io_channels}"
            )
        return x


def build_network(
    spec: NetworkSpec, dtype: torch.dtype = torch.float32
) -> tuple[ParameterStore, FillNet]:
    """Empty-valued store with the canonical layout plus its bound executor."""
    return ParameterStore.empty(spec, dtype=_np_dtype(dtype)), FillNet(spec, dtype=dtype)


def _np_dtype(dtype: torch.dtype):
    return np.float64 if dtype == torch.float64 else np.float32


def _as_batched(x: np.ndarray, dtype: torch.dtype) -> tuple[torch.Tensor, bool]:
    arr = np.ascontiguousarray(x, dtype=_np_dtype(dtype))
    t = torch.from_numpy(arr)
    if t.dim() == 3:
        return t.unsqueeze(0), True
    return t, False


def _run(net: FillNet, mode: str, *images: np.ndarray) -> np.ndarray:
    ts, squeezed = zip(*(_as_batched(im, net._dtype) for im in images))
    with torch.no_grad():
        if mode == "encode":
            out = net.forward_encode(*ts)
        elif mode == "decode":
            out = net.forward_decode(*ts)
        else:
            out = net.forward_denoise(*ts)
    out_np = out.numpy()
    return out_np[0] if squeezed[0] else out_np


def executor_for(params: ParameterStore, spec: NetworkSpec, dtype=torch.float32) -> FillNet:
    """Dense executor: every position reads straight from the store."""
    net = FillNet(spec, dtype=dtype)
    net.load_store(params)
    net.set_mask(None)
    return net


def forward_denoise(params: ParameterStore, spec: NetworkSpec, x_no: np.ndarray) -> np.ndarray:
    return _run(executor_for(params, spec), "denoise", x_no)


def forward_encode(
    params: ParameterStore, spec: NetworkSpec, x_co: np.ndarray, x_se: np.ndarray
) -> np.ndarray:
    return _run(executor_for(params, spec), "encode", x_co, x_se)


def forward_decode(params: ParameterStore, spec: NetworkSpec, x_st: np.ndarray) -> np.ndarray:
    return _run(executor_for(params, spec), "decode", x_st)

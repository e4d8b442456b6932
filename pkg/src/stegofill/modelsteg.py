"""Model steganalysis: weight-distribution distance, random-key leakage
trials, and the denoising performance gap against a clean baseline.

These are the checks an inspector would run on a published model to decide
whether it secretly carries other networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .container import ModelContainer
from .keymat import trigger
from .metrics import QualityReport, evaluate_pair
from .netspec import ParameterStore
from .network import FillNet, executor_for


def emd_weights(a: ParameterStore, b: ParameterStore) -> float:
    """1-D Wasserstein-1 distance between two stores' kernel-weight samples.

    Exact sorted-sample formulation: the integral of the absolute difference
    between the two empirical CDFs, which equals the integrated quantile
    difference. Sample sizes may differ.
    """
    u = np.sort(a.flat_kernels().astype(np.float64))
    v = np.sort(b.flat_kernels().astype(np.float64))
    if u.size == 0 or v.size == 0:
        raise ValueError("empty store")
    support = np.concatenate([u, v])
    support.sort(kind="mergesort")
    deltas = np.diff(support)
    cdf_u = np.searchsorted(u, support[:-1], side="right") / u.size
    cdf_v = np.searchsorted(v, support[:-1], side="right") / v.size
    return float(np.sum(np.abs(cdf_u - cdf_v) * deltas))


def emd_matrix(stores: list[ParameterStore]) -> np.ndarray:
    """Square table of pairwise kernel-weight EMDs."""
    n = len(stores)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = m[j, i] = emd_weights(stores[i], stores[j])
    return m


# -- random-key leakage -------------------------------------------------------

@dataclass
class LeakageTrial:
    key_hex: str
    stego_psnr: float
    stego_apd: float
    rec_psnr: float
    rec_apd: float


@dataclass
class LeakageReport:
    trials: list[LeakageTrial]

    def _stat(self, attr: str) -> tuple[float, float]:
        vals = np.array([getattr(t, attr) for t in self.trials], dtype=np.float64)
        return float(vals.mean()), float(vals.std())

    @property
    def stego_psnr(self) -> tuple[float, float]:
        return self._stat("stego_psnr")

    @property
    def stego_apd(self) -> tuple[float, float]:
        return self._stat("stego_apd")

    @property
    def rec_psnr(self) -> tuple[float, float]:
        return self._stat("rec_psnr")

    @property
    def rec_apd(self) -> tuple[float, float]:
        return self._stat("rec_apd")

    def csv_rows(self) -> list[str]:
        rows = ["trial,key,stego_psnr,stego_apd,rec_psnr,rec_apd"]
        for i, t in enumerate(self.trials):
            rows.append(
                f"{i},{t.key_hex},{t.stego_psnr:.4f},{t.stego_apd:.4f},"
                f"{t.rec_psnr:.4f},{t.rec_apd:.4f}"
            )
        return rows

    def summary(self) -> str:
        sp, sa, rp, ra = (
            self.stego_psnr, self.stego_apd, self.rec_psnr, self.rec_apd
        )
        return (
            f"trials={len(self.trials)} "
            f"stego_psnr={sp[0]:.2f}+/-{sp[1]:.2f} stego_apd={sa[0]:.2f}+/-{sa[1]:.2f} "
            f"rec_psnr={rp[0]:.2f}+/-{rp[1]:.2f} rec_apd={ra[0]:.2f}+/-{ra[1]:.2f}"
        )


def random_keys(n: int, seed: int, nbytes: int = 32) -> list[bytes]:
    """Attack keys: uniform byte strings from a dedicated seeded stream.

    Real trigger keys are human-chosen strings, so a 32-byte uniform draw
    collides with them only with negligible probability.
    """
    rng = np.random.default_rng(seed)
    return [rng.bytes(nbytes) for _ in range(n)]


def leakage_trials(
    container: ModelContainer,
    n_trials: int,
    key_seed: int,
    covers: np.ndarray,
    secrets: np.ndarray,
    stegos: np.ndarray,
) -> LeakageReport:
    """Attack the container with n random keys.

    Per trial: trigger the encoder with the random key and score its stego
    output against the covers; trigger the decoder with the same random key
    on the genuine stego images (made by the holder of the real encoder key)
    and score the output against the secrets.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if len(covers) == 0 or len(covers) != len(secrets) or len(covers) != len(stegos):
        raise ValueError("covers, secrets, and stegos must be non-empty, same length")
    container.validate()
    net = FillNet(container.spec)
    net.set_mask(None)

    trials = []
    for key in random_keys(n_trials, key_seed):
        enc = trigger(container, key, "encode")
        net.load_store(enc)
        fake_stego = _forward(net, "encode", covers, secrets)
        dec = trigger(container, key, "decode")
        net.load_store(dec)
        fake_rec = _forward(net, "decode", stegos)

        s_psnr, s_apd = _avg_quality(covers, fake_stego)
        r_psnr, r_apd = _avg_quality(secrets, fake_rec)
        trials.append(LeakageTrial(key.hex(), s_psnr, s_apd, r_psnr, r_apd))
    return LeakageReport(trials)


def _forward(net: FillNet, mode: str, *arrays: np.ndarray) -> np.ndarray:
    ts = [torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32)) for a in arrays]
    with torch.no_grad():
        if mode == "encode":
            out = net.forward_encode(*ts)
        elif mode == "decode":
            out = net.forward_decode(*ts)
        else:
            out = net.forward_denoise(*ts)
    return out.numpy()


def _avg_quality(refs: np.ndarray, tests: np.ndarray) -> tuple[float, float]:
    reports = [evaluate_pair(r, t) for r, t in zip(refs, tests)]
    return (
        float(np.mean([r.psnr for r in reports])),
        float(np.mean([r.apd for r in reports])),
    )


# -- performance reduction ------------------------------------------------------

@dataclass
class PerformanceGap:
    """Per-metric baseline-minus-purified deltas on the denoising task."""

    psnr: float
    ssim: float
    apd: float
    rmse: float


def performance_gap(
    purified: ModelContainer,
    baseline: ModelContainer,
    noisy_set: list[tuple[np.ndarray, np.ndarray]],
) -> PerformanceGap:
    """Denoise every (clean, noisy) pair with both models; average both
    score sets and return baseline minus purified per metric."""
    if purified.spec != baseline.spec:
        raise ValueError("containers use different network specs")
    if not noisy_set:
        raise ValueError("empty evaluation set")

    def scores(container: ModelContainer) -> list[QualityReport]:
        net = executor_for(container.store, container.spec)
        return [
            evaluate_pair(clean, _forward(net, "denoise", noisy[None])[0])
            for clean, noisy in noisy_set
        ]

    s_pure = scores(purified)
    s_base = scores(baseline)

    def mean(rs, attr):
        return float(np.mean([getattr(r, attr) for r in rs]))

    return PerformanceGap(
        psnr=mean(s_base, "psnr") - mean(s_pure, "psnr"),
        ssim=mean(s_base, "ssim") - mean(s_pure, "ssim"),
        apd=mean(s_base, "apd") - mean(s_pure, "apd"),
        rmse=mean(s_base, "rmse") - mean(s_pure, "rmse"),
    )

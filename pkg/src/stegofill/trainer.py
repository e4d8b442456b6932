"""Joint training of the shared weights on the three simultaneous tasks.

Every step runs three forwards through the one parameter set: denoising with
the holes reading zero, encoding with the encoder-key fill, and decoding of
the just-produced stego with the decoder-key fill. The decode path consumes
the live stego tensor, so recovery gradients flow back through the encoder.
Only the shared set is updated: kept kernel positions plus all biases and
group-norm parameters. Hole positions stay exactly zero and the fill weights
are never touched by the optimizer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .container import ModelContainer, save_container
from .datapipe import DatasetManifest, PatchSampler, TrainBatch
from .netspec import NetworkSpec, default_spec
from .network import FillNet, FillTensors
from .keymat import synthesize_fill
from .sparsity import apply_mask, generate_mask, init_weights


class TrainingDivergence(RuntimeError):
    """Raised when a loss goes non-finite; carries (iteration, loss triple)."""

    def __init__(self, iteration: int, losses: tuple[float, float, float]):
        super().__init__(
            f"non-finite loss at iteration {iteration}: "
            f"emb={losses[0]}, rec={losses[1]}, den={losses[2]}"
        )
        self.iteration = iteration
        self.losses = losses


@dataclass
class TrainConfig:
    spec: NetworkSpec = field(default_factory=default_spec)
    lambda_e: float = 1.0
    lambda_r: float = 0.75
    lambda_d: float = 0.25
    lr0: float = 1e-4
    halve_every: int = 500
    weight_decay: float = 1e-5
    batch: int = 8
    crop: int = 256
    noise_sigma: float = 20.0
    sparse_ratio: float = 0.9
    iterations: int = 3000
    w0_seed: int = 0
    data_seed: int = 0
    encode_key: str = ""
    decode_key: str = ""
    deterministic: bool = False

    def validate(self) -> None:
        if min(self.lambda_e, self.lambda_r, self.lambda_d) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_e + self.lambda_r + self.lambda_d == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.lr0 <= 0:
            raise ValueError("initial learning rate must be positive")
        if self.halve_every < 1:
            raise ValueError("halve_every must be >= 1")
        if self.batch % 2 != 0 or self.batch < 2:
            raise ValueError("batch must be even (half covers, half secrets)")
        if not (0 < self.sparse_ratio <= 1):
            raise ValueError("sparse_ratio must be in (0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.crop < 1:
            raise ValueError("crop must be positive")

    NUMERIC_KEYS = {
        "lambda_e": float, "lambda_r": float, "lambda_d": float,
        "lr0": float, "halve_every": int, "weight_decay": float,
        "batch": int, "crop": int, "noise_sigma": float,
        "sparse_ratio": float, "iterations": int,
        "w0_seed": int, "data_seed": int, "deterministic": lambda v: v in ("1", "true", "yes"),
    }
    SPEC_KEYS = {
        "num_conv_layers": int, "channels": int, "kernel": int,
        "gn_groups": int, "lrelu_slope": float, "split_layer": int,
        "io_channels": int,
    }

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Parse a key=value config file ('#' starts a comment).

        Network keys (num_conv_layers, channels, ...) shape the spec;
        skip_lo/skip_hi set the shortcut range (skip=none disables it).
        Keys are never read from files; pass them separately.
        """
        values: dict[str, str] = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw!r}")
            k, v = (part.strip() for part in line.split("=", 1))
            values[k] = v

        spec_kwargs = {}
        for k, conv in cls.SPEC_KEYS.items():
            if k in values:
                spec_kwargs[k] = conv(values.pop(k))
        if values.pop("skip", None) == "none":
            spec_kwargs["skip_range"] = None
        elif "skip_lo" in values or "skip_hi" in values:
            spec_kwargs["skip_range"] = (
                int(values.pop("skip_lo")),
                int(values.pop("skip_hi")),
            )
        cfg_kwargs = {}
        for k, conv in cls.NUMERIC_KEYS.items():
            if k in values:
                cfg_kwargs[k] = conv(values.pop(k))
        if values:
            raise ValueError(f"unknown config keys: {sorted(values)}")
        cfg = cls(spec=NetworkSpec(**spec_kwargs), **cfg_kwargs)
        cfg.validate()
        return cfg


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Step size at a 0-based iteration: halved every `halve_every` steps."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return config.lr0 * 2.0 ** -(iteration // config.halve_every)


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    d = a - b
    return (d * d).mean()


def compute_losses(x_st, x_co, x_rec, x_se, x_d, x_cl):
    """(embedding, recovery, denoising) mean-squared errors."""
    ts = [torch.as_tensor(np.asarray(v)) if not torch.is_tensor(v) else v
          for v in (x_st, x_co, x_rec, x_se, x_d, x_cl)]
    return mse(ts[0], ts[1]), mse(ts[2], ts[3]), mse(ts[4], ts[5])


class TrainState:
    """Owns the network, mask, frozen fills, and optimizer moments."""

    def __init__(self, config: TrainConfig):
        config.validate()
        self.config = config
        if config.deterministic:
            torch.set_num_threads(1)
        spec = config.spec

        w0 = init_weights(spec, config.w0_seed)
        self.mask = generate_mask(w0, config.sparse_ratio, w0_seed=config.w0_seed)
        purified = apply_mask(w0, self.mask)

        self.net = FillNet(spec)
        self.net.load_store(purified)
        self.net.set_mask(self.mask)

        self.fill_enc = synthesize_fill(spec, config.encode_key)
        self.fill_dec = synthesize_fill(spec, config.decode_key)
        self.fill_enc_t: FillTensors = self.net.fill_tensors(self.fill_enc)
        self.fill_dec_t: FillTensors = self.net.fill_tensors(self.fill_dec)
        self.fill_digests = (self.fill_enc.digest(), self.fill_dec.digest())

        self.opt = torch.optim.AdamW(
            self.net.parameters(),
            lr=config.lr0,
            betas=(0.9, 0.999),
            eps=1e-8,
            weight_decay=config.weight_decay,
        )
        self.iteration = 0

    def pin_holes(self) -> None:
        """Force hole positions back to exact zero after an update."""
        with torch.no_grad():
            for k in range(1, self.config.spec.num_conv_layers + 1):
                w = self.net.kernels[k - 1]
                w.masked_fill_(~self.net.mask_buffer(k), 0.0)

    def purified_store(self):
        return self.net.extract_store(dtype=np.float32)


def train_step(state: TrainState, batch: TrainBatch) -> tuple[float, float, float]:
    """One joint update; returns the (emb, rec, den) loss values.

    A branch whose loss weight is zero is not evaluated at all (its logged
    loss reads 0.0); this is what makes the dense denoise-only baseline
    cheap to train with the same loop.
    """
    cfg = state.config
    net = state.net
    zero = torch.zeros(())

    if cfg.lambda_d > 0:
        x_d = net.forward_denoise(torch.from_numpy(batch.noisy))
        l_den = mse(x_d, torch.from_numpy(batch.clean))
    else:
        l_den = zero

    if cfg.lambda_e > 0 or cfg.lambda_r > 0:
        covers = torch.from_numpy(batch.covers)
        secrets = torch.from_numpy(batch.secrets)
        stego = net.forward_encode(covers, secrets, fill=state.fill_enc_t)
        l_emb = mse(stego, covers) if cfg.lambda_e > 0 else zero
        if cfg.lambda_r > 0:
            recovered = net.forward_decode(stego, fill=state.fill_dec_t)
            l_rec = mse(recovered, secrets)
        else:
            l_rec = zero
    else:
        l_emb = zero
        l_rec = zero

    total = cfg.lambda_e * l_emb + cfg.lambda_r * l_rec + cfg.lambda_d * l_den
    values = (
        float(l_emb.detach()), float(l_rec.detach()), float(l_den.detach())
    )
    if not torch.isfinite(total):
        raise TrainingDivergence(state.iteration, values)

    lr = lr_at(state.iteration, cfg)
    for group in state.opt.param_groups:
        group["lr"] = lr
    state.opt.zero_grad(set_to_none=True)
    total.backward()
    state.opt.step()
    state.pin_holes()
    state.iteration += 1
    return values


def to_container(state: TrainState, extra_meta: dict | None = None) -> ModelContainer:
    meta = {
        "w0_seed": state.config.w0_seed,
        "data_seed": state.config.data_seed,
        "iterations": state.iteration,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    meta.update(extra_meta or {})
    return ModelContainer(
        spec=state.config.spec,
        mask=state.mask,
        store=state.purified_store(),
        metadata=meta,
    )


def train(
    config: TrainConfig,
    dataset: DatasetManifest,
    log_path: str | Path | None = None,
    checkpoint_every: int | None = None,
    checkpoint_dir: str | Path | None = None,
    progress_every: int = 0,
) -> ModelContainer:
    """Full run: init, mask, joint updates for the budget, container out."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if config.iterations < 1:
        raise ValueError("iteration budget must be >= 1")

    state = TrainState(config)
    sampler = PatchSampler(
        dataset, config.crop, config.noise_sigma, config.data_seed, config.batch
    )
    log_file = open(log_path, "w") if log_path else None
    try:
        for it in range(config.iterations):
            losses = train_step(state, sampler.next_batch())
            if log_file:
                lr = lr_at(it, config)
                log_file.write(
                    f"{it},{losses[0]:.8e},{losses[1]:.8e},{losses[2]:.8e},{lr:.8e}\n"
                )
            if progress_every and (it + 1) % progress_every == 0:
                print(
                    f"iter {it + 1}/{config.iterations} "
                    f"emb={losses[0]:.5f} rec={losses[1]:.5f} den={losses[2]:.5f}"
                )
            if (
                checkpoint_every
                and checkpoint_dir
                and (it + 1) % checkpoint_every == 0
                and (it + 1) < config.iterations
            ):
                ckpt = to_container(state, {"checkpoint_of": it + 1})
                save_container(Path(checkpoint_dir) / f"ckpt_{it + 1:06d}.pusn", ckpt)
    finally:
        if log_file:
            log_file.close()
    return to_container(state)

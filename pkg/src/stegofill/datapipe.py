"""Dataset indexing, patch sampling with augmentation, and image IO.

Images travel as (3, H, W) float32 arrays in [0, 1]. Files are decoded from
common raster formats; everything this package writes is 8-bit RGB PNG so
stego images never pass through lossy compression.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

RASTER_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


# -- quantization and noise ---------------------------------------------------

def quantize(x: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid: clamp to [0,1], round half away from zero.

    Idempotent; output dtype matches input dtype.
    """
    x = np.asarray(x)
    q = np.floor(np.clip(x.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5) / 255.0
    return q.astype(x.dtype)


def add_gaussian_noise(
    x: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Add zero-mean Gaussian noise with std `sigma` in 8-bit units.

    The result is intentionally not clamped: clamping would bias the noise
    statistics that the evaluation relies on.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x)
    noise = rng.normal(0.0, sigma / 255.0, size=x.shape)
    return (x.astype(np.float64) + noise).astype(x.dtype)


# -- image IO -----------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    """Decode to (3, H, W) float32 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_image(path: str | Path, x: np.ndarray) -> None:
    """Quantize and write as 8-bit RGB PNG."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got {x.shape}")
    u8 = np.floor(np.clip(x.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path, format="PNG")


def resize_image(x: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (height, width)."""
    h, w = size
    u8 = np.floor(np.clip(x.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    im = Image.fromarray(u8.transpose(1, 2, 0)).resize((w, h), Image.BILINEAR)
    return np.ascontiguousarray(
        (np.asarray(im, dtype=np.float32) / 255.0).transpose(2, 0, 1)
    )


# -- dataset manifest -----------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    split: str
    entries: list[tuple[str, int, int]] = field(default_factory=list)  # id, w, h
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e[0] for e in self.entries]

    def path_of(self, image_id: str) -> Path:
        return self.root / image_id

    def save(self, path: str | Path) -> None:
        lines = [f"# root={self.root}\tsplit={self.split}\tskipped={self.skipped}"]
        lines += [f"{i}\t{w}\t{h}" for i, w, h in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("# root="):
            raise ValueError(f"{path}: not a manifest file")
        head = dict(
            part.split("=", 1) for part in text[0][2:].split("\t")
        )
        entries = []
        for line in text[1:]:
            if not line.strip():
                continue
            image_id, w, h = line.rsplit("\t", 2)
            entries.append((image_id, int(w), int(h)))
        return cls(Path(head["root"]), head["split"], entries, int(head["skipped"]))


def index_dataset(root: str | Path, split: str = "train") -> DatasetManifest:
    """Deterministic lexicographic index of the decodable images under root."""
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"{root}: not a directory")
    manifest = DatasetManifest(root=root, split=split)
    for p in sorted(root.iterdir(), key=lambda p: p.name):
        if p.suffix.lower() not in RASTER_EXTS or not p.is_file():
            continue
        try:
            with Image.open(p) as im:
                w, h = im.size
        except (UnidentifiedImageError, OSError):
            manifest.skipped += 1
            warnings.warn(f"skipping undecodable image {p.name}")
            continue
        manifest.entries.append((p.name, w, h))
    if not manifest.entries:
        raise ValueError(f"{root}: no decodable images found")
    return manifest


# -- batch sampling ---------------------------------------------------------

@dataclass
class TrainBatch:
    covers: np.ndarray   # (B/2, 3, c, c)
    secrets: np.ndarray  # (B/2, 3, c, c)
    clean: np.ndarray    # (B, 3, c, c) = covers ++ secrets
    noisy: np.ndarray    # clean + gaussian noise, unclamped


def random_patch(
    x: np.ndarray, crop: int, rng: np.random.Generator
) -> np.ndarray:
    """Random crop plus independent horizontal/vertical flips (p = 1/2 each)."""
    _, h, w = x.shape
    if h < crop or w < crop:
        raise ValueError(f"image {w}x{h} smaller than crop {crop}")
    y0 = int(rng.integers(0, h - crop + 1))
    x0 = int(rng.integers(0, w - crop + 1))
    patch = x[:, y0 : y0 + crop, x0 : x0 + crop]
    if rng.random() < 0.5:
        patch = patch[:, :, ::-1]
    if rng.random() < 0.5:
        patch = patch[:, ::-1, :]
    return np.ascontiguousarray(patch)


def sample_batch(
    manifest: DatasetManifest,
    crop: int,
    noise_sigma: float,
    rng: np.random.Generator,
    batch_size: int = 8,
    cache: dict | None = None,
) -> TrainBatch:
    """Draw one training batch.

    batch_size images are picked (distinct whenever the manifest allows),
    cropped and flipped; the first half become covers, the second half
    secrets, and all of them double as the clean denoising targets.
    """
    if batch_size % 2 != 0 or batch_size < 2:
        raise ValueError("batch size must be even and >= 2")
    n = len(manifest)
    if n == 0:
        raise ValueError("empty manifest")
    idx = rng.choice(n, size=batch_size, replace=n < batch_size)
    patches = []
    for i in idx:
        image_id = manifest.entries[int(i)][0]
        if cache is not None and image_id in cache:
            img = cache[image_id]
        else:
            img = load_image(manifest.path_of(image_id))
            if cache is not None:
                cache[image_id] = img
        patches.append(random_patch(img, crop, rng))
    clean = np.stack(patches).astype(np.float32)
    noisy = add_gaussian_noise(clean, noise_sigma, rng)
    half = batch_size // 2
    return TrainBatch(
        covers=clean[:half], secrets=clean[half:], clean=clean, noisy=noisy
    )


class PatchSampler:
    """Stateful sampler: seeded stream of batches with an image cache."""

    def __init__(
        self,
        manifest: DatasetManifest,
        crop: int,
        noise_sigma: float,
        seed: int,
        batch_size: int = 8,
    ):
        self.manifest = manifest
        self.crop = crop
        self.noise_sigma = noise_sigma
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._cache: dict[str, np.ndarray] = {}

    def next_batch(self) -> TrainBatch:
        return sample_batch(
            self.manifest,
            self.crop,
            self.noise_sigma,
            self.rng,
            self.batch_size,
            self._cache,
        )

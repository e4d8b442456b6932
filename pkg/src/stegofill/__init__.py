"""stegofill: a sparse denoising network whose mask-complement positions,
filled with key-derived weights, turn it into an image-hiding encoder or an
image-recovery decoder."""

from .container import ContainerError, ModelContainer, load_container, save_container
from .datapipe import (
    DatasetManifest,
    PatchSampler,
    TrainBatch,
    add_gaussian_noise,
    index_dataset,
    load_image,
    quantize,
    sample_batch,
    save_image,
)
from .keymat import derive_seed, splitmix64, synthesize_fill, trigger
from .metrics import QualityReport, evaluate_pair
from .modelsteg import (
    LeakageReport,
    PerformanceGap,
    emd_matrix,
    emd_weights,
    leakage_trials,
    performance_gap,
)
from .netspec import NetworkSpec, ParameterStore, default_spec, num_maskable, toy_spec
from .network import (
    FillNet,
    build_network,
    forward_decode,
    forward_denoise,
    forward_encode,
)
from .sparsity import SparseMask, apply_mask, generate_mask, init_weights
from .trainer import (
    TrainConfig,
    TrainingDivergence,
    TrainState,
    compute_losses,
    lr_at,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "ContainerError",
    "DatasetManifest",
    "FillNet",
    "LeakageReport",
    "ModelContainer",
    "NetworkSpec",
    "ParameterStore",
    "PatchSampler",
    "PerformanceGap",
    "QualityReport",
    "SparseMask",
    "TrainBatch",
    "TrainConfig",
    "TrainState",
    "TrainingDivergence",
    "add_gaussian_noise",
    "apply_mask",
    "build_network",
    "compute_losses",
    "default_spec",
    "derive_seed",
    "emd_matrix",
    "emd_weights",
    "evaluate_pair",
    "forward_decode",
    "forward_denoise",
    "forward_encode",
    "generate_mask",
    "index_dataset",
    "init_weights",
    "leakage_trials",
    "load_container",
    "load_image",
    "lr_at",
    "num_maskable",
    "performance_gap",
    "quantize",
    "sample_batch",
    "save_container",
    "save_image",
    "splitmix64",
    "synthesize_fill",
    "toy_spec",
    "train",
    "train_step",
    "trigger",
]

"""Source augmentation by style transfer for multi-source domain
generalization: an AdaIN-style encoder-decoder trained on source domains, a
stochastic in-batch stylization augmenter, and a leave-one-domain-out
training/evaluation harness with rotation and mixup reference methods."""

__version__ = "0.1.0"

from .adain import adain, channel_stats, interpolate_features
from .augment import AugmentationPolicy, augment_batch, augmentation_stats, \
    pick_style_provider
from .data import MultiDomainDataset, leave_one_out_split, load_image_folder, \
    train_val_split
from .experiment import ExperimentConfig, ResultRow, average_runs, \
    emit_results, run_experiment, select_model, sweep
from .style_model import StyleTransferModel, load_style_model, \
    save_style_model, stylize, train_style_model
from .synthetic import SyntheticSpec, generate_synthetic_domains
from .training import evaluate, train_classifier

__all__ = [
    "AugmentationPolicy", "ExperimentConfig", "MultiDomainDataset",
    "ResultRow", "StyleTransferModel", "SyntheticSpec", "__version__",
    "adain", "augment_batch", "augmentation_stats", "average_runs",
    "channel_stats", "emit_results", "evaluate", "generate_synthetic_domains",
    "interpolate_features", "leave_one_out_split", "load_image_folder",
    "load_style_model", "pick_style_provider", "run_experiment",
    "save_style_model", "select_model", "stylize", "sweep",
    "train_classifier", "train_style_model", "train_val_split",
]

"""Experiment orchestration: leave-one-domain-out runs, averaging, sweeps.

A run trains (or loads) the style model on source domains, trains the
classifier with the configured method and augmentation, selects the
checkpoint by source-validation accuracy, and evaluates it once on the held
out target. Three runs with seeds base_seed + r are averaged per row.
"""

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import MultiDomainDataset, leave_one_out_split, load_image_folder, \
    stack_images
from .style_model import StyleTrainConfig, load_style_model, train_style_model
from .synthetic import SyntheticSpec, generate_synthetic_domains
from .training import AUGMENTATIONS, METHODS, ClassifierTrainConfig, evaluate, \
    train_classifier

log = logging.getLogger(__name__)


@dataclass
class DataConfig:
    path: str = None            # image-folder root; None -> synthetic
    n_classes: int = 7
    n_domains: int = 4
    images_per_class: int = 100
    image_size: int = 32
    seed: int = 11
    vlcs_mode: bool = False


@dataclass
class StylePhaseConfig:
    epochs: int = 20
    lr: float = 5e-4
    batch_size: int = 8
    optimizer: str = "adam"
    encoder_pretrain_iters: int = 200
    encoder_pretrain_lr: float = 0.01
    widths: tuple = (24, 48, 64)
    strides: tuple = (1, 1, 2)


@dataclass
class ClsPhaseConfig:
    iterations: int = 3000
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0001
    per_domain: int = 8
    val_every: int = 100
    widths: tuple = (16, 32, 64, 64)
    crop_flip: bool = True


@dataclass
class ExperimentConfig:
    method: str = "baseline"
    augmentation: str = "original"
    alpha: float = 1.0
    p: float = 0.75
    lambda_s: float = 10.0
    eta: float = 0.5
    gamma: float = 0.4
    n_runs: int = 3
    base_seed: int = 100
    val_ratio: float = 0.9
    style_checkpoint: str = None
    retrain_style_per_run: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    style: StylePhaseConfig = field(default_factory=StylePhaseConfig)
    cls: ClsPhaseConfig = field(default_factory=ClsPhaseConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(f"augmentation must be one of {AUGMENTATIONS}, "
                             f"got {self.augmentation!r}")
        for name in ("alpha", "p", "val_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.val_ratio in (0.0, 1.0):
            raise ValueError("val_ratio must be strictly inside (0, 1)")
        for name in ("lambda_s", "eta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_runs < 1 or self.cls.iterations < 1:
            raise ValueError("n_runs and cls.iterations must be positive")
        if self.augmentation == "stylized" and self.style_checkpoint is None \
                and self.style.epochs < 1:
            raise ValueError("stylized augmentation needs a style phase "
                             "(style.epochs >= 1) or a style_checkpoint")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["style"]["widths"] = list(self.style.widths)
        d["style"]["strides"] = list(self.style.strides)
        d["cls"]["widths"] = list(self.cls.widths)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        parts = {}
        for name, sub_cls in (("data", DataConfig), ("style", StylePhaseConfig),
                              ("cls", ClsPhaseConfig)):
            sub = dict(d.pop(name, {}))
            known = {f.name for f in fields(sub_cls)}
            unknown = set(sub) - known
            if unknown:
                raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
            for key in ("widths", "strides"):
                if key in sub:
                    sub[key] = tuple(sub[key])
            parts[name] = sub_cls(**sub)
        known = {f.name for f in fields(cls)} - {"data", "style", "cls"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d, **parts)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ResultRow:
    target: str
    method: str
    augmentation: str
    alpha: float
    p: float
    run_seeds: list
    accuracies: list           # percentages, one per run
    mean: float
    std: float
    param_hashes: list = field(default_factory=list)

    @classmethod
    def build(cls, target, config: ExperimentConfig, run_seeds, accuracies,
              param_hashes=()):
        mean, std = average_runs(accuracies)
        return cls(target=target, method=config.method,
                   augmentation=config.augmentation, alpha=config.alpha,
                   p=config.p, run_seeds=list(run_seeds),
                   accuracies=[float(a) for a in accuracies],
                   mean=mean, std=std, param_hashes=list(param_hashes))


@dataclass
class SweepTable:
    alphas: list
    ps: list
    cell_means: dict           # (alpha, p) -> mean accuracy over targets
    rows: dict                 # (alpha, p) -> list of ResultRow, one per target


def select_model(val_curve) -> int:
    """Index of the highest validation accuracy; earliest wins ties."""
    curve = [v[1] if isinstance(v, (tuple, list)) else v for v in val_curve]
    if not curve:
        raise ValueError("empty validation curve")
    return int(np.argmax(curve))


def average_runs(values):
    """Arithmetic mean and sample standard deviation (n-1; one run -> 0)."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("no runs to average")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return mean, std


def format_mean_std(mean: float, std: float) -> str:
    """Table style used throughout: mean to 2 decimals, spread to 1."""
    return f"{mean:.2f} ± {std:.1f}"


def load_dataset(config: ExperimentConfig) -> MultiDomainDataset:
    d = config.data
    if d.path is not None:
        return load_image_folder(d.path, size=(d.image_size, d.image_size))
    spec = SyntheticSpec(n_classes=d.n_classes, n_domains=d.n_domains,
                         images_per_class=d.images_per_class,
                         image_size=d.image_size)
    return generate_synthetic_domains(spec, d.seed)


def _param_hash(classifier) -> str:
    return hashlib.sha256(classifier.param_vector().tobytes()).hexdigest()


def _style_seed(config, target_index, run=None):
    tail = [7] if run is None else [13, run]
    return np.random.SeedSequence([config.base_seed, target_index] + tail)


def _fit_style_model(config: ExperimentConfig, split, target_index, run=None,
                     with_history=False):
    images, labels = _pooled_source_images(split, train_only=run is not None)
    style_cfg = StyleTrainConfig(
        epochs=config.style.epochs, lr=config.style.lr,
        batch_size=config.style.batch_size, lambda_s=config.lambda_s,
        optimizer=config.style.optimizer,
        encoder_pretrain_iters=config.style.encoder_pretrain_iters,
        encoder_pretrain_lr=config.style.encoder_pretrain_lr,
        encoder_widths=config.style.widths,
        encoder_strides=config.style.strides)
    rng = np.random.default_rng(_style_seed(config, target_index, run))
    model, history = train_style_model(images, labels, style_cfg, rng)
    log.info("style model for target index %d: L_A %.4f -> %.4f over %d epochs",
             target_index, history.first_epoch_la, history.final_epoch_la,
             len(history.epoch_la))
    return (model, history) if with_history else model


def _pooled_source_images(split, train_only=False):
    items = split.all_train() if train_only else (split.all_train()
                                                  + split.all_val())
    batch = stack_images(items)
    return batch.images, batch.labels


def run_experiment(config: ExperimentConfig, target_domain: str,
                   dataset: MultiDomainDataset = None,
                   save_last_model_to: str = None,
                   style_model=None) -> ResultRow:
    """Execute n_runs leave-one-out runs against one target; aggregate.

    ``save_last_model_to`` writes the final run's selected classifier as a
    checkpoint, for later standalone evaluation. A pre-trained ``style_model``
    skips the style phase; the shared model is a function of the dataset, the
    target, the style schedule, and base_seed only, so callers looping over
    (alpha, p) settings can reuse one model per target.
    """
    if dataset is None:
        dataset = load_dataset(config)
    if target_domain not in dataset.domain_names:
        raise ValueError(f"unknown target domain {target_domain!r}; "
                         f"have {list(dataset.domain_names)}")
    target_index = dataset.domain_names.index(target_domain)
    n_classes = len(dataset.class_names)

    shared_style = style_model
    if shared_style is None and config.augmentation == "stylized" \
            and config.style_checkpoint:
        shared_style = load_style_model(config.style_checkpoint)

    accuracies, seeds, hashes = [], [], []
    for run in range(config.n_runs):
        seed = config.base_seed + run
        rng = np.random.default_rng(seed)
        split = leave_one_out_split(dataset, target_domain, rng,
                                    val_ratio=config.val_ratio,
                                    vlcs_mode=config.data.vlcs_mode)

        run_style = None
        if config.augmentation == "stylized":
            if config.retrain_style_per_run and not config.style_checkpoint:
                run_style = _fit_style_model(config, split, target_index, run)
            else:
                if shared_style is None:
                    shared_style = _fit_style_model(config, split, target_index)
                run_style = shared_style

        cls_cfg = ClassifierTrainConfig(
            method=config.method, augmentation=config.augmentation,
            iterations=config.cls.iterations, lr=config.cls.lr,
            momentum=config.cls.momentum, weight_decay=config.cls.weight_decay,
            per_domain=config.cls.per_domain, eta=config.eta,
            gamma=config.gamma, p=config.p, alpha=config.alpha,
            val_every=config.cls.val_every, widths=config.cls.widths,
            crop_flip=config.cls.crop_flip)

        val = stack_images(split.all_val())
        result = train_classifier(split.source_train, split.source_names,
                                  n_classes, cls_cfg, rng,
                                  style_model=run_style,
                                  val_images=val.images, val_labels=val.labels)

        test = stack_images(split.target_test)
        acc = evaluate(result.classifier, test.images, test.labels) * 100.0
        accuracies.append(acc)
        seeds.append(seed)
        hashes.append(_param_hash(result.classifier))
        if result.aug_stats is not None:
            log.info("run %d augmentation stats:\n%s", run,
                     result.aug_stats.text())
        log.info("target %s run %d (seed %d): best val %.4f, target acc %.2f",
                 target_domain, run, seed,
                 result.best_val_accuracy if result.val_curve else float("nan"),
                 acc)
        if save_last_model_to and run == config.n_runs - 1:
            from .training import save_classifier
            save_classifier(result.classifier, save_last_model_to)
            log.info("saved classifier checkpoint to %s", save_last_model_to)

    return ResultRow.build(target_domain, config, seeds, accuracies, hashes)


def fit_style_models(config: ExperimentConfig, dataset: MultiDomainDataset,
                     with_histories: bool = False):
    """One shared style model per target domain, keyed by target name.

    The shared model sees all source images regardless of the per-run
    train/val partition and is seeded from (base_seed, target) alone, so it
    is reusable across runs and across (alpha, p) settings. With
    ``with_histories`` the per-target training histories come back as a
    second dict.
    """
    models, histories = {}, {}
    for target in dataset.domain_names:
        split = leave_one_out_split(dataset, target,
                                    np.random.default_rng(config.base_seed),
                                    val_ratio=config.val_ratio,
                                    vlcs_mode=config.data.vlcs_mode)
        models[target], histories[target] = _fit_style_model(
            config, split, dataset.domain_names.index(target),
            with_history=True)
    return (models, histories) if with_histories else models


def sweep(config: ExperimentConfig, alpha_list, p_list,
          dataset: MultiDomainDataset = None,
          style_models: dict = None) -> SweepTable:
    """Grid of (alpha, p) cells, each averaged over every target domain.

    Style models do not depend on (alpha, p), so one model per target is
    trained up front and shared by every cell (or taken from
    ``style_models`` if the caller already has them).
    """
    alphas = [float(a) for a in alpha_list]
    ps = [float(p) for p in p_list]
    if not alphas or not ps:
        raise ValueError("alpha and p grids must be nonempty")
    if dataset is None:
        dataset = load_dataset(config)
    if style_models is None and config.augmentation == "stylized" \
            and not config.style_checkpoint and not config.retrain_style_per_run:
        style_models = fit_style_models(config, dataset)
    cell_means, rows = {}, {}
    for a in alphas:
        for p in ps:
            cell_cfg = ExperimentConfig.from_dict({
                **config.to_dict(), "alpha": a, "p": p})
            cell_rows = [
                run_experiment(cell_cfg, target, dataset,
                               style_model=None if style_models is None
                               else style_models[target])
                for target in dataset.domain_names]
            rows[(a, p)] = cell_rows
            cell_means[(a, p)] = float(np.mean([r.mean for r in cell_rows]))
            log.info("sweep cell alpha=%.2f p=%.2f -> %.2f", a, p,
                     cell_means[(a, p)])
    return SweepTable(alphas=alphas, ps=ps, cell_means=cell_means, rows=rows)


CSV_HEADER = ["target", "method", "augmentation", "alpha", "p", "run_seeds",
              "accuracies", "mean", "std"]


def emit_results(rows, path) -> None:
    """CSV with 2-decimal accuracies plus a full-precision JSON sidecar."""
    rows = list(rows)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.target, r.method, r.augmentation, f"{r.alpha:g}",
                        f"{r.p:g}",
                        ";".join(str(s) for s in r.run_seeds),
                        ";".join(f"{a:.2f}" for a in r.accuracies),
                        f"{r.mean:.2f}", f"{r.std:.2f}"])
    sidecar = str(path) + ".full.json"
    with open(sidecar, "w") as f:
        json.dump([asdict(r) for r in rows], f, indent=2)


def read_results_sidecar(path):
    """Reload rows exactly as emitted (full precision)."""
    with open(str(path) + ".full.json") as f:
        return [ResultRow(**d) for d in json.load(f)]

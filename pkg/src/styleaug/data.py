"""Multi-domain datasets and the evaluation protocol.

A dataset is a set of named domains over one shared class list. Generalization
runs hold one domain out as the target: the remaining domains are split
90-10 into train/val per run, the target is evaluated once, untouched by
training. Image tensors are float32 (C, H, W) in [0, 1].
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray
    label: int
    domain: int
    uid: str


class Batch(NamedTuple):
    images: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray
    uids: tuple


def stack_images(items) -> Batch:
    if not items:
        raise ValueError("cannot stack an empty image list")
    return Batch(
        images=np.stack([it.image for it in items]).astype(np.float32),
        labels=np.array([it.label for it in items], dtype=np.int64),
        domain_ids=np.array([it.domain for it in items], dtype=np.int64),
        uids=tuple(it.uid for it in items),
    )


@dataclass
class MultiDomainDataset:
    domain_names: tuple
    class_names: tuple
    domains: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain_names = tuple(self.domain_names)
        self.class_names = tuple(self.class_names)
        if set(self.domains) != set(self.domain_names):
            raise ValueError("domain dict keys must match domain_names")
        n_cls = len(self.class_names)
        for name, items in self.domains.items():
            for it in items:
                if not 0 <= it.label < n_cls:
                    raise ValueError(f"label {it.label} out of range in {name}")

    def domain(self, name):
        if name not in self.domains:
            raise KeyError(
                f"unknown domain {name!r}; have {sorted(self.domains)}")
        return self.domains[name]

    @property
    def n_images(self):
        return sum(len(v) for v in self.domains.values())

    def image_shape(self):
        for items in self.domains.values():
            if items:
                return items[0].image.shape
        raise ValueError("dataset is empty")


@dataclass
class ProtocolSplit:
    """One leave-one-domain-out split with per-source train/val partitions."""
    target_name: str
    source_names: tuple
    source_train: dict
    source_val: dict
    target_test: list
    target_heldback: list = field(default_factory=list)

    def all_train(self):
        return [it for name in self.source_names for it in self.source_train[name]]

    def all_val(self):
        return [it for name in self.source_names for it in self.source_val[name]]


def train_val_split(items, ratio, rng):
    """Random partition into (train, val) with len(train) = round(ratio * N)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(items)
    if n < 2:
        raise ValueError(f"cannot split a domain of {n} images")
    n_train = int(round(ratio * n))
    n_train = min(max(n_train, 1), n - 1)
    order = rng.permutation(n)
    train = [items[i] for i in order[:n_train]]
    val = [items[i] for i in order[n_train:]]
    return train, val


def leave_one_out_split(dataset: MultiDomainDataset, target_name: str, rng,
                        val_ratio: float = 0.9, vlcs_mode: bool = False):
    """Hold ``target_name`` out; 90-10 split the rest using ``rng``.

    In VLCS mode the target itself is pre-split 70/30 and only the 30% test
    portion is evaluated; that split is fixed by the dataset seed, not by
    ``rng``, so it stays identical across runs.
    """
    if target_name not in dataset.domains:
        raise ValueError(f"unknown target domain {target_name!r}; "
                         f"have {sorted(dataset.domains)}")
    source_names = tuple(n for n in dataset.domain_names if n != target_name)
    source_train, source_val = {}, {}
    for name in source_names:
        tr, va = train_val_split(dataset.domain(name), val_ratio, rng)
        source_train[name] = tr
        source_val[name] = va

    target_items = list(dataset.domain(target_name))
    heldback = []
    if vlcs_mode:
        seed = dataset.metadata.get("seed", 0)
        fixed = np.random.default_rng(
            np.random.SeedSequence([int(seed), dataset.domain_names.index(target_name)]))
        n = len(target_items)
        n_test = int(round(0.3 * n))
        order = fixed.permutation(n)
        test = [target_items[i] for i in order[:n_test]]
        heldback = [target_items[i] for i in order[n_test:]]
        target_items = test
    return ProtocolSplit(target_name, source_names, source_train, source_val,
                         target_items, heldback)


def batch_iterator(source_train: dict, source_names, per_domain: int, rng):
    """Endless stream of domain-balanced batches.

    Every batch holds exactly ``per_domain`` samples from each source, in
    source order. Each source is drawn without replacement and reshuffled
    per epoch; a source smaller than ``per_domain`` falls back to sampling
    with replacement (logged once).
    """
    if per_domain < 1:
        raise ValueError("per_domain must be >= 1")
    stacked = {name: stack_images(source_train[name]) for name in source_names}
    cursors = {name: None for name in source_names}

    def refill(name):
        n = len(stacked[name].labels)
        return list(rng.permutation(n))

    for name in source_names:
        if len(stacked[name].labels) < per_domain:
            log.warning("source %r has %d < per_domain=%d images; "
                        "sampling with replacement", name,
                        len(stacked[name].labels), per_domain)

    while True:
        parts = []
        for name in source_names:
            b = stacked[name]
            n = len(b.labels)
            if n < per_domain:
                idx = rng.integers(0, n, size=per_domain)
            else:
                if cursors[name] is None or len(cursors[name]) < per_domain:
                    cursors[name] = refill(name)
                idx = np.array([cursors[name].pop(0) for _ in range(per_domain)])
            parts.append(Batch(b.images[idx], b.labels[idx], b.domain_ids[idx],
                               tuple(b.uids[i] for i in idx)))
        yield Batch(
            np.concatenate([p.images for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.domain_ids for p in parts]),
            tuple(u for p in parts for u in p.uids),
        )


IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff",
                    ".webp"}


def load_image_folder(root, size=(32, 32)) -> MultiDomainDataset:
    """Load a root/<domain>/<class>/<image> tree, resized to ``size``.

    Ordering is lexicographic by path. Every domain must expose the same
    class set; undecodable files are skipped with a warning and counted in
    the metadata.
    """
    from PIL import Image

    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    domain_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not domain_dirs:
        raise ValueError(f"no domain directories under {root}")

    class_sets = {d.name: sorted(p.name for p in d.iterdir() if p.is_dir())
                  for d in domain_dirs}
    reference = class_sets[domain_dirs[0].name]
    if not reference:
        raise ValueError(f"domain {domain_dirs[0].name!r} has no class directories")
    for name, classes in class_sets.items():
        if classes != reference:
            raise ValueError(
                f"domain {name!r} classes {classes} differ from "
                f"{domain_dirs[0].name!r} classes {reference}")

    class_index = {c: i for i, c in enumerate(reference)}
    domains = {}
    skipped = 0
    for d_id, d in enumerate(domain_dirs):
        items = []
        for cls in reference:
            files = sorted(p for p in (d / cls).iterdir()
                           if p.suffix.lower() in IMAGE_EXTENSIONS)
            if not files:
                raise ValueError(f"no images in {d.name}/{cls}")
            for f in files:
                try:
                    with Image.open(f) as im:
                        im = im.convert("RGB").resize(
                            (size[1], size[0]), Image.BILINEAR)
                        arr = np.asarray(im, dtype=np.float32) / 255.0
                except Exception as exc:
                    skipped += 1
                    log.warning("skipping undecodable image %s: %s", f, exc)
                    continue
                items.append(LabeledImage(
                    image=np.ascontiguousarray(arr.transpose(2, 0, 1)),
                    label=class_index[cls], domain=d_id,
                    uid=str(f.relative_to(root))))
        domains[d.name] = items
    return MultiDomainDataset(
        domain_names=tuple(d.name for d in domain_dirs),
        class_names=tuple(reference),
        domains=domains,
        metadata={"source": str(root), "skipped": skipped,
                  "image_size": list(size)},
    )


def export_image_folder(dataset: MultiDomainDataset, root) -> int:
    """Write the dataset as root/<domain>/<class>/<uid>.png; returns count."""
    from PIL import Image

    root = Path(root)
    count = 0
    for name in dataset.domain_names:
        for i, it in enumerate(dataset.domain(name)):
            cls = dataset.class_names[it.label]
            out_dir = root / name / cls
            out_dir.mkdir(parents=True, exist_ok=True)
            arr = np.clip(np.rint(it.image.transpose(1, 2, 0) * 255.0), 0, 255)
            Image.fromarray(arr.astype(np.uint8)).save(out_dir / f"{i:05d}.png")
            count += 1
    return count


def dataset_manifest(dataset: MultiDomainDataset) -> str:
    lines = ["dataset manifest",
             f"  domains: {', '.join(dataset.domain_names)}",
             f"  classes: {', '.join(dataset.class_names)}",
             f"  total images: {dataset.n_images}"]
    for name in dataset.domain_names:
        items = dataset.domain(name)
        per_class = np.bincount([it.label for it in items],
                                minlength=len(dataset.class_names))
        lines.append(f"  {name}: {len(items)} images, per-class "
                     f"{per_class.tolist()}")
    for key in sorted(dataset.metadata):
        lines.append(f"  meta.{key}: {dataset.metadata[key]}")
    return "\n".join(lines)

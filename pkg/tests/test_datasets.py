"""Synthetic generator, protocol splits, batching, and folder IO."""

import logging

import numpy as np
import pytest

from styleaug.data import (
    LabeledImage,
    MultiDomainDataset,
    batch_iterator,
    dataset_manifest,
    export_image_folder,
    leave_one_out_split,
    load_image_folder,
    stack_images,
    train_val_split,
)
from styleaug.synthetic import (
    SHAPE_NAMES,
    STYLE_NAMES,
    SyntheticSpec,
    classify_shape,
    foreground_mask,
    generate_synthetic_domains,
)


def small_spec(**kw):
    defaults = dict(n_classes=7, n_domains=4, images_per_class=5,
                    image_size=32)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


# ---------------------------------------------------------------- generator

def test_generator_counts_and_names():
    spec = small_spec(images_per_class=3)
    ds = generate_synthetic_domains(spec, seed=0)
    assert ds.domain_names == STYLE_NAMES
    assert ds.class_names == SHAPE_NAMES
    assert ds.n_images == 4 * 7 * 3
    for d_id, name in enumerate(ds.domain_names):
        items = ds.domain(name)
        assert len(items) == 7 * 3
        labels = np.array([it.label for it in items])
        assert np.bincount(labels, minlength=7).tolist() == [3] * 7
        assert all(it.domain == d_id for it in items)


def test_generator_image_contract():
    ds = generate_synthetic_domains(small_spec(images_per_class=2), seed=3)
    for items in ds.domains.values():
        for it in items:
            assert it.image.shape == (3, 32, 32)
            assert it.image.dtype == np.float32
            assert it.image.min() >= 0.0 and it.image.max() <= 1.0


def test_generator_deterministic():
    a = generate_synthetic_domains(small_spec(), seed=42)
    b = generate_synthetic_domains(small_spec(), seed=42)
    for name in a.domain_names:
        for x, y in zip(a.domain(name), b.domain(name)):
            assert x.uid == y.uid and x.label == y.label
            np.testing.assert_array_equal(x.image, y.image)


def test_generator_seed_changes_images():
    a = generate_synthetic_domains(small_spec(), seed=0)
    b = generate_synthetic_domains(small_spec(), seed=1)
    diff = [not np.array_equal(x.image, y.image)
            for x, y in zip(a.domain("dusk"), b.domain("dusk"))]
    assert all(diff)


def test_generator_respects_reduced_spec():
    ds = generate_synthetic_domains(
        small_spec(n_classes=3, n_domains=2, image_size=16), seed=0)
    assert ds.domain_names == STYLE_NAMES[:2]
    assert ds.class_names == SHAPE_NAMES[:3]
    assert ds.image_shape() == (3, 16, 16)


@pytest.mark.parametrize("kw", [
    dict(n_classes=1), dict(n_classes=8),
    dict(n_domains=1), dict(n_domains=5),
    dict(images_per_class=0), dict(image_size=30),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


def test_label_purity_oracle():
    """The shape read back from a rendered image must equal the generating
    label on every image, for every domain, on seeds never used to tune the
    reader."""
    for seed in (1001, 2002):
        ds = generate_synthetic_domains(small_spec(images_per_class=12),
                                        seed=seed)
        for name, items in ds.domains.items():
            for it in items:
                got = classify_shape(foreground_mask(it.image))
                assert got == it.label, (seed, it.uid, it.label, got)


def test_domains_are_far_apart_in_pixel_space():
    """Nearest-class-mean transfers within a domain but not across domains;
    the domain shift must dominate raw pixel statistics."""
    ds = generate_synthetic_domains(small_spec(images_per_class=30), seed=7)
    X = {d: np.stack([it.image.ravel() for it in ds.domains[d]])
         for d in ds.domain_names}
    Y = {d: np.array([it.label for it in ds.domains[d]])
         for d in ds.domain_names}

    def acc(Xtr, Ytr, Xte, Yte):
        cents = np.stack([Xtr[Ytr == k].mean(0) for k in range(7)])
        d2 = ((Xte[:, None, :] - cents[None]) ** 2).sum(-1)
        return float((d2.argmin(1) == Yte).mean())

    for d in ds.domain_names:
        ev = np.arange(len(Y[d])) % 2 == 0
        within = acc(X[d][ev], Y[d][ev], X[d][~ev], Y[d][~ev])
        rest = [s for s in ds.domain_names if s != d]
        Xs = np.concatenate([X[s] for s in rest])
        Ys = np.concatenate([Y[s] for s in rest])
        across = acc(Xs, Ys, X[d], Y[d])
        assert within >= 0.6, (d, within)
        assert across <= 0.3, (d, across)


def test_foreground_mask_matches_generated_shape():
    ds = generate_synthetic_domains(small_spec(images_per_class=4), seed=5)
    for items in ds.domains.values():
        for it in items:
            m = foreground_mask(it.image)
            assert m.dtype == bool and m.shape == (32, 32)
            assert 20 < m.sum() < 700


# ------------------------------------------------------------------- splits

def items_for(n, domain=0, offset=0):
    img = np.zeros((3, 4, 4), dtype=np.float32)
    return [LabeledImage(img, label=0, domain=domain, uid=f"d{domain}/{offset + i}")
            for i in range(n)]


def test_train_val_split_sizes_and_partition():
    items = items_for(40)
    tr, va = train_val_split(items, 0.9, np.random.default_rng(0))
    assert len(tr) == 36 and len(va) == 4
    assert {it.uid for it in tr} | {it.uid for it in va} == {it.uid for it in items}
    assert not ({it.uid for it in tr} & {it.uid for it in va})


def test_train_val_split_reproducible():
    items = items_for(25)
    a = train_val_split(items, 0.8, np.random.default_rng(9))
    b = train_val_split(items, 0.8, np.random.default_rng(9))
    assert [it.uid for it in a[0]] == [it.uid for it in b[0]]
    c = train_val_split(items, 0.8, np.random.default_rng(10))
    assert [it.uid for it in a[0]] != [it.uid for it in c[0]]


def test_train_val_split_never_empties_a_side():
    items = items_for(3)
    tr, va = train_val_split(items, 0.99, np.random.default_rng(0))
    assert len(tr) == 2 and len(va) == 1


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.2, 1.5])
def test_train_val_split_ratio_validation(ratio):
    with pytest.raises(ValueError, match="ratio"):
        train_val_split(items_for(10), ratio, np.random.default_rng(0))


def test_train_val_split_too_small():
    with pytest.raises(ValueError):
        train_val_split(items_for(1), 0.9, np.random.default_rng(0))


def tiny_dataset(per_class=10, seed=0):
    return generate_synthetic_domains(
        small_spec(images_per_class=per_class, image_size=16), seed=seed)


def test_leave_one_out_partitions_sources():
    ds = tiny_dataset()
    split = leave_one_out_split(ds, "neon", np.random.default_rng(0))
    assert split.target_name == "neon"
    assert split.source_names == ("dusk", "paper", "grain")
    for name in split.source_names:
        tr = {it.uid for it in split.source_train[name]}
        va = {it.uid for it in split.source_val[name]}
        full = {it.uid for it in ds.domain(name)}
        assert tr | va == full and not (tr & va)
        assert len(tr) == round(0.9 * len(full))
    assert {it.uid for it in split.target_test} == \
        {it.uid for it in ds.domain("neon")}
    assert split.target_heldback == []
    assert len(split.all_train()) == sum(
        len(split.source_train[n]) for n in split.source_names)


def test_leave_one_out_unknown_target():
    with pytest.raises(ValueError, match="unknown target"):
        leave_one_out_split(tiny_dataset(), "mars", np.random.default_rng(0))


def test_leave_one_out_run_seed_changes_partition():
    ds = tiny_dataset()
    a = leave_one_out_split(ds, "dusk", np.random.default_rng(1))
    b = leave_one_out_split(ds, "dusk", np.random.default_rng(2))
    assert [it.uid for it in a.source_train["paper"]] != \
        [it.uid for it in b.source_train["paper"]]


def test_vlcs_mode_presplits_target():
    ds = tiny_dataset(per_class=10)  # 70 images per domain
    split = leave_one_out_split(ds, "grain", np.random.default_rng(0),
                                vlcs_mode=True)
    assert len(split.target_test) == 21  # round(0.3 * 70)
    assert len(split.target_heldback) == 49
    test_uids = {it.uid for it in split.target_test}
    held_uids = {it.uid for it in split.target_heldback}
    assert not (test_uids & held_uids)
    assert test_uids | held_uids == {it.uid for it in ds.domain("grain")}


def test_vlcs_test_portion_fixed_across_run_seeds():
    """The 70/30 target split depends on the dataset seed, not the run rng:
    every run must score the same test images."""
    ds = tiny_dataset()
    a = leave_one_out_split(ds, "paper", np.random.default_rng(11),
                            vlcs_mode=True)
    b = leave_one_out_split(ds, "paper", np.random.default_rng(77),
                            vlcs_mode=True)
    assert [it.uid for it in a.target_test] == [it.uid for it in b.target_test]
    # while the source partitions still differ per run
    assert [it.uid for it in a.source_train["dusk"]] != \
        [it.uid for it in b.source_train["dusk"]]


# ----------------------------------------------------------------- batching

def test_batch_iterator_is_domain_balanced():
    ds = tiny_dataset(per_class=4)
    split = leave_one_out_split(ds, "dusk", np.random.default_rng(0))
    it = batch_iterator(split.source_train, split.source_names, 3,
                        np.random.default_rng(0))
    ids = {name: ds.domain(name)[0].domain for name in split.source_names}
    for _ in range(5):
        batch = next(it)
        assert len(batch.labels) == 9
        counts = {d: int((batch.domain_ids == d).sum()) for d in ids.values()}
        assert all(v == 3 for v in counts.values())
        # parts arrive grouped in source order
        expect = np.repeat([ids[n] for n in split.source_names], 3)
        np.testing.assert_array_equal(batch.domain_ids, expect)


def test_batch_iterator_epoch_coverage():
    """Without-replacement draws: over one epoch each source image appears
    exactly once."""
    ds = tiny_dataset(per_class=4)  # 28 per domain
    split = leave_one_out_split(ds, "dusk", np.random.default_rng(3))
    train = {n: split.source_train[n][:24] for n in split.source_names}
    it = batch_iterator(train, split.source_names, 4, np.random.default_rng(5))
    seen = []
    for _ in range(6):  # 24 / 4 = 6 batches per epoch
        seen.extend(next(it).uids)
    for name in split.source_names:
        uids = {u for u in seen if u.startswith(name)}
        assert uids == {x.uid for x in train[name]}


def test_batch_iterator_deterministic():
    ds = tiny_dataset(per_class=3)
    split = leave_one_out_split(ds, "neon", np.random.default_rng(0))
    a = batch_iterator(split.source_train, split.source_names, 2,
                       np.random.default_rng(8))
    b = batch_iterator(split.source_train, split.source_names, 2,
                       np.random.default_rng(8))
    for _ in range(4):
        x, y = next(a), next(b)
        assert x.uids == y.uids
        np.testing.assert_array_equal(x.images, y.images)


def test_batch_iterator_replacement_fallback(caplog):
    train = {"tiny": items_for(2)}
    with caplog.at_level(logging.WARNING, logger="styleaug.data"):
        it = batch_iterator(train, ("tiny",), 5, np.random.default_rng(0))
        batch = next(it)
    assert "replacement" in caplog.text
    assert len(batch.labels) == 5


def test_batch_iterator_rejects_bad_per_domain():
    with pytest.raises(ValueError, match="per_domain"):
        next(batch_iterator({"a": items_for(3)}, ("a",), 0,
                            np.random.default_rng(0)))


def test_stack_images_empty():
    with pytest.raises(ValueError, match="empty"):
        stack_images([])


def test_dataset_validation():
    img = np.zeros((3, 4, 4), dtype=np.float32)
    with pytest.raises(ValueError, match="domain dict keys"):
        MultiDomainDataset(("a",), ("c",), {"b": []})
    with pytest.raises(ValueError, match="label"):
        MultiDomainDataset(
            ("a",), ("c",),
            {"a": [LabeledImage(img, label=3, domain=0, uid="x")]})
    ds = MultiDomainDataset(("a",), ("c",), {"a": []})
    with pytest.raises(KeyError):
        ds.domain("zzz")
    with pytest.raises(ValueError, match="empty"):
        ds.image_shape()


def test_manifest_mentions_every_domain():
    ds = tiny_dataset(per_class=2)
    text = dataset_manifest(ds)
    for name in ds.domain_names:
        assert name in text
    assert "total images: 56" in text


# ---------------------------------------------------------------- folder IO

def test_folder_export_load_round_trip(tmp_path):
    ds = tiny_dataset(per_class=3)
    n = export_image_folder(ds, tmp_path)
    assert n == ds.n_images
    loaded = load_image_folder(tmp_path, size=(16, 16))
    assert loaded.domain_names == tuple(sorted(ds.domain_names))
    assert loaded.class_names == tuple(sorted(ds.class_names))
    assert loaded.n_images == ds.n_images
    assert loaded.metadata["skipped"] == 0
    # match on (domain, original index) recovered from the exported filename;
    # pixel values agree up to 8-bit quantization
    for name in loaded.domain_names:
        for it in loaded.domain(name):
            idx = int(it.uid.split("/")[-1].split(".")[0])
            orig = ds.domain(name)[idx]
            assert loaded.class_names[it.label] == ds.class_names[orig.label]
            np.testing.assert_allclose(it.image, orig.image, atol=0.5 / 255 + 1e-6)


def test_folder_load_orders_lexicographically(tmp_path):
    ds = tiny_dataset(per_class=2)
    export_image_folder(ds, tmp_path)
    loaded = load_image_folder(tmp_path, size=(16, 16))
    for name in loaded.domain_names:
        uids = [it.uid for it in loaded.domain(name)]
        by_class = sorted(uids, key=lambda u: (u.split("/")[1], u))
        assert uids == by_class


def test_folder_load_resizes():
    ds = tiny_dataset(per_class=1)
    import tempfile
    with tempfile.TemporaryDirectory() as root:
        export_image_folder(ds, root)
        loaded = load_image_folder(root, size=(8, 8))
    assert loaded.image_shape() == (3, 8, 8)
    img = loaded.domain(loaded.domain_names[0])[0].image
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_folder_load_skips_undecodable(tmp_path, caplog):
    ds = tiny_dataset(per_class=1)
    export_image_folder(ds, tmp_path)
    bad = tmp_path / "dusk" / "disk" / "aaa_corrupt.png"
    bad.write_bytes(b"not a png at all")
    with caplog.at_level(logging.WARNING, logger="styleaug.data"):
        loaded = load_image_folder(tmp_path, size=(16, 16))
    assert loaded.metadata["skipped"] == 1
    assert "skipping" in caplog.text
    assert len(loaded.domain("dusk")) == len(ds.domain("dusk"))


def test_folder_load_rejects_inconsistent_classes(tmp_path):
    ds = tiny_dataset(per_class=1)
    export_image_folder(ds, tmp_path)
    extra = tmp_path / "dusk" / "zebra"
    extra.mkdir()
    with pytest.raises(ValueError, match="classes"):
        load_image_folder(tmp_path, size=(16, 16))


def test_folder_load_missing_or_empty_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image_folder(tmp_path / "absent", size=(16, 16))
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError, match="no domain"):
        load_image_folder(empty, size=(16, 16))


def test_folder_load_rejects_imageless_class(tmp_path):
    ds = tiny_dataset(per_class=1)
    export_image_folder(ds, tmp_path)
    victim = tmp_path / "neon" / "ring"
    for f in victim.iterdir():
        f.unlink()
    with pytest.raises(ValueError, match="no images"):
        load_image_folder(tmp_path, size=(16, 16))

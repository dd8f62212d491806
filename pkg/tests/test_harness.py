"""Experiment orchestration: config schema, aggregation, results, CLI."""

import csv
import json

import numpy as np
import pytest

from styleaug.cli import main
from styleaug.data import LabeledImage, MultiDomainDataset
from styleaug.experiment import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    average_runs,
    emit_results,
    fit_style_models,
    format_mean_std,
    load_dataset,
    read_results_sidecar,
    run_experiment,
    select_model,
    sweep,
)
from styleaug.training import load_classifier


# -------------------------------------------------------------- aggregation

def test_select_model_picks_peak():
    assert select_model([0.5, 0.9, 0.7]) == 1


def test_select_model_earliest_tie():
    assert select_model([0.3, 0.8, 0.8, 0.8]) == 1
    assert select_model([0.8, 0.8]) == 0


def test_select_model_accepts_iteration_pairs():
    curve = [(100, 0.52), (200, 0.91), (300, 0.91)]
    assert select_model(curve) == 1


def test_select_model_empty():
    with pytest.raises(ValueError, match="empty"):
        select_model([])


def test_average_runs():
    mean, std = average_runs([70.0, 80.0, 90.0])
    assert mean == 80.0
    assert std == pytest.approx(10.0)


def test_average_runs_single_run_has_zero_std():
    assert average_runs([73.5]) == (73.5, 0.0)


def test_average_runs_empty():
    with pytest.raises(ValueError):
        average_runs([])


def test_format_mean_std():
    assert format_mean_std(77.3111, 1.07) == "77.31 ± 1.1"
    assert format_mean_std(100.0, 0.0) == "100.00 ± 0.0"


# ------------------------------------------------------------------- config

def test_config_round_trips_through_json():
    cfg = ExperimentConfig.from_dict({
        "method": "rotation", "augmentation": "stylized", "alpha": 0.5,
        "p": 0.9, "n_runs": 2, "base_seed": 7,
        "data": {"n_classes": 3, "images_per_class": 10, "image_size": 16},
        "style": {"epochs": 2, "widths": [4, 6], "strides": [1, 2]},
        "cls": {"iterations": 50, "widths": [4, 4, 8, 8]},
    })
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.style.widths == (4, 6)
    assert again.cls.widths == (4, 4, 8, 8)


def test_config_from_dict_does_not_mutate_input():
    d = {"method": "baseline", "data": {"n_classes": 3}}
    ExperimentConfig.from_dict(d)
    assert d == {"method": "baseline", "data": {"n_classes": 3}}


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"methodd": "baseline"})
    with pytest.raises(ValueError, match="unknown data config keys"):
        ExperimentConfig.from_dict({"data": {"n_class": 3}})
    with pytest.raises(ValueError, match="unknown style config keys"):
        ExperimentConfig.from_dict({"style": {"depth": 3}})
    with pytest.raises(ValueError, match="unknown cls config keys"):
        ExperimentConfig.from_dict({"cls": {"epoch": 3}})


@pytest.mark.parametrize("kw,msg", [
    (dict(method="resnet"), "method"),
    (dict(augmentation="mirrored"), "augmentation"),
    (dict(alpha=1.5), "alpha"),
    (dict(p=-0.1), "p"),
    (dict(val_ratio=1.0), "val_ratio"),
    (dict(gamma=-1.0), "gamma"),
    (dict(eta=-0.5), "eta"),
    (dict(lambda_s=-2.0), "lambda_s"),
    (dict(n_runs=0), "n_runs"),
])
def test_config_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        ExperimentConfig(**kw)


def test_config_stylized_needs_style_phase_or_checkpoint():
    from styleaug.experiment import StylePhaseConfig
    with pytest.raises(ValueError, match="style"):
        ExperimentConfig(augmentation="stylized",
                         style=StylePhaseConfig(epochs=0))
    # a checkpoint path satisfies the requirement without a style phase
    ExperimentConfig(augmentation="stylized", style_checkpoint="x.ckpt",
                     style=StylePhaseConfig(epochs=0))


# ------------------------------------------------------------------ results

def demo_rows():
    cfg = ExperimentConfig(method="baseline", augmentation="original")
    r1 = ResultRow.build("dusk", cfg, [100, 101, 102],
                         [70.123, 80.456, 90.789], ["aa", "bb", "cc"])
    cfg2 = ExperimentConfig(method="baseline", augmentation="stylized",
                            alpha=0.5, p=0.75)
    r2 = ResultRow.build("paper", cfg2, [100], [66.666])
    return [r1, r2]


def test_emit_results_csv_layout(tmp_path):
    path = tmp_path / "out.csv"
    emit_results(demo_rows(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "target,method,augmentation,alpha,p,run_seeds,accuracies,mean,std"
    assert lines[0] == ",".join(CSV_HEADER)
    with open(path) as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["target"] == "dusk"
    assert rows[0]["accuracies"] == "70.12;80.46;90.79"
    assert rows[0]["mean"] == "80.46"
    assert rows[0]["std"] == "10.33"
    assert rows[0]["run_seeds"] == "100;101;102"
    assert rows[1]["alpha"] == "0.5" and rows[1]["p"] == "0.75"
    assert rows[1]["std"] == "0.00"


def test_results_sidecar_round_trips_full_precision(tmp_path):
    path = tmp_path / "out.csv"
    rows = demo_rows()
    emit_results(rows, path)
    again = read_results_sidecar(path)
    assert again == rows
    assert again[0].accuracies == [70.123, 80.456, 90.789]


def test_emit_results_empty(tmp_path):
    path = tmp_path / "none.csv"
    emit_results([], path)
    assert path.read_text().splitlines() == [",".join(CSV_HEADER)]
    assert read_results_sidecar(path) == []


# ------------------------------------------------------------- experiments

def tiny_config(**kw):
    base = dict(
        method="baseline", augmentation="original", n_runs=2, base_seed=5,
        data={"n_classes": 3, "n_domains": 2, "images_per_class": 6,
              "image_size": 16, "seed": 1},
        style={"epochs": 1, "widths": [4, 6], "strides": [1, 2],
               "encoder_pretrain_iters": 0},
        cls={"iterations": 12, "val_every": 4, "per_domain": 4,
             "widths": [4, 4, 8, 8]},
    )
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_run_experiment_smoke_and_determinism():
    cfg = tiny_config()
    ds = load_dataset(cfg)
    row = run_experiment(cfg, "paper", ds)
    assert row.target == "paper"
    assert row.method == "baseline" and row.augmentation == "original"
    assert row.run_seeds == [5, 6]
    assert len(row.accuracies) == 2
    assert all(0.0 <= a <= 100.0 for a in row.accuracies)
    assert (row.mean, row.std) == average_runs(row.accuracies)
    assert len(row.param_hashes) == 2

    again = run_experiment(cfg, "paper", ds)
    assert again.accuracies == row.accuracies
    assert again.param_hashes == row.param_hashes


def test_run_experiment_unknown_target():
    cfg = tiny_config()
    with pytest.raises(ValueError, match="unknown target"):
        run_experiment(cfg, "venus", load_dataset(cfg))


def test_run_experiment_saves_loadable_classifier(tmp_path):
    cfg = tiny_config(n_runs=1)
    ckpt = tmp_path / "cls.ckpt"
    run_experiment(cfg, "dusk", load_dataset(cfg), save_last_model_to=str(ckpt))
    clf = load_classifier(ckpt)
    imgs = np.stack([it.image for it in load_dataset(cfg).domain("dusk")[:4]])
    assert clf.predict(imgs).shape == (4,)


def test_target_images_never_influence_training():
    """Protocol guard: replacing every target image with noise must leave the
    trained parameters bit-identical; only the reported accuracy may move."""
    cfg = tiny_config()
    ds = load_dataset(cfg)
    rng = np.random.default_rng(0)
    doctored_items = [
        LabeledImage(rng.random(it.image.shape).astype(np.float32),
                     it.label, it.domain, it.uid)
        for it in ds.domain("paper")]
    doctored = MultiDomainDataset(
        ds.domain_names, ds.class_names,
        {**ds.domains, "paper": doctored_items}, dict(ds.metadata))

    row = run_experiment(cfg, "paper", ds)
    row_doc = run_experiment(cfg, "paper", doctored)
    assert row.param_hashes == row_doc.param_hashes


def test_stylized_run_reuses_prefit_model_exactly():
    """The per-target style model is independent of the run partition and of
    (alpha, p), so handing a pre-fit model to run_experiment must reproduce
    the lazy path bit for bit."""
    cfg = tiny_config(augmentation="stylized", alpha=1.0, p=0.75, n_runs=2)
    ds = load_dataset(cfg)
    lazy = run_experiment(cfg, "dusk", ds)
    models = fit_style_models(cfg, ds)
    hoisted = run_experiment(cfg, "dusk", ds, style_model=models["dusk"])
    assert hoisted.accuracies == lazy.accuracies
    assert hoisted.param_hashes == lazy.param_hashes


def test_sweep_grid_shape_and_hoisting():
    cfg = tiny_config(augmentation="stylized", n_runs=1)
    ds = load_dataset(cfg)
    models = fit_style_models(cfg, ds)
    table = sweep(cfg, [0.5, 1.0], [0.75], ds, style_models=models)
    assert table.alphas == [0.5, 1.0] and table.ps == [0.75]
    assert set(table.cell_means) == {(0.5, 0.75), (1.0, 0.75)}
    for key, rows in table.rows.items():
        assert [r.target for r in rows] == list(ds.domain_names)
        assert table.cell_means[key] == pytest.approx(
            np.mean([r.mean for r in rows]))
    # a cell must agree with a direct run at the same settings
    direct = run_experiment(
        ExperimentConfig.from_dict({**cfg.to_dict(), "alpha": 1.0, "p": 0.75}),
        "dusk", ds, style_model=models["dusk"])
    cell_row = [r for r in table.rows[(1.0, 0.75)] if r.target == "dusk"][0]
    assert cell_row.accuracies == direct.accuracies


def test_sweep_rejects_empty_grid():
    cfg = tiny_config()
    with pytest.raises(ValueError, match="grid"):
        sweep(cfg, [], [0.75], load_dataset(cfg))


# ---------------------------------------------------------------------- cli

def write_config(tmp_path, **kw):
    cfg = tiny_config(**kw)
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json())
    return path


def test_cli_gen_data(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    out = tmp_path / "imgs"
    rc = main(["-q", "gen-data", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "wrote 36 images" in text
    assert sorted(p.name for p in out.iterdir()) == ["dusk", "paper"]


def test_cli_train_cls_writes_results(tmp_path, capsys):
    cfg_path = write_config(tmp_path, n_runs=1)
    out = tmp_path / "res.csv"
    rc = main(["-q", "train-cls", "--config", str(cfg_path),
               "--target", "dusk", "--out", str(out)])
    assert rc == 0
    assert "dusk:" in capsys.readouterr().out
    rows = read_results_sidecar(out)
    assert len(rows) == 1 and rows[0].target == "dusk"


def test_cli_overrides_take_effect(tmp_path):
    cfg_path = write_config(tmp_path, n_runs=1)
    out = tmp_path / "res.csv"
    rc = main(["-q", "train-cls", "--config", str(cfg_path),
               "--target", "dusk", "--out", str(out),
               "--n-runs", "2", "--seed", "9"])
    assert rc == 0
    row = read_results_sidecar(out)[0]
    assert row.run_seeds == [9, 10]


def test_cli_style_then_stylized_cls(tmp_path, capsys):
    cfg_path = write_config(tmp_path, n_runs=1, augmentation="stylized")
    ckpt = tmp_path / "style.ckpt"
    rc = main(["-q", "train-style", "--config", str(cfg_path),
               "--target", "dusk", "--out", str(ckpt)])
    assert rc == 0 and ckpt.exists()
    rc = main(["-q", "train-cls", "--config", str(cfg_path),
               "--target", "dusk", "--style-checkpoint", str(ckpt)])
    assert rc == 0
    assert "dusk:" in capsys.readouterr().out


def test_cli_eval_round_trip(tmp_path, capsys):
    cfg_path = write_config(tmp_path, n_runs=1)
    ckpt = tmp_path / "cls.ckpt"
    rc = main(["-q", "train-cls", "--config", str(cfg_path),
               "--target", "paper", "--save-model", str(ckpt)])
    assert rc == 0
    rc = main(["-q", "eval", "--config", str(cfg_path),
               "--target", "paper", "--checkpoint", str(ckpt)])
    assert rc == 0
    assert "% on" in capsys.readouterr().out


def test_cli_sweep_prints_grid(tmp_path, capsys):
    cfg_path = write_config(tmp_path, n_runs=1)
    rc = main(["-q", "sweep", "--config", str(cfg_path),
               "--alphas", "1.0", "--ps", "0.5"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "alpha\\p" in text


def test_cli_report(tmp_path, capsys):
    out = tmp_path / "res.csv"
    emit_results(demo_rows(), out)
    rc = main(["report", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "dusk" in text and "average" in text


def test_cli_errors_return_nonzero(tmp_path):
    cfg_path = write_config(tmp_path)
    rc = main(["-q", "train-cls", "--config", str(cfg_path),
               "--target", "pluto"])
    assert rc == 1
    rc = main(["-q", "eval", "--config", str(cfg_path), "--target", "dusk",
               "--checkpoint", str(tmp_path / "missing.ckpt")])
    assert rc == 1


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit):
        main(["frobnicate"])

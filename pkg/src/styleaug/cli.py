"""Command line entry points.

Subcommands mirror the experiment pipeline: generate data, train the style
model, train/evaluate classifiers, run sweeps, and format result files. All
hyperparameters live in an ExperimentConfig; a JSON file supplies the full
schema and individual flags override single fields.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


def _load_config(args):
    from .experiment import ExperimentConfig

    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for flag, path in [
        ("method", ("method",)), ("augmentation", ("augmentation",)),
        ("alpha", ("alpha",)), ("p", ("p",)), ("gamma", ("gamma",)),
        ("eta", ("eta",)), ("seed", ("base_seed",)),
        ("n_runs", ("n_runs",)), ("iterations", ("cls", "iterations")),
        ("per_domain", ("cls", "per_domain")),
        ("style_epochs", ("style", "epochs")),
        ("style_checkpoint", ("style_checkpoint",)),
        ("data_path", ("data", "path")),
        ("dataset_seed", ("data", "seed")),
        ("images_per_class", ("data", "images_per_class")),
        ("vlcs_mode", ("data", "vlcs_mode")),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[path] = value
    d = cfg.to_dict()
    for path, value in overrides.items():
        node = d
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value
    from .experiment import ExperimentConfig as EC
    return EC.from_dict(d)


def _add_config_flags(p, with_method=True):
    p.add_argument("--config", help="JSON config file (full schema)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--data-path", dest="data_path",
                   help="image-folder dataset root (default: synthetic)")
    p.add_argument("--dataset-seed", dest="dataset_seed", type=int)
    p.add_argument("--images-per-class", dest="images_per_class", type=int)
    p.add_argument("--vlcs-mode", dest="vlcs_mode", action="store_const",
                   const=True, default=None,
                   help="pre-split the target 70/30 and test on the 30%%")
    if with_method:
        p.add_argument("--method", choices=["baseline", "rotation",
                                            "mixup-pixel", "mixup-feature"])
        p.add_argument("--augmentation", choices=["original", "stylized"])
        p.add_argument("--alpha", type=float)
        p.add_argument("--p", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--n-runs", dest="n_runs", type=int)
        p.add_argument("--iterations", type=int)
        p.add_argument("--per-domain", dest="per_domain", type=int)
        p.add_argument("--style-epochs", dest="style_epochs", type=int)
        p.add_argument("--style-checkpoint", dest="style_checkpoint")


def cmd_gen_data(args):
    from .data import dataset_manifest, export_image_folder
    from .experiment import load_dataset

    config = _load_config(args)
    dataset = load_dataset(config)
    n = export_image_folder(dataset, args.out)
    print(dataset_manifest(dataset))
    print(f"wrote {n} images under {args.out}")
    return 0


def cmd_train_style(args):
    from .data import leave_one_out_split
    from .experiment import _fit_style_model, load_dataset
    from .style_model import save_style_model

    config = _load_config(args)
    dataset = load_dataset(config)
    if args.target not in dataset.domain_names:
        raise ValueError(f"unknown target {args.target!r}; "
                         f"have {list(dataset.domain_names)}")
    rng = np.random.default_rng(config.base_seed)
    split = leave_one_out_split(dataset, args.target, rng,
                                val_ratio=config.val_ratio,
                                vlcs_mode=config.data.vlcs_mode)
    model = _fit_style_model(config, split,
                             dataset.domain_names.index(args.target))
    save_style_model(model, args.out)
    print(f"style model (target {args.target} held out) saved to {args.out}")
    return 0


def cmd_train_cls(args):
    from .experiment import emit_results, format_mean_std, load_dataset, \
        run_experiment

    config = _load_config(args)
    dataset = load_dataset(config)
    targets = [args.target] if args.target else list(dataset.domain_names)
    rows = []
    for target in targets:
        row = run_experiment(config, target, dataset,
                             save_last_model_to=args.save_model)
        rows.append(row)
        print(f"{target}: {format_mean_std(row.mean, row.std)}  "
              f"(runs: {', '.join(f'{a:.2f}' for a in row.accuracies)})")
    if len(rows) > 1:
        print(f"average: {np.mean([r.mean for r in rows]):.2f}")
    if args.out:
        emit_results(rows, args.out)
        print(f"results written to {args.out} (+ .full.json sidecar)")
    return 0


def cmd_eval(args):
    from .data import leave_one_out_split, stack_images
    from .experiment import load_dataset
    from .training import evaluate, load_classifier

    config = _load_config(args)
    dataset = load_dataset(config)
    classifier = load_classifier(args.checkpoint)
    rng = np.random.default_rng(config.base_seed)
    split = leave_one_out_split(dataset, args.target, rng,
                                val_ratio=config.val_ratio,
                                vlcs_mode=config.data.vlcs_mode)
    test = stack_images(split.target_test)
    acc = evaluate(classifier, test.images, test.labels) * 100.0
    print(f"{args.target}: {acc:.2f}% on {len(test.labels)} images")
    return 0


def cmd_sweep(args):
    from .experiment import emit_results, load_dataset, sweep

    config = _load_config(args)
    alphas = [float(v) for v in args.alphas.split(",")]
    ps = [float(v) for v in args.ps.split(",")]
    dataset = load_dataset(config)
    table = sweep(config, alphas, ps, dataset)
    print("alpha/p grid (mean accuracy over all targets):")
    header = "alpha\\p " + "  ".join(f"{p:>7.2f}" for p in table.ps)
    print(header)
    for a in table.alphas:
        cells = "  ".join(f"{table.cell_means[(a, p)]:>7.2f}" for p in table.ps)
        print(f"{a:>7.2f} {cells}")
    if args.out:
        flat = [row for key in sorted(table.rows) for row in table.rows[key]]
        emit_results(flat, args.out)
        print(f"per-cell rows written to {args.out} (+ .full.json sidecar)")
    return 0


def cmd_report(args):
    from .experiment import format_mean_std, read_results_sidecar

    for path in args.results:
        rows = read_results_sidecar(path)
        print(f"== {path}")
        for r in rows:
            print(f"  {r.target:<12} {r.method:<14} {r.augmentation:<9} "
                  f"alpha={r.alpha:g} p={r.p:g}  "
                  f"{format_mean_std(r.mean, r.std)}")
        if rows:
            print(f"  {'average':<12} {np.mean([r.mean for r in rows]):.2f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="styleaug",
        description="Source augmentation by style transfer for multi-source "
                    "domain generalization.")
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="suppress run logs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset as an "
                                        "image folder")
    _add_config_flags(p, with_method=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-style", help="train the style model on source "
                                           "domains (target held out)")
    _add_config_flags(p)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(fn=cmd_train_style)

    p = sub.add_parser("train-cls", help="train and evaluate classifiers "
                                         "(all targets unless --target)")
    _add_config_flags(p)
    p.add_argument("--target")
    p.add_argument("--out", help="results CSV path")
    p.add_argument("--save-model", dest="save_model",
                   help="save the last run's selected classifier")
    p.set_defaults(fn=cmd_train_cls)

    p = sub.add_parser("eval", help="evaluate a classifier checkpoint on a "
                                    "target domain")
    _add_config_flags(p)
    p.add_argument("--target", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="alpha/p grid, averaged over targets")
    _add_config_flags(p)
    p.add_argument("--alphas", required=True, help="comma list, e.g. 0,0.5,1")
    p.add_argument("--ps", required=True, help="comma list, e.g. 0.75")
    p.add_argument("--out", help="results CSV path")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="pretty-print emitted result files")
    p.add_argument("results", nargs="+", help="CSV paths (sidecars read)")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except Exception as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

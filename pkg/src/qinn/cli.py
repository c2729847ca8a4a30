"""Experiment driver: every study is a subcommand taking a JSON config.

Precedence is flags > config file > defaults. Each run writes metrics.csv,
record.json (config snapshot, hash, seeds, versions), and checkpoints/ under
the output directory; reruns with the same config and seed reproduce the
metrics bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__, adversarial, data, expressibility
from .errors import ConfigurationError, DataError, NumericError, QinnError
from .models import ModelSpec, build, save_model, variable_count_report
from .training import train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def merge_config(defaults: dict, path: str | None, overrides: dict) -> dict:
    config = json.loads(json.dumps(defaults))  # deep copy
    if path is not None:
        doc = json.loads(Path(path).read_text())
        unknown = set(doc) - set(defaults)
        if unknown:
            raise ConfigurationError(
                f"unknown config keys {sorted(unknown)}; expected a subset of "
                f"{sorted(defaults)}")
        config.update(doc)
    config.update({k: v for k, v in overrides.items() if v is not None})
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(canonical).hexdigest()


def write_record(out_dir: Path, command: str, config: dict, seeds: list[int],
                 summary: dict, started: float) -> None:
    record = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "library_version": __version__,
        "seeds": seeds,
        "summary": summary,
        "wall_clock": time.perf_counter() - started,
    }
    (out_dir / "record.json").write_text(json.dumps(record, indent=1))


def write_metrics(out_dir: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def resolve_dataset(cfg: dict, seed: int) -> tuple[data.Dataset, data.Dataset]:
    kind = cfg.get("kind", "digits-standin")
    classes = cfg.get("classes", [0, 1, 2, 3, 4])
    train_n = cfg.get("train_n", 2000)
    test_n = cfg.get("test_n", 500)
    if kind == "digits-standin":
        return data.handwritten_digits(train_n, test_n, classes, seed=seed)
    if kind == "idx":
        full = data.load_idx(cfg["train_images"], cfg["train_labels"])
        if "test_images" in cfg:
            test_full = data.load_idx(cfg["test_images"], cfg["test_labels"],
                                      split="test")
            tr = data.stratified_subset(full, classes, train_n, seed, "train")
            te = data.stratified_subset(test_full, classes, test_n, seed,
                                        "test")
            return tr, te
        return data.select_classes(full, classes, train_n, test_n, seed)
    if kind == "cifar":
        full = data.load_cifar_binary(cfg["path"])
        return data.select_classes(full, classes, train_n, test_n, seed)
    raise ConfigurationError(f"unknown dataset kind {kind!r}")


def model_spec_from(config: dict, input_shape) -> ModelSpec:
    return ModelSpec(
        architecture=config["architecture"],
        input_shape=tuple(input_shape),
        classes=config.get("classes", 5),
        n_pool=config.get("n_pool"),
        subset_size=config.get("subset_size"),
        activation=config.get("activation", "tanh"),
        circuit_layers=config.get("circuit_layers", 2),
        reuploads=config.get("reuploads", 2),
    )


def _run_training(config: dict, seed: int, train_ds, test_ds):
    flat = config["architecture"] in ("fnn", "wc_fnn")
    shape = (train_ds.images.shape[1] * train_ds.images.shape[2]
             * train_ds.images.shape[3],) if flat else train_ds.images.shape[1:]
    spec = model_spec_from(config, shape)
    model = build(spec, seed=seed)
    report = train(model, train_ds.images, train_ds.labels, test_ds.images,
                   test_ds.labels, epochs=config["epochs"], seed=seed,
                   batch_size=config.get("batch_size", 32),
                   lr=config.get("lr", 1e-3),
                   dropout_p=config.get("train_dropout_p", 0.0))
    return model, report


# ---------------------------------------------------------------------------
# CLI definition
# ---------------------------------------------------------------------------

@click.group()
def main():
    """Experiment harness for weight-constrained and hybrid networks."""


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="JSON config file")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override the config seed")(fn)
    fn = click.option("--out", "out_dir", default=None,
                      help="output directory")(fn)
    fn = click.option("--workers", type=int, default=None,
                      help="worker pool size for grid cells")(fn)
    return fn


def _run_command(name, defaults, config_path, overrides, body):
    started = time.perf_counter()
    try:
        config = merge_config(defaults, config_path, overrides)
        out_dir = Path(config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        fieldnames, rows, seeds, summary = body(config)
        write_metrics(out_dir, fieldnames, rows)
        write_record(out_dir, name, config, seeds, summary, started)
        click.echo(f"{name}: wrote {out_dir / 'metrics.csv'}")
    except (ConfigurationError, FileNotFoundError, KeyError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except NumericError as exc:
        click.echo(f"numeric error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except QinnError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


TRAIN_DEFAULTS = {
    "architecture": "wc_fnn",
    "n_pool": 15,
    "subset_size": 5,
    "classes": 5,
    "activation": "tanh",
    "epochs": 30,
    "batch_size": 32,
    "lr": 1e-3,
    "train_dropout_p": 0.0,
    "seed": 0,
    "dataset": {"kind": "digits-standin", "train_n": 2000, "test_n": 500},
    "circuit_layers": 2,
    "reuploads": 2,
    "out": "runs/train",
    "workers": 1,
}


@main.command("train")
@_common_options
def cmd_train(config_path, seed, out_dir, workers):
    """Train one model and record its learning curves."""

    def body(config):
        run_seed = config["seed"]
        train_ds, test_ds = resolve_dataset(config["dataset"], run_seed)
        model, report = _run_training(config, run_seed, train_ds, test_ds)
        save_model(model, Path(config["out"]) / "checkpoints")
        rows = [{"epoch": e,
                 "train_loss": report.train_loss[e],
                 "train_acc": report.train_acc[e],
                 "test_loss": report.test_loss[e],
                 "test_acc": report.test_acc[e]}
                for e in range(len(report.test_acc))]
        summary = {"best_epoch": report.best_epoch,
                   "best_test_acc": report.best_test_acc,
                   "checksum": report.checksum}
        return (["epoch", "train_loss", "train_acc", "test_loss", "test_acc"],
                rows, [run_seed], summary)

    _run_command("train", TRAIN_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


SWEEP_NR_DEFAULTS = dict(TRAIN_DEFAULTS, out="runs/sweep_nr",
                         grid_N=[15, 20], grid_r=[5], n_seeds=16)


@main.command("sweep-nr")
@_common_options
def cmd_sweep_nr(config_path, seed, out_dir, workers):
    """Train the constrained model over an (N, r) grid, best of n seeds."""

    def body(config):
        base_seed = config["seed"]
        train_ds, test_ds = resolve_dataset(config["dataset"], base_seed)
        cells = [(n, r) for n in config["grid_N"] for r in config["grid_r"]]
        seeds = list(range(base_seed, base_seed + config["n_seeds"]))

        def run_cell(cell):
            n_pool, subset_size = cell
            cell_cfg = dict(config, n_pool=n_pool, subset_size=subset_size)
            accs = []
            for s in seeds:
                _, report = _run_training(cell_cfg, s, train_ds, test_ds)
                accs.append(report.best_test_acc)
            return {"N": n_pool, "r": subset_size,
                    "best_acc": max(accs),
                    "median_acc": float(np.median(accs)),
                    "n_seeds": len(seeds)}

        with ThreadPoolExecutor(max_workers=config["workers"]) as pool:
            rows = list(pool.map(run_cell, cells))
        summary = {"cells": len(rows),
                   "best_overall": max(r["best_acc"] for r in rows)}
        return (["N", "r", "best_acc", "median_acc", "n_seeds"], rows,
                seeds, summary)

    _run_command("sweep-nr", SWEEP_NR_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


EXPRESS_DEFAULTS = {
    "N_values": [14, 16, 18, 20, 22, 25],
    "r_for_N_sweep": 4,
    "r_values": [4, 5, 6, 7, 8, 9],
    "N_for_r_sweep": 20,
    "dim": 1000,
    "samples": 50000,
    "seed": 0,
    "fixed_bank": False,
    "out": "runs/express",
    "workers": 1,
}


@main.command("express")
@_common_options
def cmd_express(config_path, seed, out_dir, workers):
    """Expressibility sweep over N and r with decay and linear fits."""

    def body(config):
        run_seed = config["seed"]
        n_cells = [(n, config["r_for_N_sweep"]) for n in config["N_values"]]
        r_cells = [(config["N_for_r_sweep"], r) for r in config["r_values"]]

        def run_sweep(cells):
            return expressibility.sweep(
                cells, samples=config["samples"], seed=run_seed,
                dim=config["dim"], fixed_bank=config["fixed_bank"])

        with ThreadPoolExecutor(max_workers=config["workers"]) as pool:
            n_sweep, r_sweep = pool.map(run_sweep, [n_cells, r_cells])
        rows = n_sweep.rows() + r_sweep.rows()
        r_vals = r_sweep.column("subset_size")
        amplitude, base = expressibility.fit_decay(
            r_vals, r_sweep.column("kl_inv"))
        comparison = expressibility.compare_trainability_fits(
            r_vals, r_sweep.column("delta_inv"))
        summary = {"decay_amplitude": amplitude, "decay_base": base,
                   "trainability": comparison}
        return (["N", "r", "kl", "kl_inv", "delta", "delta_inv", "samples",
                 "seed"], rows, [run_seed], summary)

    _run_command("express", EXPRESS_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


ATTACK_DEFAULTS = dict(
    TRAIN_DEFAULTS,
    out="runs/attack",
    epsilons=[0.0, 0.05, 0.1, 0.15, 0.2],
    p_values=[0.0, 0.001],
    attack_n=500,
    train_dropout_p=0.005,
)


@main.command("attack")
@_common_options
def cmd_attack(config_path, seed, out_dir, workers):
    """FGSM robustness curves over an epsilon grid per defense probability."""

    def body(config):
        run_seed = config["seed"]
        train_ds, test_ds = resolve_dataset(config["dataset"], run_seed)
        model, report = _run_training(config, run_seed, train_ds, test_ds)
        save_model(model, Path(config["out"]) / "checkpoints")
        n = min(config["attack_n"], len(test_ds))
        images, labels = test_ds.images[:n], test_ds.labels[:n]
        rows = []
        for p in config["p_values"]:
            attack_config = adversarial.AttackConfig(
                epsilons=tuple(config["epsilons"]), dropout_p=p,
                seed=run_seed)
            curve = adversarial.evaluate_robustness(model, images, labels,
                                                    attack_config)
            for row in curve.rows:
                rows.append({"model": config["architecture"],
                             "dataset": train_ds.provenance,
                             "p": row["p"], "epsilon": row["epsilon"],
                             "accuracy": row["accuracy"],
                             "n_samples": n, "seed": run_seed})
        summary = {"clean_acc": report.best_test_acc,
                   "curve_points": len(rows)}
        return (["model", "dataset", "p", "epsilon", "accuracy", "n_samples",
                 "seed"], rows, [run_seed], summary)

    _run_command("attack", ATTACK_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


QDEMO_DEFAULTS = {
    "boundaries": ["linear", "cubic"],
    "encodings": ["angle", "amplitude"],
    "train_n": 600,
    "test_n": 300,
    "epochs": 40,
    "batch_size": 32,
    "lr": 0.05,
    "circuit_layers": 2,
    "reuploads": 2,
    "seed": 0,
    "out": "runs/qdemo",
    "workers": 1,
}


@main.command("qdemo")
@_common_options
def cmd_qdemo(config_path, seed, out_dir, workers):
    """Boundary classification with angle vs. amplitude encodings."""

    def body(config):
        run_seed = config["seed"]
        cells = [(enc, kind) for enc in config["encodings"]
                 for kind in config["boundaries"]]

        def run_cell(cell):
            encoding, kind = cell
            train_set = data.boundary_dataset(kind, config["train_n"],
                                              run_seed)
            test_set = data.boundary_dataset(kind, config["test_n"],
                                             run_seed + 1)
            spec = ModelSpec(architecture=f"hnn_{encoding}", input_shape=(2,),
                             classes=2,
                             circuit_layers=config["circuit_layers"],
                             reuploads=config["reuploads"])
            model = build(spec, seed=run_seed)
            report = train(model, train_set.points, train_set.labels,
                           test_set.points, test_set.labels,
                           epochs=config["epochs"], seed=run_seed,
                           batch_size=config["batch_size"], lr=config["lr"])
            return {"encoding": encoding, "boundary": kind,
                    "test_acc": report.best_test_acc,
                    "best_epoch": report.best_epoch, "seed": run_seed}

        with ThreadPoolExecutor(max_workers=config["workers"]) as pool:
            rows = list(pool.map(run_cell, cells))
        summary = {row["encoding"] + "-" + row["boundary"]: row["test_acc"]
                   for row in rows}
        return (["encoding", "boundary", "test_acc", "best_epoch", "seed"],
                rows, [run_seed], summary)

    _run_command("qdemo", QDEMO_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


REPORT_DEFAULTS = {
    "architecture": "wc_fnn",
    "input_shape": [784],
    "classes": 5,
    "n_pool": 15,
    "subset_size": 5,
    "out": "runs/report",
    "seed": 0,
    "workers": 1,
}


@main.command("report")
@_common_options
def cmd_report(config_path, seed, out_dir, workers):
    """Variable accounting against the unconstrained twin."""

    def body(config):
        spec = model_spec_from(config, tuple(config["input_shape"]))
        report = variable_count_report(spec)
        rows = [{"layer": row.name, "variables": row.variables,
                 "unconstrained_variables": row.unconstrained_variables}
                for row in report.rows]
        summary = {"constrained_layer_ratio": report.constrained_layer_ratio,
                   "network_ratio": report.network_ratio,
                   "total": report.total,
                   "total_unconstrained": report.total_unconstrained}
        for row in rows:
            click.echo(f"{row['layer']}: {row['variables']} vs "
                       f"{row['unconstrained_variables']} unconstrained")
        click.echo(f"constrained layer ratio: {report.constrained_layer_ratio}")
        click.echo(f"network ratio: {report.network_ratio:.3f}")
        return (["layer", "variables", "unconstrained_variables"], rows,
                [config["seed"]], summary)

    _run_command("report", REPORT_DEFAULTS, config_path,
                 {"seed": seed, "out": out_dir, "workers": workers}, body)


if __name__ == "__main__":
    main()

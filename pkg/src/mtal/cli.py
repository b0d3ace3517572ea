"""Command-line workflow: simulate | train | evaluate | gradcheck | sweep | replay.

Every command writes its outputs plus a run manifest (resolved
configuration, seeds, paths, toolkit version, kernel backend, timing)
into the run directory; ``replay`` re-executes a manifest and reproduces
the output files byte for byte. The default seed comes from MTAL_SEED
when a command does not pass --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, data_io, kernels
from . import gradcheck as gradcheck_mod, metrics, synthdata, training
from .data_model import stratified_split
from .errors import MtalError
from .training import TrainConfig

DEFAULT_SEED_ENV = "MTAL_SEED"


def _default_seed() -> int:
    return int(os.environ.get(DEFAULT_SEED_ENV, "0"))


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict,
                    outputs: list[str], started: float) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "toolkit_version": __version__,
        "kernel_backend": kernels.backend_name(),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# simulate


def _add_simulate_parser(sub):
    p = sub.add_parser("simulate", help="generate a synthetic multi-group dataset")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--units", type=int, default=500, help="units per group")
    p.add_argument("--block-dim", type=int, default=10, help="covariates per group block")
    p.add_argument("--rho-max", type=float, default=0.6)
    p.add_argument("--rho-min", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0, help="cross-block correlation strength")
    p.add_argument("--preset", choices=sorted(synthdata.CORRELATION_PRESETS),
                   help="named correlation structure (overrides rho/gamma/delta)")
    p.add_argument("--bias", type=float, default=0.5,
                   help="mean shift of every non-reference group (selection bias dial)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)


def _simulate_config(args) -> synthdata.SynthConfig:
    seed = _default_seed() if args.seed is None else args.seed
    block_dims = (args.block_dim,) * args.groups
    if args.preset:
        spec = synthdata.preset_spec(args.preset, block_dims)
    else:
        spec = synthdata.CorrelationSpec(
            block_dims=block_dims, rho_max=args.rho_max, rho_min=args.rho_min,
            gamma=args.gamma, cross_block_delta=args.delta,
        )
    return synthdata.SynthConfig(
        group_count=args.groups,
        units_per_group=(args.units,) * args.groups,
        spec=spec,
        mean_shifts=(0.0,) + (args.bias,) * (args.groups - 1),
        covariate_seed=seed,
        outcome_seed=seed + 1_000_003,
    )


def cmd_simulate(args) -> int:
    started = time.time()
    out = _out_dir(args)
    config = _simulate_config(args)
    synth = synthdata.generate_basket_dataset(config)
    ds = synth.dataset

    data_io.write_dataset_table(out / "dataset.csv", ds)
    po_header = [f"po_{t}" for t in range(ds.group_count)]
    data_io.write_table(out / "potential_outcomes.csv", po_header,
                        ds.potential_outcomes.tolist())
    kl_rows = [
        [i, j, synth.kl_forward[i, j], synth.kl_symmetric[i, j]]
        for i in range(ds.group_count)
        for j in range(ds.group_count)
        if i != j
    ]
    data_io.write_table(out / "kl.csv",
                        ["group_from", "group_to", "kl_forward", "kl_symmetric"], kl_rows)
    _write_manifest(
        out, "simulate", config.to_dict(), inputs={},
        outputs=["dataset.csv", "potential_outcomes.csv", "kl.csv"], started=started,
    )
    print(f"simulated {ds.n_units} units, {ds.group_count} groups -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _add_train_parser(sub):
    p = sub.add_parser("train", help="train the adversarial estimator on a dataset")
    p.add_argument("data", help="dataset table, replicate file/dir, or npz bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("table", "ihdp"), default="table")
    p.add_argument("--replicate", type=int, default=0, help="replicate index (ihdp format)")
    p.add_argument("--group-col", default="group")
    p.add_argument("--outcome-col", default="y")
    p.add_argument("--config", default=None,
                   help="JSON file of training settings; explicit flags override it")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--batch-per-group", type=int, default=None,
                   help="units per group per batch")
    p.add_argument("--gen-steps", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--split", default=None, help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)


def _load_any(path: str, args):
    if args.format == "ihdp":
        return data_io.load_ihdp(path, args.replicate)
    schema = data_io.TableSchema(group_column=args.group_col,
                                 outcome_column=args.outcome_col)
    return data_io.load_table(path, schema)


def _train_config(args) -> TrainConfig:
    """Resolution order: explicit flag > --config file > built-in default."""
    settings = TrainConfig(seed=_default_seed()).to_dict()
    if args.config:
        file_settings = json.loads(Path(args.config).read_text())
        unknown = set(file_settings) - set(settings)
        if unknown:
            raise MtalError(f"{args.config}: unknown settings {sorted(unknown)}")
        settings.update(file_settings)
    flag_map = {
        "beta": args.beta, "lam": args.lam, "alpha": args.alpha,
        "layers": args.layers, "width": args.width,
        "units_per_group": args.batch_per_group, "gen_steps": args.gen_steps,
        "max_epochs": args.max_epochs, "patience": args.patience,
        "learning_rate": args.lr, "dropout": args.dropout, "seed": args.seed,
    }
    settings.update({k: v for k, v in flag_map.items() if v is not None})
    if args.split is not None:
        settings["split_fractions"] = [float(f) for f in args.split.split(",")]
    return TrainConfig.from_dict(settings)


def cmd_train(args) -> int:
    started = time.time()
    out = _out_dir(args)
    dataset = _load_any(args.data, args)
    config = _train_config(args)

    gen, disc, history = training.train(dataset, config)
    split = stratified_split(dataset, config.split_fractions,
                             np.random.default_rng(config.seed))
    meta = {
        "train_config": config.to_dict(),
        "dataset_fingerprint": data_io.dataset_fingerprint(dataset),
        "split": {
            "train": split.train.tolist(),
            "val": split.val.tolist(),
            "test": split.test.tolist(),
        },
        "best_epoch": history.best_epoch,
    }
    data_io.save_model(gen, disc, meta, out / "model.npz")
    rows = [[r["epoch"], r["gen_loss"], r["disc_loss"], r["val_mse"],
             r["disc_balanced_accuracy"]] for r in history.as_rows()]
    data_io.write_table(out / "history.csv",
                        ["epoch", "gen_loss", "disc_loss", "val_mse",
                         "disc_balanced_accuracy"], rows)
    _write_manifest(
        out, "train",
        {**config.to_dict(), "format": args.format, "replicate": args.replicate,
         "group_col": args.group_col, "outcome_col": args.outcome_col},
        inputs={"data": str(args.data)},
        outputs=["model.npz", "history.csv"], started=started,
    )
    best = min(history.val_mse) if history.val_mse else float("nan")
    print(f"trained {len(history.epoch)} epochs (best val MSE {best:.6g}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _add_evaluate_parser(sub):
    p = sub.add_parser("evaluate", help="impute counterfactuals and compute metrics")
    p.add_argument("--model", required=True, help="model archive from train")
    p.add_argument("data", help="dataset path (same format as training)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("table", "ihdp"), default="table")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--group-col", default="group")
    p.add_argument("--outcome-col", default="y")
    p.add_argument("--truth", help="potential-outcome table (synthetic ground truth)")
    p.add_argument("--metrics", default="auto",
                   help="comma list: pehe,ate,mpehe,mate,mse,tgor (default: auto)")
    p.add_argument("--units", choices=("test", "all"), default="test",
                   help="evaluate on the archived test split or on all units")
    p.add_argument("--tgor-source", choices=("imputed", "true"), default="imputed")
    p.add_argument("--dataset-id", default=None)
    p.set_defaults(func=cmd_evaluate)


def _ground_truth(dataset, args):
    """Ground-truth matrix for effect metrics: noiseless means when present."""
    if args.truth:
        return data_io.load_matrix_table(args.truth)
    if dataset.noiseless_means is not None:
        return dataset.noiseless_means
    return dataset.potential_outcomes


def cmd_evaluate(args) -> int:
    started = time.time()
    out = _out_dir(args)
    dataset = _load_any(args.data, args)
    gen, _, meta = data_io.load_model(args.model)

    fingerprint = data_io.dataset_fingerprint(dataset)
    if meta.get("dataset_fingerprint") not in (None, fingerprint):
        print("warning: dataset fingerprint differs from the one the model "
              "was trained on", file=sys.stderr)

    imputed = training.impute_counterfactuals(gen, dataset)
    if args.units == "test" and meta.get("split", {}).get("test"):
        idx = np.asarray(meta["split"]["test"], dtype=np.int64)
    else:
        idx = np.arange(dataset.n_units)

    truth = _ground_truth(dataset, args)
    wanted = args.metrics
    if wanted == "auto":
        names = []
        if truth is not None:
            if dataset.group_count == 2:
                names += ["pehe", "ate"]
            else:
                names += ["mpehe", "mate"]
            names.append("mse")
        names.append("tgor")
        wanted = ",".join(names)

    values: dict[str, float] = {}
    for name in [w.strip() for w in wanted.split(",") if w.strip()]:
        if name in ("pehe", "ate", "mpehe", "mate", "mse"):
            if truth is None:
                raise MtalError(
                    f"metric {name!r} needs ground-truth potential outcomes; "
                    f"provide --truth or a dataset that carries them"
                )
            t_mat, e_mat = truth[idx], imputed[idx]
            if name == "pehe":
                eps, root = metrics.pehe(t_mat, e_mat)
                values["epsilon_pehe"] = eps
                values["sqrt_epsilon_pehe"] = root
            elif name == "ate":
                values["epsilon_ate"] = metrics.ate_error(t_mat, e_mat)
            elif name == "mpehe":
                eps = metrics.multi_metric(t_mat, e_mat, "pehe")
                values["epsilon_mpehe"] = eps
                values["sqrt_epsilon_mpehe"] = float(np.sqrt(eps))
            elif name == "mate":
                values["epsilon_mate"] = metrics.multi_metric(t_mat, e_mat, "ate")
            elif name == "mse":
                values["mse"] = metrics.mse_potential(t_mat, e_mat)
        elif name == "tgor":
            if args.tgor_source == "true":
                source = dataset.potential_outcomes
                if source is None:
                    raise MtalError(
                        "tgor over true outcomes needs the full potential-outcome "
                        "matrix; this dataset is observational, so impute "
                        "counterfactuals (tgor-source=imputed) instead"
                    )
            else:
                source = imputed
            values["tgor_mu"] = metrics.tgor(source, dataset)
            for t in range(dataset.group_count):
                values[f"tgor_tu_{t}"] = metrics.tgor(None, dataset, group=t)
        else:
            raise MtalError(f"unknown metric {name!r}")

    report = metrics.MetricsReport(
        dataset_id=args.dataset_id or Path(args.data).name,
        model_id=Path(args.model).name,
        metrics=values,
        replicate=args.replicate,
        seed=meta.get("train_config", {}).get("seed"),
    )
    data_io.write_report([report], out / "report.csv", format="csv")
    data_io.write_report([report], out / "report.json", format="json")
    _write_manifest(
        out, "evaluate",
        {"metrics": wanted, "units": args.units, "tgor_source": args.tgor_source,
         "format": args.format, "replicate": args.replicate,
         "group_col": args.group_col, "outcome_col": args.outcome_col,
         "dataset_id": report.dataset_id},
        inputs={"data": str(args.data), "model": str(args.model),
                "truth": str(args.truth) if args.truth else None},
        outputs=["report.csv", "report.json"], started=started,
    )
    for name, value in values.items():
        print(f"{name} = {value:.6g}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def _add_gradcheck_parser(sub):
    p = sub.add_parser("gradcheck",
                       help="verify backprop against central finite differences")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--out", default=None, help="optional run directory")
    p.add_argument("--self-test-corrupt", action="store_true",
                   help=argparse.SUPPRESS)  # negative control for the harness
    p.set_defaults(func=cmd_gradcheck)


def cmd_gradcheck(args) -> int:
    started = time.time()
    base_seed = _default_seed() if args.seed is None else args.seed
    result = gradcheck_mod.run_gradcheck(
        seed_count=args.seeds, base_seed=base_seed, h=args.step,
        tolerance=args.tolerance, corrupt=args.self_test_corrupt,
    )
    for case in result.cases:
        print(f"seed {case.seed}: d={case.d} k={case.k} "
              f"gen_err={case.generator_error:.3e} disc_err={case.discriminator_error:.3e} "
              f"{'ok' if case.passed else 'FAIL'}")
    print(f"gradcheck {'PASS' if result.passed else 'FAIL'}: "
          f"max relative error {result.max_error:.3e} "
          f"(tolerance {args.tolerance:g}, {args.seeds} seeds)")
    if args.out:
        out = _out_dir(args)
        rows = [[c.seed, c.d, c.k, c.generator_error, c.discriminator_error,
                 int(c.passed)] for c in result.cases]
        data_io.write_table(out / "gradcheck.csv",
                            ["seed", "d", "k", "generator_error",
                             "discriminator_error", "passed"], rows)
        _write_manifest(
            out, "gradcheck",
            {"seeds": args.seeds, "seed": base_seed, "tolerance": args.tolerance,
             "step": args.step, "self_test_corrupt": bool(args.self_test_corrupt)},
            inputs={}, outputs=["gradcheck.csv"], started=started,
        )
    return 0 if result.passed else 1


# ---------------------------------------------------------------------------
# sweep


def _add_sweep_parser(sub):
    p = sub.add_parser("sweep", help="grid search scored by validation factual MSE")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("table", "ihdp"), default="table")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--group-col", default="group")
    p.add_argument("--outcome-col", default="y")
    p.add_argument("--grid", default=None,
                   help="JSON file {param: [values]}; default: the reference ranges")
    p.add_argument("--seeds", default="0", help="comma list of training seeds per cell")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=30)
    p.set_defaults(func=cmd_sweep)


def default_grid() -> dict:
    """The reference search ranges (two-group batch sizes)."""
    return {
        "beta": [0.0] + [10.0 ** c for c in range(-6, 3)],
        "lam": [0.0] + [10.0 ** c for c in range(-6, 0)],
        "alpha": [0.0] + [10.0 ** c for c in range(-6, 0)],
        "layers": [2, 3, 4, 5],
        "width": [50, 100, 150],
        "units_per_group": [50, 75, 100],
    }


def _grid_cells(grid: dict) -> list[dict]:
    keys = sorted(grid)
    cells = [{}]
    for key in keys:
        cells = [dict(c, **{key: v}) for c in cells for v in grid[key]]
    return cells


def _run_sweep_cell(payload):
    cell_id, cell, seed, data_path, args_dict, base_config = payload
    import mtal.cli as cli  # self-import keeps the worker path identical

    class _Args:
        pass

    args = _Args()
    for key, value in args_dict.items():
        setattr(args, key, value)
    try:
        dataset = cli._load_any(data_path, args)
        config = TrainConfig(**{**base_config, **cell, "seed": seed})
        _, _, history = training.train(dataset, config)
        return {"cell": cell_id, "seed": seed, "status": "ok",
                "val_mse": min(history.val_mse), "epochs": len(history.epoch),
                "error": "", **cell}
    except Exception as exc:  # cell failures recorded, sweep continues
        return {"cell": cell_id, "seed": seed, "status": "failed",
                "val_mse": None, "epochs": 0, "error": str(exc), **cell}


def cmd_sweep(args) -> int:
    started = time.time()
    out = _out_dir(args)
    grid = default_grid() if args.grid is None else json.loads(Path(args.grid).read_text())
    cells = _grid_cells(grid)
    seeds = [int(s) for s in args.seeds.split(",")]
    base_config = {"max_epochs": args.max_epochs, "patience": args.patience}
    args_dict = {"format": args.format, "replicate": args.replicate,
                 "group_col": args.group_col, "outcome_col": args.outcome_col}
    payloads = [
        (i, cell, seed, str(args.data), args_dict, base_config)
        for i, cell in enumerate(cells)
        for seed in seeds
    ]

    if args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_sweep_cell, payloads))
    else:
        results = [_run_sweep_cell(p) for p in payloads]
    results.sort(key=lambda r: (r["cell"], r["seed"]))  # deterministic order

    param_keys = sorted(grid)
    header = ["cell", "seed", "status", "val_mse", "epochs", "error"] + param_keys
    rows = [[r[c] for c in header] for r in results]
    data_io.write_table(out / "results.csv", header, rows)

    by_cell: dict[int, list] = {}
    for r in results:
        if r["status"] == "ok":
            by_cell.setdefault(r["cell"], []).append(r["val_mse"])
    ranked = sorted(
        ((float(np.mean(v)), c) for c, v in by_cell.items() if len(v) == len(seeds)),
        key=lambda t: (t[0], t[1]),
    )
    if ranked:
        best_score, best_cell = ranked[0]
        best = {"config": cells[best_cell], "mean_val_mse": best_score,
                "seeds": seeds, "cell": best_cell}
    else:
        best = {"config": None, "mean_val_mse": None, "seeds": seeds, "cell": None}
    (out / "best_config.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")
    _write_manifest(
        out, "sweep",
        {"grid": grid, "seeds": seeds, "workers": args.workers,
         "max_epochs": args.max_epochs, "patience": args.patience, **args_dict},
        inputs={"data": str(args.data)},
        outputs=["results.csv", "best_config.json"], started=started,
    )
    ok = sum(1 for r in results if r["status"] == "ok")
    print(f"sweep: {ok}/{len(results)} cells ok; best {best['config']} "
          f"(val MSE {best['mean_val_mse']})")
    return 0


# ---------------------------------------------------------------------------
# replay


def _add_replay_parser(sub):
    p = sub.add_parser("replay", help="re-run a recorded manifest into a new directory")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    command = manifest["command"]
    config = manifest["config"]
    inputs = manifest.get("inputs", {})
    backend = manifest.get("kernel_backend")
    if backend and backend != kernels.backend_name():
        print(f"warning: manifest was recorded with the {backend!r} kernel backend, "
              f"running with {kernels.backend_name()!r}", file=sys.stderr)

    argv = [command]
    if command == "simulate":
        argv += ["--out", args.out,
                 "--groups", str(config["group_count"]),
                 "--units", str(config["units_per_group"][0]),
                 "--block-dim", str(config["spec"]["block_dims"][0]),
                 "--rho-max", repr(config["spec"]["rho_max"]),
                 "--rho-min", repr(config["spec"]["rho_min"]),
                 "--gamma", repr(config["spec"]["gamma"]),
                 "--delta", repr(config["spec"]["cross_block_delta"]),
                 "--bias", repr(config["mean_shifts"][1] if len(config["mean_shifts"]) > 1
                                else 0.0),
                 "--seed", str(config["covariate_seed"])]
    elif command == "train":
        argv += [inputs["data"], "--out", args.out,
                 "--format", config["format"], "--replicate", str(config["replicate"]),
                 "--group-col", config["group_col"],
                 "--outcome-col", config["outcome_col"],
                 "--beta", repr(config["beta"]), "--lambda", repr(config["lam"]),
                 "--alpha", repr(config["alpha"]), "--layers", str(config["layers"]),
                 "--width", str(config["width"]),
                 "--batch-per-group", str(config["units_per_group"]),
                 "--gen-steps", str(config["gen_steps"]),
                 "--max-epochs", str(config["max_epochs"]),
                 "--patience", str(config["patience"]),
                 "--lr", repr(config["learning_rate"]),
                 "--dropout", repr(config["dropout"]),
                 "--split", ",".join(repr(f) for f in config["split_fractions"]),
                 "--seed", str(config["seed"])]
    elif command == "evaluate":
        argv += [inputs["data"], "--model", inputs["model"], "--out", args.out,
                 "--format", config["format"], "--replicate", str(config["replicate"]),
                 "--group-col", config["group_col"],
                 "--outcome-col", config["outcome_col"],
                 "--metrics", config["metrics"], "--units", config["units"],
                 "--tgor-source", config["tgor_source"],
                 "--dataset-id", config["dataset_id"]]
        if inputs.get("truth"):
            argv += ["--truth", inputs["truth"]]
    elif command == "gradcheck":
        argv += ["--seeds", str(config["seeds"]), "--seed", str(config["seed"]),
                 "--tolerance", repr(config["tolerance"]),
                 "--step", repr(config["step"]), "--out", args.out]
        if config.get("self_test_corrupt"):
            argv += ["--self-test-corrupt"]
    else:
        raise MtalError(f"cannot replay command {command!r}")
    return main(argv)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtal",
        description=(
            "Adversarial multi-task estimation of counterfactual outcomes for "
            "multi-group (basket-trial-style) data"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate_parser(sub)
    _add_train_parser(sub)
    _add_evaluate_parser(sub)
    _add_gradcheck_parser(sub)
    _add_sweep_parser(sub)
    _add_replay_parser(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MtalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands:
  generate   write the ground-truth data CSVs for an experiment
  train      run one experiment end to end (checkpoint, history, metrics)
  eval       evaluate a checkpoint on an input CSV
  sweep      run several seeds of one experiment, optionally in parallel

Exit codes: 0 success, 1 numerical failure, 2 usage/config error.
"""

import argparse
import json
import multiprocessing
import os
import sys

import numpy as np

from . import datagen, density, io
from .experiments import EXPERIMENT_DEFAULTS, ExperimentSpec, run_experiment
from .mixture import active_mode_count
from .training import TrainingError

CONFIG_KEYS = {"experiment", "variant", "seed", "data_seed", "epochs",
               "n_modes", "n_hidden_layers", "hidden_width", "train"}
TRAIN_KEYS = {"lr_network", "lr_gate_scale", "l1_epsilon", "kl_weight",
              "record_every"}


class ConfigError(ValueError):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"{path}: {err}") from err
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    train = doc.get("train", {})
    unknown = set(train) - TRAIN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown train keys {sorted(unknown)}")
    return doc


def build_spec(args):
    doc = load_config(args.config) if args.config else {}
    experiment = doc.get("experiment", getattr(args, "experiment", None))
    if experiment is None:
        raise ConfigError("no experiment given (argument or config)")
    spec = ExperimentSpec(
        experiment=experiment,
        variant=doc.get("variant"),
        seed=args.seed if args.seed is not None else doc.get("seed", 0),
        data_seed=doc.get("data_seed", 0),
        out_dir=args.out_dir,
        epochs=args.epochs if args.epochs is not None else doc.get("epochs"),
        full_protocol=getattr(args, "full_protocol", False),
        n_modes=doc.get("n_modes"),
        n_hidden_layers=doc.get("n_hidden_layers"),
        hidden_width=doc.get("hidden_width"),
        train_overrides=doc.get("train", {}),
    )
    return spec


def cmd_generate(args):
    spec = build_spec(args)
    out = args.out_dir
    if not os.path.isdir(out):
        raise ConfigError(f"output directory {out!r} does not exist")
    exp = spec.experiment
    if exp == "wells1d":
        ds, _, _ = datagen.sample_1d_dataset(spec.variant, seed=spec.data_seed)
        datagen.write_wells_csv(os.path.join(out, "wells1d.csv"), ds)
        print(f"wells1d.csv: {ds.n} rows")
    elif exp == "mechchem":
        data = datagen.mechchem_dataset(1000, seed=spec.data_seed)
        datagen.write_mechchem_csv(os.path.join(out, "mechchem.csv"), data)
        print(f"mechchem.csv: {len(data.raw_inputs)} rows")
    elif exp == "schlogl":
        times, counts = datagen.schlogl_ensemble(n_traj=200, seed=spec.data_seed)
        datagen.write_schlogl_csv(os.path.join(out, "schlogl.csv"), times, counts)
        print(f"schlogl.csv: {counts.size} rows")
    elif exp == "elastic":
        paths = datagen.sawtooth_paths(400, seed=spec.data_seed)
        datagen.write_elastic_csv(os.path.join(out, "elastic.csv"), paths)
        print(f"elastic.csv: {paths.size} rows")
    elif exp == "gene":
        params = datagen.GeneParams(b=float(spec.variant))
        times, states = datagen.gene_trajectories(params, seed=spec.data_seed)
        datagen.write_gene_csv(os.path.join(out, "gene.csv"), times, states,
                               params)
        print(f"gene.csv: {states.shape[0] * states.shape[1]} rows")
    return 0


def cmd_train(args):
    spec = build_spec(args)
    if spec.out_dir is None:
        spec.out_dir = os.path.join("runs", spec.experiment, f"seed{spec.seed}")
    os.makedirs(spec.out_dir, exist_ok=True)
    report, _ = run_experiment(spec)
    print(json.dumps(report.as_dict(), default=float))
    return 0


def cmd_eval(args):
    model, _, _ = io.load_checkpoint(args.checkpoint)
    X = np.loadtxt(args.input_csv, delimiter=",", skiprows=1, ndmin=2)
    d = model.config.input_dim
    if X.shape[1] < d:
        raise ConfigError(f"input has {X.shape[1]} columns, model needs {d}")
    X = X[:, :d]
    values = model.forward(X)
    grads = model.input_gradient(X)
    member = model.membership(X)
    active = active_mode_count(model)
    M = model.config.n_modes
    header = ("value," + ",".join(f"grad_{j}" for j in range(d)) + ","
              + ",".join(f"w_{i}" for i in range(M)) + ",active_modes")
    table = np.column_stack([values, grads, member,
                             np.full(len(X), active)])
    out = args.output or "predictions.csv"
    np.savetxt(out, table, delimiter=",", header=header, comments="")
    print(f"{out}: {len(X)} rows")
    return 0


def _sweep_one(payload):
    spec_kwargs, seed = payload
    spec = ExperimentSpec(**{**spec_kwargs, "seed": seed})
    report, _ = run_experiment(spec)
    return report.as_dict()


def cmd_sweep(args):
    spec = build_spec(args)
    base = args.out_dir or os.path.join("runs", spec.experiment)
    seeds = list(range(args.n_seeds))
    payloads = []
    for seed in seeds:
        out = os.path.join(base, f"seed{seed}")
        os.makedirs(out, exist_ok=True)
        kwargs = dict(experiment=spec.experiment, variant=spec.variant,
                      data_seed=spec.data_seed, out_dir=out, epochs=spec.epochs,
                      n_modes=spec.n_modes, n_hidden_layers=spec.n_hidden_layers,
                      hidden_width=spec.hidden_width,
                      train_overrides=spec.train_overrides)
        payloads.append((kwargs, seed))
    if args.jobs > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.map(_sweep_one, payloads)
    else:
        results = [_sweep_one(p) for p in payloads]
    for r in results:
        print(json.dumps(r, default=float))
    return 0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="multiwell",
        description="learn smooth multi-well potentials from data")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, experiment_arg=True):
        if experiment_arg:
            p.add_argument("experiment", nargs="?",
                           choices=sorted(EXPERIMENT_DEFAULTS))
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--full-protocol", action="store_true",
                       help="use the full 150k-epoch protocol")

    p = sub.add_parser("generate", help="write ground-truth data CSVs")
    common(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train one experiment")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a CSV")
    p.add_argument("checkpoint")
    p.add_argument("input_csv")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="run multiple seeds")
    common(p)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (TrainingError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

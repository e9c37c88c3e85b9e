"""Command-line interface: ``convgp {fit,predict,evaluate,gradcheck,oracle-check,synth}``.

Settings come from an INI file (``--config``) with sections ``[data]``,
``[kernel]``, ``[engine]``, ``[optimizer]`` and ``[synth]``; unknown
sections or keys are rejected.  Command-line flags override the file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (including failed gradient or quadrature checks).
"""

import argparse
import configparser
import json
import sys

import numpy as np

from . import data as dataio
from .errors import (
    ConfigError,
    ConvGPError,
    DataError,
    DimensionMismatch,
    UnknownCategory,
)
from .exact import NoiseModel
from .gradients import DTCVAR, PITC, ParamLayout, fd_check, make_objective
from .instances import random_instance, random_kernel_spec, random_slfm_spec
from .kernels import CAUSAL, GAUSSIAN, SE, SHARED, WHITE
from .optimize import OptimizerConfig
from .persist import load_model, save_model, schema_hash
from .pipeline import CLI_ENGINES, fit_model, predict
from .quadrature import FORMS, oracle_suite

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "train": ("str", None),
        "test": ("str", None),
        "categorical": ("list", []),
        "unknown_category": ("str", "error"),
        "aggregate": ("bool", False),
        "standardize": ("bool", True),
        "metrics_standardized": ("bool", False),
    },
    "kernel": {
        "latents": ("list", [WHITE, SE]),
        "smoothing": ("str", GAUSSIAN),
        "vik_mode": ("str", SHARED),
    },
    "engine": {
        "name": ("str", DTCVAR),
        "inducing": ("int", 20),
        "seed": ("int", 0),
        "include_noise": ("bool", False),
    },
    "optimizer": {
        "max_iters": ("int", 1000),
        "gradient_tol": ("float", 1e-6),
        "objective_tol": ("float", 1e-9),
        "step_tol": ("float", 1e-6),
        "schedule": ("str", "joint"),
        "rounds": ("int", 3),
    },
    "synth": {
        "outputs": ("int", 4),
        "points": ("int", 200),
        "input_dim": ("int", 1),
        "latents": ("list", [WHITE, SE]),
        "smoothing": ("str", GAUSSIAN),
        "noise": ("float", 0.1),
        "low": ("float", -1.0),
        "high": ("float", 1.0),
        "test_fraction": ("float", 0.0),
        "seed": ("int", 0),
    },
}


def _convert(kind, raw, where):
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "list":
            return [s.strip() for s in raw.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from e
    raise AssertionError(kind)


def load_config(path=None):
    """Parse an INI file into ``{section: {key: value}}`` with defaults filled in."""
    cfg = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    if path is None:
        return cfg
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cfg[section][key] = _convert(SCHEMA[section][key][0], raw, f"[{section}] {key}")
    return cfg


def _optimizer(cfg):
    o = cfg["optimizer"]
    if o["schedule"] not in ("joint", "alternating"):
        raise ConfigError("schedule must be 'joint' or 'alternating'")
    try:
        return OptimizerConfig(max_iters=o["max_iters"], gradient_tol=o["gradient_tol"],
                               objective_tol=o["objective_tol"], step_tol=o["step_tol"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _read_table(path, cfg, require_target=True):
    if not path:
        raise ConfigError("no data file given (use --data or [data] train/test)")
    return dataio.read_csv(path, require_target=require_target,
                           categorical=cfg["data"]["categorical"])


def _encode_for_model(table, model):
    cat = list(model.levels)
    table, _ = dataio.encode_categorical(table, cat, model.levels, model.unknown_category)
    if table.input_names != list(model.input_names):
        raise DataError(f"input columns {table.input_names} do not match the model's "
                        f"{list(model.input_names)}")
    if schema_hash(table.input_names, model.levels, model.num_outputs) != model.data_schema:
        raise DataError("data schema does not match the model")
    return table


def _per_output(table, D):
    if len(table) and table.output_id.max() >= D:
        raise DataError(f"output ids must lie in 0..{D - 1}")
    X = table.inputs()
    rows = [np.flatnonzero(table.output_id == d) for d in range(D)]
    return [X[r] for r in rows], rows


# ---------------------------------------------------------------------------
# Commands


def cmd_fit(args, cfg):
    if not args.model:
        raise ConfigError("fit needs --model for the output file")
    d, k, e = cfg["data"], cfg["kernel"], cfg["engine"]
    table = _read_table(args.data or d["train"], cfg)
    if d["unknown_category"] not in ("error", "zeros"):
        raise ConfigError("unknown_category must be 'error' or 'zeros'")
    table, levels = dataio.encode_categorical(table, d["categorical"])
    data = (dataio.aggregate_replicates(table) if d["aggregate"]
            else dataio.table_to_dataset(table))
    engine = args.engine or e["name"]
    if engine not in CLI_ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; choose from {', '.join(CLI_ENGINES)}")
    seed = args.seed if args.seed is not None else e["seed"]
    inducing = args.inducing if args.inducing is not None else e["inducing"]
    model = fit_model(data, engine, do_standardize=d["standardize"],
                      input_names=table.input_names, levels=levels,
                      metrics_standardized=d["metrics_standardized"],
                      unknown_category=d["unknown_category"], latents=tuple(k["latents"]),
                      smoothing=k["smoothing"], num_inducing=inducing, vik_mode=k["vik_mode"],
                      cfg=_optimizer(cfg), seed=seed, schedule=cfg["optimizer"]["schedule"],
                      rounds=cfg["optimizer"]["rounds"])
    save_model(args.model, model)
    print(f"engine={engine} objective={model.objective!r} model={args.model}")


def cmd_predict(args, cfg):
    if not args.model or not args.out:
        raise ConfigError("predict needs --model and --out")
    model = load_model(args.model)
    table = _encode_for_model(_read_table(args.data, cfg, require_target=False), model)
    X, rows = _per_output(table, model.num_outputs)
    include = args.include_noise or cfg["engine"]["include_noise"]
    means, vars_ = predict(model, X, include_noise=include)
    mean = np.empty(len(table))
    var = np.empty(len(table))
    for r, m, v in zip(rows, means, vars_):
        mean[r], var[r] = m, v
    Xall = table.inputs()
    header = ["output_id"] + list(model.input_names) + ["mean", "variance"]
    out_rows = ([int(table.output_id[i])] + list(Xall[i]) + [mean[i], var[i]]
                for i in range(len(table)))
    dataio.write_csv(args.out, header, out_rows)
    print(f"wrote {len(table)} predictions to {args.out}")


def cmd_evaluate(args, cfg):
    if not args.model or not args.out:
        raise ConfigError("evaluate needs --model and --out")
    model = load_model(args.model)
    table = _encode_for_model(_read_table(args.data or cfg["data"]["test"], cfg), model)
    X, rows = _per_output(table, model.num_outputs)
    std = model.metrics_standardized
    means, _ = predict(model, X, original_scale=not std)
    tr = model.standardizer
    mean = np.empty(len(table))
    y = np.empty(len(table))
    for d, (r, m) in enumerate(zip(rows, means)):
        mean[r] = m
        y[r] = tr.forward(table.target[r], d) if std else table.target[r]
    rep = dataio.metrics(mean, y, table.output_id)
    out = rep.as_dict()
    out["standardized"] = bool(std)
    out["engine"] = model.engine
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"ev_pct={rep.ev_pct:.4f} mae={rep.mae:.6g} smse={rep.smse:.6g}")


def cmd_gradcheck(args, cfg):
    seed = args.seed if args.seed is not None else cfg["engine"]["seed"]
    engines = [args.engine] if args.engine else [DTCVAR, PITC]
    bad = 0
    for engine in engines:
        if engine not in (DTCVAR, PITC, "exact"):
            raise ConfigError("gradcheck covers the exact, pitc and dtcvar objectives")
        for i in range(args.instances):
            rng = np.random.default_rng([seed, i])
            latents = (SE, SE) if engine == PITC else (WHITE, SE)
            data, params = random_instance(rng, D=int(rng.integers(1, 3)), sizes=(3, 6),
                                           noise=(0.1, 0.5), weights=None, latents=latents,
                                           slfm=bool(i % 2))
            layout = ParamLayout(params, engine)
            f = make_objective(engine, data, layout)
            rep = fd_check(f, layout.pack(), labels=layout.labels)
            label, rel, ab = rep.worst
            status = "ok" if rep.ok else "FAIL"
            print(f"{engine} instance {i}: {status} worst={label} rel={rel:.2e} abs={ab:.2e}")
            bad += not rep.ok
    if bad:
        print(f"{bad} gradient check(s) failed")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_oracle_check(args, cfg):
    seed = args.seed if args.seed is not None else 0
    res = oracle_suite(seed=seed, draws=args.draws)
    bad = 0
    for name in FORMS:
        err, n = res[name]
        ok = err <= 1.0
        bad += not ok
        print(f"{name}: {'ok' if ok else 'FAIL'} draws={n} worst_scaled_error={err:.3e}")
    return EXIT_NUMERIC if bad else EXIT_OK


def cmd_synth(args, cfg):
    if not args.out:
        raise ConfigError("synth needs --out")
    s = cfg["synth"]
    seed = args.seed if args.seed is not None else s["seed"]
    if s["outputs"] < 1 or s["points"] < 1 or s["input_dim"] < 1:
        raise ConfigError("outputs, points and input_dim must be positive")
    if not 0 <= s["test_fraction"] < 1:
        raise ConfigError("test_fraction must lie in [0, 1)")
    if s["noise"] <= 0 or s["high"] <= s["low"]:
        raise ConfigError("need noise > 0 and high > low")
    rng = np.random.default_rng(seed)
    if s["smoothing"] == CAUSAL:
        if s["input_dim"] != 1 or s["low"] < 0:
            raise ConfigError("latent force data need one time input with low >= 0")
        kspec = random_slfm_spec(rng, s["outputs"], tuple(s["latents"]))
    elif s["smoothing"] == GAUSSIAN:
        kspec = random_kernel_spec(rng, s["outputs"], s["input_dim"], tuple(s["latents"]))
    else:
        raise ConfigError("synth supports gaussian or causal smoothing")
    noise = NoiseModel(np.full(s["outputs"], s["noise"]))
    table = dataio.synth_table(kspec, noise, [s["points"]] * s["outputs"], rng, s["low"], s["high"])
    if s["test_fraction"] > 0:
        train, test = dataio.train_test_split(table, s["test_fraction"], rng)
        if not args.test_out:
            raise ConfigError("test_fraction > 0 needs --test-out")
        dataio.table_to_csv(train, args.out)
        dataio.table_to_csv(test, args.test_out)
        print(f"wrote {len(train)} training rows to {args.out} and {len(test)} to {args.test_out}")
    else:
        dataio.table_to_csv(table, args.out)
        print(f"wrote {len(table)} rows to {args.out}")


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "oracle-check": cmd_oracle_check,
    "synth": cmd_synth,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="convgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI settings file")
        p.add_argument("--data", help="input CSV")
        p.add_argument("--model", help="model file")
        p.add_argument("--out", help="output file")
        p.add_argument("--seed", type=int)
        p.add_argument("--engine", help=f"one of {', '.join(CLI_ENGINES)}")
        p.add_argument("--inducing", type=int, help="number of inducing inputs")
        if name == "predict":
            p.add_argument("--include-noise", action="store_true",
                           help="add observation noise to the variances")
        if name == "gradcheck":
            p.add_argument("--instances", type=int, default=5)
        if name == "oracle-check":
            p.add_argument("--draws", type=int, default=100)
        if name == "synth":
            p.add_argument("--test-out", help="CSV for the held-out split")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        code = COMMANDS[args.command](args, cfg)
        return EXIT_OK if code is None else code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UnknownCategory, DimensionMismatch) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConvGPError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: seeded experiment runs, grid search, comparisons.

Configuration is a sectioned key=value file; every key is validated against
the schema (unknown keys are rejected, not ignored) and multi-value entries
are only legal where they mean something: always for `hidden`, `seeds` and
`methods`, and for searchable hyperparameters under the `grid` command. The
resolved configuration is echoed into every output file, so any result can
be reproduced from the file alone.
"""

import argparse
import configparser
import os
import re
import sys

import numpy as np

from .data import (SyntheticStreamSpec, class_split, load_flat_dataset,
                   make_synthetic_stream)
from .optim import OptimConfig
from .stream import (RunConfig, fmt, grid_search, multitask_upper_bound,
                     parse_method, run_stream, write_alpha_csv,
                     write_alpha_full_csv, write_matrix_csv, write_summary)

ONE, LIST, GRID = "one", "list", "grid"

SCHEMA = {
    "stream": {
        "kind": (str, ONE), "tasks": (int, ONE), "classes_per_task": (int, ONE),
        "train_per_class": (int, ONE), "test_per_class": (int, ONE),
        "input_dim": (int, ONE), "transform": (str, ONE),
        "rotation_deg": (float, ONE), "separation": (float, ONE),
        "noise": (float, ONE), "clusters_per_class": (int, ONE),
        "stream_seed": (int, ONE), "normalize": (str, ONE),
        "train_path": (str, ONE), "test_path": (str, ONE),
        "train_labels_path": (str, ONE), "test_labels_path": (str, ONE),
        "samples_per_task": (int, ONE), "test_samples_per_task": (int, ONE),
    },
    "model": {
        "hidden": (int, LIST), "dropout": (float, GRID),
    },
    "run": {
        "method": (str, ONE), "methods": (str, LIST), "epochs_per_task": (int, ONE),
        "batch_size": (int, ONE), "seeds": (int, LIST), "alpha_trace": (str, ONE),
        "out": (str, ONE), "val_fraction": (float, ONE),
    },
    "optim": {
        "lr": (float, GRID), "beta1": (float, GRID), "beta2": (float, GRID),
        "epsilon": (float, GRID), "b": (float, GRID),
    },
    "method": {
        "mem_per_class": (int, GRID), "ewc_lambda": (float, GRID),
        "fisher_cap": (int, ONE), "lr_decay": (float, GRID),
    },
}

DEFAULTS = {
    "stream": {"kind": "synthetic", "tasks": "5", "classes_per_task": "2",
               "train_per_class": "200", "test_per_class": "100",
               "input_dim": "16", "transform": "rotation", "rotation_deg": "15",
               "separation": "2.2", "noise": "0.9", "clusters_per_class": "2",
               "stream_seed": "1",
               "normalize": "true"},
    "model": {"hidden": "32", "dropout": "0.0"},
    "run": {"method": "naive-sgd", "epochs_per_task": "1", "batch_size": "10",
            "seeds": "0", "alpha_trace": "mean", "out": "results",
            "val_fraction": "0.9"},
    "optim": {"lr": "0.01", "beta1": "0.9", "beta2": "default",
              "epsilon": "1e-8", "b": "5.0"},
    "method": {"mem_per_class": "1", "ewc_lambda": "1.0", "fisher_cap": "1000",
               "lr_decay": "0.9"},
}

SECTION_ORDER = ("stream", "model", "run", "optim", "method")

# (section, key) pairs admitted as grid dimensions, with their search names
GRID_KEYMAP = (("optim", "lr", "lr"), ("optim", "beta1", "beta1"),
               ("optim", "beta2", "beta2"), ("optim", "epsilon", "epsilon"),
               ("optim", "b", "b"), ("model", "dropout", "dropout"),
               ("method", "mem_per_class", "mem_per_class"),
               ("method", "ewc_lambda", "ewc_lambda"),
               ("method", "lr_decay", "lr_decay"))


class Config:
    """Validated, token-level view of one invocation's configuration."""

    def __init__(self):
        self.values = {s: {k: DEFAULTS[s].get(k, "") for k in SCHEMA[s]}
                       for s in SECTION_ORDER}

    def set(self, section, key, raw):
        if section not in SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ValueError(f"unknown key '{key}' in section [{section}]")
        self.values[section][key] = raw.strip()

    def tokens(self, section, key):
        raw = self.values[section][key]
        if raw == "default" or raw == "":
            return []
        return re.split(r"[,\s]+", raw)

    def _cast_tokens(self, section, key):
        caster, _ = SCHEMA[section][key]
        try:
            return [caster(tok) for tok in self.tokens(section, key)]
        except ValueError:
            raise ValueError(
                f"cannot parse '{self.values[section][key]}' for "
                f"{section}.{key} as {caster.__name__}")

    def one(self, section, key, allow_default=False):
        vals = self._cast_tokens(section, key)
        if not vals:
            if allow_default:
                return None
            raise ValueError(f"{section}.{key} needs a value")
        if len(vals) > 1:
            raise ValueError(
                f"{section}.{key} has {len(vals)} values; lists are only "
                f"valid in grid mode or for hidden/seeds/methods")
        return vals[0]

    def many(self, section, key):
        return self._cast_tokens(section, key)

    def boolean(self, section, key):
        raw = self.one(section, key)
        low = str(raw).lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"{section}.{key} must be true/false, got '{raw}'")

    def render(self):
        # the output path is incidental to the run, so it stays out of the
        # echo and repeated runs into different directories match bytewise
        lines = []
        for section in SECTION_ORDER:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                if section == "run" and key == "out":
                    continue
                raw = self.values[section][key]
                lines.append(f"{key} = {raw if raw else 'default'}")
            lines.append("")
        return lines[:-1]


def clone_config(conf):
    out = Config()
    for section in SECTION_ORDER:
        for key, raw in conf.values[section].items():
            out.values[section][key] = raw
    return out


def load_config(path=None, overrides=()):
    conf = Config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path)
        if not read:
            raise ValueError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                conf.set(section, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects section.key=value, got '{item}'")
        target, raw = item.split("=", 1)
        if "." not in target:
            raise ValueError(f"--set expects section.key=value, got '{item}'")
        section, key = target.split(".", 1)
        conf.set(section.strip(), key.strip(), raw)
    return conf


# -- builders ---------------------------------------------------------------------

def build_stream(conf):
    kind = conf.one("stream", "kind")
    if kind == "synthetic":
        spec = SyntheticStreamSpec(
            num_tasks=conf.one("stream", "tasks"),
            classes_per_task=conf.one("stream", "classes_per_task"),
            train_per_class=conf.one("stream", "train_per_class"),
            test_per_class=conf.one("stream", "test_per_class"),
            input_dim=conf.one("stream", "input_dim"),
            transform=conf.one("stream", "transform"),
            rotation_angle=np.deg2rad(conf.one("stream", "rotation_deg")),
            separation=conf.one("stream", "separation"),
            noise=conf.one("stream", "noise"),
            clusters_per_class=conf.one("stream", "clusters_per_class"),
            seed=conf.one("stream", "stream_seed"),
            normalize=conf.boolean("stream", "normalize"))
        return make_synthetic_stream(spec)
    if kind in ("csv", "idx"):
        train = load_flat_dataset(
            conf.one("stream", "train_path"), kind,
            labels_path=conf.one("stream", "train_labels_path", allow_default=True))
        test = load_flat_dataset(
            conf.one("stream", "test_path"), kind,
            labels_path=conf.one("stream", "test_labels_path", allow_default=True))
        return class_split(
            train,
            num_tasks=conf.one("stream", "tasks"),
            classes_per_task=conf.one("stream", "classes_per_task"),
            samples_per_task=conf.one("stream", "samples_per_task", allow_default=True),
            seed=conf.one("stream", "stream_seed"),
            test=test,
            test_samples_per_task=conf.one("stream", "test_samples_per_task",
                                           allow_default=True),
            normalize=conf.boolean("stream", "normalize"))
    raise ValueError(f"stream.kind must be synthetic, csv or idx, got '{kind}'")


def resolve_beta2(conf, method):
    explicit = conf.one("optim", "beta2", allow_default=True)
    if explicit is not None:
        return explicit
    _, inner = parse_method(method)
    return 0.999 if inner in ("adam", "tag-adam") else 0.99


def build_run_config(conf, method):
    optim = OptimConfig(lr=conf.one("optim", "lr"),
                        beta1=conf.one("optim", "beta1"),
                        beta2=resolve_beta2(conf, method),
                        epsilon=conf.one("optim", "epsilon"),
                        b=conf.one("optim", "b"))
    return RunConfig(method=method,
                     optim=optim,
                     hidden=tuple(conf.many("model", "hidden")),
                     dropout=conf.one("model", "dropout"),
                     epochs_per_task=conf.one("run", "epochs_per_task"),
                     batch_size=conf.one("run", "batch_size"),
                     mem_per_class=conf.one("method", "mem_per_class"),
                     ewc_lambda=conf.one("method", "ewc_lambda"),
                     fisher_cap=conf.one("method", "fisher_cap"),
                     lr_decay=conf.one("method", "lr_decay"),
                     alpha_trace=conf.one("run", "alpha_trace"))


def get_seeds(conf):
    seeds = conf.many("run", "seeds")
    if not seeds:
        raise ValueError("run.seeds needs at least one seed")
    if any(s < 0 for s in seeds):
        raise ValueError("seeds must be nonnegative")
    return seeds


# -- output helpers ------------------------------------------------------------------

def _write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _mean_std(values):
    values = [v for v in values]
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")
    return mean, std


def write_aggregate(path, per_method, header_lines=()):
    """per_method: {method: [(accuracy, forgetting, learning_accuracy)]}"""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("method,n_seeds,accuracy_mean,accuracy_std,forgetting_mean,"
                 "forgetting_std,learning_accuracy_mean,learning_accuracy_std\n")
        for method, triples in per_method.items():
            cols = [method, str(len(triples))]
            for i in range(3):
                mean, std = _mean_std([t[i] for t in triples])
                cols.extend([fmt(mean), fmt(std)])
            fh.write(",".join(cols) + "\n")


def _multitask_matrix(res):
    T = len(res.per_task_accuracy)
    matrix = np.full((T, T), np.nan)
    matrix[T - 1, :] = res.per_task_accuracy
    return matrix


def _write_multitask_summary(res, path, header_lines=()):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"seed: {res.seed}\n")
        fh.write(f"tasks: {len(res.per_task_accuracy)}\n")
        fh.write(f"final_accuracy: {fmt(res.accuracy)}\n")
        fh.write("forgetting: nan\n")
        fh.write("learning_accuracy: nan\n")
        fh.write(f"steps: {res.steps}\n")
        fh.write(f"seconds: {res.seconds:.6f}\n")
        for key, value in res.config.items():
            fh.write(f"config.{key}: {value}\n")


def _run_one(stream, conf, method, seed, eval_on="test"):
    """(accuracy, forgetting, learning_accuracy, wall, result) for one seeded run."""
    cfg = build_run_config(conf, method)
    if method == "multitask":
        res = multitask_upper_bound(stream, cfg, seed)
        return (res.accuracy, float("nan"), float("nan"), res.seconds, res)
    res = run_stream(stream, cfg, seed, eval_on=eval_on)
    return (res.accuracy, res.forgetting, res.learning_accuracy,
            float(sum(res.task_seconds)), res)


def _emit_run_files(out, tag, res, header):
    """Per-seed result bundle: summary, matrix CSV, alpha CSVs when present."""
    if hasattr(res, "matrix"):
        write_summary(res, os.path.join(out, f"summary_{tag}.txt"), header)
        write_matrix_csv(res.matrix, os.path.join(out, f"matrix_{tag}.csv"), header)
        if res.alpha is not None:
            write_alpha_csv(res.alpha, os.path.join(out, f"alpha_{tag}.csv"), header)
            if res.alpha.full is not None:
                write_alpha_full_csv(
                    res.alpha, os.path.join(out, f"alpha_full_{tag}.csv"), header)
    else:
        _write_multitask_summary(res, os.path.join(out, f"summary_{tag}.txt"), header)
        write_matrix_csv(_multitask_matrix(res),
                         os.path.join(out, f"matrix_{tag}.csv"), header)


def _ensure_single_values(conf):
    """Grid lists are an error outside the grid command."""
    for section, keys in SCHEMA.items():
        for key, (_, mode) in keys.items():
            if mode == GRID and len(conf.tokens(section, key)) > 1:
                raise ValueError(
                    f"{section}.{key} lists multiple values; use the grid command")


# -- commands ------------------------------------------------------------------------

def cmd_run(conf, out):
    _ensure_single_values(conf)
    method = conf.one("run", "method")
    parse_method(method)
    seeds = get_seeds(conf)
    stream = build_stream(conf)
    echo = conf.render()
    _write_lines(os.path.join(out, "config.txt"), echo)
    triples = []
    for seed in seeds:
        acc, forg, la, _, res = _run_one(stream, conf, method, seed)
        _emit_run_files(out, f"seed{seed}", res, echo + [f"seed = {seed}"])
        triples.append((acc, forg, la))
    write_aggregate(os.path.join(out, "aggregate.csv"), {method: triples}, echo)
    return 0


def cmd_compare(conf, out, methods_flag=None):
    _ensure_single_values(conf)
    if methods_flag:
        methods = re.split(r"[,\s]+", methods_flag.strip())
    else:
        methods = [str(m) for m in conf.many("run", "methods")]
    if not methods:
        raise ValueError("compare needs run.methods or --methods")
    for m in methods:
        parse_method(m)
    seeds = get_seeds(conf)
    stream = build_stream(conf)
    echo = conf.render()
    _write_lines(os.path.join(out, "config.txt"), echo)
    per_method = {}
    rows = []
    for method in methods:
        for seed in seeds:
            acc, forg, la, wall, res = _run_one(stream, conf, method, seed)
            _emit_run_files(out, f"{method}_seed{seed}", res,
                            echo + [f"method = {method}", f"seed = {seed}"])
            per_method.setdefault(method, []).append((acc, forg, la))
            rows.append((method, seed, acc, forg, la, wall))
    with open(os.path.join(out, "comparison.csv"), "w") as fh:
        for line in echo:
            fh.write(f"# {line}\n")
        fh.write("method,seed,final_accuracy,forgetting,learning_accuracy,"
                 "wall_seconds\n")
        for method, seed, acc, forg, la, wall in rows:
            fh.write(f"{method},{seed},{fmt(acc)},{fmt(forg)},{fmt(la)},"
                     f"{wall:.6f}\n")
    write_aggregate(os.path.join(out, "aggregate.csv"), per_method, echo)
    return 0


def cmd_grid(conf, out):
    method = conf.one("run", "method")
    parse_method(method)
    if method == "multitask":
        raise ValueError("grid search over the multitask setting is not defined")
    seeds = get_seeds(conf)
    stream = build_stream(conf)
    echo = conf.render()
    _write_lines(os.path.join(out, "config.txt"), echo)

    grid = {}
    base_conf = clone_config(conf)
    for section, key, name in GRID_KEYMAP:
        values = conf.many(section, key)
        if key == "beta2" and not values:
            values = [resolve_beta2(conf, method)]
        if values:
            grid[name] = values
            base_conf.set(section, key, conf.tokens(section, key)[0]
                          if conf.tokens(section, key) else "default")

    base = build_run_config(base_conf, method)
    best, rows = grid_search(stream, base, grid, seeds[0],
                             val_fraction=conf.one("run", "val_fraction"))

    names = list(grid)
    with open(os.path.join(out, "grid.csv"), "w") as fh:
        for line in echo:
            fh.write(f"# {line}\n")
        fh.write(",".join(["index"] + names
                          + ["val_accuracy", "val_forgetting", "selected", "error"]) + "\n")
        for row in rows:
            cells = [str(row.index)]
            cells += [fmt(row.params[n]) if isinstance(row.params[n], float)
                      else str(row.params[n]) for n in names]
            cells += [fmt(row.accuracy), fmt(row.forgetting),
                      "1" if row.index == best.index else "0", row.error]
            fh.write(",".join(cells) + "\n")

    best_conf = clone_config(conf)
    for section, key, name in GRID_KEYMAP:
        if name in best.params:
            value = best.params[name]
            best_conf.set(section, key,
                          fmt(value) if isinstance(value, float) else str(value))
    _write_lines(os.path.join(out, "best_config.txt"), best_conf.render())
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="taskgrad",
        description="Task-incremental continual-learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "train one method across seeds"),
                            ("grid", "hyperparameter grid search"),
                            ("compare", "run several methods on one stream")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="sectioned key=value config file")
        p.add_argument("--seed", type=int, action="append",
                       help="run seed (repeatable; overrides run.seeds)")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override")
        p.add_argument("--alpha-trace", choices=("mean", "full", "off"),
                       help="correlation-trace recording mode")
        if name == "compare":
            p.add_argument("--methods", help="comma-separated method list")
    args = parser.parse_args(argv)

    try:
        conf = load_config(args.config, args.overrides)
        if args.seed:
            conf.set("run", "seeds", " ".join(str(s) for s in args.seed))
        if args.out:
            conf.set("run", "out", args.out)
        if args.alpha_trace:
            conf.set("run", "alpha_trace", args.alpha_trace)
        out = conf.one("run", "out")
        os.makedirs(out, exist_ok=True)
        if args.command == "run":
            return cmd_run(conf, out)
        if args.command == "grid":
            return cmd_grid(conf, out)
        return cmd_compare(conf, out, getattr(args, "methods", None))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

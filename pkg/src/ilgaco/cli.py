"""Command-line harness: ``generate``, ``run``, ``compare``, ``plot``.

Exit codes: 0 on success, 2 for configuration/validation/format problems,
3 for numeric or other runtime failures.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import svg
from ._binio import write_atomic
from .baselines import METHODS, run_method
from .dataset import DEFAULT_WINDOW, Dataset, DatasetSpec, generate_dataset, incremental_splits, load_dataset, save_dataset
from .errors import DimensionError, FormatError, ILGaCoError, NumericError, ValidationError
from .evaluation import run_report, table1_csv, table2_csv
from .memory import save_memory
from .model import save_model
from .trainer import TrainConfig

log = logging.getLogger("ilgaco")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

EXPERIMENTS = {
    "viewpoints": {"kind": "viewpoint", "order": [2, 0, 4, 1, 3]},
    "conditions": {"kind": "condition", "order": [5, 6, 7]},
}
CONFIG_KEYS = {"dataset", "dataset_file", "experiment", "factor_order", "method", "memory_capacity", "train", "out"}


class ConfigError(ValidationError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    factor_order: list
    method: str
    train: TrainConfig
    dataset_spec: DatasetSpec | None = None
    dataset_file: str | None = None
    out: str | None = None

    @property
    def memory_capacity(self):
        return self.train.memory_capacity

    def load_dataset(self) -> Dataset:
        if self.dataset_file is not None:
            return load_dataset(self.dataset_file)
        return generate_dataset(self.dataset_spec)

    def to_json(self):
        """Resolved echo: feeding it back to ``run`` reproduces the run."""
        out = {
            "experiment": self.experiment,
            "factor_order": list(self.factor_order),
            "method": self.method,
            "memory_capacity": self.memory_capacity,
        }
        if self.dataset_file is not None:
            out["dataset_file"] = self.dataset_file
        else:
            out["dataset"] = self.dataset_spec.to_json()
        out["train"] = self.train.to_json()
        return out


def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc


def parse_config(obj, base_dir=Path("."), seed=None) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("experiment config must be a JSON object")
    unknown = set(obj) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    experiment = obj.get("experiment", "viewpoints")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {sorted(EXPERIMENTS)}, got {experiment!r}")
    method = obj.get("method", "ilgaco")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {list(METHODS)}, got {method!r}")
    train_obj = dict(obj.get("train", {}))
    if "memory_capacity" in obj:
        train_obj["memory_capacity"] = obj["memory_capacity"]
    if seed is not None:
        train_obj["seed"] = seed
    train = TrainConfig.from_json(train_obj)

    if "dataset" in obj and "dataset_file" in obj:
        raise ConfigError("give either 'dataset' or 'dataset_file', not both")
    spec, dfile = None, None
    if "dataset_file" in obj:
        dfile = Path(obj["dataset_file"])
        if not dfile.is_absolute():
            dfile = base_dir / dfile
        if not dfile.exists():
            raise ConfigError(f"dataset file {dfile} does not exist")
        dfile = str(dfile)
        factors = load_dataset(dfile).spec.factors
        factor_ids = [f.id for f in factors]
        kinds = {f.id: f.kind for f in factors}
    else:
        spec = DatasetSpec.from_json(obj.get("dataset", {}))
        factor_ids = [f.id for f in spec.factors]
        kinds = {f.id: f.kind for f in spec.factors}

    if "factor_order" in obj:
        order = obj["factor_order"]
        if not isinstance(order, list) or not all(isinstance(f, int) and not isinstance(f, bool) for f in order):
            raise ConfigError("factor_order must be a list of integer factor ids")
    else:
        order = [f for f in EXPERIMENTS[experiment]["order"] if f in factor_ids]
    if not order:
        raise ConfigError("factor_order is empty")
    missing = [f for f in order if f not in factor_ids]
    if missing:
        raise ConfigError(f"factor_order mentions unknown factor ids {missing}")
    if len(set(order)) != len(order):
        raise ConfigError(f"factor_order repeats ids: {order}")
    wrong = [f for f in order if kinds[f] != EXPERIMENTS[experiment]["kind"]]
    if wrong:
        raise ConfigError(f"factors {wrong} are not of kind {EXPERIMENTS[experiment]['kind']!r}")
    return ExperimentConfig(experiment, list(order), method, train, spec, dfile, obj.get("out"))


def load_config(path, seed=None) -> ExperimentConfig:
    return parse_config(_read_json(path), Path(path).parent, seed)


def _dumps(obj):
    return json.dumps(obj, indent=2) + "\n"


def _write_text(path, text):
    write_atomic(path, text.encode("utf-8"))


def dataset_digest(dataset: Dataset):
    return hashlib.sha256(dataset.to_bytes()).hexdigest()


def trajectory_svg(report, upper_bound=None):
    if not report.get("trajectory") or not report.get("steps"):
        raise ConfigError("report has no trajectory")
    names = report["factor_names"]
    steps = len(report["steps"])
    if report["method"] == "joint":
        x_labels = ["joint"]
    else:
        x_labels = [f"+{names[str(f)]}" for f in report["factor_order"][:steps]]
    series = {}
    for f, values in report["trajectory"].items():
        if len(values) != steps:
            raise ConfigError(f"trajectory for factor {f} has {len(values)} points, expected {steps}")
        series[names.get(f, f)] = values
    title = f"{report['method']} ({report['experiment']}, memory {report['memory_capacity']})"
    return svg.line_chart(title, x_labels, series, upper_bound=upper_bound)


def run_experiment(config: ExperimentConfig):
    """Train and evaluate; returns ``(result, dataset, report)`` without touching the disk."""
    full = config.load_dataset()
    digest = dataset_digest(full)
    dataset = full.subset(config.factor_order)
    # checks the order before any training
    incremental_splits(dataset, config.factor_order)
    result = run_method(config.method, dataset, config.factor_order, config.train)
    report = run_report(result, dataset, config.experiment, extra={"dataset_sha256": digest})
    return result, dataset, report


def write_artifacts(config: ExperimentConfig, result, dataset, report, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_text(out_dir / "config.json", _dumps(config.to_json()))
    _write_text(out_dir / "report.json", _dumps(report))
    _write_text(out_dir / "table1.csv", table1_csv([report]))
    _write_text(out_dir / "table2.csv", table2_csv(report))
    _write_text(out_dir / "trajectory.svg", trajectory_svg(report))
    save_model(result.model, out_dir / "model.ilgm")
    save_memory(result.memory, out_dir / "memory.ilge", DEFAULT_WINDOW, dataset.spec.frame_dim)


def execute(config: ExperimentConfig, out_dir):
    """Run one experiment and write every artifact into ``out_dir``; returns the JSON report."""
    result, dataset, report = run_experiment(config)
    write_artifacts(config, result, dataset, report, out_dir)
    return report


def cmd_generate(args):
    spec = DatasetSpec.from_json(_read_json(args.config)) if args.config else DatasetSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed).validate()
    dataset = generate_dataset(spec)
    save_dataset(dataset, args.out)
    splits = incremental_splits(dataset, dataset.factor_ids)
    print(f"wrote {args.out}: {spec.num_subjects} subjects, {len(spec.factors)} factors")
    for f, windows in zip(splits.order, splits.train_steps):
        print(f"  factor {f} ({spec.factor(f).name}): {len(windows)} train windows, "
              f"{len(splits.test[f])} test sequences")
    return EXIT_OK


def cmd_run(args):
    config = load_config(args.config, seed=args.seed)
    out = args.out or config.out
    if out is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    report = execute(config, out)
    print(f"{config.method} on {config.experiment}: final average Rank-1 {report['final_average']:.2f}% -> {out}")
    return EXIT_OK


def _load_or_run(path, seed):
    config = load_config(path, seed=seed)
    out = Path(config.out) if config.out else None
    if out is not None and (out / "report.json").exists() and (out / "config.json").exists():
        if json.loads((out / "config.json").read_text()) == config.to_json():
            log.info("reusing completed run in %s", out)
            return config, json.loads((out / "report.json").read_text())
    if out is None:
        raise ConfigError(f"{path}: compare needs an 'out' directory in each config")
    return config, execute(config, out)


def compare_rows(reports):
    """(experiment, label, final average) per report, labels made unique per experiment."""
    multi_memory = len({r["memory_capacity"] for r in reports if r["method"] in ("ilgaco", "icarl")}) > 1
    rows = []
    for r in reports:
        label = r["method"]
        if multi_memory and r["method"] in ("ilgaco", "icarl"):
            label = f"{label}-memory-{r['memory_capacity']}"
        rows.append((r["experiment"], label, r["memory_capacity"], r["final_average"]))
    return rows


def cmd_compare(args):
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    loaded = [_load_or_run(p, args.seed) for p in args.configs]
    digests = {r["dataset_sha256"] for _, r in loaded}
    if len(digests) != 1:
        raise ConfigError("configs refer to different datasets")
    reports = [r for _, r in loaded]
    rows = compare_rows(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "method", "memory_capacity", "final_average"])
    for exp, label, mem, value in rows:
        w.writerow([exp, label, mem, repr(float(value))])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "compare.csv", buf.getvalue())
    groups = {}
    for exp, label, _, value in rows:
        groups.setdefault(exp, []).append((label, value))
    _write_text(out / "compare.svg", svg.bar_chart("Final average Rank-1 by method", groups))
    for exp in groups:
        incremental = [r for r in reports if r["experiment"] == exp and r["method"] != "joint"]
        orders = {tuple(r["factor_order"]) for r in incremental}
        if incremental and len(orders) == 1:
            _write_text(out / f"table1-{exp}.csv", table1_csv(incremental))
    for exp, label, _, value in rows:
        print(f"{exp:12s} {label:22s} {value:6.2f}")
    return EXIT_OK


def cmd_plot(args):
    run = Path(args.run)
    report_path = run / "report.json" if run.is_dir() else run
    report = _read_json(report_path)
    upper = None
    if args.upper_bound:
        ub = Path(args.upper_bound)
        ub_report = _read_json(ub / "report.json" if ub.is_dir() else ub)
        if ub_report.get("method") != "joint":
            raise ConfigError("--upper-bound must point at a joint run")
        upper = ub_report["final_average"]
    text = trajectory_svg(report, upper)
    _write_text(args.out, text)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ilgaco", description="Incremental gait recognition experiments on synthetic data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic dataset file")
    g.add_argument("--config", help="dataset description JSON (defaults when omitted)")
    g.add_argument("--out", required=True, help="output dataset file")
    g.add_argument("--seed", type=int, help="override the dataset seed")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one experiment and write its artifacts")
    r.add_argument("--config", required=True, help="experiment config JSON")
    r.add_argument("--out", help="output directory (overrides the config's 'out')")
    r.add_argument("--seed", type=int, help="override the training seed")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run or reuse several experiments and compare final accuracy")
    c.add_argument("configs", nargs="+", help="experiment config JSON files")
    c.add_argument("--out", required=True, help="output directory for compare.csv and compare.svg")
    c.add_argument("--seed", type=int, help="override the training seed of every config")
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", help="draw the per-factor accuracy trajectory of a run")
    pl.add_argument("run", help="run directory or report.json")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.add_argument("--upper-bound", help="joint run directory or report drawn as a dashed line")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FormatError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, ILGaCoError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

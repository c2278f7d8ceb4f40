"""Command line entry point: ``fairbasis <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, errors
from .decorrelate import apply_transition, fit_transition
from .errors import ConfigError, DataError, FairbasisError, SchemaError
from .fairness import report_from_arrays
from .pipeline import (
    ExperimentConfig,
    run_experiment,
    summarize,
    summary_to_dict,
    write_variant_outputs,
)
from .simulate import SimulationSpec, generate_replicates
from .stats import summary_to_csv
from .survival import CAUSE_RULES, build_pseudo_table, read_survival_csv, write_pseudo_csv
from .tabular import Dataset, impute, one_hot, read_csv, schema_of, write_csv

log = logging.getLogger("fairbasis")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _require_config(args) -> dict:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    return _load_json(args.config)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _require_config(args)
    spec_dict = dict(cfg.get("simulation", cfg))
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = SimulationSpec.from_dict(spec_dict)
    out = _out_dir(args)
    files = []
    for r, ds in enumerate(generate_replicates(spec, jobs=args.jobs)):
        name = f"replicate_{r:03d}.csv"
        write_csv(ds, out / name)
        files.append(name)
    _dump(schema_of(ds), out / "schema.json")
    _dump({
        "tool": "fairbasis",
        "version": __version__,
        "seed": int(spec.seed),
        "spec_sha256": spec.digest(),
        "rows": spec.rows,
        "replicates": spec.replicates,
        "files": files,
        "schema": "schema.json",
        "spec": spec.to_dict(),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }, out / "manifest.json")
    print(f"wrote {len(files)} replicate(s) to {out}")
    return 0


def cmd_run(args) -> int:
    raw = _require_config(args)
    base = os.path.dirname(os.path.abspath(args.config))
    config = ExperimentConfig.from_dict(raw, base_dir=base, seed=args.seed)
    out = _out_dir(args)
    results = run_experiment(config, jobs=args.jobs)
    for res in results:
        for variant, vr in res.variants.items():
            write_variant_outputs(vr, out / f"replicate_{res.index:03d}" / variant)
    summary = summarize(results, config)
    payload = summary_to_dict(summary)
    payload["positive_label"] = config.positive_label
    payload["variants_requested"] = list(config.variants)
    _dump(payload, out / "summary.json")
    for variant, table in summary["variants"].items():
        if table and hasattr(next(iter(table.values())), "format"):
            summary_to_csv(table, out / f"summary_{variant}.csv")
    _dump({
        "tool": "fairbasis",
        "version": __version__,
        "seed": config.split_seed,
        "spec_sha256": config.simulation.digest() if config.simulation is not None else None,
        "data_files": [os.path.relpath(p, base) for p in config.data_files],
        "replicates": config.replicate_count,
        "failures": len(summary["failures"]),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }, out / "manifest.json")
    n_fail = len(summary["failures"])
    if results and all(not res.variants for res in results):
        first = summary["failures"][0]
        code = getattr(errors, first["error"], DataError).exit_code
        print(f"error ({first['error']}): every replicate failed; first: {first['message']}", file=sys.stderr)
        return code
    print(f"ran {config.replicate_count} replicate(s) x {len(config.variants)} variant(s); "
          f"{n_fail} failure(s); summary in {out / 'summary.json'}")
    return 0


def cmd_pseudo(args) -> int:
    fields = _load_json(args.config).get("fields") if args.config else None
    records = read_survival_csv(args.input, fields)
    covariates = list(records[0].covariates) if records else []
    rows = build_pseudo_table(records, args.cause_rule)
    out = _out_dir(args)
    write_pseudo_csv(rows, out / args.output, covariates, args.decimals)
    print(f"{len(records)} record(s) -> {len(rows)} pseudo row(s) in {out / args.output}")
    return 0


def cmd_metrics(args) -> int:
    cfg = _load_json(args.config) if args.config else {}
    sensitive = args.sensitive.split(",") if args.sensitive else cfg.get("sensitive")
    if not sensitive:
        raise ConfigError("metrics needs sensitive column names (--sensitive or config)")
    positive = args.positive_label if args.positive_label is not None else cfg.get("positive_label", 1)
    y_true_col = cfg.get("y_true", "y_true")
    y_pred_col = cfg.get("y_pred", "y_pred")
    schema = {y_true_col: {"role": "outcome", "kind": "numeric"},
              y_pred_col: {"role": "feature", "kind": "numeric"}}
    schema.update({c: {"role": "sensitive", "kind": "categorical"} for c in sensitive})
    ds = read_csv(args.predictions, schema)
    for name in (y_true_col, y_pred_col):
        if ds.column(name).missing_mask().any():
            raise DataError(f"column {name!r} has missing or non-numeric cells")
    groups = {c: ds[c] for c in sensitive}
    report = report_from_arrays(ds[y_true_col], ds[y_pred_col], groups, float(positive))
    out = _out_dir(args)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    print(f"report for {ds.row_count} row(s) written to {out}")
    return 0


def cmd_decorrelate(args) -> int:
    cfg = _require_config(args)
    schema = cfg.get("schema")
    if schema is None:
        raise SchemaError("decorrelate config needs a 'schema'")
    base = os.path.dirname(os.path.abspath(args.config))
    if isinstance(schema, str):
        schema = os.path.join(base, schema)
    source = args.input or os.path.join(base, cfg["csv"])
    ds, _ = one_hot(impute(read_csv(source, schema)))
    sens = [c.name for c in ds.columns if c.role == "sensitive" and c.kind == "numeric"]
    feats = [c.name for c in ds.columns if c.role == "feature" and c.kind == "numeric"]
    if not sens or not feats:
        raise SchemaError("decorrelate needs at least one sensitive and one feature column")
    names = sens + feats
    block = ds.matrix(names)
    transition = fit_transition(block, range(len(sens)), names, strict=bool(cfg.get("strict", False)))
    moved = apply_transition(transition, block)
    cols = []
    for c in ds.columns:
        if c.name in names:
            cols.append(c.replace(values=moved[:, names.index(c.name)]))
        else:
            cols.append(c)
    out = _out_dir(args)
    write_csv(Dataset(cols, row_count=ds.row_count), out / "transformed.csv")
    transition.save(out / "transition.json")
    print(f"transformed {len(feats)} feature(s) against {len(sens)} sensitive column(s) in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the flags without defaults so values given
        # before the subcommand are not overwritten
        p = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p.add_argument("--config", default=d(None), help="JSON configuration file")
        p.add_argument("--seed", type=int, default=d(None), help="override the seed (unsigned 64-bit)")
        p.add_argument("--out", default=d(None), help="output directory (default: current directory)")
        p.add_argument("--jobs", type=int, default=d(1), help="parallel workers")
        p.add_argument("-v", "--verbose", action="store_true", default=d(False), help="log warnings to stderr")
        return p

    top, common = global_flags(False), global_flags(True)

    parser = argparse.ArgumentParser(prog="fairbasis", description=__doc__.splitlines()[0],
                                     parents=[top])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate replicate CSVs from a simulation spec")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", parents=[common], help="run the model variants and write fairness reports")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pseudo", parents=[common], help="expand survival records into a yearly pseudo table")
    p.add_argument("input", help="survival CSV")
    p.add_argument("--output", default="pseudo.csv", help="file name inside --out")
    p.add_argument("--cause-rule", choices=CAUSE_RULES, default="cause_specific")
    p.add_argument("--decimals", type=int, default=None, help="round exposures for display")
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("metrics", parents=[common], help="fairness report from a predictions CSV")
    p.add_argument("predictions", help="CSV with y_true, y_pred and sensitive columns")
    p.add_argument("--sensitive", help="comma-separated sensitive column names")
    p.add_argument("--positive-label", type=float, default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("decorrelate", parents=[common], help="emit transformed CSV and transition JSON")
    p.add_argument("input", nargs="?", help="CSV to transform (default: 'csv' entry of the config)")
    p.set_defaults(func=cmd_decorrelate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FairbasisError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error (FileNotFound): {exc}", file=sys.stderr)
        return DataError.exit_code
    except KeyError as exc:
        print(f"error (ConfigError): missing key {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())

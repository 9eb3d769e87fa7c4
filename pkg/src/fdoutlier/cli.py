"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import haar_project, pca_fit, pca_project, save_features, save_pca_basis
from .curves import load_csv, make_split, save_csv
from .errors import DataError
from .lof import lof_scores
from .pipeline import DEFAULT_THRESHOLDS, parse_sets, run_pipeline
from .selection import select_levels
from .simgen import (
    StudyConfig,
    TelemetryConfig,
    fdr_null_study,
    generate_telemetry,
    level_study,
    power_study,
)
from .twosample import check_kind


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- config handling -----------------------------------------------------------

def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_config(cls, file_values: dict, overrides: dict):
    """Defaults of ``cls``, then matching config-file keys, then non-None overrides."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in file_values:
            default = f.default
            raw = file_values[f.name]
            try:
                kwargs[f.name] = type(default)(raw) if not isinstance(default, tuple) else default
            except ValueError:
                raise DataError(f"config key {f.name}: cannot parse {raw!r}") from None
        if overrides.get(f.name) is not None:
            kwargs[f.name] = overrides[f.name]
    return cls(**kwargs)


def parse_indices(text: str) -> list[int]:
    """``"240-479"`` (inclusive), ``"0,2,4"`` or a mix of both."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# -- output helpers ------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _write_table(args, stem: str, rows: list[dict], summary: dict) -> list[Path]:
    out = _out_dir(args)
    written = []
    if args.format == "json":
        path = out / f"{stem}.json"
        path.write_text(json.dumps({"summary": summary, "rows": rows}, indent=2, sort_keys=True))
        written.append(path)
    else:
        path = out / f"{stem}.csv"
        _write_rows(path, rows)
        written.append(path)
        side = out / f"{stem}_summary.json"
        side.write_text(json.dumps(summary, indent=2, sort_keys=True))
        written.append(side)
    return written


def write_truth(path, config: TelemetryConfig) -> None:
    rows = [
        {"index": s.day, "day": s.day + 1, "kind": s.kind, "magnitude": s.magnitude}
        for s in sorted(config.anomaly_specs, key=lambda s: s.day)
    ]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["index", "day", "kind", "magnitude"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_truth(path) -> list[int]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "index" not in reader.fieldnames:
            raise DataError(f"{path}: ground-truth file needs an 'index' column")
        return sorted(int(row["index"]) for row in reader)


# -- subcommands ---------------------------------------------------------------

def _telemetry_config(args) -> TelemetryConfig:
    overrides = {
        "seed": args.seed,
        "n_days": getattr(args, "n_days", None),
        "samples_per_day": getattr(args, "samples", None),
        "noise_sd": getattr(args, "noise_sd", None),
        "year_length": getattr(args, "year_length", None),
    }
    if getattr(args, "no_anomalies", False):
        overrides["anomaly_specs"] = ()
    return build_config(TelemetryConfig, args.file_config, overrides)


def cmd_simulate(args) -> list[Path]:
    config = _telemetry_config(args)
    curves, _ = generate_telemetry(config)
    out = Path(args.out or "telemetry.csv")
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "telemetry.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    truth = Path(args.truth) if args.truth else out.with_name("truth.csv")
    save_csv(curves, out)
    write_truth(truth, config)
    return [out, truth]


def _load_input(args):
    if not args.input:
        raise UsageError("--input is required")
    return load_csv(args.input, has_header=args.header)


def _split_for(args, n: int):
    nominal = parse_indices(args.nominal) if args.nominal else range(n // 2, n)
    return make_split(n, nominal)


def cmd_project(args) -> list[Path]:
    curves = _load_input(args)
    out = _out_dir(args)
    if args.basis == "haar":
        side = save_features(haar_project(curves), out / "features.csv")
        return [out / "features.csv", side]
    split = _split_for(args, curves.n)
    basis = pca_fit(curves, split)
    rows = [i for i in range(curves.n) if i not in set(basis.fit_indices)]
    fm = pca_project(curves, basis, rows, center=args.pca_center)
    written = [out / "features.csv", save_features(fm, out / "features.csv")]
    written += [out / "pca_basis.csv", save_pca_basis(basis, out / "pca_basis.csv")]
    return written


def cmd_select(args) -> list[Path]:
    curves = _load_input(args)
    split = _split_for(args, curves.n)
    if args.basis == "haar":
        fm = haar_project(curves)
    else:
        basis = pca_fit(curves, split)
        rows = [i for i in range(curves.n) if i not in set(basis.fit_indices)]
        fm = pca_project(curves, basis, rows, center=args.pca_center)
    result = select_levels(fm, split, args.test, args.alpha, correction=not args.no_fdr)
    out = _out_dir(args)
    if args.format == "json":
        path = out / "selection.json"
        path.write_text(result.to_json())
    else:
        path = out / "selection.csv"
        path.write_text(result.to_csv())
    return [path]


def cmd_lof(args) -> list[Path]:
    if not args.input:
        raise UsageError("--input is required")
    points = load_csv(args.input, has_header=args.header).values
    scores = lof_scores(points, args.k)
    out = _out_dir(args)
    thresholds = parse_floats(args.thresholds)
    if args.format == "json":
        path = out / "lof_scores.json"
        path.write_text(json.dumps({
            "k": scores.k,
            "scores": [float(s) for s in scores.scores],
            "flagged": {format(t, "g"): scores.flagged(t) for t in thresholds},
        }, indent=2, sort_keys=True))
    else:
        path = out / "lof_scores.csv"
        path.write_text(scores.to_csv())
    return [path]


def cmd_pipeline(args) -> list[Path]:
    truth = None
    meta = {"command": "pipeline"}
    if args.input:
        curves = load_csv(args.input, has_header=args.header)
        split = _split_for(args, curves.n)
        if args.truth:
            truth = read_truth(args.truth)
        meta["input"] = str(args.input)
    else:
        config = _telemetry_config(args)
        curves, truth = generate_telemetry(config)
        nominal = parse_indices(args.nominal) if args.nominal else range(config.year_length, config.n_days)
        split = make_split(curves.n, nominal)
        meta["telemetry"] = {
            k: v for k, v in dataclasses.asdict(config).items() if k != "anomaly_specs"
        }
        meta["anomalies"] = [dataclasses.asdict(s) for s in config.anomaly_specs]
    meta["nominal"] = [split.nominal_indices[0], split.nominal_indices[-1], split.n0]
    report = run_pipeline(
        curves,
        split,
        parse_sets(args.sets),
        lof_k=args.k,
        thresholds=parse_floats(args.thresholds),
        alpha=args.alpha,
        truth=truth,
        correction=not args.no_fdr,
        include_nominal=args.include_nominal,
        standardize=args.standardize,
        pca_center=args.pca_center,
        metadata=meta,
    )
    out = _out_dir(args)
    paths = [out / "report.json", out / "lof_scores.csv", out / "summary.csv"]
    paths[0].write_text(report.to_json())
    paths[1].write_text(report.scores_csv())
    paths[2].write_text(report.summary_csv())
    return paths


def _study_config(args, **overrides) -> StudyConfig:
    overrides["seed"] = args.seed
    return build_config(StudyConfig, args.file_config, overrides)


def cmd_level_study(args) -> list[Path]:
    config = _study_config(
        args, group_size=args.n, replications=args.m, alpha=args.alpha, distribution=args.dist
    )
    rows = [level_study(config, kind).row() for kind in args.test.split(",")]
    return _write_table(args, "level_study", rows, {"config": dataclasses.asdict(config)})


def cmd_power_study(args) -> list[Path]:
    config = _study_config(
        args, group_size=args.n, replications=args.m, mu=args.mu, sigma2=args.sigma2,
        distribution=args.dist,
    )
    kinds = [check_kind(k) for k in args.tests.split(",")]
    result = power_study(config, kinds)
    summary = {"config": dataclasses.asdict(config), "auc": {k: result.auc(k) for k in kinds}}
    return _write_table(args, "power_study", result.rows(), summary)


def cmd_fdr_study(args) -> list[Path]:
    seed = args.seed if args.seed is not None else 0
    res = fdr_null_study(args.m_hypotheses, args.reps, args.alpha, seed)
    summary = {
        "m_hypotheses": res.m_hypotheses,
        "replications": res.replications,
        "alpha": res.alpha,
        "fdr": res.fdr,
        "std_error": res.std_error,
        "seed": seed,
    }
    return _write_table(args, "fdr_study", res.rows(), summary)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", help="flat key = value file of config fields")
    common.add_argument("--out", help="output directory (simulate: CSV path or directory)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    data = _Parser(add_help=False)
    data.add_argument("--input", help="curve CSV, one curve per row")
    data.add_argument("--header", action="store_true", help="input CSV has a header row")
    data.add_argument("--nominal", help="nominal row indices, e.g. 240-479 (default: second half)")
    data.add_argument("--pca-center", action="store_true",
                      help="subtract the fitted mean curve before PCA projection")

    telemetry = _Parser(add_help=False)
    telemetry.add_argument("--n-days", type=int)
    telemetry.add_argument("--samples", type=int, help="samples per day (power of two)")
    telemetry.add_argument("--noise-sd", type=float)
    telemetry.add_argument("--year-length", type=int)
    telemetry.add_argument("--no-anomalies", action="store_true")

    parser = _Parser(prog="fdoutlier", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", parents=[common, telemetry], help="generate synthetic telemetry")
    p.add_argument("--truth", help="ground-truth CSV path (default: truth.csv beside the output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("project", parents=[common, data], help="Haar or PCA coefficients")
    p.add_argument("--basis", choices=("haar", "pca"), default="haar")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("select", parents=[common, data], help="test every level, apply BH")
    p.add_argument("--basis", choices=("haar", "pca"), default="pca")
    p.add_argument("--test", default="w2", help="ks, w2 or winf")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--no-fdr", action="store_true", help="reject p < alpha without BH")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("lof", parents=[common], help="LOF scores of the rows of a CSV")
    p.add_argument("--input", help="point CSV, one object per row")
    p.add_argument("--header", action="store_true")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--thresholds", default="2,4")
    p.set_defaults(func=cmd_lof)

    p = sub.add_parser("pipeline", parents=[common, data, telemetry],
                       help="project, select, score (simulated telemetry unless --input)")
    p.add_argument("--truth", help="ground-truth CSV with an 'index' column (with --input)")
    p.add_argument("--sets", default="all", help="comma-separated feature set ids 0-10")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--thresholds", default=",".join(format(t, "g") for t in DEFAULT_THRESHOLDS))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--no-fdr", action="store_true")
    p.add_argument("--include-nominal", action="store_true",
                   help="let nominal rows act as LOF neighbors (they are not reported)")
    p.add_argument("--standardize", action="store_true",
                   help="divide each feature by its nominal standard deviation")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("level-study", parents=[common], help="empirical level of the tests")
    p.add_argument("--dist", choices=("gaussian", "exponential"))
    p.add_argument("--n", type=int, help="size of each group")
    p.add_argument("--m", type=int, help="replications")
    p.add_argument("--test", default="w2,winf")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_level_study)

    p = sub.add_parser("power-study", parents=[common], help="ROC curves of the tests")
    p.add_argument("--dist", choices=("gaussian", "exponential"))
    p.add_argument("--n", type=int, help="size of each group")
    p.add_argument("--m", type=int, help="replications")
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--tests", default="ks,w2,winf")
    p.set_defaults(func=cmd_power_study)

    p = sub.add_parser("fdr-study", parents=[common], help="BH false discovery rate under the null")
    p.add_argument("--m-hypotheses", type=int, default=256)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_fdr_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code
    try:
        args.file_config = read_config(args.config) if args.config else {}
        if args.seed is None and "seed" in args.file_config:
            args.seed = int(args.file_config["seed"])
        written = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fdoutlier: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"fdoutlier: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

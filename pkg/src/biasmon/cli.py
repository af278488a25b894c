"""Command-line entry point: ``biasmon <command> ...``.

Commands: analyze, calibrate, monitor, simulate, sweep, chart.  Every
command accepts ``--config FILE`` (JSON object keyed by option name; its
values override flags).  Exit codes: 0 success, 1 usage error, 2 data
error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .ingest import DataError, Dataset, exclude_category, load_dataset, with_age_groups
from .metrics import METRIC_NAMES, evaluate, select_threshold
from .monitor import Chart, CusumCalibration, calibrate, evaluate_alarms, run_chart
from .simulate import (
    DriftScenario,
    calibrate_scenario,
    run_scenario,
    sweep_delta,
    sweep_to_csv,
)
from . import stats
from .subgroup import analyze, association_scan, disparity_tests, prevalence_correlation
from .svg import chart_svg

SCHEMA_VERSION = 1
SEED_ENV = "BIASMON_SEED"
DENSITY_ATTRIBUTES = ("density", "tissue_density")
MALE_DENSITY = "5"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite(obj):
    # JSON has no inf/nan; undefined values are written as null
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _csv_list(text: str | None) -> list[str]:
    if not text:
        return []
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t.strip() for t in text.split(",") if t.strip()]


def _threshold_arg(value):
    if value in (None, "auto"):
        return "auto"
    try:
        t = float(value)
    except (TypeError, ValueError):
        raise UsageError(f"threshold must be 'auto' or a number, got {value!r}") from None
    if not 0 < t <= 1:
        raise UsageError("fixed threshold must lie in (0, 1]")
    return t


def _parse_grid(text: str) -> list[float]:
    """``"start:stop:step"`` (inclusive) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}; use start:stop:step") from None
        if step <= 0 or stop < start:
            raise UsageError(f"bad grid {text!r}")
        n = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(n + 1)]
    return [float(x) for x in _csv_list(text)]


def _prepare(ds: Dataset) -> Dataset:
    if "age" in ds.attribute_schema and "age_group" not in ds.attribute_schema:
        ds = with_age_groups(ds)
    for name in DENSITY_ATTRIBUTES:
        if name in ds.attribute_schema and MALE_DENSITY in ds.attribute_schema[name]:
            ds = exclude_category(ds, name, MALE_DENSITY)
    return ds


def _load(path, schema=None) -> tuple[Dataset, int]:
    raw = load_dataset(path, schema)
    ds = _prepare(raw)
    return ds, len(raw) - len(ds)


def _pick_threshold(mode, fold: Dataset, train: Dataset | None) -> float:
    if mode != "auto":
        return mode
    src = (train or fold).labeled()
    return select_threshold(src.scores, src.labels).threshold


def _metric_summary(ms) -> dict:
    return ms.to_dict()


def _trend_tests(reports, attr_categories, metrics) -> dict:
    """Pearson and Spearman between category order and pooled metric (ordinal attributes)."""
    out = {}
    for metric in metrics:
        pts = [(attr_categories.index(r.key[0][1]), r.pooled.get(metric)) for r in reports
               if r.key[0][1] in attr_categories and r.pooled.get(metric) is not None
               and r.key[0][1] != "Unknown"]
        if len(pts) < 3:
            continue
        x, y = zip(*pts)
        entry = {}
        for name, fn in (("pearson", stats.pearson), ("spearman", stats.spearman)):
            try:
                entry[name] = fn(x, y).to_dict()
            except ValueError as e:
                entry[name] = {"error": str(e)}
        out[metric] = entry
    return out


def cmd_analyze(args) -> int:
    inputs = _csv_list(args.input)
    if not inputs:
        raise UsageError("analyze needs --input")
    folds, dropped = [], []
    for p in inputs:
        ds, n_dropped = _load(p, args.schema)
        folds.append(ds)
        dropped.append(n_dropped)
    train = _load(args.train, args.schema)[0] if args.train else None
    mode = _threshold_arg(args.threshold)
    thresholds = [_pick_threshold(mode, f, train) for f in folds]
    attrs = _csv_list(args.attributes) or list(folds[0].attributes)
    joints = [tuple(j.split(":")) for j in _csv_list(args.joint)]
    metrics = _csv_list(args.metrics) or ["ppv", "sensitivity", "specificity", "f1", "accuracy", "auroc"]
    for m in metrics:
        if m not in METRIC_NAMES:
            raise UsageError(f"unknown metric {m!r}")

    dataset_summary = []
    for path, f, t, nd in zip(inputs, folds, thresholds, dropped):
        lab = f.labeled()
        dataset_summary.append({
            "path": os.path.basename(path),
            "n_records": len(f) + nd,
            "n_excluded_birads": f.n_excluded,
            "n_excluded_category": nd,
            "n_pos": int(np.sum(lab.labels == 1)),
            "n_neg": int(np.sum(lab.labels == 0)),
            "threshold": t,
            "metrics": _metric_summary(evaluate(f, t)),
        })
    n_pos = sum(d["n_pos"] for d in dataset_summary)
    n_neg = sum(d["n_neg"] for d in dataset_summary)

    def section(keys):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            reports = analyze(folds, keys, thresholds, min_positives=args.min_positives)
            tests = {m: [t.to_dict() for t in disparity_tests(reports, m, bonferroni=args.bonferroni)]
                     for m in metrics}
        sec = {"attributes": list(keys), "disparity": tests, "warnings": [str(w.message) for w in caught]}
        if len(keys) == 1:
            corr = {}
            for m in metrics:
                try:
                    corr[m] = prevalence_correlation(reports, m).to_dict()
                except ValueError as e:
                    corr[m] = {"error": str(e)}
            sec["prevalence_correlation"] = corr
            if keys[0] in folds[0].ordinal:
                sec["trend"] = _trend_tests(reports, folds[0].attribute_schema[keys[0]], metrics)
        sec["subgroups"] = [r.to_dict() for r in reports]
        return sec

    pooled_ds = Dataset(
        tuple(r for f in folds for r in f.labeled().records), folds[0].attribute_schema, folds[0].ordinal
    ) if len(folds) == 1 or _disjoint_ids(folds) else None
    associations = None
    if pooled_ds is not None:
        preds = np.concatenate([(f.labeled().scores >= t).astype(int) for f, t in zip(folds, thresholds)])
        associations = association_scan(pooled_ds, preds, attrs).to_dict()

    report = {
        "schema": SCHEMA_VERSION,
        "tool": {"name": "biasmon", "version": __version__},
        "threshold_mode": "auto" if mode == "auto" else "fixed",
        "thresholds": thresholds,
        "dataset": {
            "folds": dataset_summary,
            "n_pos": n_pos,
            "n_neg": n_neg,
            "prevalence": n_pos / (n_pos + n_neg) if n_pos + n_neg else None,
        },
        "subgroups": {a: section((a,)) for a in attrs},
        "joint": {f"{a}:{b}": section((a, b)) for a, b in joints},
        "associations": associations,
    }
    write_atomic(args.out, _dump_json(report))
    print(f"wrote {args.out}: {len(attrs)} attribute(s), {len(joints)} joint section(s)")
    return EXIT_OK


def _disjoint_ids(folds) -> bool:
    seen = set()
    for f in folds:
        for r in f.records:
            if r.id in seen:
                return False
            seen.add(r.id)
    return True


def read_stream(path) -> list[float | None]:
    """Metric stream CSV: header with a ``metric`` column; blank cells are undefined."""
    text = Path(path).read_text(encoding="utf-8-sig")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError(f"{path}: empty stream file")
    header = [h.strip() for h in rows[0]]
    if "metric" not in header:
        raise DataError(f"{path}: line 1: stream header needs a 'metric' column")
    col = header.index("metric")
    out = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {line_no}: expected {len(header)} fields")
        cell = row[col].strip()
        if not cell:
            out.append(None)
            continue
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"{path}: line {line_no}: non-numeric metric {cell!r}") from None
        if not np.isfinite(v):
            raise DataError(f"{path}: line {line_no}: non-finite metric {cell!r}")
        out.append(v)
    return out


def cmd_calibrate(args) -> int:
    values = read_stream(args.stream)
    cal = calibrate(values, k=float(args.k), metric=args.metric)
    if args.h is not None:
        cal = CusumCalibration(cal.mu, cal.sigma, cal.k, float(args.h), cal.metric)
    write_atomic(args.out, cal.to_json())
    note = " (degenerate)" if cal.degenerate else ""
    print(f"calibrated {args.metric}: mu={cal.mu:.6g} sigma={cal.sigma:.6g} h={cal.h:.6g} k={cal.k:g}{note}")
    return EXIT_OK


def _read_calibration(path) -> CusumCalibration:
    try:
        return CusumCalibration.from_json(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid calibration JSON: {e}") from None


def cmd_monitor(args) -> int:
    cal = _read_calibration(args.calibration)
    if cal.degenerate:
        raise DataError("calibration is degenerate (sigma ~ 0); refusing to monitor")
    values = read_stream(args.stream)
    chart = run_chart(values, cal)
    write_atomic(args.out, chart.to_csv())
    episodes = chart.episodes
    for start, end in episodes:
        if chart.s_upper[start] >= cal.h * (1 - 1e-9):
            signal, bound = "s_upper", f"+h={cal.h:.6g}"
        else:
            signal, bound = "s_lower", f"-h={-cal.h:.6g}"
        print(f"alarm episode: start={start} end={end} signal={signal} crossed {bound}")
    if args.drift_index is not None:
        ev = evaluate_alarms(chart, int(args.drift_index))
        print(f"far={ev.far} delay={ev.detection_delay}")
    n = len(episodes)
    print(f"{n} alarm episode{'s' if n != 1 else ''}")
    return EXIT_OK


def _scenario_from_args(args, seed) -> DriftScenario:
    return DriftScenario(
        attribute=args.attribute,
        shifted_group=args.shift_group,
        delta_p=float(args.delta_p),
        n_batches=int(args.n_batches),
        batch_size=int(args.batch_size),
        flexibility=float(args.flexibility),
        onset=None if args.onset is None else int(args.onset),
        seed=seed,
        metric=args.metric,
    )


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    return 0


def _k_arg(value):
    if value in (None, "auto"):
        return "auto"
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"k must be 'auto' or a number, got {value!r}") from None


def _simulation_setup(args, scenario):
    ds, _ = _load(args.input, args.schema)
    mode = _threshold_arg(args.threshold)
    threshold = _pick_threshold(mode, ds, None)
    if args.calibration:
        cal = _read_calibration(args.calibration)
        k = _k_arg(args.k)
        if k != "auto":
            cal = cal.with_k(k)
    else:
        cal = calibrate_scenario(scenario, ds, threshold, k=_k_arg(args.k))
    if cal.degenerate:
        raise DataError("calibration is degenerate (sigma ~ 0); refusing to monitor")
    return ds, threshold, cal


def cmd_simulate(args) -> int:
    if not args.shift_group:
        raise UsageError("simulate needs --shift-group")
    scenario = _scenario_from_args(args, _seed(args))
    ds, threshold, cal = _simulation_setup(args, scenario)
    result = run_scenario(scenario, ds, threshold, cal)
    write_atomic(args.out_chart, result.chart.to_csv())
    payload = {"schema": SCHEMA_VERSION, "threshold": threshold, **result.to_dict()}
    write_atomic(args.out_eval, _dump_json(payload))
    ev = result.evaluation
    print(f"far={ev.far} delay={ev.detection_delay} s_lower_final={result.s_lower_final:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _scenario_from_args(args, _seed(args))
    ds, threshold, cal = _simulation_setup(args, scenario)
    grid = _parse_grid(args.delta_grid)
    rows = sweep_delta(ds, scenario, threshold, cal, grid, _csv_list(args.groups) or None)
    write_atomic(args.out, sweep_to_csv(rows))
    print(f"wrote {args.out}: {len(rows)} scenario(s), k={cal.k:g}")
    return EXIT_OK


def cmd_chart(args) -> int:
    text = Path(args.chart).read_text(encoding="utf-8")
    try:
        chart = Chart.from_csv(text)
    except ValueError as e:
        raise DataError(f"{args.chart}: {e}") from None
    if args.h is not None:
        h = float(args.h)
    elif args.calibration:
        h = _read_calibration(args.calibration).h
    else:
        raise UsageError("chart needs --h or --calibration to draw the thresholds")
    write_atomic(args.out, chart_svg(chart, h, title=args.title))
    print(f"wrote {args.out}: {len(chart)} batches, {len(chart.episodes)} alarm episode(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biasmon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"biasmon {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON file whose keys override flags")
        return sp

    a = add("analyze", cmd_analyze, "subgroup metrics, disparity tests and associations")
    a.add_argument("--input", help="comma-separated prediction CSVs, one per fold")
    a.add_argument("--train", help="CSV used for threshold selection (default: each fold itself)")
    a.add_argument("--schema", help="JSON attribute schema")
    a.add_argument("--attributes", help="comma-separated attributes (default: all)")
    a.add_argument("--joint", help="comma-separated attribute pairs a:b")
    a.add_argument("--metrics", help="comma-separated metrics to test")
    a.add_argument("--threshold", default="auto")
    a.add_argument("--min-positives", type=int, default=10)
    a.add_argument("--bonferroni", action="store_true")
    a.add_argument("--out", default="report.json")

    c = add("calibrate", cmd_calibrate, "estimate mu, sigma, h from in-control batches")
    c.add_argument("--stream", required=False)
    c.add_argument("--k", default=0.0, type=float)
    c.add_argument("--h", type=float)
    c.add_argument("--metric", default="sensitivity")
    c.add_argument("--out", default="calibration.json")

    m = add("monitor", cmd_monitor, "run a CUSUM chart over a batch metric stream")
    m.add_argument("--calibration")
    m.add_argument("--stream")
    m.add_argument("--drift-index", type=int)
    m.add_argument("--out", default="chart.csv")

    for name, fn, help in (("simulate", cmd_simulate, "one bootstrapped drift scenario"),
                           ("sweep", cmd_sweep, "S^l(N) over shifted groups and delta_p")):
        s = add(name, fn, help)
        s.add_argument("--input")
        s.add_argument("--schema")
        s.add_argument("--attribute")
        s.add_argument("--threshold", default="auto")
        s.add_argument("--calibration", help="calibration JSON (default: calibrate on base batches)")
        s.add_argument("--k", default="auto" if name == "simulate" else "0")
        s.add_argument("--metric", default="sensitivity")
        s.add_argument("--n-batches", type=int, default=200)
        s.add_argument("--batch-size", type=int, default=1000)
        s.add_argument("--flexibility", type=float, default=0.025)
        s.add_argument("--onset", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--shift-group")
        if name == "simulate":
            s.add_argument("--delta-p", type=float, default=0.0)
            s.add_argument("--out-chart", default="chart.csv")
            s.add_argument("--out-eval", default="evaluation.json")
        else:
            s.set_defaults(delta_p=0.0)
            s.add_argument("--delta-grid", default="-0.3:0.3:0.05")
            s.add_argument("--groups", help="comma-separated groups to shift (default: all)")
            s.add_argument("--out", default="sweep.csv")

    g = add("chart", cmd_chart, "render a chart CSV as SVG")
    g.add_argument("--chart")
    g.add_argument("--calibration")
    g.add_argument("--h", type=float)
    g.add_argument("--title", default="CUSUM chart")
    g.add_argument("--out", default="chart.svg")
    return p


_REQUIRED = {
    "calibrate": ("stream",),
    "monitor": ("calibration", "stream"),
    "simulate": ("input", "attribute"),
    "sweep": ("input", "attribute"),
    "chart": ("chart",),
}


def _apply_config(args) -> None:
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise DataError(f"{args.config}: invalid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: config must be a JSON object")
    aliases = {"shifted_group": "shift_group"}
    for key, value in cfg.items():
        dest = aliases.get(key, key.replace("-", "_"))
        if dest in ("command", "func") or not hasattr(args, dest):
            raise UsageError(f"{args.config}: unknown option {key!r} for {args.command}")
        setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given; see biasmon --help")
        _apply_config(args)
        for dest in _REQUIRED.get(args.command, ()):
            if getattr(args, dest) in (None, ""):
                raise UsageError(f"{args.command} needs --{dest.replace('_', '-')}")
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

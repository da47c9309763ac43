"""Command-line entry point: synth / train / sweep / run / report.

Exit codes: 0 success, 1 runtime failure, 2 input or configuration error.
All config and manifest files are JSON (``"version": 1``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .control import write_control_log
from .dataset import file_digest, read_jsonl, write_jsonl
from .errors import ConfigError, InputError, ShedderError
from .evaluation import (
    FoldResult,
    SweepRow,
    leave_one_camera_out,
    random_rates,
    score_records,
    sweep_rates,
    sweep_thresholds,
)
from .features import DEFAULT_COLORS, BinGrid, extract_features, parse_colors
from .sim import TIMESERIES_COLUMNS, SimConfig, interleave_cameras, run_simulation
from .synth import generate_corpus, generate_synthetic_scenario
from .threshold import UtilityHistory
from .utility import UtilityModel, parse_query, train_utility_model

log = logging.getLogger("colorshed")

CONFIG_VERSION = 1
EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2


# -- helpers -----------------------------------------------------------------


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object")
    v = obj.get("version", CONFIG_VERSION)
    if v != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported version {v!r}")
    return obj


def _load_config(path) -> dict:
    return {} if path is None else _load_json(path)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _cameras(text):
    if text is None:
        return None
    try:
        return {int(x) for x in text.split(",") if x.strip()}
    except ValueError:
        raise InputError(f"expected comma-separated camera ids, got {text!r}") from None


def _filter_cameras(records, cams):
    if cams is None:
        return records
    out = [r for r in records if r.camera_id in cams]
    if not out:
        raise InputError(f"no frames for cameras {sorted(cams)}")
    return out


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _fmt(x) -> str:
    return "" if x is None else repr(x)


# -- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.kind == "corpus":
        colors = tuple(c.strip() for c in args.colors.split(",") if c.strip())
        unknown = set(colors) - set(DEFAULT_COLORS)
        if unknown:
            raise InputError(f"synthetic corpus supports {sorted(DEFAULT_COLORS)}, got {sorted(unknown)}")
        records = generate_corpus(args.seed, n_cameras=args.cameras,
                                  frames_per_camera=args.frames, object_colors=colors)
    else:
        secs = tuple(_floats(args.segment_seconds))
        if len(secs) != 3 or min(secs) <= 0:
            raise InputError("--segment-seconds needs three positive values")
        records = generate_synthetic_scenario(args.seed, segment_seconds=secs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, args.out)
    print(f"wrote {len(records)} frames to {args.out}")
    return EXIT_OK


# -- train -------------------------------------------------------------------


def _train_settings(cfg: dict, args):
    colors = parse_colors(cfg["colors"]) if "colors" in cfg else dict(DEFAULT_COLORS)
    grid = BinGrid(*cfg.get("grid", (32, 32)))
    query = parse_query(args.query or cfg.get("query", "red"))
    return colors, grid, query


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    colors, grid, query = _train_settings(cfg, args)
    records = _filter_cameras(read_jsonl(args.dataset), _cameras(args.cameras))
    qcolors = sorted(query.colors())
    feats = [extract_features(r.hist, colors, grid) for r in records]
    model = train_utility_model([(f, r.labels(qcolors)) for f, r in zip(feats, records)],
                                colors, query, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    u = np.array([model.score(f) for f in feats])
    summary = {
        "dataset_sha256": file_digest(args.dataset),
        "frames": len(records),
        "query": str(query),
        "grid": [grid.sat_bin_size, grid.val_bin_size],
        "colors": {
            name: {"norm": m.norm, "n_pos": m.n_pos, "n_neg": m.n_neg}
            for name, m in sorted(model.models.items())
        },
        "training_utility": {
            "min": float(u.min()), "median": float(np.median(u)), "max": float(u.max()),
        },
        "model_hash": model.to_json()["content_hash"],
    }
    (out / "train_summary.json").write_text(_dump(summary))
    for name, m in sorted(model.models.items()):
        rows = [[repr(float(x)) for x in row] for row in m.m_pos]
        _write_csv(out / f"m_pos_{name}.csv", [f"v{j}" for j in range(grid.n_val_bins)], rows)
    print(f"trained {', '.join(qcolors)} on {len(records)} frames -> {out / 'model.json'}")
    return EXIT_OK


# -- sweep -------------------------------------------------------------------


def cmd_sweep(args) -> int:
    records = _filter_cameras(read_jsonl(args.dataset), _cameras(args.cameras))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.cross_validate:
        if args.model:
            m = UtilityModel.load(args.model)
            colors, grid, query = m.colors, m.grid, m.query
        else:
            colors, grid, query = _train_settings(_load_config(args.config), args)
        folds, _ = leave_one_camera_out(records, colors, query, grid)
        _write_csv(out, FoldResult.COLUMNS, [f.row() for f in folds])
        sep = sum(f.separated for f in folds)
        print(f"{sep}/{len(folds)} folds fully separated -> {out}")
        return EXIT_OK

    if args.model is None:
        raise InputError("--model is required unless --cross-validate is given")
    model = UtilityModel.load(args.model)
    qcolors = model.query.colors()
    if args.baseline == "random":
        if args.rates is None:
            raise InputError("random baseline needs --rates")
        seeds = range(args.seed, args.seed + args.seeds)
        rows = random_rates(records, _floats(args.rates), qcolors, seeds)
    else:
        u = score_records(model, records)
        if args.rates is not None:
            rows = sweep_rates(records, u, _floats(args.rates), qcolors)
        else:
            ts = _floats(args.thresholds) if args.thresholds else [k / 20 for k in range(21)]
            rows = sweep_thresholds(records, u, ts, qcolors)
    _write_csv(out, SweepRow.COLUMNS, [r.row() for r in rows])
    print(f"{len(rows)} rows -> {out}")
    return EXIT_OK


# -- run ---------------------------------------------------------------------


def _resolve(base: Path, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_manifest(path, overrides: dict) -> dict:
    """Manifest dict with paths made absolute and CLI overrides applied."""
    if path is not None:
        man = _load_json(path)
        base = Path(path).resolve().parent
    else:
        man, base = {}, Path.cwd()
    for k, v in overrides.items():
        if v is not None:
            man[k] = v
    if "dataset" in man and "datasets" not in man:
        man["datasets"] = [man.pop("dataset")]
    for key in ("model", "out"):
        if key not in man:
            raise InputError(f"manifest needs {key!r}")
    if not man.get("datasets"):
        raise InputError("manifest needs at least one dataset")
    man["model"] = _resolve(base, man["model"])
    man["datasets"] = [_resolve(base, p) for p in man["datasets"]]
    man["out"] = _resolve(base, man["out"])
    if man.get("history_dataset"):
        man["history_dataset"] = _resolve(base, man["history_dataset"])
    if isinstance(man.get("config"), str):
        man["config"] = _load_json(_resolve(base, man["config"]))
    for p in [man["model"], *man["datasets"]]:
        if not p.is_file():
            raise InputError(f"missing input file {p}")
    return man


def _sim_config(man: dict) -> SimConfig:
    sim = dict((man.get("config") or {}).get("sim", {}))
    sim["seed"] = int(man.get("seed", sim.get("seed", 0)))
    if man.get("baseline"):
        sim["baseline"] = man["baseline"]
    if man.get("rate") is not None:
        sim["random_rate"] = float(man["rate"])
    if man.get("lb_ms") is not None:
        sim.setdefault("control", {})
        sim["control"] = dict(sim["control"], latency_bound_ms=float(man["lb_ms"]))
    return SimConfig.from_dict(sim)


def cmd_run(args) -> int:
    man = load_manifest(args.manifest, {
        "model": args.model, "datasets": args.dataset, "out": args.out, "seed": args.seed,
        "baseline": args.baseline, "rate": args.rate, "lb_ms": args.lb_ms,
        "history_dataset": args.history_dataset,
        "config": _load_config(args.config) if args.config else None,
    })
    cfg = _sim_config(man)
    model = UtilityModel.load(man["model"])
    cams = _cameras(args.cameras)
    streams = [_filter_cameras(read_jsonl(p), cams) for p in man["datasets"]]
    offsets = man.get("camera_offsets_ms") or [0.0] * len(streams)
    if len(offsets) != len(streams):
        raise InputError("camera_offsets_ms must have one entry per dataset")
    records = streams[0] if len(streams) == 1 and not any(offsets) else interleave_cameras(streams, offsets)

    history = None
    if man.get("history_dataset"):
        hist_recs = read_jsonl(man["history_dataset"])
        history = UtilityHistory.from_training(score_records(model, hist_recs).tolist(),
                                               cfg.control.history_window)

    report = run_simulation(cfg, model, records, history)

    out = Path(man["out"])
    out.mkdir(parents=True, exist_ok=True)
    summary = report.summary()
    summary["inputs"] = {
        "model_hash": model.to_json()["content_hash"],
        "dataset_sha256": [file_digest(p) for p in man["datasets"]],
        "history_sha256": file_digest(man["history_dataset"]) if man.get("history_dataset") else None,
        "camera_offsets_ms": list(offsets),
    }
    summary["query"] = str(model.query)
    (out / "report.json").write_text(_dump(summary))
    _write_csv(out / "timeseries.csv", TIMESERIES_COLUMNS,
               [[_fmt(row[c]) for c in TIMESERIES_COLUMNS] for row in report.timeseries])
    with open(out / "decisions.jsonl", "w") as fh:
        for fo in report.trace:
            fh.write(json.dumps(fo.decision_json(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    write_control_log(report.control_log, out / "control_log.csv")
    qor = "n/a" if report.overall_qor is None else f"{report.overall_qor:.4f}"
    print(f"{len(report.trace)} frames, drop rate {report.observed_drop_rate:.4f}, "
          f"QoR {qor}, violations {report.violations} -> {out}")
    return EXIT_OK


# -- report ------------------------------------------------------------------

TRADEOFF_COLUMNS = ("run", "baseline", "random_rate", "seed", "observed_drop_rate",
                    "overall_qor", "violations", "frames")
VIOLATION_COLUMNS = ("run", "violations", "frames", "violation_fraction", "max_backend_queue",
                     "max_shedder_queue")


def _compat_key(rep: dict) -> dict:
    return {
        "dataset_sha256": rep.get("inputs", {}).get("dataset_sha256"),
        "latency_bound_ms": rep["config"]["control"]["latency_bound_ms"],
        "query": rep.get("query"),
    }


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.runs]
    reports = []
    for d in dirs:
        p = d / "report.json"
        if not p.is_file():
            raise InputError(f"{d}: no report.json (not a run directory)")
        with open(p) as fh:
            try:
                reports.append(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InputError(f"{p}: {exc}") from exc
    keys = [_compat_key(r) for r in reports]
    ref = keys[0]
    bad = []
    for d, k in zip(dirs, keys):
        diff = sorted(f for f in ref if k[f] != ref[f])
        if diff:
            bad.append(f"{d}: {', '.join(diff)}")
    if bad:
        raise ConfigError("incompatible runs (differs from " + str(dirs[0]) + "): " + "; ".join(bad))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trade, viol = [], []
    for d, rep in zip(dirs, reports):
        cfg = rep["config"]
        trade.append([d.name, cfg["baseline"], _fmt(cfg.get("random_rate")), str(cfg["seed"]),
                      repr(rep["observed_drop_rate"]), _fmt(rep["overall_qor"]),
                      str(rep["violations"]), str(rep["frames"])])
        frames = rep["frames"]
        viol.append([d.name, str(rep["violations"]), str(frames),
                     repr(rep["violations"] / frames if frames else 0.0),
                     str(rep["max_backend_queue"]), str(rep["max_shedder_queue"])])
    trade.sort(key=lambda r: (r[1], float(r[4]), r[0]))
    _write_csv(out / "tradeoff.csv", TRADEOFF_COLUMNS, trade)
    _write_csv(out / "violations.csv", VIOLATION_COLUMNS, viol)
    print(f"{len(reports)} runs -> {out / 'tradeoff.csv'}, {out / 'violations.csv'}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colorshed", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    s.add_argument("kind", choices=("corpus", "scenario"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--cameras", type=int, default=6)
    s.add_argument("--frames", type=int, default=1200, help="frames per camera (corpus)")
    s.add_argument("--colors", default="red", help="object colors (corpus)")
    s.add_argument("--segment-seconds", default="300,300,300", help="scenario segment lengths")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a utility model")
    t.add_argument("--dataset", required=True)
    t.add_argument("--config", help="JSON with colors, grid, query")
    t.add_argument("--query")
    t.add_argument("--cameras", help="comma-separated camera ids to train on")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    w = sub.add_parser("sweep", help="QoR vs drop rate over thresholds or rates")
    w.add_argument("--dataset", required=True)
    w.add_argument("--model")
    w.add_argument("--config")
    w.add_argument("--query")
    w.add_argument("--thresholds", help="comma-separated utility thresholds")
    w.add_argument("--rates", help="comma-separated target drop rates")
    w.add_argument("--baseline", choices=("utility", "random"), default="utility")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--seeds", type=int, default=30, help="repetitions for the random baseline")
    w.add_argument("--cameras")
    w.add_argument("--cross-validate", action="store_true", help="leave-one-camera-out folds")
    w.add_argument("--out", required=True, help="output CSV")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("run", help="simulate the pipeline with the shedder in front")
    r.add_argument("manifest", nargs="?")
    r.add_argument("--model")
    r.add_argument("--dataset", action="append")
    r.add_argument("--history-dataset")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--baseline", choices=("utility", "random", "none"))
    r.add_argument("--rate", type=float, help="fixed drop probability for the random baseline")
    r.add_argument("--lb-ms", type=float)
    r.add_argument("--cameras")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("report", help="merge run directories into comparison CSVs")
    a.add_argument("runs", nargs="+")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ShedderError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

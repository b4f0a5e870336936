"""Command-line driver: ``ridgecs {gen-phantom,build-dict,reconstruct,evaluate,sweep}``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, analysis, experiment
from .dictionary import DICTIONARY_NAMES, assemble_sensing_matrix, build_dictionary
from .field import read_field, write_field
from .phantom import Phantom
from .solver import DivergenceError, SolverParams, load_config
from .sphere import read_directions_csv, write_directions_csv

log = logging.getLogger("ridgecs")

RESULT_COLUMNS = ["phantom", "b", "K", "snr_db", "dict", "mode", "seed", "status",
                  "snr_achieved_db", "nmse", "delta_deg", "pd_percent", "iterations", "error"]
METRIC_COLUMNS = ["nmse", "delta_deg", "pd_percent"]
SUMMARY_COLUMNS = (["phantom", "b", "K", "snr_db", "dict", "mode", "n_seeds", "n_failed"]
                   + [f"{m}_{s}" for m in METRIC_COLUMNS for s in ("mean", "std")])


class ConfigError(ValueError):
    pass


def fmt(value) -> str:
    """Render numbers as round-trippable decimal text."""
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_sidecar(path: Path, config: dict) -> None:
    meta = path.with_name(path.name + ".meta.json")
    with open(meta, "w") as fh:
        json.dump({"file": path.name, "ridgecs_version": __version__, "config": config},
                  fh, indent=1, sort_keys=True, default=fmt)


def read_sidecar(path: Path) -> dict:
    meta = Path(path).with_name(Path(path).name + ".meta.json")
    if not meta.exists():
        return {}
    with open(meta) as fh:
        return json.load(fh).get("config", {})


def _solver_params(args) -> SolverParams:
    doc = {}
    if getattr(args, "params", None):
        cfg = load_config(args.params)
        doc.update(cfg.get("solver", cfg))
    for key in ("lam", "mu", "gamma", "max_bregman_iters", "inner_fista_iters",
                "inner_tv_iters", "rel_change_tol"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return SolverParams.from_dict(doc)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_phantom(args) -> int:
    out = _out_dir(args)
    data = experiment.make_dataset(args.name, args.b, args.K, args.snr, args.seed,
                                   args.subset_from)
    config = {"command": "gen-phantom", "phantom": args.name, "b": args.b,
              "K": len(data.directions), "subset_from": args.subset_from,
              "snr_db": data.snr_target, "snr_achieved_db": data.snr_achieved,
              "seed": args.seed}
    files = {"clean.fld": data.clean, "noisy.fld": data.noisy}
    for name, arr in files.items():
        write_field(out / name, arr)
        write_sidecar(out / name, config)
    write_directions_csv(out / "directions.csv", data.directions)
    write_sidecar(out / "directions.csv", config)
    data.phantom.save_json(out / "truth.json", b=args.b, snr_db=fmt(data.snr_target),
                           snr_achieved_db=fmt(data.snr_achieved), seed=args.seed)
    write_sidecar(out / "truth.json", config)
    print(f"{args.name}: dims {data.phantom.dims}, K={len(data.directions)}, "
          f"SNR {fmt(data.snr_achieved)} dB -> {out}")
    return 0


def cmd_build_dict(args) -> int:
    out = _out_dir(args)
    if args.directions:
        dirs = read_directions_csv(args.directions)
    else:
        dirs = experiment.gradient_directions(args.K)
    dic = build_dictionary(args.dict, b=args.b, normalize=not args.raw)
    A = assemble_sensing_matrix(dic, dirs)
    path = out / f"A_{args.dict}.bin"
    A.save(path)
    if args.csv:
        A.save_csv(out / f"A_{args.dict}.csv")
    config = {"command": "build-dict", "dict": args.dict, "b": args.b, "K": len(dirs),
              "M": dic.M, "level_counts": dic.level_counts(), "params": dic.params}
    write_sidecar(path, config)
    print(f"{args.dict}: K={len(dirs)} M={dic.M}" +
          (f" levels={dic.level_counts()}" if dic.level_counts() else ""))
    return 0


def cmd_reconstruct(args) -> int:
    out = _out_dir(args)
    signal = read_field(args.signal)
    dirs = read_directions_csv(args.directions)
    upstream = read_sidecar(Path(args.signal))
    b = args.b if args.b is not None else upstream.get("b")
    if b is None:
        raise ConfigError("b-value unknown: pass --b or keep the signal's .meta.json sidecar")
    params = _solver_params(args)
    rec = experiment.reconstruct(signal, dirs, args.dict, args.mode, params, float(b),
                                 prefilter_tv=args.prefilter_tv,
                                 rel_threshold=args.rel_threshold,
                                 merge_angle_deg=args.merge_angle)
    config = {"command": "reconstruct", "signal": str(args.signal), "dict": args.dict,
              "mode": args.mode, "b": float(b), "K": len(dirs), "M": rec.M,
              "solver": params.to_dict(), "prefilter_tv": args.prefilter_tv,
              "rel_threshold": args.rel_threshold, "merge_angle_deg": args.merge_angle,
              "upstream": upstream}
    outputs = {"coefficients.fld": rec.coefficients, "signal_ref.fld": rec.signal_ref,
               "odf.fld": rec.odf.values}
    for name, arr in outputs.items():
        write_field(out / name, arr)
        write_sidecar(out / name, config)
    with open(out / "modes.json", "w") as fh:
        json.dump(analysis.modes_to_json(rec.modes, args.rel_threshold, args.merge_angle), fh)
    write_sidecar(out / "modes.json", config)
    with open(out / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "feasibility_gap", "relative_change"])
        for row in rec.trace:
            writer.writerow([fmt(row[k]) for k in ("iteration", "objective",
                                                   "feasibility_gap", "relative_change")])
    write_sidecar(out / "trace.csv", config)
    with open(out / "reconstruction.json", "w") as fh:
        json.dump(config, fh, indent=1, default=fmt)
    print(f"{args.dict}-{args.mode}: M={rec.M}, {len(rec.trace)} Bregman iterations -> {out}")
    return 0


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"required file not found: {path}")
    return path


def evaluate_dir(truth_path, recon_dir) -> dict:
    truth_path = _require(truth_path)
    recon_dir = Path(recon_dir)
    with open(truth_path) as fh:
        truth_doc = json.load(fh)
    phantom = Phantom.from_json(truth_doc)
    b = float(truth_doc["b"])
    signal_ref = read_field(_require(recon_dir / "signal_ref.fld"))
    with open(_require(recon_dir / "modes.json")) as fh:
        modes = analysis.modes_from_json(json.load(fh))
    info = {}
    if (recon_dir / "reconstruction.json").exists():
        with open(recon_dir / "reconstruction.json") as fh:
            info = json.load(fh)
    metrics = experiment.evaluate(phantom, b, signal_ref, modes)
    return {"phantom": phantom.name, "b": b, "K": info.get("K", ""),
            "snr_db": truth_doc.get("snr_db", ""), "dict": info.get("dict", ""),
            "mode": info.get("mode", ""), "seed": truth_doc.get("seed", ""),
            "status": "ok", "snr_achieved_db": truth_doc.get("snr_achieved_db", ""),
            **metrics, "iterations": "", "error": ""}


def write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c, "")) for c in columns])


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    rows = [evaluate_dir(args.truth, d) for d in args.recon]
    write_rows(out / "metrics.csv", RESULT_COLUMNS, rows)
    with open(out / "metrics.json", "w") as fh:
        json.dump(rows, fh, indent=1, default=fmt)
    config = {"command": "evaluate", "truth": str(args.truth), "recon": [str(d) for d in args.recon]}
    write_sidecar(out / "metrics.csv", config)
    write_sidecar(out / "metrics.json", config)
    for r in rows:
        print(f"{r['dict']}-{r['mode']}: NMSE {r['nmse']:.5g}  delta {r['delta_deg']:.3g} deg  "
              f"P_d {r['pd_percent']:.3g}%")
    return 0


def resolve_sweep_config(doc: dict) -> dict:
    """Validate a sweep config and fill defaults."""
    cfg = {
        "phantoms": doc.get("phantoms", ["phantom1"]),
        "b_values": doc.get("b_values", [3000]),
        "K": doc.get("K", [16]),
        "snr_db": doc.get("snr_db", [18]),
        "dicts": doc.get("dicts", ["rdg"]),
        "modes": doc.get("modes", ["cs", "tv"]),
        "seeds": doc.get("seeds", [0]),
        "subset_from": doc.get("subset_from"),
        "prefilter_tv": bool(doc.get("prefilter_tv", False)),
        "rel_threshold": float(doc.get("rel_threshold", analysis.REL_THRESHOLD)),
        "merge_angle_deg": float(doc.get("merge_angle_deg", analysis.MERGE_ANGLE_DEG)),
        "figures": bool(doc.get("figures", False)),
    }
    if isinstance(cfg["seeds"], int):
        cfg["seeds"] = list(range(cfg["seeds"]))
    for key in ("phantoms", "b_values", "K", "snr_db", "dicts", "modes", "seeds"):
        if not isinstance(cfg[key], list) or not cfg[key]:
            raise ConfigError(f"sweep config: '{key}' must be a non-empty list")
    unknown = set(doc) - set(cfg) - {"solver"}
    if unknown:
        raise ConfigError(f"sweep config: unknown keys {sorted(unknown)}")
    for name in cfg["dicts"]:
        if name not in DICTIONARY_NAMES:
            raise ConfigError(f"sweep config: unknown dictionary {name!r}")
    for mode in cfg["modes"]:
        if mode not in experiment.MODES:
            raise ConfigError(f"sweep config: unknown mode {mode!r}")
    for k in cfg["K"]:
        if int(k) < 1:
            raise ConfigError(f"sweep config: K={k} must be positive")
        if cfg["subset_from"] is not None and int(k) > int(cfg["subset_from"]):
            raise ConfigError(f"sweep config: K={k} exceeds subset_from={cfg['subset_from']}")
    try:
        cfg["snr_db"] = [experiment.parse_snr(s) for s in cfg["snr_db"]]
    except ValueError as exc:
        raise ConfigError(f"sweep config: {exc}") from None
    try:
        cfg["solver"] = SolverParams.from_dict(doc.get("solver", {})).to_dict()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep config: {exc}") from None
    return cfg


def sweep_cells(cfg: dict):
    return list(itertools.product(cfg["phantoms"], cfg["b_values"], cfg["K"], cfg["snr_db"],
                                  cfg["dicts"], cfg["modes"], cfg["seeds"]))


def _run_one(cell, cfg, params):
    phantom, b, K, snr, dict_name, mode, seed = cell
    row = {"phantom": phantom, "b": float(b), "K": int(K), "snr_db": snr, "dict": dict_name,
           "mode": mode, "seed": int(seed)}
    try:
        metrics = experiment.run_cell(phantom, float(b), int(K), snr, dict_name, mode, int(seed),
                                      params, cfg["subset_from"], cfg["prefilter_tv"],
                                      cfg["rel_threshold"], cfg["merge_angle_deg"])
        row.update(metrics, status="ok", error="")
    except (DivergenceError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("cell %s failed: %s", cell, exc)
        row.update(status="failed", error=str(exc))
    return row


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        key = (r["phantom"], r["b"], r["K"], r["snr_db"], r["dict"], r["mode"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, grp in groups.items():
        ok = [r for r in grp if r["status"] == "ok"]
        row = dict(zip(["phantom", "b", "K", "snr_db", "dict", "mode"], key))
        row.update(n_seeds=len(ok), n_failed=len(grp) - len(ok))
        for m in METRIC_COLUMNS:
            vals = [float(r[m]) for r in ok]
            row[f"{m}_mean"] = statistics.fmean(vals) if vals else float("nan")
            row[f"{m}_std"] = statistics.pstdev(vals) if vals else float("nan")
        out.append(row)
    return out


def run_sweep(cfg: dict, out: Path, threads: int = 1) -> tuple[list[dict], list[dict]]:
    params = SolverParams.from_dict(cfg["solver"])
    cells = sweep_cells(cfg)
    log.info("sweep: %d cells on %d thread(s)", len(cells), threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: _run_one(c, cfg, params), cells))
    else:
        rows = [_run_one(c, cfg, params) for c in cells]
    summary = summarize(rows)
    write_rows(out / "results.csv", RESULT_COLUMNS, rows)
    write_rows(out / "summary.csv", SUMMARY_COLUMNS, summary)
    write_sidecar(out / "results.csv", cfg)
    write_sidecar(out / "summary.csv", cfg)
    if cfg["figures"]:
        from .report import plot_summary
        for path in plot_summary(summary, out):
            write_sidecar(path, cfg)
    return rows, summary


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    doc = load_config(args.config)
    cfg = resolve_sweep_config(doc)
    if "seeds" not in doc:
        cfg["seeds"] = [args.seed]
    if args.figures:
        cfg["figures"] = True
    rows, _ = run_sweep(cfg, out, args.threads)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"sweep: {len(rows) - failed}/{len(rows)} cells completed -> {out / 'results.csv'}")
    return 0 if failed == 0 else 1


def _add_solver_flags(p):
    p.add_argument("--params", help="solver config file (JSON or TOML)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-bregman-iters", dest="max_bregman_iters", type=int)
    p.add_argument("--inner-fista-iters", dest="inner_fista_iters", type=int)
    p.add_argument("--inner-tv-iters", dest="inner_tv_iters", type=int)
    p.add_argument("--rel-change-tol", dest="rel_change_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    def globals_parser(suppress):
        # subcommands accept the global flags too, without clobbering earlier values
        kw = (lambda d: {"default": argparse.SUPPRESS}) if suppress else (lambda d: {"default": d})
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--threads", type=int, help="worker threads for sweeps", **kw(1))
        g.add_argument("--seed", type=int, help="noise seed", **kw(0))
        g.add_argument("--out-dir", help="output directory", **kw("."))
        g.add_argument("-v", "--verbose", action="store_true", **kw(False))
        return g

    common = globals_parser(True)
    parser = argparse.ArgumentParser(prog="ridgecs", parents=[globals_parser(False)],
                                     description="Sparse + TV reconstruction of HARDI fields.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-phantom", parents=[common], help="synthesize a phantom data set")
    p.add_argument("--name", required=True, choices=["phantom1", "phantom2"])
    p.add_argument("--b", type=float, default=3000.0)
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--snr", default="18", help="target SNR in dB, or 'inf'")
    p.add_argument("--subset-from", "--subset", dest="subset_from", type=int,
                   help="pick the K directions greedily from this many spiral points")
    p.set_defaults(func=cmd_gen_phantom)

    p = sub.add_parser("build-dict", parents=[common], help="build and export a sensing matrix")
    p.add_argument("--dict", required=True, choices=DICTIONARY_NAMES)
    p.add_argument("--b", type=float, default=3000.0)
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--directions", help="direction CSV (overrides --K)")
    p.add_argument("--raw", action="store_true", help="skip unit-peak atom normalization")
    p.add_argument("--csv", action="store_true", help="also write the matrix as CSV")
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct a signal field")
    p.add_argument("--signal", required=True)
    p.add_argument("--directions", required=True)
    p.add_argument("--dict", required=True, choices=DICTIONARY_NAMES)
    p.add_argument("--mode", required=True, choices=experiment.MODES)
    p.add_argument("--b", type=float)
    p.add_argument("--prefilter-tv", action="store_true")
    p.add_argument("--rel-threshold", type=float, default=analysis.REL_THRESHOLD)
    p.add_argument("--merge-angle", type=float, default=analysis.MERGE_ANGLE_DEG)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common], help="score reconstructions")
    p.add_argument("--truth", required=True)
    p.add_argument("--recon", required=True, nargs="+", help="reconstruction directories")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="run an experiment grid")
    p.add_argument("config")
    p.add_argument("--figures", action="store_true", help="render metric-vs-K PNGs")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

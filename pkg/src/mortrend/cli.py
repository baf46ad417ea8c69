"""Command-line orchestration of the pipeline stages.

Each subcommand reads raw tables or the files a previous stage wrote, runs
one stage, and persists its artifacts under the output directory:

    lc            per-country index decompositions        lc/<id>.{csv,json}
    register      one target fitted onto one reference    register/...
    common-trend  joint panel fit and outlier flags       common_trend/...
    forecast      index path beyond the data              forecast/<id>...
    bootstrap     resampled prediction bands              bootstrap/<id>...
    report        single JSON digest of all artifacts     report.json

Stages communicate only through these files, so any one command can be
rerun in isolation. Nothing written here carries a timestamp: rerunning a
command with the same inputs and seed reproduces every byte.

Settings come from defaults, then an optional JSON config file, then
command-line flags; later sources win. Exit codes: 0 success, 1 data
problem, 2 convergence failure, 3 bad configuration or usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .bootstrap import (
    BootstrapConfig,
    bands_to_csv,
    bootstrap_prediction,
    theta_samples_to_csv,
)
from .common_trend import (
    CommonTrendConfig,
    build_panel,
    fit_common_trend,
    flag_outliers,
)
from .curve_registration import (
    ShapeParams,
    default_shift_range,
    fit_shape_params,
    result_to_json,
    scan_initial_shift,
    scan_shift_losses,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    MortrendError,
)
from .forecast import (
    forecast_surface,
    forecast_to_csv,
    forecast_to_json,
    forecast_via_drift,
    forecast_via_reference,
    max_horizon,
)
from .kernel_smoothing import (
    SmoothedCurve,
    grid_over,
    local_linear_smooth,
    smooth_to_df,
)
from .lee_carter import (
    LCDecomposition,
    decomposition_to_csv,
    decomposition_to_json,
    fit_drift,
    fit_lee_carter,
)
from .mortality_data import (
    impute_missing_years,
    log_transform,
    parse_mortality_table,
    serialize_sparse_csv,
)

FORMATS_BY_SUFFIX = {".csv": "sparse_csv", ".txt": "hmd_1x1"}

# dilation walls for registering one country onto an already-fitted trend.
# The joint panel fit is where dilation gets identified (the cross-country
# gauge pins the clock); one short record re-fit on its own cannot measure
# it, and on a straight stretch of the reference the fitted theta3 would
# otherwise end up wherever the loss ridge happens to flatten, moving the
# feasible forecast horizon by a decade between reruns.
TREND_THETA3_BOUNDS = (0.95, 1.05)


@dataclass(frozen=True)
class RunConfig:
    """Merged settings for one command invocation."""

    data_dir: Path = Path("data")
    output_dir: Path = Path("out")
    countries: tuple[str, ...] | None = None  # None selects every file found
    gender: str = "total"
    mode: str = "three_param"
    exclude: tuple[str, ...] = ()
    target_df: float = 6.0
    bandwidth: float | None = None  # set: fixed bandwidth instead of target_df
    grid_step: float = 0.25
    impute_window: int = 5
    tol: float = 1e-6
    max_iter: int = 50
    threads: int = 1
    bootstrap_replicates: int = 500
    bootstrap_levels: tuple[float, ...] = (0.8,)
    bootstrap_seed: int = 0
    bootstrap_horizon: int = 10


_CONFIG_KEYS = {
    "data_dir",
    "output_dir",
    "countries",
    "gender",
    "mode",
    "exclude",
    "target_df",
    "bandwidth",
    "grid_step",
    "impute_window",
    "tol",
    "max_iter",
    "threads",
    "bootstrap",
}
_BOOTSTRAP_KEYS = {"B", "levels", "seed", "horizon"}


def load_config(args: argparse.Namespace) -> RunConfig:
    """Layer defaults, the JSON config file, and explicit flags."""
    cfg = RunConfig()
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _apply_config_dict(cfg, raw)
    cfg = _apply_flags(cfg, args)
    _validate(cfg)
    return cfg


def _apply_config_dict(cfg: RunConfig, raw: dict) -> RunConfig:
    updates: dict = {}
    for key in ("data_dir", "output_dir"):
        if key in raw:
            updates[key] = Path(raw[key])
    if "countries" in raw:
        updates["countries"] = _parse_countries(raw["countries"])
    for key in ("gender", "mode"):
        if key in raw:
            updates[key] = str(raw[key])
    if "exclude" in raw:
        updates["exclude"] = tuple(str(c) for c in raw["exclude"])
    for key in ("target_df", "grid_step", "tol"):
        if key in raw:
            updates[key] = float(raw[key])
    if "bandwidth" in raw:
        updates["bandwidth"] = None if raw["bandwidth"] is None else float(raw["bandwidth"])
    for key in ("impute_window", "max_iter", "threads"):
        if key in raw:
            updates[key] = int(raw[key])
    if "bootstrap" in raw:
        sub = raw["bootstrap"]
        if not isinstance(sub, dict):
            raise ConfigError("config key 'bootstrap' must be an object")
        unknown = set(sub) - _BOOTSTRAP_KEYS
        if unknown:
            raise ConfigError(f"unknown bootstrap config keys: {sorted(unknown)}")
        if "B" in sub:
            updates["bootstrap_replicates"] = int(sub["B"])
        if "levels" in sub:
            updates["bootstrap_levels"] = tuple(float(v) for v in sub["levels"])
        if "seed" in sub:
            updates["bootstrap_seed"] = int(sub["seed"])
        if "horizon" in sub:
            updates["bootstrap_horizon"] = int(sub["horizon"])
    return replace(cfg, **updates)


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict = {}
    if getattr(args, "data", None) is not None:
        updates["data_dir"] = Path(args.data)
    if getattr(args, "output", None) is not None:
        updates["output_dir"] = Path(args.output)
    if getattr(args, "threads", None) is not None:
        updates["threads"] = args.threads
    if getattr(args, "seed", None) is not None:
        updates["bootstrap_seed"] = args.seed
    if getattr(args, "countries", None) is not None:
        updates["countries"] = _parse_countries(args.countries)
    if getattr(args, "gender", None) is not None:
        updates["gender"] = args.gender
    if getattr(args, "mode", None) is not None:
        updates["mode"] = args.mode
    if getattr(args, "exclude", None) is not None:
        updates["exclude"] = tuple(s for s in args.exclude.split(",") if s)
    if getattr(args, "target_df", None) is not None:
        updates["target_df"] = args.target_df
    if getattr(args, "bandwidth", None) is not None:
        updates["bandwidth"] = args.bandwidth
    if getattr(args, "replicates", None) is not None:
        updates["bootstrap_replicates"] = args.replicates
    if getattr(args, "horizon", None) is not None and args.command == "bootstrap":
        updates["bootstrap_horizon"] = args.horizon
    return replace(cfg, **updates)


def _parse_countries(value) -> tuple[str, ...] | None:
    if value == "all" or value is None:
        return None
    if isinstance(value, str):
        return tuple(s for s in value.split(",") if s)
    return tuple(str(c) for c in value)


def _validate(cfg: RunConfig) -> None:
    if cfg.mode not in ("three_param", "four_param"):
        raise ConfigError(f"mode must be three_param or four_param, got {cfg.mode!r}")
    if cfg.gender not in ("female", "male", "total"):
        raise ConfigError(f"gender must be female, male or total, got {cfg.gender!r}")
    if not all(0.0 < lv < 1.0 for lv in cfg.bootstrap_levels):
        raise ConfigError(f"bootstrap levels must lie in (0, 1), got {cfg.bootstrap_levels}")
    if cfg.bootstrap_replicates < 1:
        raise ConfigError("bootstrap B must be at least 1")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    if cfg.grid_step <= 0:
        raise ConfigError("grid_step must be positive")


# ------------------------------------------------------------- data loading


def discover_tables(cfg: RunConfig) -> dict[str, tuple[Path, str]]:
    """Map country id -> (path, format) for the files under data_dir.

    One file per country: sparse CSVs carry their own id, fixed-width
    tables are named after theirs.
    """
    if not cfg.data_dir.is_dir():
        raise ConfigError(f"data directory not found: {cfg.data_dir}")
    found: dict[str, tuple[Path, str]] = {}
    for path in sorted(cfg.data_dir.iterdir()):
        fmt = FORMATS_BY_SUFFIX.get(path.suffix)
        if fmt is None or not path.is_file():
            continue
        found[path.stem] = (path, fmt)
    if not found:
        raise DataError(f"no mortality tables (*.csv, *.txt) under {cfg.data_dir}")
    if cfg.countries is not None:
        missing = [c for c in cfg.countries if c not in found]
        if missing:
            raise DataError(
                f"countries not present in {cfg.data_dir}: {', '.join(missing)}"
            )
        found = {c: found[c] for c in cfg.countries}
    return found


def load_decomposition(cfg: RunConfig, country: str) -> LCDecomposition:
    path, fmt = discover_tables(cfg)[country]
    surface = parse_mortality_table(
        path.read_text(),
        fmt,
        country_id=country if fmt == "hmd_1x1" else None,
        gender=cfg.gender if fmt == "hmd_1x1" else None,
    )
    if surface.country_id != country:
        # artifacts are keyed by file stem; the id a file carries inside
        # is metadata and must not leak into cross-stage identity checks
        surface = replace(surface, country_id=country)
    surface = impute_missing_years(surface, window=cfg.impute_window)
    return fit_lee_carter(log_transform(surface))


def smooth_index(cfg: RunConfig, dec: LCDecomposition) -> SmoothedCurve:
    k = dec.k_sample()
    if cfg.bandwidth is not None:
        grid = grid_over(float(k.times[0]), float(k.times[-1]), cfg.grid_step)
        return local_linear_smooth(k, cfg.bandwidth, grid)
    return smooth_to_df(k, cfg.target_df, cfg.grid_step)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ------------------------------------------------------------- subcommands


def cmd_lc(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Decompose every requested country; report per-file failures."""
    tables = discover_tables(cfg)
    out = cfg.output_dir / "lc"
    failures: list[tuple[str, str]] = []
    for country, (path, _) in tables.items():
        try:
            dec = load_decomposition(cfg, country)
        except MortrendError as exc:
            failures.append((str(path), str(exc)))
            continue
        _write(out / f"{country}.csv", decomposition_to_csv(dec))
        _write(out / f"{country}.json", decomposition_to_json(dec))
        print(f"lc: {country} ({len(dec.years)} years, {len(dec.ages)} ages)")
    for path, message in failures:
        print(f"error: {path}: {message}", file=sys.stderr)
    if failures:
        raise DataError(f"{len(failures)} of {len(tables)} countries failed")
    return 0


def _scan_window(
    args: argparse.Namespace,
    target: SmoothedCurve,
    ref: SmoothedCurve,
) -> tuple[float, float]:
    if getattr(args, "scan", None) is None:
        return default_shift_range(target, ref)
    try:
        lo_s, hi_s = args.scan.split(":")
        lo, hi = float(lo_s), float(hi_s)
    except ValueError:
        raise ConfigError(f"--scan expects LO:HI, got {args.scan!r}")
    if not lo < hi:
        raise ConfigError(f"--scan window is empty: {args.scan!r}")
    return lo, hi


def cmd_register(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Fit one country's index onto another's and persist fit plus scan."""
    target_dec = load_decomposition(cfg, args.target)
    ref_dec = load_decomposition(cfg, args.reference)
    target = smooth_index(cfg, target_dec)
    ref = smooth_index(cfg, ref_dec)

    lo, hi = _scan_window(args, target, ref)
    shifts = np.arange(lo, hi + 1e-9, args.scan_step)
    losses = scan_shift_losses(target, ref, shifts)
    s0 = scan_initial_shift(target, ref, (lo, hi), args.scan_step)
    init = ShapeParams(1.0, float(s0), 1.0, 0.0, mode=cfg.mode)
    result = fit_shape_params(target, ref, init, cfg.mode)

    out = cfg.output_dir / "register"
    stem = f"{args.target}_on_{args.reference}"
    scan_rows = ["shift,loss"]
    scan_rows += [f"{float(s)!r},{float(l)!r}" for s, l in zip(shifts, losses)]
    _write(out / f"{stem}_scan.csv", "\n".join(scan_rows) + "\n")
    _write(
        out / f"{stem}.json",
        result_to_json(
            result,
            extra={
                "target": args.target,
                "reference": args.reference,
                "initial_shift": float(s0),
                "scan_window": [lo, hi],
            },
        ),
    )
    p = result.params
    print(
        f"register: {args.target} on {args.reference} "
        f"theta=({p.theta1:.4f}, {p.theta2:+.3f}, {p.theta3:.4f}, {p.theta4:+.3f}) "
        f"loss={result.loss:.4f} converged={result.converged}"
    )
    if not result.converged:
        raise ConvergenceError(
            f"registration of {args.target} on {args.reference} did not converge"
        )
    return 0


def _reference_curve_csv(ref: SmoothedCurve) -> str:
    rows = ["s,value,coverage"]
    coverage = (
        ref.coverage
        if ref.coverage is not None
        else np.ones(len(ref.eval_grid), dtype=int)
    )
    for s, v, c in zip(ref.eval_grid, ref.values, coverage):
        rows.append(f"{float(s)!r},{float(v)!r},{int(c)}")
    return "\n".join(rows) + "\n"


def _params_payload(p: ShapeParams) -> dict:
    return {
        "theta1": p.theta1,
        "theta2": p.theta2,
        "theta3": p.theta3,
        "theta4": p.theta4,
        "mode": p.mode,
    }


def cmd_common_trend(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Fit the joint trend over every requested country and flag outliers."""
    tables = discover_tables(cfg)
    samples = {}
    for country in tables:
        samples[country] = load_decomposition(cfg, country).k_sample()
    panel = build_panel(samples, target_df=cfg.target_df, grid_step=cfg.grid_step)
    trend_cfg = CommonTrendConfig(
        mode=cfg.mode,
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        exclude=cfg.exclude,
        grid_step=cfg.grid_step,
        threads=cfg.threads,
    )
    fit = fit_common_trend(panel, trend_cfg)
    flagged = flag_outliers(panel, fit, z_threshold=args.z_threshold)

    out = cfg.output_dir / "common_trend"
    _write(out / "reference.csv", _reference_curve_csv(fit.reference))
    for i, ref_i in enumerate(fit.reference_history):
        _write(out / f"reference_iter_{i:02d}.csv", _reference_curve_csv(ref_i))
    payload = {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "history": [float(v) for v in fit.history],
        "excluded": list(fit.excluded),
        "flagged": flagged,
        "params": {cid: _params_payload(p) for cid, p in sorted(fit.params.items())},
        "country_converged": dict(sorted(fit.country_converged.items())),
        "reference": {
            "bandwidth": fit.reference.bandwidth,
            "source_n": fit.reference.source_n,
            "domain": [fit.reference.domain[0], fit.reference.domain[1]],
        },
    }
    _write(out / "fit.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(
        f"common-trend: {len(fit.params)} countries, {fit.iterations} iterations, "
        f"converged={fit.converged}, flagged={flagged or 'none'}"
    )
    if not fit.converged:
        # hitting max_iter is a recorded outcome, not a failure: noisy
        # panels plateau in loss while parameters keep trading shift
        # against dilation in tiny physical movements
        print(
            f"warning: parameters still moving after {fit.iterations} "
            f"iterations (loss plateau {fit.history[-1]:.4f}); "
            "artifacts record converged=false",
            file=sys.stderr,
        )
    return 0


def _load_common_trend(cfg: RunConfig) -> tuple[SmoothedCurve, dict]:
    """Read the common-trend artifacts written by cmd_common_trend."""
    out = cfg.output_dir / "common_trend"
    ref_path = out / "reference.csv"
    fit_path = out / "fit.json"
    if not ref_path.is_file() or not fit_path.is_file():
        raise DataError(
            f"no fitted trend under {out}; run the common-trend command first"
        )
    meta = json.loads(fit_path.read_text())
    rows = ref_path.read_text().strip().splitlines()[1:]
    cols = np.array([[float(v) for v in row.split(",")] for row in rows])
    ref = SmoothedCurve(
        eval_grid=cols[:, 0],
        values=cols[:, 1],
        domain=(float(meta["reference"]["domain"][0]), float(meta["reference"]["domain"][1])),
        bandwidth=float(meta["reference"]["bandwidth"]),
        source_n=int(meta["reference"]["source_n"]),
        coverage=cols[:, 2].astype(int),
    )
    return ref, meta


def _params_for_country(
    cfg: RunConfig,
    args: argparse.Namespace,
    country: str,
    target: SmoothedCurve,
    ref: SmoothedCurve,
    meta: dict,
) -> ShapeParams:
    """Stored panel estimate if the country was in the joint fit, else a
    fresh registration against the stored reference."""
    stored = meta.get("params", {}).get(country)
    if stored is not None:
        return ShapeParams(
            stored["theta1"],
            stored["theta2"],
            stored["theta3"],
            stored["theta4"],
            mode=stored["mode"],
        )
    lo, hi = _scan_window(args, target, ref)
    s0 = scan_initial_shift(target, ref, (lo, hi), args.scan_step)
    init = ShapeParams(1.0, float(s0), 1.0, 0.0, mode=cfg.mode)
    result = fit_shape_params(
        target, ref, init, cfg.mode, theta3_bounds=TREND_THETA3_BOUNDS
    )
    if not result.converged:
        raise ConvergenceError(f"registration of {country} on the fitted trend stalled")
    return result.params


def cmd_forecast(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Extend one country's index beyond its data and rebuild rate surfaces."""
    dec = load_decomposition(cfg, args.country)
    last_year = int(dec.years[-1])
    if args.via == "drift":
        if args.horizon is None:
            raise ConfigError("--horizon is required with --via drift")
        model = fit_drift(dec.k_sample())
        tf = forecast_via_drift(model, args.horizon, country_id=args.country)
        extra = {"via": "drift", "drift": model.drift}
    else:
        ref, meta = _load_common_trend(cfg)
        target = smooth_index(cfg, dec)
        params = _params_for_country(cfg, args, args.country, target, ref, meta)
        feasible = max_horizon(ref, params, last_year)
        horizon = feasible if args.horizon is None else args.horizon
        tf = forecast_via_reference(
            ref, params, last_year, horizon, country_id=args.country
        )
        extra = {"via": "reference", "max_horizon": feasible}

    out = cfg.output_dir / "forecast"
    _write(out / f"{args.country}.csv", forecast_to_csv(tf))
    _write(out / f"{args.country}.json", forecast_to_json(tf))
    surface = forecast_surface(dec, tf)
    _write(out / f"{args.country}_surface.csv", serialize_sparse_csv(surface))
    detail = ", ".join(f"{k}={v}" for k, v in extra.items())
    print(
        f"forecast: {args.country} {tf.years[0]}..{tf.years[-1]} "
        f"({len(tf.years)} years, {detail})"
    )
    return 0


def cmd_bootstrap(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Resample one country's index and persist prediction bands."""
    dec = load_decomposition(cfg, args.country)
    ref, meta = _load_common_trend(cfg)
    target = smooth_index(cfg, dec)
    params = _params_for_country(cfg, args, args.country, target, ref, meta)
    bconfig = BootstrapConfig(
        replicates=cfg.bootstrap_replicates,
        horizon=cfg.bootstrap_horizon,
        levels=cfg.bootstrap_levels,
        seed=cfg.bootstrap_seed,
        mode=cfg.mode,
        target_df=cfg.target_df,
        grid_step=cfg.grid_step,
        theta3_bounds=TREND_THETA3_BOUNDS,
        threads=cfg.threads,
    )
    run = bootstrap_prediction(
        ref, dec.k_sample(), bconfig, country_id=args.country, original=params
    )
    out = cfg.output_dir / "bootstrap"
    _write(out / f"{args.country}_bands.csv", bands_to_csv(run.bands))
    _write(out / f"{args.country}_theta.csv", theta_samples_to_csv(run))
    payload = {
        "country_id": run.country_id,
        "seed": run.seed,
        "replicates": int(run.theta_samples.shape[0]),
        "usable": int(run.converged.sum()),
        "levels": [float(lv) for lv in run.bands.levels],
        "horizon": cfg.bootstrap_horizon,
        "original": _params_payload(run.original),
        "diagnostics": run.diagnostics,
    }
    _write(
        out / f"{args.country}_run.json",
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    print(
        f"bootstrap: {args.country} B={payload['replicates']} "
        f"usable={payload['usable']} seed={run.seed}"
    )
    return 0


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Digest every artifact under the output directory into one JSON file."""
    out = cfg.output_dir
    report: dict = {"output_dir": str(out)}

    lc_dir = out / "lc"
    if lc_dir.is_dir():
        entries = {}
        for path in sorted(lc_dir.glob("*.json")):
            meta = json.loads(path.read_text())
            entries[path.stem] = {
                "years": [meta["years"][0], meta["years"][-1]],
                "ages": len(meta["ages"]),
                "residual_variance": meta["residual_variance"],
            }
        report["lc"] = entries

    reg_dir = out / "register"
    if reg_dir.is_dir():
        entries = {}
        for path in sorted(reg_dir.glob("*.json")):
            meta = json.loads(path.read_text())
            entries[path.stem] = {
                "params": meta["params"],
                "loss": meta["loss"],
                "converged": meta["converged"],
            }
        report["register"] = entries

    fit_path = out / "common_trend" / "fit.json"
    if fit_path.is_file():
        meta = json.loads(fit_path.read_text())
        report["common_trend"] = {
            "converged": meta["converged"],
            "iterations": meta["iterations"],
            "final_loss": meta["history"][-1] if meta["history"] else None,
            "countries": sorted(meta["params"]),
            "flagged": meta["flagged"],
        }

    fc_dir = out / "forecast"
    if fc_dir.is_dir():
        entries = {}
        for path in sorted(fc_dir.glob("*.json")):
            meta = json.loads(path.read_text())
            entries[meta["country_id"]] = {
                "years": [meta["years"][0], meta["years"][-1]],
                "source": meta["source"],
            }
        report["forecast"] = entries

    bs_dir = out / "bootstrap"
    if bs_dir.is_dir():
        entries = {}
        for path in sorted(bs_dir.glob("*_run.json")):
            meta = json.loads(path.read_text())
            entries[meta["country_id"]] = {
                "replicates": meta["replicates"],
                "usable": meta["usable"],
                "seed": meta["seed"],
            }
        report["bootstrap"] = entries

    stages = [k for k in report if k != "output_dir"]
    if not stages:
        raise DataError(f"no artifacts under {out}; nothing to report")
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"report: {', '.join(stages)} -> {out / 'report.json'}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mortrend",
        description="Mortality trend estimation, registration and forecasting.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file")
    common.add_argument("--data", help="directory of mortality tables")
    common.add_argument("--output", help="artifact directory")
    common.add_argument("--threads", type=int, help="worker cap for parallel stages")
    common.add_argument("--seed", type=int, help="resampling seed")
    common.add_argument("--gender", choices=("female", "male", "total"))
    common.add_argument("--target-df", dest="target_df", type=float,
                        help="equivalent degrees of freedom for index smoothing")
    common.add_argument("--bandwidth", type=float,
                        help="fixed smoothing bandwidth (overrides --target-df)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lc", parents=[common],
                       help="fit per-country index decompositions")
    p.add_argument("--countries", help="comma-separated ids, or 'all'")
    p.set_defaults(func=cmd_lc)

    p = sub.add_parser("register", parents=[common],
                       help="fit one country's index onto another's")
    p.add_argument("--target", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--mode", choices=("three_param", "four_param"))
    p.add_argument("--scan", help="shift scan window LO:HI (default: widest feasible)")
    p.add_argument("--scan-step", dest="scan_step", type=float, default=1.0)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("common-trend", parents=[common],
                       help="fit the joint trend across a panel of countries")
    p.add_argument("--countries", help="comma-separated ids, or 'all'")
    p.add_argument("--mode", choices=("three_param", "four_param"))
    p.add_argument("--exclude", help="comma-separated ids left out of the fit")
    p.add_argument("--z-threshold", dest="z_threshold", type=float, default=3.0,
                   help="robust z cutoff for outlier flagging")
    p.set_defaults(func=cmd_common_trend)

    p = sub.add_parser("forecast", parents=[common],
                       help="extend one country's index beyond its data")
    p.add_argument("--country", required=True)
    p.add_argument("--horizon", type=int,
                   help="years ahead (default: furthest the fitted trend supports)")
    p.add_argument("--via", choices=("reference", "drift"), default="reference")
    p.add_argument("--mode", choices=("three_param", "four_param"))
    p.add_argument("--scan", help="shift scan window LO:HI for unregistered countries")
    p.add_argument("--scan-step", dest="scan_step", type=float, default=1.0)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bootstrap", parents=[common],
                       help="resample one country's index into prediction bands")
    p.add_argument("--country", required=True)
    p.add_argument("--replicates", type=int, help="number of resampled series")
    p.add_argument("--horizon", type=int)
    p.add_argument("--mode", choices=("three_param", "four_param"))
    p.add_argument("--scan", help="shift scan window LO:HI for unregistered countries")
    p.add_argument("--scan-step", dest="scan_step", type=float, default=1.0)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", parents=[common],
                       help="digest the artifacts of previous stages")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage errors
        # belong to the configuration exit-code family
        return 0 if exc.code == 0 else 3
    try:
        cfg = load_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MortrendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front door: ``fleetcast synth | fit | evaluate``.

Every successful run emits a JSON manifest recording the effective
configuration, the seed, content digests of the inputs, the output paths, and
wall time, so results can be traced back to exactly what produced them.

Exit codes: 0 success, 2 usage error (bad flags, missing input files),
1 runtime error. Errors go to stderr; data goes to files and stdout only.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, aggregate, data, metrics, synth
from .copula import (
    CopulaModel,
    DEFAULT_CLAMP_EPS,
    fit_copula,
    load_model,
    save_model,
)
from .gaussian import substream_seed
from .marginals import QuantileGrid

__all__ = ["main", "entrypoint", "run_evaluation", "RunManifest", "UsageError"]

log = logging.getLogger("fleetcast")

METHODS = ("copula", "indep", "qsum")
SAMPLING_METHODS = ("copula", "indep")


class UsageError(Exception):
    """Bad flags or missing inputs; maps to exit code 2."""


@dataclass
class RunManifest:
    """Reproducibility record emitted next to every command's outputs."""

    command: str
    config: dict
    seed: int | None
    input_digests: dict
    output_paths: list
    wall_time_s: float
    version: str

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=1, default=str)
            fh.write("\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# evaluation pipeline (also used directly by the test suite)

def run_evaluation(
    actuals,
    forecasts,
    model: CopulaModel | None,
    methods,
    alphas,
    s_count: int,
    seed: int | None,
    threads: int = 1,
    collect_samples: bool = False,
):
    """Build interval records for each method over every evaluable timestamp.

    A timestamp is evaluable when every site has both an actual and a
    forecast; incomplete ones are dropped with a logged count (the aggregation
    operations themselves refuse partial site lists). Each timestamp draws its
    Monte-Carlo samples from a substream derived from (seed, timestamp index),
    so thread count and execution order cannot change the result.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown method name(s): {', '.join(unknown)}")
    sampling = [m for m in methods if m in SAMPLING_METHODS]
    if "copula" in methods:
        if model is None:
            raise UsageError("the copula method requires a fitted model")
        if model.sites != actuals.sites:
            raise ValueError("model sites do not match the data panel sites")
    if sampling and seed is None:
        seed = 0

    x_ok = actuals.mask
    eval_idx = [
        j
        for j in range(actuals.n_times)
        if x_ok[:, j].all() and all(f is not None for f in forecasts.cells[:, j])
    ]
    dropped = actuals.n_times - len(eval_idx)
    if dropped:
        log.info("dropping %d timestamps with incomplete site data", dropped)
    if not eval_idx:
        raise ValueError("no fully-observed timestamps to evaluate")

    def work(j):
        stamp = actuals.times[j]
        fcts = forecasts.column(j)
        actual_total = float(actuals.x[:, j].sum())
        child = substream_seed(seed, j) if sampling else None
        records = []
        sample_sets = []
        for method in methods:
            if method == "copula":
                dist = aggregate.copula_aggregate(
                    fcts, model, s_count=s_count, seed=child, time=stamp
                )
            elif method == "indep":
                dist = aggregate.indep_aggregate(
                    fcts, s_count=s_count, seed=child, time=stamp
                )
            else:
                dist = aggregate.qsum_aggregate(fcts, time=stamp)
            if collect_samples and isinstance(dist, aggregate.FleetSampleSet):
                sample_sets.append(dist)
            for alpha in alphas:
                lo, hi = aggregate.prediction_interval(dist, alpha)
                records.append(
                    metrics.IntervalRecord(
                        time=stamp,
                        method=method,
                        alpha=alpha,
                        lo=lo,
                        hi=hi,
                        actual_total=actual_total,
                    )
                )
        return records, sample_sets

    all_records = []
    all_samples = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, eval_idx))
    else:
        results = [work(j) for j in eval_idx]
    for records, sample_sets in results:
        all_records.extend(records)
        all_samples.extend(sample_sets)
    return all_records, all_samples


# ---------------------------------------------------------------------------
# configuration handling: flags > config file > defaults

SYNTH_DEFAULTS = {
    "sites": 20,
    "days": 30,
    "start": "2019-01-01",
    "rho": 0.5,
    "beta_a": 4.0,
    "beta_b": 4.0,
    "capacity_low": 50.0,
    "capacity_high": 150.0,
    "diurnal": "solar",
    "width_scale": 1.0,
    "bias": 0.0,
    "seed": 0,
    "out_dir": None,
}

FIT_DEFAULTS = {
    "actuals": None,
    "forecasts": None,
    "capacities": None,
    "out": None,
    "clamp_eps": DEFAULT_CLAMP_EPS,
    "split": "all",
    "train_months": data.DEFAULT_TRAIN_MONTHS,
    "low_gen_threshold": data.DEFAULT_LOW_GEN_THRESHOLD,
    "filter_scope": "fleet",
}

EVALUATE_DEFAULTS = {
    "actuals": None,
    "forecasts": None,
    "capacities": None,
    "model": None,
    "out_dir": None,
    "methods": "copula,indep,qsum",
    "alphas": "0.1,0.2,0.3,0.4",
    "samples": aggregate.DEFAULT_SAMPLE_COUNT,
    "seed": 0,
    "threads": 1,
    "split": "all",
    "train_months": data.DEFAULT_TRAIN_MONTHS,
    "low_gen_threshold": data.DEFAULT_LOW_GEN_THRESHOLD,
    "filter_scope": "fleet",
    "export_samples": False,
}


def _effective_config(args, defaults) -> tuple[dict, set]:
    """Merge defaults, config file, and explicit flags; track explicit keys."""
    cfg = dict(defaults)
    explicit = set()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file {path}: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(
                f"config file {path}: unknown key(s) {', '.join(sorted(unknown))}"
            )
        cfg.update(file_cfg)
        explicit.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
            explicit.add(key)
    return cfg, explicit


def _print_config(cfg: dict) -> None:
    json.dump(cfg, sys.stdout, indent=1, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _require_file(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing required {what}")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_panels(cfg):
    actuals_path = _require_file(cfg["actuals"], "actuals file (--actuals)")
    forecasts_path = _require_file(cfg["forecasts"], "forecasts file (--forecasts)")
    actuals = data.load_actuals(actuals_path)
    forecasts = data.load_forecasts(forecasts_path, QuantileGrid.default())
    if cfg.get("capacities"):
        cap_path = _require_file(cfg["capacities"], "capacity file (--capacities)")
        data.attach_capacities(actuals, data.load_capacities(cap_path))
    return data.align_panels(actuals, forecasts)


def _select_times(actuals, cfg, part: str):
    """Daylight-filter the panel times, then take the requested split."""
    kept = data.filter_daylight(
        actuals, threshold=cfg["low_gen_threshold"], scope=cfg["filter_scope"]
    )
    if part == "all":
        return kept
    train, test = data.split_train_test(kept, cfg["train_months"])
    return train if part == "train" else test


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    cfg, _ = _effective_config(args, SYNTH_DEFAULTS)
    if args.print_config:
        _print_config(cfg)
        return 0
    if cfg["out_dir"] is None:
        raise UsageError("missing required --out-dir")
    if not 0.0 <= cfg["rho"] < 1.0:
        raise UsageError(f"--rho must lie in [0, 1), got {cfg['rho']}")
    if cfg["sites"] < 1 or cfg["days"] < 1:
        raise UsageError("--sites and --days must be positive")
    if cfg["diurnal"] not in ("solar", "flat"):
        raise UsageError(f"--diurnal must be solar or flat, got {cfg['diurnal']!r}")
    try:
        start = datetime.strptime(cfg["start"], "%Y-%m-%d").replace(
            tzinfo=timezone.utc
        )
    except ValueError as exc:
        raise UsageError(f"--start: {exc}") from exc

    t0 = _time.perf_counter()
    profile = synth.DEFAULT_DIURNAL if cfg["diurnal"] == "solar" else synth.FLAT_DIURNAL
    scfg = synth.SynthConfig(
        n_sites=cfg["sites"],
        n_times=cfg["days"] * 24,
        correlation=cfg["rho"],
        capacities=np.linspace(cfg["capacity_low"], cfg["capacity_high"], cfg["sites"]),
        beta_a=cfg["beta_a"],
        beta_b=cfg["beta_b"],
        diurnal_profile=profile,
        width_scale=cfg["width_scale"],
        bias=cfg["bias"],
        seed=cfg["seed"],
        start_time=start,
    )
    actuals, sigma = synth.generate_truth(scfg)
    forecasts = synth.generate_forecasts(scfg)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "actuals": out_dir / "actuals.csv",
        "forecasts": out_dir / "forecasts.csv",
        "sigma": out_dir / "truth_sigma.csv",
    }
    data.write_actuals_csv(actuals, paths["actuals"])
    data.write_forecasts_csv(forecasts, paths["forecasts"])
    data.write_sigma_csv(actuals.sites, sigma, paths["sigma"])

    RunManifest(
        command="synth",
        config=cfg,
        seed=cfg["seed"],
        input_digests={},
        output_paths=[str(p) for p in paths.values()],
        wall_time_s=_time.perf_counter() - t0,
        version=__version__,
    ).write(out_dir / "manifest.json")
    log.info("wrote %d sites x %d hours to %s", cfg["sites"], cfg["days"] * 24, out_dir)
    return 0


def cmd_fit(args) -> int:
    cfg, _ = _effective_config(args, FIT_DEFAULTS)
    if args.print_config:
        _print_config(cfg)
        return 0
    if cfg["out"] is None:
        raise UsageError("missing required --out (model file path)")
    if cfg["split"] not in ("all", "train"):
        raise UsageError(f"--split must be all or train, got {cfg['split']!r}")

    t0 = _time.perf_counter()
    actuals, forecasts = _load_panels(cfg)
    times = _select_times(actuals, cfg, cfg["split"])
    actuals = data.actuals_subset(actuals, times)
    forecasts = data.forecasts_subset(forecasts, times)

    model = fit_copula(actuals, forecasts, clamp_eps=cfg["clamp_eps"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)

    summary = {
        "sites": model.n_sites,
        "t_used": model.diagnostics.t_used,
        "clamp_rate": model.diagnostics.clamp_rate,
        "psd_repair_applied": model.diagnostics.psd_repair_applied,
        "min_eigenvalue_before_repair": model.diagnostics.min_eigenvalue_before_repair,
        "cholesky_jitter": model.factor.jitter_used,
    }
    json.dump(summary, sys.stdout, indent=1)
    sys.stdout.write("\n")

    digests = {str(cfg["actuals"]): _sha256(cfg["actuals"]),
               str(cfg["forecasts"]): _sha256(cfg["forecasts"])}
    if cfg.get("capacities"):
        digests[str(cfg["capacities"])] = _sha256(cfg["capacities"])
    RunManifest(
        command="fit",
        config=cfg,
        seed=None,
        input_digests=digests,
        output_paths=[str(out)],
        wall_time_s=_time.perf_counter() - t0,
        version=__version__,
    ).write(str(out) + ".manifest.json")
    return 0


def _parse_methods(text: str) -> list[str]:
    methods = [m.strip() for m in str(text).split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods is empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(
            f"unknown method name(s): {', '.join(unknown)} "
            f"(choose from {', '.join(METHODS)})"
        )
    return methods


def _parse_alphas(text: str) -> list[float]:
    try:
        alphas = [float(a) for a in str(text).split(",") if a.strip()]
    except ValueError as exc:
        raise UsageError(f"--alphas: {exc}") from exc
    if not alphas or any(not 0.0 < a < 1.0 for a in alphas):
        raise UsageError("--alphas must be comma-separated values in (0, 1)")
    return alphas


def cmd_evaluate(args) -> int:
    cfg, explicit = _effective_config(args, EVALUATE_DEFAULTS)
    if args.print_config:
        _print_config(cfg)
        return 0
    if cfg["out_dir"] is None:
        raise UsageError("missing required --out-dir")
    if cfg["split"] not in ("all", "test"):
        raise UsageError(f"--split must be all or test, got {cfg['split']!r}")
    methods = _parse_methods(cfg["methods"])
    alphas = _parse_alphas(cfg["alphas"])
    if cfg["samples"] < 1:
        raise UsageError("--samples must be at least 1")
    if cfg["threads"] < 1:
        raise UsageError("--threads must be at least 1")

    sampling = [m for m in methods if m in SAMPLING_METHODS]
    if not sampling and "seed" in explicit:
        log.warning("--seed ignored: only deterministic methods requested")

    t0 = _time.perf_counter()
    actuals, forecasts = _load_panels(cfg)
    times = _select_times(actuals, cfg, cfg["split"])
    actuals = data.actuals_subset(actuals, times)
    forecasts = data.forecasts_subset(forecasts, times)

    model = None
    if "copula" in methods:
        model_path = _require_file(cfg["model"], "model file (--model)")
        model = load_model(model_path)

    records, sample_sets = run_evaluation(
        actuals,
        forecasts,
        model,
        methods,
        alphas,
        s_count=cfg["samples"],
        seed=cfg["seed"] if sampling else None,
        threads=cfg["threads"],
        collect_samples=cfg["export_samples"],
    )
    report = metrics.hourly_report(records)

    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    intervals_path = out_dir / "intervals.csv"
    with open(intervals_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "method", "alpha", "lo", "hi", "actual_total"])
        for r in records:
            writer.writerow([
                data.format_rfc3339(r.time),
                r.method,
                repr(float(r.alpha)),
                repr(float(r.lo)),
                repr(float(r.hi)),
                repr(float(r.actual_total)),
            ])
    outputs.append(intervals_path)

    overall_path = out_dir / "report_overall.csv"
    hourly_path = out_dir / "report_hourly.csv"
    metrics.EvalReport.write_csv(report.overall, overall_path)
    metrics.EvalReport.write_csv(report.hourly, hourly_path)
    outputs.extend([overall_path, hourly_path])

    if cfg["export_samples"]:
        samples_path = out_dir / "samples.csv"
        aggregate.samples_to_csv(sample_sets, samples_path, data.format_rfc3339)
        outputs.append(samples_path)

    print(metrics.EvalReport.format_table(report.overall))

    digests = {str(cfg["actuals"]): _sha256(cfg["actuals"]),
               str(cfg["forecasts"]): _sha256(cfg["forecasts"])}
    if model is not None:
        digests[str(cfg["model"])] = _sha256(cfg["model"])
    if cfg.get("capacities"):
        digests[str(cfg["capacities"])] = _sha256(cfg["capacities"])
    RunManifest(
        command="evaluate",
        config=cfg,
        seed=cfg["seed"] if sampling else None,
        input_digests=digests,
        output_paths=[str(p) for p in outputs],
        wall_time_s=_time.perf_counter() - t0,
        version=__version__,
    ).write(out_dir / "manifest.json")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetcast",
        description="Aggregate site-level quantile forecasts to a calibrated "
        "fleet-level probabilistic forecast via a Gaussian copula.",
    )
    parser.add_argument(
        "--version", action="version", version=f"fleetcast {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective configuration and exit",
        )
        p.add_argument("-v", "--verbose", action="count", default=0)

    p_synth = sub.add_parser("synth", help="generate a synthetic fleet dataset")
    p_synth.add_argument("--out-dir", dest="out_dir")
    p_synth.add_argument("--sites", type=int)
    p_synth.add_argument("--days", type=int)
    p_synth.add_argument("--start", help="first day, YYYY-MM-DD (UTC)")
    p_synth.add_argument("--rho", type=float, help="equicorrelation in [0, 1)")
    p_synth.add_argument("--beta-a", dest="beta_a", type=float)
    p_synth.add_argument("--beta-b", dest="beta_b", type=float)
    p_synth.add_argument("--capacity-low", dest="capacity_low", type=float)
    p_synth.add_argument("--capacity-high", dest="capacity_high", type=float)
    p_synth.add_argument("--diurnal", choices=("solar", "flat"))
    p_synth.add_argument("--width-scale", dest="width_scale", type=float)
    p_synth.add_argument("--bias", type=float)
    p_synth.add_argument("--seed", type=int)
    common(p_synth)
    p_synth.set_defaults(handler=cmd_synth)

    p_fit = sub.add_parser("fit", help="fit the copula from historical data")
    p_fit.add_argument("--actuals")
    p_fit.add_argument("--forecasts")
    p_fit.add_argument("--capacities", help="optional site_id,capacity_mw CSV")
    p_fit.add_argument("--out", help="model output path (JSON)")
    p_fit.add_argument("--clamp-eps", dest="clamp_eps", type=float)
    p_fit.add_argument("--split", choices=("all", "train"))
    p_fit.add_argument("--train-months", dest="train_months", type=int)
    p_fit.add_argument(
        "--low-gen-threshold", dest="low_gen_threshold", type=float
    )
    p_fit.add_argument("--filter-scope", dest="filter_scope", choices=("fleet", "site"))
    common(p_fit)
    p_fit.set_defaults(handler=cmd_fit)

    p_eval = sub.add_parser("evaluate", help="evaluate aggregation methods")
    p_eval.add_argument("--actuals")
    p_eval.add_argument("--forecasts")
    p_eval.add_argument("--capacities")
    p_eval.add_argument("--model", help="model file from `fleetcast fit`")
    p_eval.add_argument("--out-dir", dest="out_dir")
    p_eval.add_argument("--methods", help="comma list from: copula,indep,qsum")
    p_eval.add_argument("--alphas", help="comma list of miscoverage levels")
    p_eval.add_argument("--samples", type=int)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--threads", type=int)
    p_eval.add_argument("--split", choices=("all", "test"))
    p_eval.add_argument("--train-months", dest="train_months", type=int)
    p_eval.add_argument(
        "--low-gen-threshold", dest="low_gen_threshold", type=float
    )
    p_eval.add_argument("--filter-scope", dest="filter_scope", choices=("fleet", "site"))
    p_eval.add_argument(
        "--export-samples",
        dest="export_samples",
        action="store_const",
        const=True,
        help="also write per-timestamp fleet samples to samples.csv",
    )
    common(p_eval)
    p_eval.set_defaults(handler=cmd_evaluate)

    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    _configure_logging(getattr(args, "verbose", 0))
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, not a usage problem
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

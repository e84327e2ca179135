"""Command-line harness: run experiments, sweep parameters, write CSV.

Config files are flat ``key = value`` text, one experiment per file::

    # linear example at m = 100
    experiment = linear
    seeds = 1, 2, 3
    out = linear.csv
    m = 100
    epsilon = 0.05

Flags given on the command line override file keys. Each seed is one
independent trial; ``--trials N`` expands a single ``--seed s`` into the
seeds ``s .. s+N-1``. Rows whose experiment column ends in ``:aggregate``
summarize all seeds of a run; rows ending in ``:slope`` hold log-log fits
from a sweep (``m`` and ``seed`` are 0 there).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import bounds_audit, expnet_example, linear_example, relu_lab
from .numerics import RngStream, SlopeFit, fit_loglog_slope
from .reports import SweepRow, TrialReport

log = logging.getLogger("uclab")

CSV_HEADER = ("experiment", "m", "seed", "metric", "value", "std_err")

# name -> (units, what it tracks)
METRICS: dict[str, tuple[str, str]] = {
    "train_loss": ("fraction", "ramp loss on the training set"),
    "train_error": ("fraction", "0-1 error on the training set"),
    "test_loss": ("fraction", "Monte Carlo ramp loss on fresh data"),
    "test_error": ("fraction", "Monte Carlo 0-1 error on fresh data (test-error curves)"),
    "bad_set_loss": ("fraction", "ramp loss on the bad dataset S'"),
    "bad_set_error": ("fraction", "0-1 error on the bad dataset S' (hypersphere S' curve)"),
    "unif_alg_witness": ("fraction", "|test loss - loss on S'|, per-trial unif-alg witness"),
    "w_norm": ("l2 norm", "|w|_2 of the linear learner (grows like sqrt(m))"),
    "w2_norm": ("l2 norm", "|w2|_2, the noise part of the linear learner"),
    "noise_dim": ("count", "noise dimension D used by the run"),
    "train_margin_fraction": ("fraction", "share of training points with y*h >= 1"),
    "min_train_log_margin": ("nats", "smallest log(y*h) over training points"),
    "epochs": ("count", "SGD epochs used"),
    "converged": ("0/1", "margin stopping rule reached"),
    "dist_from_init": ("l2 norm", "distance of trained weights from initialization"),
    "dist_from_origin": ("l2 norm", "total Frobenius norm of the weights"),
    "dist_between_runs": ("l2 norm", "distance between weights trained on two draws from one init"),
    "spectral_product": ("product of norms", "product of layer spectral norms"),
    "frobenius_product": ("product of norms", "product of layer Frobenius norms"),
    "bound_neyshabur18": ("bound value", "spectral-norm x Frobenius-distance bound"),
    "bound_bartlett17": ("bound value", "spectral-norm x (2,1)-distance bound"),
    "bound_two_layer19": ("bound value", "two-layer width-aware bound, both terms"),
    "bound_two_layer19_first_term": ("bound value", "two-layer bound, width-independent term"),
    "bound_neyshabur18_median_margin": ("bound value", "spectral x Frobenius bound at the median train margin"),
    "margin_p1": ("logit units", "1st percentile of training margins"),
    "margin_median": ("logit units", "median training margin"),
    "margin_mean_train": ("logit units", "mean training margin"),
    "margin_mean_test": ("logit units", "mean test margin"),
    "pseudo_overfit_gap": ("logit units", "mean train margin minus mean test margin"),
    "interp_max_error": ("fraction", "largest test error on the segment between two solutions"),
    "interp_endpoint_max": ("fraction", "larger of the two endpoint test errors"),
    "eps_gen_estimate": ("fraction", "(1-delta)-quantile of test-train loss over trials"),
    "eps_unif_alg_lower": ("fraction", "certified lower bound on the unif-alg gap"),
    "eps_std_err": ("fraction", "largest Monte Carlo std error among retained trials"),
    "pb_det_a_lower": ("fraction", "lower bound on the type-A deterministic PAC-Bayes bound"),
    "pb_det_b_lower": ("fraction", "lower bound on the type-B deterministic PAC-Bayes bound"),
    "n_trials": ("count", "number of trials aggregated"),
    "config_hash": ("integer", "first 48 bits of the SHA-256 of the run config"),
    "flag_empirical_mode": ("0/1", "1 when the run is outside the proven regime"),
}
SLOPE_PREFIXES = ("slope_", "r2_")


def metric_known(name: str) -> bool:
    for p in SLOPE_PREFIXES:
        if name.startswith(p):
            name = name[len(p):]
    return name in METRICS


class ConfigError(ValueError):
    pass


# experiment -> param -> (type, default)
SCHEMAS: dict[str, dict[str, tuple[type, Any]]] = {
    "linear": {
        "m": (int, 100), "epsilon": (float, 0.05), "delta": (float, 0.05),
        "gamma": (float, 1.0), "n_test": (int, 10000), "mode": (str, "theorem"),
        "D": (int, 0), "K": (int, 1), "constants": (str, "proof"),
    },
    "expnet": {
        "m": (int, 32), "epsilon": (float, 0.05), "delta": (float, 0.05),
        "n_test": (int, 2000), "D": (int, 0),
    },
    "relu-hypersphere": {
        "m": (int, 4096), "dim": (int, 256), "width": (int, 8192),
        "r_inner": (float, 1.0), "r_outer": (float, 1.1), "lr": (float, 0.1),
        "batch": (int, 64), "stop_fraction": (float, 0.99), "stop_margin": (float, 10.0),
        "max_epochs": (int, 500), "loss": (str, "cross_entropy"), "n_test": (int, 10000),
        "init_scale": (float, 1.0), "pair_run": (int, 0), "weights_out": (str, ""),
    },
    "abstract": {
        "m": (int, 100), "D": (int, 10), "n_test": (int, 100000),
    },
}
SCHEMAS["bounds-sweep"] = dict(SCHEMAS["relu-hypersphere"])

DEFAULT_SWEEP_M = [2 ** k for k in range(10, 15)]


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict[str, Any] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in SCHEMAS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"expected one of {sorted(SCHEMAS)}")
        schema = SCHEMAS[self.experiment]
        typed = {}
        for key, value in self.params.items():
            if key not in schema:
                raise ConfigError(f"unknown parameter {key!r} for experiment {self.experiment}")
            typed[key] = _coerce(key, value, schema[key][0])
        self.params = {k: typed.get(k, default) for k, (_, default) in schema.items()}
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for s in self.seeds:
            if not 0 <= int(s) < 2 ** 64:
                raise ConfigError(f"seed {s} is not a 64-bit unsigned integer")
        self.seeds = [int(s) for s in self.seeds]

    def config_hash(self) -> str:
        blob = json.dumps({"experiment": self.experiment, "params": self.params,
                           "seeds": self.seeds}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_params(self, **updates) -> "ExperimentConfig":
        return replace(self, params={**self.params, **updates})


def _coerce(key: str, value: Any, typ: type):
    try:
        if typ is int and isinstance(value, str):
            try:
                return int(value, 0)
            except ValueError:
                f = float(value)
                if not f.is_integer():
                    raise
                return int(f)
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key}: cannot read {value!r} as {typ.__name__}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(experiment: Optional[str], file_keys: dict[str, str],
                 overrides: dict[str, Any], seeds: Optional[list[int]] = None,
                 out: Optional[str] = None) -> ExperimentConfig:
    keys = dict(file_keys)
    exp = experiment or keys.pop("experiment", None)
    keys.pop("experiment", None)
    if exp is None:
        raise ConfigError("no experiment given")
    file_seeds = keys.pop("seeds", None)
    file_out = keys.pop("out", None)
    params = {**keys, **{k: v for k, v in overrides.items() if v is not None}}
    if seeds is None:
        seeds = [int(s, 0) for s in file_seeds.split(",")] if file_seeds else [0]
    return ExperimentConfig(exp, params, seeds, out or file_out)


# --- single runs -----------------------------------------------------------

def _linear_cfg(p) -> linear_example.LinearTaskConfig:
    consts = {"proof": linear_example.TheoremConstants.proof_set(),
              "lemma": linear_example.TheoremConstants.lemma_set()}
    if p["constants"] not in consts:
        raise ConfigError("constants must be 'proof' or 'lemma'")
    return linear_example.LinearTaskConfig.create(
        p["m"], p["epsilon"], p["delta"], D=p["D"] or None, K=p["K"], mode=p["mode"],
        constants=consts[p["constants"]])


def _run_one(experiment: str, params: dict, seed: int) -> TrialReport:
    rng = RngStream(seed)
    p = params
    if experiment == "linear":
        return linear_example.run_trial(_linear_cfg(p), p["n_test"], p["gamma"], rng, seed=seed)
    if experiment == "expnet":
        cfg = expnet_example.ExpTaskConfig.create(p["m"], p["epsilon"], p["delta"], D=p["D"] or None)
        return expnet_example.run_trial_exp(cfg, p["n_test"], rng, seed=seed)
    if experiment == "abstract":
        return bounds_audit.run_abstract(p["D"], p["m"], p["n_test"], rng, seed=seed)
    if experiment in ("relu-hypersphere", "bounds-sweep"):
        return run_relu(p, seed, experiment)
    raise ConfigError(f"unknown experiment {experiment!r}")


def run_relu(p: dict, seed: int, name: str = "relu-hypersphere") -> TrialReport:
    """Train on one hypersphere draw; report errors, norms, bounds and margins."""
    rng = RngStream(seed)
    hc = relu_lab.HypersphereConfig(p["dim"], p["r_inner"], p["r_outer"], p["m"])
    train = relu_lab.sample_hypersphere(hc, rng.split(0))
    net0 = relu_lab.init_two_layer(p["dim"], p["width"], rng.split(1), p["init_scale"])
    tc = relu_lab.TrainConfig(p["lr"], p["batch"], p["stop_fraction"], p["stop_margin"],
                              p["max_epochs"], p["loss"], rng.split(2))
    net, epochs, converged = relu_lab.train_sgd(net0, train, tc)
    if not converged:
        log.warning("seed %d, m=%d: stopping rule not reached in %d epochs", seed, p["m"], epochs)
    test = relu_lab.sample_hypersphere(hc, rng.split(3), p["n_test"])
    bad = relu_lab.project_swap(train, hc)

    report = TrialReport(name, p["m"], seed)
    met = report.metrics
    met["train_error"] = relu_lab.evaluate_error(net, train)
    test_err = relu_lab.evaluate_error(net, test)
    met["test_error"] = test_err
    report.std_errs["test_error"] = math.sqrt(test_err * (1 - test_err) / len(test))
    met["bad_set_error"] = relu_lab.evaluate_error(net, bad)
    met["unif_alg_witness"] = abs(met["bad_set_error"] - test_err)
    met["epochs"] = float(epochs)
    met["converged"] = 1.0 if converged else 0.0

    # the constant bias input counts toward the input norm
    B = float(np.sqrt(np.max(np.sum(train.X ** 2, axis=1)) + 1.0))
    bounds = bounds_audit.compute_bounds(net, B, p["stop_margin"], p["m"])
    met.update(bounds.as_metrics())
    ms = bounds_audit.margin_stats(net, train, test)
    met.update(margin_p1=ms.percentile_1, margin_median=ms.median,
               margin_mean_train=ms.mean_train, margin_mean_test=ms.mean_test,
               pseudo_overfit_gap=ms.pseudo_overfit_gap)
    if ms.median > 0:
        met["bound_neyshabur18_median_margin"] = bounds_audit.compute_bounds(
            net, B, ms.median, p["m"]).bound_neyshabur18

    if p["pair_run"]:
        train_b = relu_lab.sample_hypersphere(hc, rng.split(4))
        net_b, _, _ = relu_lab.train_sgd(net0, train_b, relu_lab.with_seed(tc, rng.split(5)))
        between, _, _ = bounds_audit.trajectory_diagnostics(net, net_b)
        met["dist_between_runs"] = between
        curve = relu_lab.interpolate_eval(net, net_b, [0.0, 0.25, 0.5, 0.75, 1.0], test)
        met["interp_max_error"] = max(e for _, e in curve)
        met["interp_endpoint_max"] = max(curve[0][1], curve[-1][1])
    if p["weights_out"]:
        relu_lab.save_weights(net, p["weights_out"].format(seed=seed, m=p["m"]))
    return report


def _task(args):
    experiment, params, seed = args
    return _run_one(experiment, params, seed)


def _map(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_task, tasks))


def _aggregate(cfg: ExperimentConfig, reports: list[TrialReport]) -> list[SweepRow]:
    name = f"{cfg.experiment}:aggregate"
    m = cfg.params["m"]
    rows = [SweepRow(name, m, 0, "n_trials", float(len(reports)))]
    if cfg.experiment not in ("linear", "expnet") or len(reports) < 10:
        return rows
    loss_key = "loss" if cfg.experiment == "linear" else "error"
    trials = [(r[f"test_{loss_key}"], r[f"train_{loss_key}"], r[f"bad_set_{loss_key}"],
               r.std_errs.get(f"test_{loss_key}", 0.0)) for r in reports]
    eps = bounds_audit.estimate_eps(trials, cfg.params["delta"])
    pa, pb = bounds_audit.pb_det_lower_bounds(eps.eps_unif_alg_lower, eps.eps_gen_estimate,
                                              max(r[f"train_{loss_key}"] for r in reports))
    rows += [
        SweepRow(name, m, 0, "eps_gen_estimate", eps.eps_gen_estimate),
        SweepRow(name, m, 0, "eps_unif_alg_lower", eps.eps_unif_alg_lower, eps.std_err),
        SweepRow(name, m, 0, "eps_std_err", eps.std_err),
        SweepRow(name, m, 0, "pb_det_a_lower", pa),
        SweepRow(name, m, 0, "pb_det_b_lower", pb),
    ]
    return rows


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[SweepRow]:
    """All rows for one config: per-seed metrics plus an aggregate block."""
    tasks = [(cfg.experiment, cfg.params, s) for s in cfg.seeds]
    try:
        reports = _map(tasks, jobs)
    except ConfigError:
        raise
    except Exception as exc:
        raise RuntimeError(f"{cfg.experiment} failed: {exc}") from exc
    digest = float(int(cfg.config_hash()[:12], 16))
    rows = []
    for r in reports:
        rows.extend(r.rows())
        rows.append(SweepRow(r.experiment, r.m, r.seed, "config_hash", digest))
    rows.extend(_aggregate(cfg, reports))
    unknown = sorted({row.metric for row in rows if not metric_known(row.metric)})
    if unknown:
        raise RuntimeError(f"unregistered metrics {unknown}")
    return sorted(rows, key=SweepRow.sort_key)


def sweep(base: ExperimentConfig, axis: str, values: Sequence, jobs: int = 1
          ) -> tuple[list[SweepRow], dict[str, SlopeFit]]:
    """Run ``base`` at each value of ``axis`` and fit log-log slopes per metric.

    Slopes are fitted to the per-value mean over seeds, for metrics that are
    strictly positive at every value.
    """
    if axis not in SCHEMAS[base.experiment]:
        raise ConfigError(f"{axis!r} is not a parameter of {base.experiment}")
    values = list(values)
    rows: list[SweepRow] = []
    means: dict[str, dict[float, list[float]]] = {}
    for v in values:
        cfg = base.with_params(**{axis: v})
        cfg.__post_init__()
        got = run_experiment(cfg, jobs)
        if axis != "m":
            tag = f"[{axis}={cfg.params[axis]}]"
            got = [replace(r, experiment=r.experiment + tag) for r in got]
        rows.extend(got)
        x = float(cfg.params[axis])
        for r in got:
            if ":" in r.experiment or r.metric in ("config_hash",) or r.metric.startswith("flag_"):
                continue
            means.setdefault(r.metric, {}).setdefault(x, []).append(r.value)

    if len(values) < 2:
        raise ValueError("need at least 2 points to fit a slope")
    fits: dict[str, SlopeFit] = {}
    name = f"{base.experiment}:slope"
    for metric in sorted(means):
        pts = [(x, float(np.mean(v))) for x, v in sorted(means[metric].items())]
        if len(pts) < 2 or any(y <= 0 or not math.isfinite(y) for _, y in pts):
            continue
        fit = fit_loglog_slope(pts)
        fits[metric] = fit
        rows.append(SweepRow(name, 0, 0, f"slope_{metric}", fit.exponent))
        rows.append(SweepRow(name, 0, 0, f"r2_{metric}", fit.r_squared))
    return sorted(rows, key=SweepRow.sort_key), fits


def format_value(v: Optional[float]) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def csv_text(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=SweepRow.sort_key):
        w.writerow([r.experiment, r.m, r.seed, r.metric, format_value(r.value), format_value(r.std_err)])
    return buf.getvalue()


def emit_csv(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_bytes(csv_text(rows).encode("utf-8"))


def read_csv(path) -> list[SweepRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [SweepRow(r["experiment"], int(r["m"]), int(r["seed"]), r["metric"],
                         float(r["value"]), float(r["std_err"]) if r["std_err"] else None)
                for r in reader]


# --- argument parsing ------------------------------------------------------

def _parse_set(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _parse_values(text: str) -> list[str]:
    if ".." in text:
        lo, hi = text.split("..")
        # "2^10..2^14" is a power-of-two range
        if lo.startswith("2^") and hi.startswith("2^"):
            return [str(2 ** k) for k in range(int(lo[2:]), int(hi[2:]) + 1)]
        return [str(v) for v in range(int(lo), int(hi) + 1)]
    return [v.strip() for v in text.split(",") if v.strip()]


def _seeds(args) -> Optional[list[int]]:
    if args.seed is None and args.trials is None:
        return None
    start = args.seed if args.seed is not None else 0
    return [start + i for i in range(args.trials or 1)]


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="first seed")
        p.add_argument("--trials", type=int, help="number of seeds starting at --seed")
        p.add_argument("--out", help="CSV output path (default: stdout)")
        p.add_argument("--m", type=int, help="training set size")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other parameter")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    for name, exp in (("linear", "linear"), ("expnet", "expnet"),
                      ("relu", "relu-hypersphere"), ("abstract", "abstract")):
        p = sub.add_parser(name, help=f"run the {exp} experiment")
        common(p)
        p.set_defaults(experiment=exp)

    p = sub.add_parser("sweep", help="run an experiment over several values of one parameter")
    common(p)
    p.add_argument("--experiment", help="experiment name (or set it in --config)")
    p.add_argument("--axis", default="m")
    p.add_argument("--values", help="comma list, a..b, or 2^a..2^b")

    p = sub.add_parser("bounds-report", help="norms and bounds of a saved weight snapshot")
    p.add_argument("weights", help="snapshot written by the relu experiment")
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--B", type=float, default=math.sqrt(1.1 ** 2 + 1),
                   help="bound on |(x, 1)|, the input norm including the bias input")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out")
    return parser


def _write(rows, out):
    if out:
        emit_csv(rows, out)
    else:
        sys.stdout.write(csv_text(rows))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bounds-report":
            net = relu_lab.load_weights(args.weights)
            rep = bounds_audit.compute_bounds(net, args.B, args.gamma, args.m)
            rows = [SweepRow("bounds-report", args.m, 0, k, v) for k, v in rep.as_metrics().items()]
            _write(rows, args.out)
            return 0

        file_keys = parse_config_text(Path(args.config).read_text()) if args.config else {}
        overrides = {"m": args.m, **_parse_set(args.set)}
        experiment = getattr(args, "experiment", None)
        cfg = build_config(experiment, file_keys, overrides, _seeds(args), args.out)

        if args.command == "sweep":
            values = _parse_values(args.values) if args.values else [str(v) for v in DEFAULT_SWEEP_M]
            rows, fits = sweep(cfg, args.axis, values, args.jobs)
            for metric, fit in sorted(fits.items()):
                print(f"{metric}: exponent {fit.exponent:+.4f}  r2 {fit.r_squared:.4f}", file=sys.stderr)
        else:
            rows = run_experiment(cfg, args.jobs)
        _write(rows, cfg.output_path)
        return 0
    except (ConfigError, ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"uclab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

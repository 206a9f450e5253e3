"""Command-line runner: ``zomd {run,bounds,verify-estimator,sweep}``.

Exit codes: 0 success, 1 runtime or verification failure, 2 invalid
configuration. Outputs are UTF-8 with LF line endings and depend only on
the configuration and the seed.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ._validation import ConfigurationError, PreconditionError
from .analysis import (bound_report, concentration_bound, neighborhood_radius,
                       radius_at, wilson_interval)
from .config import ConfigError, ExperimentConfig
from .nga import NgaConfig, verify_estimator_bounds
from .solver import _simulate, record_indices, run_ensemble
from .streams import TrialStreams, substream

TRAJECTORY_COLUMNS = ["t", "alpha", "f_x", "f_z", "gap_z", "diag_sum", "cum_alpha"]
SWEEP_COLUMNS = ["mu", "radius_theory", "gap_median", "gap_p90", "bound_at_T"]
VERIFY_COLUMNS = ["mu", "probe", "bias_empirical", "bias_se", "bias_bound", "bias_pass",
                  "moment_empirical", "moment_se", "moment_bound", "moment_pass"]
VERIFY_MUS = (0.01, 0.05, 0.1, 0.5, 1.0)
VERIFY_PROBES = 5
MAX_VECTOR_COLUMNS = 10

# sub-stream keys outside the (trial, call) space used by runs
_PROBE_KEY = 2 ** 32
_VERIFY_KEY = 2 ** 32 + 1

# ensembles with full trajectories are run in batches of this many trials
_TRAJECTORY_BATCH = 32


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_json(path, obj):
    Path(path).write_text(_dump_json(obj), encoding="utf-8", newline="\n")


def _say(args, text):
    if not args.quiet:
        print(text)


def _theory(cfg, mu):
    return cfg.experiment(mu=mu).theory(**cfg.variants())


def _bounds_payload(cfg, mu=None):
    mu = cfg.mu() if mu is None else mu
    tp = _theory(cfg, mu)
    sched = cfg.schedule()
    out = {
        "mu": mu, "delta": tp.delta, "B1": tp.B1, "K": tp.K, "K1": tp.K1, "C": tp.C,
        "D": tp.D, "sigma_R": tp.sigma_R, "kappa1": tp.kappa1, "kappa2": tp.kappa2,
        "radius": neighborhood_radius(tp), "variants": tp.variants,
        "per_epsilon": [],
    }
    if tp.B > 0:
        mu_star = cfg.optimal_mu()
        L = tp.L0 if tp.smoothness_class == "C00" else tp.L1
        out["mu_star"] = mu_star
        out["radius_at_mu_star"] = radius_at(tp.smoothness_class, mu_star, L, tp.kappa1,
                                             tp.B, tp.D, tp.n, cfg.variants()["delta_variant"])
    for eps in cfg.epsilons:
        rep = bound_report(tp, sched, eps, cfg.T, confidences=cfg.confidences)
        out["per_epsilon"].append(rep.to_dict())
    return out, tp


def cmd_run(args, cfg):
    out_dir = Path(args.out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    exp = cfg.experiment()
    trials = args.trials or cfg.trials
    seed = cfg.seed if args.seed is None else args.seed
    n = exp.problem.geometry.n
    write_vectors = n <= MAX_VECTOR_COLUMNS
    header = TRAJECTORY_COLUMNS + ([f"x_{i + 1}" for i in range(n)] if write_vectors else [])
    record_ts = record_indices(exp.T, exp.record_limit)

    summaries = []
    for lo in range(0, trials, _TRAJECTORY_BATCH):
        count = min(_TRAJECTORY_BATCH, trials - lo)
        trajs = _simulate(exp, [TrialStreams(seed, lo + i) for i in range(count)], record_ts)
        for tr in trajs:
            if "csv" in cfg.formats:
                rows = []
                for i in range(tr.t.shape[0]):
                    row = [tr.t[i], tr.alpha[i], tr.f_x[i], tr.f_z[i], tr.gap_z[i],
                           tr.diag_sum[i], tr.cum_alpha[i]]
                    if write_vectors:
                        row.extend(tr.x[i])
                    rows.append(row)
                _write_csv(out_dir / f"trajectory_{tr.trial:04d}.csv", header, rows)
            summaries.append(tr.summary())

    bounds, tp = _bounds_payload(cfg, exp.mu)
    gaps = np.array([s.final_gap for s in summaries])
    per_eps = []
    for eps, rep in zip(cfg.epsilons, bounds["per_epsilon"]):
        level = neighborhood_radius(tp) + eps
        inside = int(np.sum(gaps < level))
        try:
            bound_T = concentration_bound(exp.T, eps, cfg.schedule(), tp)
        except PreconditionError:
            bound_T = None
        per_eps.append({"epsilon": eps, "level": level, "inside": inside,
                        "fraction": inside / trials,
                        "wilson95": list(wilson_interval(inside, trials)),
                        "concentration_bound_at_T": bound_T, "t0": rep["t0"]})
    summary = {
        "config": cfg.data, "seed": seed, "trials": trials, "T": exp.T, "mu": exp.mu,
        "f_star": exp.problem.objective.f_star,
        "bregman_start": float(exp.problem.geometry.mirror_map.divergence(
            exp.problem.objective.x_star, exp.x1)),
        "bounds": bounds,
        "per_epsilon": per_eps,
        "trial_summaries": [{"trial": s.trial, "final_gap": s.final_gap,
                             "best_f_z": s.best_f_z, "final_f_z": s.final_f_z,
                             "diag_sum": s.diag_sum} for s in summaries],
        "gap_median": float(np.median(gaps)),
    }
    if "json" in cfg.formats:
        _write_json(out_dir / "summary.json", summary)
    _say(args, f"ran {trials} trial(s) of T={exp.T}; median gap {summary['gap_median']:.6g}; "
               f"outputs in {out_dir}")
    return 0


def cmd_bounds(args, cfg):
    payload, _ = _bounds_payload(cfg)
    text = _dump_json(payload)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "bounds.json").write_text(text, encoding="utf-8", newline="\n")
    if not args.quiet:
        sys.stdout.write(text)
    return 0


def cmd_verify_estimator(args, cfg):
    seed = cfg.seed if args.seed is None else args.seed
    geom = cfg.geometry()
    nm = cfg.noise()
    probe_rng = substream(seed, _PROBE_KEY)
    probes = np.vstack([geom.initial_point(),
                        geom.feasible_set.sample(probe_rng, VERIFY_PROBES - 1)])
    rows = []
    reports = []
    for i, mu in enumerate(VERIFY_MUS):
        obj = cfg.objective(mu=mu)
        for j, x in enumerate(probes):
            rep = verify_estimator_bounds(
                obj, nm, geom, x, NgaConfig(mu, geom.n), cfg.samples,
                TrialStreams(seed, j, prefix=(_VERIFY_KEY, i)),
                moment_variant=cfg.variants()["moment_variant"])
            reports.append(rep)
            rows.append([mu, j, rep.empirical_bias_dual_norm, rep.bias_se, rep.bias_bound,
                         rep.bias_pass, rep.empirical_second_moment, rep.second_moment_se,
                         rep.second_moment_bound, rep.second_moment_pass])
    ok = all(r.passed for r in reports)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "verify_estimator.csv", VERIFY_COLUMNS, rows)
        _write_json(out_dir / "verify_estimator.json",
                    {"passed": ok, "rows": [r.to_dict() for r in reports]})
    if not args.quiet:
        print(" ".join(f"{c:>14}" for c in VERIFY_COLUMNS))
        for row in rows:
            print(" ".join(f"{_fmt(v)[:14]:>14}" for v in row))
        print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _parse_values(values, cfg):
    out = []
    for v in values:
        if v in ("optimal", "mu*", "mu_star"):
            out.append(cfg.optimal_mu())
        else:
            try:
                out.append(float(v))
            except ValueError:
                raise ConfigError(f"sweep value {v!r} is not a number") from None
            if out[-1] <= 0:
                raise ConfigError(f"sweep value {v!r} must be positive")
    return out


def cmd_sweep(args, cfg):
    if args.param != "mu":
        raise ConfigError(f"unsupported sweep parameter {args.param!r}; only mu is supported")
    values = _parse_values(args.values, cfg)
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    seed = cfg.seed if args.seed is None else args.seed
    trials = args.trials or cfg.trials
    eps = cfg.epsilons[0]
    rows = []
    for i, mu in enumerate(values):
        exp = cfg.experiment(mu=mu)
        tp = exp.theory(**cfg.variants())
        gaps = np.array([s.final_gap for s in run_ensemble(exp, trials, seed + i)])
        try:
            bound_T = concentration_bound(exp.T, eps, exp.schedule, tp)
        except PreconditionError:
            bound_T = float("nan")
        rows.append([mu, neighborhood_radius(tp), float(np.median(gaps)),
                     float(np.quantile(gaps, 0.9)), bound_T])
    out_dir = Path(args.out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "sweep_mu.csv", SWEEP_COLUMNS, rows)
    if not args.quiet:
        print(",".join(SWEEP_COLUMNS))
        for row in rows:
            print(",".join(_fmt(v) for v in row))
    return 0


COMMANDS = {"run": cmd_run, "bounds": cmd_bounds,
            "verify-estimator": cmd_verify_estimator, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--trials", type=int, help="number of trials (overrides run.trials)")
    common.add_argument("--quiet", action="store_true", help="suppress console output")

    parser = argparse.ArgumentParser(prog="zomd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one trial or a seed ensemble")
    sub.add_parser("bounds", parents=[common], help="compute the theoretical constants")
    sub.add_parser("verify-estimator", parents=[common],
                   help="check estimator bias and second moment over a mu grid")
    sw = sub.add_parser("sweep", parents=[common], help="ensemble per value of a parameter")
    sw.add_argument("--param", default="mu")
    sw.add_argument("--values", nargs="+", required=True,
                    help="values to sweep; 'optimal' stands for the optimal mu")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    if args.trials is not None and args.trials < 1:
        parser.error("--trials must be positive")
    try:
        cfg = ExperimentConfig.load(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: simulate, fit, evaluate, sweep, report."""

from __future__ import annotations

import argparse
import csv
import json
import os

import numpy as np

from ._validation import check_alpha
from .config import load_config
from .harness import (
    CSV_COLUMNS,
    _jsonable,
    emit_report,
    fit_log_log_slope,
    generate_pi,
    generate_truth,
    run_sweep,
    sample_observations,
)
from .metrics import frobenius_error, joint_divergence, normalized_sq_error, sup_error
from .model import (
    SamplingDistribution,
    read_matrix,
    read_observations,
    read_sampling_distribution,
    write_matrix,
    write_observations,
    write_sampling_distribution,
)
from .samplers import dump_chain, posterior_mean, run_factor_chain, run_student_chain

__all__ = ["main"]


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_simulate(args):
    cfg, _ = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.master_seed
    rng = np.random.default_rng(seed)
    truth, mstar = generate_truth(cfg.d1, cfg.d2, cfg.rank, cfg.entry_bound, rng)
    dist = generate_pi(cfg.d1, cfg.d2, cfg.pi_kind, cfg.pi_strength, rng)
    obs = sample_observations(mstar, dist, cfg.n, rng)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(mstar, os.path.join(args.out, "truth.csv"))
    write_sampling_distribution(dist, os.path.join(args.out, "pi.csv"))
    write_observations(obs, os.path.join(args.out, "data.csv"))
    meta = {
        "config_digest": cfg.digest(),
        "seed": seed,
        "d1": cfg.d1,
        "d2": cfg.d2,
        "r": cfg.rank,
        "n": cfg.n,
        "entry_bound": cfg.entry_bound,
        "truth_frobenius": float(np.linalg.norm(mstar)),
        "truth_sup": float(np.abs(mstar).max()) if mstar.size else 0.0,
        "min_prob": dist.min_prob,
    }
    _write_json(meta, os.path.join(args.out, "meta.json"))
    print(f"wrote truth.csv, pi.csv, data.csv, meta.json to {args.out}")
    return 0


def _cmd_fit(args):
    cfg, _ = load_config(args.config)
    obs = read_observations(args.data)
    seed = args.seed if args.seed is not None else cfg.master_seed
    shape = (cfg.d1, cfg.d2)
    if cfg.prior_family == "student":
        chain = run_student_chain(obs, shape, cfg.alpha, cfg.resolved_tau(), cfg.mala, seed)
    else:
        chain = run_factor_chain(obs, shape, cfg.alpha, cfg.factor_config(), cfg.mala, seed)
    summary = posterior_mean(chain)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(summary.mean_matrix, os.path.join(args.out, "mean.csv"))
    dump_chain(chain, os.path.join(args.out, "chain.csv"), os.path.join(args.out, "chain.json"))
    _write_json(
        {
            "accept_rate": chain.accept_rate,
            "config_digest": cfg.digest(),
            "divergences": chain.divergences,
            "max_mean_mcse": float(np.max(summary.mc_standard_error)),
            "n_samples_used": summary.n_samples_used,
            "seed": seed,
            "target": chain.target,
        },
        os.path.join(args.out, "fit.json"),
    )
    print(f"wrote mean.csv, chain.csv, chain.json, fit.json to {args.out}")
    return 0


_EVAL_COLUMNS = ("kl", "hellinger_sq", "renyi", "renyi_alpha", "frobenius", "frob_sq_normalized", "sup")


def _cmd_evaluate(args):
    a = read_matrix(args.matrix_a)
    b = read_matrix(args.matrix_b)
    if args.pi:
        dist = read_sampling_distribution(args.pi)
    else:
        dist = SamplingDistribution.uniform(*a.shape)
    alpha = check_alpha(args.alpha)
    values = (
        joint_divergence(a, b, dist, "kl"),
        joint_divergence(a, b, dist, "hellinger_sq"),
        joint_divergence(a, b, dist, "renyi", alpha=alpha),
        alpha,
        frobenius_error(a, b),
        normalized_sq_error(a, b),
        sup_error(a, b),
    )
    lines = [",".join(_EVAL_COLUMNS), ",".join(repr(float(v)) for v in values)]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "evaluate.csv")
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {path}")
    else:
        print("\n".join(lines))
    return 0


def _cmd_sweep(args):
    cfg, grids = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(master_seed=args.seed)
    if not grids["n_grid"]:
        raise SystemExit("sweep requires a sweep.n_grid entry in the config file")
    report = run_sweep(cfg, grids["n_grid"], grids["r_grid"], workers=args.workers)
    paths = emit_report(report.runs, args.out, summary=report.summary())
    print(f"wrote {paths['csv']} and {paths['json']}")
    return 0


def _cmd_report(args):
    rows = []
    for path in args.inputs:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != list(CSV_COLUMNS):
                raise SystemExit(f"{path}: unexpected columns {reader.fieldnames}")
            rows.extend(reader)
    os.makedirs(args.out, exist_ok=True)
    merged = os.path.join(args.out, "merged.csv")
    with open(merged, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS))
        writer.writeheader()
        writer.writerows(rows)

    groups = {}
    for row in rows:
        key = f"d1={row['d1']},d2={row['d2']},r={row['r']},alpha={row['alpha']},prior={row['prior']}"
        groups.setdefault(key, {}).setdefault(int(row["n"]), []).append(
            float(row["post_avg_frob_sq"])
        )
    slopes = {}
    for key, by_n in groups.items():
        ns = sorted(by_n)
        medians = [float(np.median(by_n[n])) for n in ns]
        entry = {"n_values": ns, "median_post_avg_frob_sq": medians}
        if len(ns) >= 2:
            entry["fit"] = fit_log_log_slope(ns, medians)
        slopes[key] = entry
    _write_json({"groups": slopes, "n_rows": len(rows)}, os.path.join(args.out, "summary.json"))
    print(f"wrote {merged} and summary.json to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bitmc",
        description="1-bit matrix completion via tempered posteriors: experiments and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate truth/pi/data files for one config")
    sim.add_argument("--config", required=True, help="flat key=value config file")
    sim.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="run one chain on an observation file, emit the mean")
    fit.add_argument("--config", required=True)
    fit.add_argument("--data", required=True, help="observation CSV (header i,j,y)")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=_cmd_fit)

    ev = sub.add_parser("evaluate", help="exact divergences between two matrix files")
    ev.add_argument("--matrix-a", required=True)
    ev.add_argument("--matrix-b", required=True)
    ev.add_argument("--pi", default=None, help="sampling distribution CSV (default uniform)")
    ev.add_argument("--alpha", type=float, default=0.5, help="Renyi order in (0, 1)")
    ev.add_argument("--out", default=None, help="write evaluate.csv here instead of stdout")
    ev.set_defaults(func=_cmd_evaluate)

    sw = sub.add_parser("sweep", help="replicated grid over n (and rank), with slope fits")
    sw.add_argument("--config", required=True)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(func=_cmd_sweep)

    rp = sub.add_parser("report", help="merge prior report.csv files and refit slopes")
    rp.add_argument("inputs", nargs="+", help="report.csv files from earlier runs")
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

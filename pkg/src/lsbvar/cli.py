"""Command line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``postprocess``,
``prior-check``, ``elicit`` and ``run`` (LSB versus DP comparison on a
simulated scenario).  Exit codes: 0 success, 1 usage error, 2 data error,
3 sampler failure.

Run configuration files are JSON objects with two optional sections::

    {"hyperparams": {"H": 25, "lam": 0.1, "Sigma_alpha": 1.0, ...},
     "sampler": {"n_iter": 20000, "burn_in": 10000, "thin": 10, "seed": 1}}

Hyperparameter matrices are row-major number lists; a bare number ``s``
stands for ``s * I``.  Omitted keys take the defaults of
:meth:`lsbvar.model.ModelHyperparams.default`.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from . import postprocess as pp
from .data import DataError, Partition, read_long_csv, write_long_csv
from .gibbs import SamplerConfig, SamplerError, make_rng, run_chain
from .model import ModelHyperparams
from .priors import elicit_hyperparams, prior_cluster_monte_carlo
from .simulation import (ScenarioSpec, generate_scenario, make_ins_split,
                         time_covariate)
from .store import SampleStore

log = logging.getLogger("lsbvar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SAMPLER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- config handling ----------------------------------------------------------

_SAMPLER_KEYS = {"n_iter": int, "burn_in": int, "thin": int, "seed": int,
                 "prior": str, "dp_mass": float, "checkpoint_every": int,
                 "record_loglik": bool}


def load_run_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: top level must be an object")
    return cfg


def sampler_config(section, **overrides):
    section = dict(section or {})
    for key, val in overrides.items():
        if val is not None:
            section[key] = val
    kwargs = {}
    for key, val in section.items():
        if key not in _SAMPLER_KEYS:
            raise UsageError(f"sampler.{key}: unknown field")
        typ = _SAMPLER_KEYS[key]
        if typ in (int, float) and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise UsageError(f"sampler.{key}: expected {typ.__name__}, got {val!r}")
        if typ is int and float(val) != int(val):
            raise UsageError(f"sampler.{key}: expected int, got {val!r}")
        kwargs[key] = typ(val)
    try:
        return SamplerConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(f"sampler: {exc}") from exc


def hyperparams_for(ds, section):
    try:
        return ModelHyperparams.from_config(section or {}, k=ds.resp_dim,
                                            p=ds.tv_cov_dim, q=ds.base_cov_dim)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise UsageError(f"hyperparams: {exc}") from exc


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --- fitting --------------------------------------------------------------------

def _chain_job(args):
    ds, hp, config, chain, ckpt_dir, resume = args
    return run_chain(ds, hp, config, chain=chain, checkpoint_dir=ckpt_dir, resume=resume)


def fit_run(ds, hp, config, out, chains=1, resume=False, workers=None):
    """Fit ``chains`` chains and write a self-describing run directory."""
    os.makedirs(out, exist_ok=True)
    t0 = time.time()
    jobs = [(ds, hp, config, c, os.path.join(out, f"chain_{c}"), resume)
            for c in range(chains)]
    if chains > 1 and (workers is None or workers > 1):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            stores = list(pool.map(_chain_job, jobs))
    else:
        stores = [_chain_job(j) for j in jobs]
    artifacts = {}
    for c, store in enumerate(stores):
        d = os.path.join(out, f"chain_{c}")
        store.save(os.path.join(d, "samples"))
        ckpt = os.path.join(d, "checkpoint")
        if os.path.isdir(ckpt):
            shutil.rmtree(ckpt)
        artifacts[f"chain_{c}"] = os.path.relpath(os.path.join(d, "samples"), out)
    write_long_csv(ds, os.path.join(out, "data.csv"))
    hp.save(os.path.join(out, "hyperparams.json"))
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "seed": config.seed,
        "chains": chains,
        "hyperparams": hp.to_config(),
        "dataset_fingerprint": ds.fingerprint(),
        "artifacts": dict(artifacts, data="data.csv", hyperparams="hyperparams.json"),
        "wall_seconds": time.time() - t0,
        "chain_wall_seconds": [s.meta.get("wall_seconds") for s in stores],
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return stores


def load_run(run_dir):
    """``(manifest, dataset, pooled store)`` of a run directory."""
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    ds = read_long_csv(os.path.join(run_dir, manifest["artifacts"]["data"]))
    stores = [SampleStore.load(os.path.join(run_dir, manifest["artifacts"][f"chain_{c}"]))
              for c in range(manifest["chains"])]
    return manifest, ds, SampleStore.concatenate(stores)


# --- subcommands ----------------------------------------------------------------

def _write_partition(path, ids, labels, header="cluster"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", header])
        for sid, lab in zip(ids, labels):
            w.writerow([sid, int(lab) + 1])


def _read_partition(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return {r[0]: int(r[1]) for r in rows[1:]}


def cmd_simulate(args):
    spec = ScenarioSpec(args.scenario, n_subjects=args.n_subjects, horizon=args.horizon,
                        zero_second_phi=args.zero_second_phi,
                        covariate_means=(np.loadtxt(args.covariate_means, delimiter=",", ndmin=2)
                                         if args.covariate_means else None),
                        allow_default_covariates=args.default_covariates)
    rng = make_rng(args.seed, 0, "simulate")
    sim = generate_scenario(spec, rng)
    test = generate_scenario(replace(spec, n_subjects=args.n_test), rng)
    os.makedirs(args.out, exist_ok=True)
    write_long_csv(sim.data, os.path.join(args.out, "data.csv"))
    _write_partition(os.path.join(args.out, "truth.csv"), sim.data.subject_ids, sim.components)
    write_long_csv(test.data, os.path.join(args.out, "test.csv"))
    _write_partition(os.path.join(args.out, "test_truth.csv"), test.data.subject_ids,
                     test.components)
    if args.ins:
        ins = make_ins_split(sim.data, rng, n_truncate=args.ins, t_cut=args.t_cut)
        write_long_csv(ins.data, os.path.join(args.out, "ins_data.csv"))
        with open(os.path.join(args.out, "ins_heldout.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "t"] + [f"y_{j + 1}" for j in range(3)])
            for i, tail in zip(ins.subjects, ins.tails):
                for t, row in enumerate(tail, start=args.t_cut + 1):
                    w.writerow([sim.data.subject_ids[i], t] + [repr(float(v)) for v in row])
    return EXIT_OK


def cmd_fit(args):
    ds = read_long_csv(args.data)
    cfg = load_run_config(args.config)
    config = sampler_config(cfg.get("sampler"), prior=args.prior, seed=args.seed,
                            n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin)
    hp = hyperparams_for(ds, cfg.get("hyperparams"))
    fit_run(ds, hp, config, args.out, chains=args.chains, resume=args.resume)
    return EXIT_OK


def _time_cov(ds, steps, start):
    """Covariates for the predicted times ``start+1..start+steps``.

    The command line tool only knows the ``sqrt(t)`` time covariate of the
    simulated scenarios; use :mod:`lsbvar.postprocess` directly for other
    designs.
    """
    if ds.tv_cov_dim == 0:
        return None
    if ds.tv_cov_dim != 1:
        raise UsageError("predict supports a single sqrt(t) time covariate only")
    return time_covariate(start + steps)[start:]


def cmd_predict(args):
    manifest, ds, store = load_run(args.run)
    rng = make_rng(manifest["seed"], 0, "predict")
    rows = []
    if args.mode == "oos":
        if not args.test:
            raise UsageError("--test is required for --mode oos")
        test = read_long_csv(args.test)
        for i in range(test.n_subjects):
            s = test.subject_slice(i)
            T = args.horizon or int(test.lengths[i])
            x = _time_cov(test, T, 0)
            draws = pp.predict_oos(store, test.z[i], test.y[s][0], T, rng, x=x)
            rows += _quantile_rows(test.subject_ids[i], draws, 1)
    else:
        for i in range(ds.n_subjects):
            t_cut = args.t_cut or int(ds.lengths[i])
            if t_cut > ds.lengths[i] or not ds.observed[ds.subject_slice(i)][t_cut - 1].all():
                continue
            draws = pp.predict_ins(store, ds, i, t_cut, args.steps, rng,
                                   x_future=_time_cov(ds, args.steps, t_cut))
            rows += _quantile_rows(ds.subject_ids[i], draws, t_cut + 1)
    out = args.out or os.path.join(args.run, f"predict_{args.mode}.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "time", "response", "q05", "q50", "q95", "mean"])
        w.writerows(rows)
    return EXIT_OK


def _quantile_rows(sid, draws, t0):
    q = pp.predictive_quantiles(draws)
    m = draws.mean(axis=0)
    rows = []
    for t in range(draws.shape[1]):
        for j in range(draws.shape[2]):
            rows.append([sid, t0 + t, j + 1] + [repr(float(q[a, t, j])) for a in range(3)]
                        + [repr(float(m[t, j]))])
    return rows


def cmd_postprocess(args):
    manifest, ds, store = load_run(args.run)
    est = pp.binder_point_estimate(store.alloc)
    _write_partition(os.path.join(args.run, "partition.csv"), ds.subject_ids, est.labels)
    counts = pp.cluster_count_posterior(store.alloc)
    with open(os.path.join(args.run, "cluster_counts.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_clusters", "frequency"])
        w.writerows(sorted(counts.items()))
    report = {"n_samples": len(store), "n_clusters_estimate": est.n_clusters,
              "cluster_count_posterior": {str(k): v for k, v in counts.items()}}
    if store.meta.get("has_loglik", True):
        report["waic"] = pp.waic(store.loglik).to_dict()
    if args.truth:
        truth = _read_partition(args.truth)
        labels = [truth[sid] for sid in ds.subject_ids]
        report["ari"] = pp.adjusted_rand_index(est, Partition(labels))
    with open(os.path.join(args.run, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    return EXIT_OK


def cmd_prior_check(args):
    ds = read_long_csv(args.data)
    grid = [float(v) for v in args.sigma_alpha_grid.split(",")]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["sigma_alpha_sq", "draw", "n_clusters", "max_fraction"])
        for g, s2 in enumerate(grid):
            rng = make_rng(args.seed, g, "postprocess")
            n_cl, frac = prior_cluster_monte_carlo(ds.z, args.H, s2, args.draws, seed=rng)
            for d in range(args.draws):
                w.writerow([s2, d, int(n_cl[d]), repr(float(frac[d]))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_elicit(args):
    ds = read_long_csv(args.data)
    try:
        res = elicit_hyperparams(ds)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    hp = res.apply(ModelHyperparams.default(ds.resp_dim, ds.tv_cov_dim, ds.base_cov_dim,
                                            H=args.H, sigma_alpha_sq=args.sigma_alpha_sq))
    text = json.dumps({"hyperparams": hp.to_config()}, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return EXIT_OK


def run_experiment(config_path, out=None, workers=None):
    """LSB versus DP on one simulated scenario.

    The config holds ``scenario`` (1, 2 or 3), ``seed``, optional
    ``n_test``, ``n_truncate``, ``t_cut``, ``hyperparams`` and ``sampler``
    sections, and ``out``.  Writes ``table.csv``/``table.json`` with rows
    OOS, INS, ARI and WAIC and one column per prior, plus a run manifest.
    """
    cfg = load_run_config(config_path)
    allowed = {"scenario", "seed", "n_subjects", "horizon", "n_test", "n_truncate",
               "t_cut", "hyperparams", "sampler", "out", "priors", "zero_second_phi",
               "allow_default_covariates"}
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown config fields: {sorted(unknown)}")
    seed = int(cfg.get("seed", 0))
    priors = cfg.get("priors", ["lsb", "dp"])
    configs = {p: sampler_config(cfg.get("sampler"), prior=p, seed=seed) for p in priors}
    out = out or cfg.get("out")
    if not out:
        raise UsageError("no output directory (config field 'out' or --out)")
    spec = ScenarioSpec(int(cfg.get("scenario", 1)), n_subjects=int(cfg.get("n_subjects", 300)),
                        horizon=int(cfg.get("horizon", 10)),
                        zero_second_phi=bool(cfg.get("zero_second_phi", False)),
                        allow_default_covariates=bool(cfg.get("allow_default_covariates", False)))
    rng = make_rng(seed, 0, "simulate")
    sim = generate_scenario(spec, rng)
    test = generate_scenario(replace(spec, n_subjects=int(cfg.get("n_test", 300))), rng)
    t_cut = int(cfg.get("t_cut", 5))
    ins = make_ins_split(sim.data, rng, n_truncate=int(cfg.get("n_truncate", 100)), t_cut=t_cut)
    hp = hyperparams_for(sim.data, cfg.get("hyperparams"))
    os.makedirs(out, exist_ok=True)
    write_long_csv(sim.data, os.path.join(out, "data.csv"))
    _write_partition(os.path.join(out, "truth.csv"), sim.data.subject_ids, sim.components)
    table = {}
    for prior, config in configs.items():
        full = fit_run(sim.data, hp, config, os.path.join(out, prior, "full"), workers=workers)[0]
        cut = fit_run(ins.data, hp, config, os.path.join(out, prior, "ins"), workers=workers)[0]
        prng = make_rng(seed, 0, "predict")
        oos = pp.oos_mse(full, test.data, prng)
        tail_x = time_covariate(spec.horizon)[t_cut:]
        insm = pp.ins_mse(cut, ins.data, ins.subjects, ins.tails, t_cut, prng, x_future=tail_x)
        ari = pp.adjusted_rand_index(pp.binder_point_estimate(full.alloc), sim.true_partition)
        table[prior] = {"OOS": oos.mean, "OOS_sd": oos.sd, "INS": insm.mean, "INS_sd": insm.sd,
                        "ARI": ari, "WAIC": pp.waic(full.loglik).waic}
    with open(os.path.join(out, "table.json"), "w") as fh:
        json.dump(table, fh, indent=1, sort_keys=True)
    with open(os.path.join(out, "table.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric"] + [p.upper() for p in priors])
        for metric in ("OOS", "INS", "ARI", "WAIC"):
            w.writerow([metric] + [repr(table[p][metric]) for p in priors])
    manifest = {"version": __version__, "config": cfg, "seed": seed,
                "config_sha256": _sha256(config_path) if config_path else None,
                "dataset_fingerprint": sim.data.fingerprint(),
                "artifacts": {"table": "table.csv", "data": "data.csv", "truth": "truth.csv",
                              **{p: p for p in priors}}}
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return table


def cmd_run(args):
    run_experiment(args.config, out=args.out, workers=args.workers)
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="lsbvar", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-subjects", type=int, default=300)
    p.add_argument("--n-test", type=int, default=300)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--zero-second-phi", action="store_true")
    p.add_argument("--covariate-means", help="CSV with one row of covariate means per component")
    p.add_argument("--default-covariates", action="store_true",
                   help="use the built-in overlapping stand-in for scenario 2")
    p.add_argument("--ins", type=int, default=0, metavar="N",
                   help="also write an in-sample split truncating N subjects")
    p.add_argument("--t-cut", type=int, default=5)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--prior", choices=("lsb", "dp"))
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-iter", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive quantiles from a fitted run")
    p.add_argument("--run", required=True)
    p.add_argument("--mode", choices=("oos", "ins"), required=True)
    p.add_argument("--test", help="long CSV of new subjects (oos)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--t-cut", type=int, help="last conditioning time (ins); default T_i")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("postprocess", help="partition, cluster counts and WAIC")
    p.add_argument("--run", required=True)
    p.add_argument("--truth", help="truth partition CSV for the ARI")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("prior-check", help="prior number of clusters over a sigma_alpha^2 grid")
    p.add_argument("--data", required=True)
    p.add_argument("--sigma-alpha-grid", default="0.1,1,5,10,100")
    p.add_argument("--H", type=int, default=50)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prior_check)

    p = sub.add_parser("elicit", help="match hyperparameters to a plug-in VAR(1) fit")
    p.add_argument("--data", required=True)
    p.add_argument("--H", type=int, default=50)
    p.add_argument("--sigma-alpha-sq", type=float, default=5.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("run", help="LSB versus DP comparison on a simulated scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lsbvar: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"lsbvar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"lsbvar: sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())

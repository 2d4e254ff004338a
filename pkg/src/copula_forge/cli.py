"""Command-line front end: fitting, sampling, evaluation, synthesis, and
runtime benchmarks.

Every command writes a manifest (full configuration plus seeds) next to its
primary output so any run can be reproduced exactly.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .ac import AcModel
from .data_io import (
    load_csv,
    load_model,
    rank_normalize,
    save_csv,
    save_model,
    synth_flat,
    synth_hac,
)
from .errors import (
    CopulaForgeError,
    DomainError,
    IngestionError,
    ModelFormatError,
    ParameterError,
    SolverError,
)
from .families import ParametricGenerator
from .hac import HacModel
from .laplace import from_net
from .stats import cvm_statistic, ks_uniform, pairwise_kendall
from .training import TrainConfig, fit_cvm, fit_gan, fit_hac, fit_mle, nll

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _threads(args):
    n = args.threads or os.environ.get("COPULA_FORGE_THREADS")
    if n:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
        ):
            os.environ[var] = str(n)


def _write_manifest(out_path, args, extra=None):
    manifest = {
        "tool": "copula-forge",
        "version": __version__,
        "argv": sys.argv[1:],
        "config": {
            k: v for k, v in vars(args).items() if k != "func" and v is not None
        },
    }
    if extra:
        manifest.update(extra)
    path = str(out_path) + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _parse_structure(text):
    try:
        dims = [int(p) for p in text.split(",")]
    except ValueError:
        raise ParameterError(f"bad structure {text!r}; expected e.g. 2,2")
    if not dims or any(d < 1 for d in dims):
        raise ParameterError("structure dims must be positive integers")
    return dims


def _parse_children(text):
    """family:theta:dim triples, comma separated."""
    out = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise ParameterError(
                f"bad child spec {part!r}; expected family:theta:dim"
            )
        out.append((bits[0], float(bits[1]), int(bits[2])))
    return out


def _train_config(args, method):
    overrides = {}
    for attr, key in [
        ("epochs", "epochs"),
        ("batch", "batch_size"),
        ("lr", "lr"),
        ("l_train", "l_train"),
        ("l_eval", "l_eval"),
        ("seed", "seed"),
    ]:
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    return TrainConfig.for_method(method, **overrides)


def _load_pseudo_obs(path):
    _, raw = load_csv(path)
    u = np.asarray(raw, dtype=float)
    if np.all((u > 0) & (u < 1)):
        return u
    return rank_normalize(raw)


def cmd_fit(args):
    u = _load_pseudo_obs(args.data)
    if args.structure:
        dims = _parse_structure(args.structure)
        config = _train_config(args, "mle")
        model, report = fit_hac(u, dims, outer_kind=args.outer, config=config)
        l_eval = config.l_eval
    else:
        config = _train_config(args, args.method)
        if args.method == "mle":
            net, report = fit_mle(u, config=config)
        elif args.method == "cvm":
            net, report = fit_cvm(u, config=config)
        else:
            net, _, report = fit_gan(u, config=config)
        eg = from_net(
            net, config.l_eval, np.random.default_rng(config.seed + 7)
        )
        eg.source_net = net
        model = AcModel(eg, u.shape[1])
        l_eval = config.l_eval
    save_model(args.out, model, l_eval=l_eval)
    report_doc = {
        "method": report.method,
        "epochs_run": report.epochs_run,
        "best_epoch": report.best_epoch,
        "best_val": report.best_val,
        "final_train_nll": report.final_train_nll,
        "n_solver_failures": report.n_solver_failures,
        "n_clamped": report.n_clamped,
        "wall_time": report.wall_time,
        "warnings": report.warnings,
        "trace": report.trace,
    }
    with open(str(args.out) + ".report.json", "w") as fh:
        json.dump(report_doc, fh, default=float)
    _write_manifest(args.out, args)
    print(f"fit complete: {args.out} (train NLL {report.final_train_nll:.4f})")


def _resample_model(model, l_eval, seed):
    """Refresh the frozen latent batch from the stored net, if present."""
    rng = np.random.default_rng(seed)
    if isinstance(model, AcModel):
        net = getattr(model.gen, "source_net", None)
        if net is not None:
            return AcModel(from_net(net, l_eval, rng), model.dim)
    return model


def cmd_sample(args):
    model, l_eval = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    u = model.sample(args.n, rng)
    save_csv(args.out, u)
    _write_manifest(args.out, args)
    print(f"wrote {args.n} samples to {args.out}")


def cmd_eval(args):
    model, l_eval = load_model(args.model)
    u = _load_pseudo_obs(args.data)
    result = {"n": u.shape[0], "dim": u.shape[1]}
    if isinstance(model, AcModel):
        result["nll"] = nll(model, u, clip=True)
    else:
        result["child_nll"] = [
            (
                float(-np.mean(model.child_log_density(j, u[:, sl], clip=True)))
                if sl.stop - sl.start >= 2
                else None
            )
            for j, sl in enumerate(model.child_slices())
        ]
    result["cvm"] = cvm_statistic(model, u)
    result["ks"] = [list(ks_uniform(u[:, j])) for j in range(u.shape[1])]
    result["kendall"] = pairwise_kendall(u).tolist()
    text = json.dumps(result, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        _write_manifest(args.out, args)
    print(text)


def cmd_synth(args):
    if args.children:
        family, _, theta = args.outer.partition(":")
        if not theta:
            raise ParameterError("synth needs --outer family:theta")
        u = synth_hac(
            (family, float(theta)),
            _parse_children(args.children),
            args.n,
            args.seed,
        )
    else:
        if args.family is None or args.theta is None:
            raise ParameterError("synth needs --family and --theta")
        u = synth_flat(args.family, args.theta, args.dim, args.n, args.seed)
    save_csv(args.out, u)
    _write_manifest(args.out, args)
    print(f"wrote {args.n} x {u.shape[1]} synthetic samples to {args.out}")


def cmd_bench_density(args):
    dims = _parse_structure(args.dims)
    rows = []
    for d in dims:
        times = []
        model = None
        for rep in range(3):
            rng = np.random.default_rng(args.seed + rep)
            from .mlp import GeneratorNet

            net = GeneratorNet.init(seed=args.seed)
            model = AcModel(from_net(net, args.l_eval, rng), d)
            u = model.sample(args.n, rng) if args.n else np.zeros((0, d))
            if args.n == 0:
                times.append(0.0)
                continue
            t0 = time.perf_counter()
            model.log_density(u, clip=True)
            times.append(time.perf_counter() - t0)
        rows.append([d, float(np.median(times))])
    save_csv(args.out, np.asarray(rows), header=["dim", "seconds"])
    _write_manifest(args.out, args)
    for d, t in rows:
        print(f"d={int(d):3d}  {t:.4f} s")


def cmd_bench_sampling(args):
    model, l_eval = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    u = model.sample(args.n, rng)
    elapsed = time.perf_counter() - t0
    assert u.shape[0] == args.n
    print(f"{args.n} samples in {elapsed:.4f} s")
    if args.out:
        save_csv(args.out, np.asarray([[args.n, elapsed]]),
                 header=["n", "seconds"])
        _write_manifest(args.out, args)


def cmd_latent_hist(args):
    model, l_eval = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    if isinstance(model, AcModel):
        net = getattr(model.gen, "source_net", None)
        if net is not None:
            draws = net.sample_batch(args.n_samples, rng).m
        elif hasattr(model.gen, "m"):
            draws = rng.choice(model.gen.m, size=args.n_samples, replace=True)
        else:
            gen = model.gen
            draws = gen.sample_latent(rng, args.n_samples)
    else:
        raise ParameterError("latent-hist expects a flat model")
    if args.family:
        # the copula fixes the latent law only up to scale (M -> cM leaves
        # phi(x/c) the same copula); pin the gauge against the oracle
        from .laplace import EmpiricalGenerator

        oracle_gen = ParametricGenerator(args.family, args.theta)
        draws = draws * float(
            EmpiricalGenerator(draws).phi_inv(float(oracle_gen.phi(1.0)))
        )
    hist, edges = np.histogram(draws, bins=args.bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    cols = [centers, hist]
    header = ["bin_center", "density"]
    extra = {}
    if args.family:
        oracle = ParametricGenerator(args.family, args.theta)
        oracle_draws = oracle.sample_latent(rng, args.n_samples)
        from scipy.stats import wasserstein_distance

        extra["wasserstein_to_oracle"] = float(
            wasserstein_distance(draws, oracle_draws)
        )
        o_hist, _ = np.histogram(oracle_draws, bins=edges, density=True)
        cols.append(o_hist)
        header.append("oracle_density")
        print(f"1-Wasserstein to oracle: {extra['wasserstein_to_oracle']:.4f}")
    save_csv(args.out, np.column_stack(cols), header=header)
    _write_manifest(args.out, args, extra=extra)


def build_parser():
    p = argparse.ArgumentParser(
        prog="copula-forge",
        description="Learn, evaluate and sample generative Archimedean "
        "and hierarchical Archimedean copulas.",
    )
    p.add_argument("--threads", type=int, help="worker thread cap")
    sub = p.add_subparsers(dest="command", required=True)

    def common_train(sp):
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--L-train", dest="l_train", type=int)
        sp.add_argument("--L-eval", dest="l_eval", type=int)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("fit", help="fit a model to pseudo-observations")
    sp.add_argument("--data", required=True)
    sp.add_argument("--method", choices=["mle", "cvm", "gan"], default="mle")
    sp.add_argument("--structure", help="HAC child dims, e.g. 2,2")
    sp.add_argument("--outer", default="gen",
                    help="HAC outer: gen or family:theta")
    sp.add_argument("--out", required=True)
    common_train(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sample", help="draw samples from a model file")
    sp.add_argument("--model", required=True)
    sp.add_argument("-n", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("eval", help="score a model against data")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("synth", help="generate synthetic ground truth")
    sp.add_argument("--family")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--outer", help="HAC outer family:theta")
    sp.add_argument("--children", help="family:theta:dim, comma separated")
    sp.add_argument("-n", type=int, default=3000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("bench-density", help="log-density wall time vs d")
    sp.add_argument("--dims", default="2,5,10,15,20")
    sp.add_argument("-n", type=int, default=3000)
    sp.add_argument("--L-eval", dest="l_eval", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench_density)

    sp = sub.add_parser("bench-sampling", help="sampling wall time")
    sp.add_argument("--model", required=True)
    sp.add_argument("-n", type=int, default=3000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bench_sampling)

    sp = sub.add_parser(
        "latent-hist", help="histogram of latent generator draws"
    )
    sp.add_argument("--model", required=True)
    sp.add_argument("--n-samples", type=int, default=10000)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--family", help="oracle family for comparison")
    sp.add_argument("--theta", type=float)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_latent_hist)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _threads(args)
        args.func(args)
    except SolverError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (IngestionError, ModelFormatError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, ParameterError, CopulaForgeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

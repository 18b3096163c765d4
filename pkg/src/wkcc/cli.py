"""Command-line front end: ``wkcc <subcommand> ...``.

Exit codes: 0 success, 2 bad arguments or specification, 3 data errors,
4 solver failures.  Each failure prints one diagnostic line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, SolverFailure, WkccError
from .io import IoError, fmt

log = logging.getLogger("wkcc")

EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 2, 3, 4


class UsageError(Exception):
    pass


# --- argument helpers ---------------------------------------------------------------


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _omega(text):
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError(f"expected 'a,b' with a < b, got {text!r}")
    return tuple(vals)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _M(text):
    return None if text == "auto" else _positive_int(text)


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("WKCC_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"WKCC_THREADS must be an integer, got {env!r}") from None
    return 1


def _add_common(p, grid=True):
    if grid:
        p.add_argument("--m", type=_positive_int, default=1000, help="number of quantile levels (default 1000)")
        p.add_argument("--omega", type=_omega, default=None, help="support a,b (default: range of the data)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None, help="worker count (env WKCC_THREADS)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wkcc", description="Wasserstein k-centres clustering of distributions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("cluster", help="cluster distributions from a samples or quantiles CSV")
    p.add_argument("--input", required=True, help="samples CSV (id,value) or quantiles CSV (id,q1..qm)")
    p.add_argument("--K", type=_positive_int, default=2)
    p.add_argument("--scan-k", type=str, default=None, help="comma-separated K values; pick K by silhouette")
    p.add_argument("--method", choices=("kcdc", "cpca", "wkm", "wkm-trim"), default="kcdc")
    p.add_argument("--delta", type=float, default=None, help="trimming constant for wkm-trim")
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--M", type=_M, default=None, help="geodesic dimension (default: chosen by --tau)")
    p.add_argument("--no-loo", action="store_true", help="one fit per cluster instead of leave-one-out")
    p.add_argument("--max-iter", type=_nonneg_int, default=20)
    p.add_argument("--reference", choices=("uniform", "frechet"), default="uniform")
    p.add_argument("--truth", default=None, help="labels CSV (id,label) for cRate / aRand")
    p.add_argument("--labels-out", default=None, help="labels CSV path (default: next to --out)")
    p.add_argument("--out", required=True, help="result JSON path")
    _add_common(p)

    p = sub.add_parser("simulate", help="run the simulation benchmark")
    p.add_argument("--design", default="all", help="I..VIII, comma list, or 'all'")
    p.add_argument("--methods", default=",".join(_sim_methods()))
    p.add_argument("--reps", type=_nonneg_int, default=25)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--N", type=_positive_int, default=2000)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--no-loo", action="store_true")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identity)")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("theory", help="Monte-Carlo check of the correct-assignment probabilities")
    p.add_argument("--case", choices=("common-mean", "common-cov"), required=True)
    p.add_argument("--variances", type=_floats, default=[3.0, 1.0], help="non-increasing Var(xi_j)")
    p.add_argument("--ell", type=int, default=2, help="1-based index shared with the other cluster's first direction")
    p.add_argument("--delta-m", type=_floats, default=None, help="mean difference in direction coordinates")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON path (default: stdout)")

    p = sub.add_parser("gpca", help="geodesic PCA: EV curve, directions and modes of variation")
    p.add_argument("--input", required=True)
    p.add_argument("--M", type=_M, default=None, help="integer or 'auto' (default auto)")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--alphas", type=_floats, default=[-1.0, 0.0, 1.0])
    p.add_argument("--reference", choices=("uniform", "frechet"), default="uniform")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    p = sub.add_parser("gauss", help="k-centres clustering of covariance matrices")
    p.add_argument("--input", required=True, help="multivariate samples CSV (id,x1..xd)")
    p.add_argument("--K", type=_positive_int, default=2)
    p.add_argument("--M", type=_M, default=None)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--no-loo", action="store_true")
    p.add_argument("--max-iter", type=_nonneg_int, default=20)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", required=True)
    _add_common(p, grid=False)

    p = sub.add_parser("demo", help="write a small separable demo dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _sim_methods():
    from .simulation import METHODS

    return METHODS


# --- shared plumbing ------------------------------------------------------------------


def _detect_format(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not header:
        from .errors import MissingHeader

        raise MissingHeader("empty file", line=1)
    cols = [h.strip().lower() for h in header]
    return "samples" if cols[:2] == ["id", "value"] and len(cols) == 2 else "quantiles"


def load_distributions(path, m, omega):
    """Read samples or quantiles; returns (ids, distributions, grid, info)."""
    from .geometry import Grid
    from .io import empirical_quantile_distribution, quantile_header_width, read_quantiles_csv, read_samples_csv

    kind = _detect_format(path)
    info = {"format": kind}
    if kind == "samples":
        sets = read_samples_csv(path)
        if not sets:
            from .errors import EmptyInput

            raise EmptyInput(f"{path} has no samples")
        if omega is None:
            lo = min(float(s.values.min()) for s in sets)
            hi = max(float(s.values.max()) for s in sets)
            omega = (lo, hi if hi > lo else lo + 1.0)
        grid = Grid(m, *omega)
        dists, clamped = [], 0
        for s in sets:
            d, c = empirical_quantile_distribution(s, grid, return_clamped=True)
            dists.append(d)
            clamped += c
        info["clamped"] = clamped
        ids = [s.id for s in sets]
    else:
        width = quantile_header_width(path)
        if omega is None:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))[1:]
            vals = [float(v) for r in rows if r for v in r[1:]]
            if not vals:
                from .errors import EmptyInput

                raise EmptyInput(f"{path} has no rows")
            omega = (min(vals), max(vals) if max(vals) > min(vals) else min(vals) + 1.0)
        grid = Grid(width, *omega)
        if m != width and m != 1000:
            log.warning("--m %d ignored: quantile file has %d levels", m, width)
        ids, dists = read_quantiles_csv(path, grid)
    if not dists:
        from .errors import EmptyInput

        raise EmptyInput(f"{path} has no distributions")
    info.update({"m": grid.m, "omega": [grid.omega_lo, grid.omega_hi], "n": len(dists)})
    return ids, dists, grid, info


def _truth_vector(path, ids):
    from .errors import LengthMismatch
    from .io import read_labels_csv

    table = read_labels_csv(path)
    missing = [i for i in ids if i not in table]
    if missing:
        raise LengthMismatch(f"truth file lacks {len(missing)} ids (first: {missing[0]})")
    return np.array([table[i] for i in ids])


def _metrics(labels, truth):
    from .metrics import adjusted_rand_index, correct_classification_rate

    return {"crate": correct_classification_rate(labels, truth), "arand": adjusted_rand_index(labels, truth)}


def _write_json(path, doc):
    from .io import _jsonable

    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --- subcommands --------------------------------------------------------------------------


def _cluster_once(method, dists, K, args, threads):
    from . import clustering as cl
    from .cpca import SolverOptions

    cfg = cl.KcdcConfig(
        K=K,
        tau=args.tau,
        max_outer_iters=args.max_iter,
        loo=not args.no_loo,
        seed=args.seed,
        solver=SolverOptions(eig_starts=1, random_starts=0, seed=args.seed),
        reference=args.reference,
        threads=threads,
    )
    if method in ("kcdc", "cpca"):
        run = cl.kcdc_cluster if method == "kcdc" else cl.cpca_cluster
        state = run(dists, cfg, M=args.M)
        return state.labels, state, cfg
    delta = 0.0 if method == "wkm" else args.delta
    labels = cl.trimmed_wasserstein_kmeans(dists, K, delta, cfg.kmeans, seed=args.seed)
    return labels, None, cfg


def _barycentre_result(dists, labels, K):
    Q = np.stack([d.q for d in dists])
    return {
        "labels": (np.asarray(labels) + 1).tolist(),
        "clusters": [
            {"label": c + 1, "size": int(np.sum(labels == c)), "frechet_mean": Q[labels == c].mean(axis=0)}
            for c in range(K)
            if np.any(labels == c)
        ],
    }


def cmd_cluster(args) -> int:
    from .io import write_labels_csv
    from .metrics import silhouette, wasserstein_distance_matrix

    if args.method == "wkm-trim":
        if args.delta is None:
            raise UsageError("--method wkm-trim requires --delta")
        if not 0.0 <= args.delta < 0.5:
            raise UsageError(f"--delta must lie in [0, 0.5), got {args.delta}")
    if not 0.0 < args.tau < 1.0:
        raise UsageError(f"--tau must lie in (0, 1), got {args.tau}")
    ks = None
    if args.scan_k:
        try:
            ks = sorted({int(v) for v in args.scan_k.split(",") if v.strip()})
        except ValueError:
            raise UsageError(f"--scan-k expects integers, got {args.scan_k!r}") from None
        if not ks or ks[0] < 2:
            raise UsageError("--scan-k values must be >= 2")
    threads = _threads(args)

    ids, dists, grid, info = load_distributions(args.input, args.m, args.omega)
    truth = _truth_vector(args.truth, ids) if args.truth else None

    scan = []
    if ks:
        Dm = wasserstein_distance_matrix(dists)
        best = None
        for K in ks:
            labels, _, _ = _cluster_once(args.method, dists, K, args, threads)
            sil = silhouette(dists, labels, distances=Dm) if len(np.unique(labels)) > 1 else float("nan")
            scan.append({"K": K, "silhouette": sil})
            print(f"K={K} silhouette={sil:.4f}")
            if best is None or sil > best[1]:
                best = (K, sil)
        K = best[0]
    else:
        K = args.K

    labels, state, cfg = _cluster_once(args.method, dists, K, args, threads)
    result = state.to_dict() if state is not None else _barycentre_result(dists, labels, K)
    result["ids"] = ids
    meta = {
        "tool": "wkcc",
        "version": __version__,
        "command": "cluster",
        "method": args.method,
        "input": os.path.basename(args.input),
        "input_info": info,
        "K": K,
        "tau": args.tau,
        "M": getattr(state, "M", None),
        "delta": args.delta if args.method == "wkm-trim" else None,
        "seed": args.seed,
        "config": cfg.as_dict(),
    }
    if scan:
        meta["silhouette_scan"] = scan
    if truth is not None:
        meta["metrics"] = _metrics(labels, truth)
    if len(np.unique(labels)) > 1:
        meta["silhouette"] = silhouette(dists, labels)

    from .io import write_result_json

    write_result_json(result, meta, args.out)
    labels_path = args.labels_out or str(Path(args.out).with_suffix("")) + "_labels.csv"
    write_labels_csv(labels_path, ids, labels)
    summary = f"{args.method}: n={len(ids)} K={K}"
    if meta["M"] is not None:
        summary += f" M={meta['M']}"
    if truth is not None:
        summary += f" cRate={meta['metrics']['crate']:.4f} aRand={meta['metrics']['arand']:.4f}"
    print(summary)
    if args.figures:
        from .plotting import plot_clustered_quantiles

        fig = str(Path(args.out).with_suffix("")) + "_quantiles.png"
        plot_clustered_quantiles(grid.levels, [d.q for d in dists], labels, fig)
    return 0


def cmd_simulate(args) -> int:
    from .clustering import KcdcConfig
    from .simulation import DESIGN_IDS, METHODS, make_design, run_benchmark, summarize, write_benchmark

    if args.design.strip().lower() == "all":
        designs = list(DESIGN_IDS)
    else:
        designs = [make_design(d).id for d in args.design.split(",") if d.strip()]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for meth in methods:
        if meth not in METHODS:
            raise UsageError(f"unknown method {meth!r}; choose from {','.join(METHODS)}")
    if not 0.0 < args.tau < 1.0:
        raise UsageError(f"--tau must lie in (0, 1), got {args.tau}")
    cfg = KcdcConfig(K=2, tau=args.tau, loo=not args.no_loo, seed=args.seed)
    rows = run_benchmark(
        designs, methods, args.reps, args.n, args.N, args.seed, cfg, args.m, workers=_threads(args), timing=args.timing
    )
    paths = write_benchmark(rows, args.out, designs, methods)
    _write_json(
        Path(args.out) / "metadata.json",
        {
            "tool": "wkcc",
            "version": __version__,
            "command": "simulate",
            "designs": designs,
            "methods": methods,
            "reps": args.reps,
            "n": args.n,
            "N": args.N,
            "m": args.m,
            "seed": args.seed,
            "config": cfg.as_dict(),
        },
    )
    for s in summarize(rows, designs, methods):
        print(f"{s['design']:>5} {s['method']:>9}  cRate={s['crate']:.3f}  aRand={s['arand']:.3f}")
    if args.figures and rows:
        from .plotting import plot_benchmark

        plot_benchmark(summarize(rows, designs, methods), Path(args.out) / "table3.png")
    print(f"wrote {paths['summary']}")
    return 0


def cmd_theory(args) -> int:
    from .theory import TheorySpec, theory_mc_common_cov, theory_mc_common_mean

    if args.draws < 1:
        raise UsageError("--draws must be positive")
    if args.case == "common-mean":
        spec = TheorySpec(tuple(args.variances), ell=args.ell, draws=args.draws, seed=args.seed)
        res = theory_mc_common_mean(spec)
        ok = abs(res.mc - res.reference) <= 3 * res.se
    else:
        dm = args.delta_m
        if dm is None:
            raise UsageError("--case common-cov requires --delta-m")
        spec = TheorySpec(tuple(args.variances), ell=1, delta_m=tuple(dm), draws=args.draws, seed=args.seed)
        res = theory_mc_common_cov(spec)
        ok = res.mc >= res.reference - 3 * res.se
    doc = res.to_dict()
    doc["pass"] = bool(ok)
    doc["seed"] = args.seed
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_gpca(args) -> int:
    from .clustering import KcdcConfig, reference_for, select_dimension
    from .cpca import SolverOptions, fit_principal_geodesic
    from .geometry import exp_map
    from .io import write_quantiles_csv
    from .simulation import mode_of_variation_export

    if not 0.0 < args.tau < 1.0:
        raise UsageError(f"--tau must lie in (0, 1), got {args.tau}")
    ids, dists, grid, info = load_distributions(args.input, args.m, args.omega)
    opts = SolverOptions(seed=args.seed)
    ref = reference_for(dists, KcdcConfig(reference=args.reference))
    M = args.M if args.M is not None else select_dimension(ref, dists, args.tau, opts)
    pg = fit_principal_geodesic(ref, dists, M, opts)
    model = pg.model
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ev.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "ev"])
        for k, v in enumerate(model.ev, start=1):
            w.writerow([k, fmt(v)])
    # Exp of the mean tangent vector, i.e. the alpha = 0 mode
    write_quantiles_csv(out / "mean.csv", ["mean"], [exp_map(ref, model.mean)])
    with open(out / "directions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"v{k}" for k in range(1, grid.m + 1)])
        for j, d in enumerate(model.directions, start=1):
            w.writerow([f"phi{j}"] + [fmt(v) for v in d.v])
    with open(out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"xi{j}" for j in range(1, M + 1)])
        for ident, row in zip(ids, model.scores):
            w.writerow([ident] + [fmt(v) for v in row])
    modes = mode_of_variation_export(pg, args.alphas)
    write_quantiles_csv(out / "modes.csv", [f"alpha={a:g}" for a in args.alphas], modes)
    _write_json(
        out / "metadata.json",
        {
            "tool": "wkcc",
            "version": __version__,
            "command": "gpca",
            "input": os.path.basename(args.input),
            "input_info": info,
            "M": M,
            "tau": args.tau,
            "alphas": args.alphas,
            "certified": list(model.certified),
            "solver": opts.as_dict(),
        },
    )
    print(f"M = {M}  EV = {model.ev[-1]:.4f}")
    if args.figures:
        from .plotting import plot_ev_curve, plot_modes

        plot_ev_curve(model.ev, out / "ev.png", tau=args.tau)
        plot_modes(grid.levels, [d.q for d in modes], args.alphas, out / "modes.png")
    return 0


def cmd_gauss(args) -> int:
    from .clustering import KcdcConfig
    from .cpca import SolverOptions
    from .gaussian import gauss_kcentres, sample_covariance
    from .io import read_multivariate_csv, write_labels_csv, write_result_json

    if not 0.0 < args.tau < 1.0:
        raise UsageError(f"--tau must lie in (0, 1), got {args.tau}")
    groups = read_multivariate_csv(args.input)
    if not groups:
        from .errors import EmptyInput

        raise EmptyInput(f"{args.input} has no rows")
    ids = [g[0] for g in groups]
    covs = [sample_covariance(X) for _, X in groups]
    cfg = KcdcConfig(
        K=args.K,
        tau=args.tau,
        max_outer_iters=args.max_iter,
        loo=not args.no_loo,
        seed=args.seed,
        solver=SolverOptions(eig_starts=1, random_starts=0, seed=args.seed),
        threads=_threads(args),
    )
    state = gauss_kcentres(covs, args.K, args.M, cfg)
    result = state.to_dict()
    result["ids"] = ids
    result["covariances"] = [c.S for c in covs]
    meta = {
        "tool": "wkcc",
        "version": __version__,
        "command": "gauss",
        "input": os.path.basename(args.input),
        "d": covs[0].d,
        "K": args.K,
        "M": state.M,
        "config": cfg.as_dict(),
    }
    summary = f"gauss: n={len(ids)} d={covs[0].d} K={args.K} M={state.M}"
    if args.truth:
        truth = _truth_vector(args.truth, ids)
        meta["metrics"] = _metrics(state.labels, truth)
        summary += f" cRate={meta['metrics']['crate']:.4f} aRand={meta['metrics']['arand']:.4f}"
    write_result_json(result, meta, args.out)
    write_labels_csv(str(Path(args.out).with_suffix("")) + "_labels.csv", ids, state.labels)
    print(summary)
    if args.figures:
        from .plotting import plot_covariance_ellipses

        plot_covariance_ellipses([c.S for c in covs], state.labels, str(Path(args.out).with_suffix("")) + "_ellipses.png")
    return 0


def cmd_demo(args) -> int:
    from .io import write_labels_csv, write_samples_csv
    from .simulation import demo_dataset

    sets, truth = demo_dataset(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_samples_csv(out / "demo_samples.csv", sets)
    write_labels_csv(out / "demo_truth.csv", [s.id for s in sets], truth)
    print(f"wrote {out / 'demo_samples.csv'} and {out / 'demo_truth.csv'}")
    return 0


COMMANDS = {
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
    "theory": cmd_theory,
    "gpca": cmd_gpca,
    "gauss": cmd_gauss,
    "demo": cmd_demo,
}


# list-valued flags whose values may start with "-" (e.g. --alphas -1,0,1)
_LIST_FLAGS = ("--alphas", "--variances", "--delta-m", "--omega")


def _join_list_values(argv):
    out, it = [], iter(argv)
    for tok in it:
        if tok in _LIST_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_list_values(argv))
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wkcc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"wkcc {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, IoError) as exc:
        print(f"wkcc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (WkccError, ValueError) as exc:
        print(f"wkcc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: run, grid, synth, eval."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from mvfuse.data import (
    NORMALIZATION_SCHEMES,
    generate_synthetic,
    load_dataset,
    normalize_dataset,
    read_labels,
    save_dataset,
    write_matrix_binary,
)
from mvfuse.linalg import NumericalError
from mvfuse.metrics import accuracy, nmi, purity
from mvfuse.pipeline import HyperParams, fit

LAMBDA_EXPONENTS = range(-12, 6)          # 2^-12 .. 2^5, 18 values
P2_L1_MULTIPLIERS = (4, 5, 6)             # two-layer schemes [c*k, k]
P3_L1_MULTIPLIERS = (8, 10, 12)           # three-layer schemes [c1*k, c2*k, k]
P3_L2_MULTIPLIERS = (4, 5, 6)


def lambda_grid() -> list[float]:
    return [float(2.0**e) for e in LAMBDA_EXPONENTS]


def layer_schemes(k, kinds=("p2", "p3"), p2_l1=P2_L1_MULTIPLIERS,
                  p3_l1=P3_L1_MULTIPLIERS, p3_l2=P3_L2_MULTIPLIERS):
    schemes = []
    if "p2" in kinds:
        schemes += [[c * k, k] for c in p2_l1]
    if "p3" in kinds:
        schemes += [[c1 * k, c2 * k, k] for c1 in p3_l1 for c2 in p3_l2]
    return schemes


def _fmt(x) -> str:
    if x is None:
        return "nan"
    return f"{x:.12g}"


def _parse_int_list(text, flag):
    try:
        return [int(t) for t in str(text).split(",") if t != ""]
    except ValueError as exc:
        raise ValueError(f"{flag} must be a comma-separated integer list, got {text!r}") from exc


def _parse_synthetic_spec(spec: str) -> dict:
    """Parse "n=300,k=3,dims=40/60/80,sigma=0.1,seed=7[,...]" into generator kwargs."""
    kwargs = {}
    for item in spec.split(","):
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"bad synthetic spec item {item!r}, expected key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key == "n":
            kwargs["n"] = int(value)
        elif key == "k":
            kwargs["k"] = int(value)
        elif key == "dims":
            kwargs["view_dims"] = [int(t) for t in value.split("/")]
        elif key == "sigma":
            kwargs["noise_sigma"] = float(value)
        elif key == "seed":
            kwargs["seed"] = int(value)
        elif key == "nuisance-dim":
            kwargs["nuisance_dim"] = int(value)
        elif key == "nuisance-scale":
            kwargs["nuisance_scale"] = float(value)
        elif key == "name":
            kwargs["name"] = value
        else:
            raise ValueError(f"unknown synthetic spec key {key!r}")
    for required in ("n", "k", "view_dims"):
        if required not in kwargs:
            raise ValueError(f"synthetic spec missing {required}")
    return kwargs


def _load_data(args):
    if bool(args.manifest) == bool(args.synthetic):
        raise ValueError("provide exactly one of --manifest or --synthetic")
    if args.manifest:
        return load_dataset(args.manifest, normalization=args.norm)
    ds = generate_synthetic(**_parse_synthetic_spec(args.synthetic))
    return normalize_dataset(ds, args.norm or "l2-sample")


def _run_repeats(dataset, hp, repeats, threads):
    def one(i):
        return fit(dataset, replace(hp, seed=hp.seed + i))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(repeats)))
    return [one(i) for i in range(repeats)]


def _best_index(results):
    """Best repeat: highest accuracy when scored, lowest objective otherwise."""
    if results[0].scores is not None:
        return int(np.argmax([r.scores["acc"] for r in results]))
    return int(np.argmin([r.history[-1].objective for r in results]))


def _metric(res, key):
    return res.scores[key] if res.scores is not None else None


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values))


RESULT_COLUMNS = "repeat seed lambda dims norm iterations objective acc nmi pur".split()


def _results_table(results, hp, norm, seed):
    dims_text = ",".join(str(d) for d in hp.dims)
    rows = ["\t".join(RESULT_COLUMNS)]

    def row(tag, seed_text, iters, obj, acc, nmi_v, pur):
        rows.append(
            "\t".join(
                [tag, seed_text, _fmt(hp.lam), dims_text, norm, iters,
                 _fmt(obj), _fmt(acc), _fmt(nmi_v), _fmt(pur)]
            )
        )

    for i, res in enumerate(results):
        row(str(i), str(seed + i), str(res.iterations_run), res.history[-1].objective,
            _metric(res, "acc"), _metric(res, "nmi"), _metric(res, "pur"))
    best = _best_index(results)
    res = results[best]
    row("best", str(seed + best), str(res.iterations_run), res.history[-1].objective,
        _metric(res, "acc"), _metric(res, "nmi"), _metric(res, "pur"))
    for tag, stat in (("mean", 0), ("std", 1)):
        obj = _mean_std([r.history[-1].objective for r in results])[stat]
        acc = _mean_std([_metric(r, "acc") for r in results])[stat]
        nmi_v = _mean_std([_metric(r, "nmi") for r in results])[stat]
        pur = _mean_std([_metric(r, "pur") for r in results])[stat]
        row(tag, "-", "-", obj, acc, nmi_v, pur)
    return "\n".join(rows) + "\n", best


def cmd_run(args) -> int:
    dataset = _load_data(args)
    dims = _parse_int_list(args.dims, "--dims")
    hp = HyperParams(
        lam=args.lam, dims=dims, max_iter=args.max_iter, tol=args.tol,
        kmeans_restarts=args.restarts, pretrain_iters=args.pretrain_iters,
        seed=args.seed, warmup_hm=args.warmup_hm,
    )
    norm = args.norm or "l2-sample"
    results = _run_repeats(dataset, hp, args.repeats, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table, best = _results_table(results, hp, norm, args.seed)
    (out / "results.tsv").write_text(table)
    trace = "\n".join(_fmt(rec.objective) for rec in results[best].history) + "\n"
    (out / "objective_trace.txt").write_text(trace)
    if args.emit_embedding:
        write_matrix_binary(out / "embedding.mvm", results[best].h)
    best_res = results[best]
    print(f"dataset {dataset.name}: {dataset.num_views} views, n={dataset.n}, k={dataset.k}")
    print(f"repeats={args.repeats} lambda={_fmt(hp.lam)} dims={','.join(map(str, dims))}")
    if best_res.scores is not None:
        print(
            f"best repeat {best}: acc={_fmt(best_res.scores['acc'])} "
            f"nmi={_fmt(best_res.scores['nmi'])} pur={_fmt(best_res.scores['pur'])}"
        )
    else:
        print(f"best repeat {best}: objective={_fmt(best_res.history[-1].objective)}")
    print(f"wrote {out / 'results.tsv'}")
    return 0


GRID_COLUMNS = (
    "cell lambda dims norm repeats status best_acc best_nmi best_pur "
    "mean_acc std_acc mean_nmi std_nmi mean_pur std_pur mean_objective error"
).split()


def cmd_grid(args) -> int:
    dataset = _load_data(args)
    norm = args.norm or "l2-sample"
    kinds = tuple(t for t in args.schemes.split(",") if t)
    for kind in kinds:
        if kind not in ("p2", "p3"):
            raise ValueError(f"--schemes entries must be p2 or p3, got {kind!r}")
    schemes = layer_schemes(
        dataset.k, kinds,
        p2_l1=_parse_int_list(args.p2_l1, "--p2-l1"),
        p3_l1=_parse_int_list(args.p3_l1, "--p3-l1"),
        p3_l2=_parse_int_list(args.p3_l2, "--p3-l2"),
    )
    lambdas = ([float(t) for t in args.lambdas.split(",") if t]
               if args.lambdas else lambda_grid())
    cells = [(dims, lam) for dims in schemes for lam in lambdas]

    def run_cell(cell):
        dims, lam = cell
        hp = HyperParams(
            lam=lam, dims=dims, max_iter=args.max_iter, tol=args.tol,
            kmeans_restarts=args.restarts, pretrain_iters=args.pretrain_iters,
            seed=args.seed, warmup_hm=args.warmup_hm,
        )
        try:
            results = _run_repeats(dataset, hp, args.repeats, 1)
        except (ValueError, NumericalError) as exc:
            return None, str(exc)
        return results, ""

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(c) for c in cells]

    rows = ["\t".join(GRID_COLUMNS)]
    best_cell, best_acc = None, -1.0
    for idx, ((dims, lam), (results, error)) in enumerate(zip(cells, outcomes)):
        dims_text = ",".join(str(d) for d in dims)
        if results is None:
            error = error.replace("\t", " ").replace("\n", " ")
            rows.append("\t".join(
                [str(idx), _fmt(lam), dims_text, norm, str(args.repeats), "failed"]
                + ["nan"] * 10 + [error]
            ))
            continue
        best = results[_best_index(results)]
        stats = []
        for key in ("acc", "nmi", "pur"):
            stats.append(_mean_std([_metric(r, key) for r in results]))
        mean_obj = float(np.mean([r.history[-1].objective for r in results]))
        rows.append("\t".join(
            [str(idx), _fmt(lam), dims_text, norm, str(args.repeats), "ok",
             _fmt(_metric(best, "acc")), _fmt(_metric(best, "nmi")), _fmt(_metric(best, "pur")),
             _fmt(stats[0][0]), _fmt(stats[0][1]), _fmt(stats[1][0]), _fmt(stats[1][1]),
             _fmt(stats[2][0]), _fmt(stats[2][1]), _fmt(mean_obj), ""]
        ))
        acc = _metric(best, "acc")
        if acc is not None and acc > best_acc:
            best_cell, best_acc = idx, acc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.tsv").write_text("\n".join(rows) + "\n")
    ok = sum(1 for results, _ in outcomes if results is not None)
    print(f"grid: {len(cells)} cells ({ok} ok, {len(cells) - ok} failed)")
    if best_cell is not None:
        dims, lam = cells[best_cell]
        print(
            f"best cell {best_cell}: lambda={_fmt(lam)} "
            f"dims={','.join(map(str, dims))} acc={_fmt(best_acc)}"
        )
    print(f"wrote {out / 'grid.tsv'}")
    return 0


def cmd_synth(args) -> int:
    ds = generate_synthetic(
        n=args.n, k=args.k,
        view_dims=_parse_int_list(args.view_dims, "--view-dims"),
        noise_sigma=args.sigma, seed=args.seed,
        nuisance_dim=args.nuisance_dim, nuisance_scale=args.nuisance_scale,
        name=args.name,
    )
    manifest = save_dataset(
        ds, args.out, fmt=args.format, normalization=args.norm or "l2-sample"
    )
    print(f"wrote {manifest}")
    return 0


def cmd_eval(args) -> int:
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    print(f"ACC {_fmt(accuracy(pred, truth))}")
    print(f"NMI {_fmt(nmi(pred, truth))}")
    print(f"PUR {_fmt(purity(pred, truth))}")
    return 0


def _add_data_args(p):
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument(
        "--synthetic",
        help="inline synthetic dataset, e.g. n=300,k=3,dims=40/60/80,sigma=0.1,seed=7",
    )
    p.add_argument("--norm", choices=list(NORMALIZATION_SCHEMES), default=None,
                   help="normalization override (default: manifest tag or l2-sample)")


def _add_fit_args(p):
    p.add_argument("--max-iter", type=int, default=150)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=50, help="k-means restarts")
    p.add_argument("--pretrain-iters", type=int, default=50)
    p.add_argument("--warmup-hm", action="store_true",
                   help="extra representation step on h_m before each partition step")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvfuse",
        description="Multi-view clustering via layered semi-NMF and partition alignment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fit one configuration over repeated seeds")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="alignment weight")
    p.add_argument("--dims", required=True,
                   help="comma-separated layer widths, last must equal k")
    p.add_argument("--emit-embedding", action="store_true",
                   help="also write the best consensus matrix")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="sweep the lambda grid x layer schemes")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--lambdas", default=None,
                   help="comma-separated lambda values (default: 2^-12..2^5)")
    p.add_argument("--schemes", default="p2,p3", help="subset of p2,p3")
    p.add_argument("--p2-l1", default=",".join(map(str, P2_L1_MULTIPLIERS)),
                   help="first-layer multipliers for two-layer schemes")
    p.add_argument("--p3-l1", default=",".join(map(str, P3_L1_MULTIPLIERS)),
                   help="first-layer multipliers for three-layer schemes")
    p.add_argument("--p3-l2", default=",".join(map(str, P3_L2_MULTIPLIERS)),
                   help="second-layer multipliers for three-layer schemes")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--view-dims", required=True, help="comma-separated view dimensions")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nuisance-dim", type=int, default=0)
    p.add_argument("--nuisance-scale", type=float, default=1.0)
    p.add_argument("--name", default="synth")
    p.add_argument("--format", choices=["binary", "text"], default="binary")
    p.add_argument("--norm", choices=list(NORMALIZATION_SCHEMES), default=None,
                   help="normalization tag recorded in the manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a predicted labeling against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

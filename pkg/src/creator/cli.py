"""Command line: dataset generation, fitting, scoring, and benchmark sweeps.

Exit codes: 0 success, 2 usage or malformed input, 3 structural failure
inside the recovery pipeline (the failing stage is printed), 4 scoring
requested on data without ground truth.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import mean, median

import numpy as np

from . import data_io, svg
from .exceptions import ConfigurationError, CreatorError, StructuralFailureError
from .hsic import HsicConfig
from .ica import IcaConfig
from .metrics import evaluate_recovery
from .model import Dag
from .pipeline import CreatorConfig, OrderingResult, RecoveryResult, fit

__all__ = ["main"]

METRIC_COLUMNS = ("seed", "shd", "loc_r2", "d_top", "fit_seconds")
_BENCH_METRICS = ("shd", "loc_r2", "d_top", "fit_seconds")


class _MissingGroundTruth(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _creator_config(args) -> CreatorConfig:
    ica = IcaConfig(
        nonlinearity=args.ica_nonlinearity,
        max_iter=args.ica_max_iter,
        seed=args.seed,
    )
    hsic = HsicConfig(subsample=args.hsic_subsample, seed=args.seed)
    return CreatorConfig(
        ica=ica,
        hsic=hsic,
        sample_rank_tol=args.rank_tol,
        population_mode=args.population_mode,
    )


def _add_creator_flags(sub, include_seed: bool = True) -> None:
    sub.add_argument("--hsic-subsample", type=int, default=500,
                     help="rows used per HSIC evaluation")
    sub.add_argument("--rank-tol", type=float, default=0.05,
                     help="relative singular-value cutoff for rank tests")
    sub.add_argument("--ica-nonlinearity", choices=("logcosh", "cube"),
                     default="logcosh")
    sub.add_argument("--ica-max-iter", type=int, default=300)
    sub.add_argument("--population-mode", action="store_true",
                     help="use ground truth in place of the ordering stage")
    if include_seed:
        sub.add_argument("--seed", type=int, default=0,
                         help="seed for ICA restarts and HSIC subsampling")


def _cell_str(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_cell_str(row[c]) for c in METRIC_COLUMNS) + "\n")


def _write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _result_to_json(res: RecoveryResult) -> dict:
    return {
        "order": [int(v) for v in res.order],
        "adjacency": res.dag.adjacency.astype(int).tolist(),
        "alpha": res.alpha_hat.tolist(),
        "b_breve": res.B_breve.tolist(),
        "flags": res.flags,
        "timings": res.timings,
    }


def _result_from_json(obj: dict, data) -> RecoveryResult:
    """Rebuild a scoreable result from the serialized schema.

    Features are recomputed from alpha and b_breve, so any tool emitting the
    schema can be scored without shipping its feature matrices.
    """
    for key in ("order", "adjacency", "alpha", "b_breve"):
        if key not in obj:
            raise ValueError(f"result.json: missing required key {key!r}")
    order = [int(v) for v in obj["order"]]
    d = len(order)
    if sorted(order) != list(range(d)):
        raise ValueError(f"result.json: order must be a permutation of 0..{d - 1}")
    adjacency = np.asarray(obj["adjacency"])
    if adjacency.shape != (d, d) or not np.isin(adjacency, (0, 1)).all():
        raise ValueError(f"result.json: adjacency must be {d}x{d} of 0/1 entries")
    alpha = np.asarray(obj["alpha"], dtype=float)
    if alpha.shape != (d, data.p):
        raise ValueError(
            f"result.json: alpha must be {d}x{data.p}, got {alpha.shape}"
        )
    b_breve = np.asarray(obj["b_breve"], dtype=float)
    if b_breve.shape != (d, d):
        raise ValueError(f"result.json: b_breve must be {d}x{d}, got {b_breve.shape}")
    Y_tilde = [(X - X.mean(axis=0)) @ alpha.T for X in data.X]
    Y_hat = [Y @ b_breve.T for Y in Y_tilde]
    flags = obj.get("flags", {})
    timings = obj.get("timings", {})
    ordering = OrderingResult(alpha, Y_tilde, [], [], [], flags)
    return RecoveryResult(
        order=order,
        dag=Dag(adjacency.astype(bool)),
        alpha_hat=alpha,
        B_breve=b_breve,
        B_hats=[],
        Y_tilde=Y_tilde,
        Z_hat=[],
        Y_hat=Y_hat,
        ordering=ordering,
        flags=flags,
        timings=timings,
    )


def _score_result(dataset_dir, result_path, out_dir, literal_sur: bool) -> int:
    data, manifest = data_io.read_dataset(dataset_dir)
    if not data.has_ground_truth():
        raise _MissingGroundTruth(
            f"{dataset_dir}: no ground truth; external datasets cannot be scored"
        )
    result_path = Path(result_path)
    with open(result_path) as fh:
        obj = json.load(fh)
    res = _result_from_json(obj, data)
    report = evaluate_recovery(res, data, literal_sur=literal_sur)
    out = Path(out_dir) if out_dir else result_path.parent
    out.mkdir(parents=True, exist_ok=True)
    row = {
        "seed": int(manifest.get("seed", 0)) if manifest else 0,
        "shd": report.shd,
        "loc_r2": report.loc_r2,
        "d_top": report.d_top,
        "fit_seconds": float(res.timings.get("total_seconds", 0.0)),
    }
    _write_metrics_csv(out / "metrics.csv", [row])
    _write_json(out / "metrics.json", {
        "shd": report.shd,
        "loc_r2": report.loc_r2,
        "d_top": report.d_top,
        "best_permutation": report.best_permutation,
        "per_node": report.per_node,
        "flags": report.flags,
        "timings": report.timings,
    })
    print(f"wrote {out / 'metrics.csv'}")
    return 0


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    noise = data_io.parse_noise_arg(args.noise)
    K = args.k if args.k is not None else 2 * args.d
    data_io.generate_experiment(
        args.d, K, args.n,
        setting=args.setting,
        sigma_scale=args.sigma_scale,
        edge_prob=args.edge_prob,
        seed=args.seed,
        noise=noise,
        out_dir=args.out,
    )
    print(f"wrote {args.out}")
    return 0


def cmd_fit(args) -> int:
    if args.project_dim is not None:
        data = data_io.ingest_external(args.dataset, args.project_dim, args.seed)
        manifest = None
    else:
        data, manifest = data_io.read_dataset(args.dataset)
    d = args.d if args.d is not None else (manifest or {}).get("d")
    if d is None:
        raise ValueError("latent dimension unknown: pass --d for external data")
    cfg = _creator_config(args)
    res = fit(data, int(d), cfg)
    out = Path(args.out) if args.out else Path(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "result.json", _result_to_json(res))
    for k in range(data.K):
        data_io.write_matrix_csv(out / f"Y_hat_env{k + 1}.csv", res.Y_hat[k], "y")
    print(f"wrote {out / 'result.json'}")
    return 0


def cmd_eval(args) -> int:
    result_path = args.result or Path(args.dataset) / "result.json"
    return _score_result(args.dataset, result_path, args.out, args.literal_sur)


def cmd_fit_external(args) -> int:
    return _score_result(args.dataset, args.result_json, args.out, args.literal_sur)


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v != ""]


def _env_count(rule: str, d: int) -> int:
    if rule == "d":
        return d
    if rule == "2d":
        return 2 * d
    return int(rule)


def _bench_worker(spec: dict) -> dict:
    """Generate, fit, and score one repetition; never raises."""
    try:
        ss = np.random.SeedSequence([spec["master_seed"], spec["cell"], spec["rep"]])
        rep_seed = int(ss.generate_state(1)[0])
        rep_dir = Path(spec["out"]) / spec["cell_name"] / f"rep_{spec['rep'] + 1}"
        noise = data_io.parse_noise_arg(spec["noise"])
        data, _ = data_io.generate_experiment(
            spec["d"], spec["K"], spec["n"],
            setting=spec["setting"],
            sigma_scale=spec["sigma_scale"],
            edge_prob=spec["edge_prob"],
            seed=rep_seed,
            noise=noise,
            out_dir=rep_dir,
        )
        cfg = CreatorConfig(
            ica=IcaConfig(
                nonlinearity=spec["ica_nonlinearity"],
                max_iter=spec["ica_max_iter"],
                seed=rep_seed,
            ),
            hsic=HsicConfig(subsample=spec["hsic_subsample"], seed=rep_seed),
            sample_rank_tol=spec["rank_tol"],
            population_mode=spec["population_mode"],
        )
        res = fit(data, spec["d"], cfg)
        _write_json(rep_dir / "result.json", _result_to_json(res))
        report = evaluate_recovery(res, data)
        row = {
            "seed": rep_seed,
            "shd": report.shd,
            "loc_r2": report.loc_r2,
            "d_top": report.d_top,
            "fit_seconds": float(res.timings["total_seconds"]),
        }
        return {"ok": True, "cell": spec["cell"], "rep": spec["rep"], "row": row}
    except Exception as err:  # cell failures are data, not crashes
        return {
            "ok": False, "cell": spec["cell"], "rep": spec["rep"],
            "error": f"{type(err).__name__}: {err}",
        }


def cmd_bench(args) -> int:
    ds = _parse_int_list(args.d)
    settings = _parse_int_list(args.setting)
    sigmas = _parse_float_list(args.sigma_scale)
    if not ds or not settings or not sigmas:
        raise ValueError("bench sweep lists must be nonempty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for d in ds:
        for setting in settings:
            for sigma in sigmas:
                K = _env_count(args.k, d)
                name = f"d{d}_K{K}_n{args.n}_setting{setting}_sigma{sigma:g}"
                cells.append({
                    "d": d, "K": K, "n": args.n, "setting": setting,
                    "sigma_scale": sigma, "cell_name": name,
                })
    jobs = []
    for ci, cell in enumerate(cells):
        for rep in range(args.reps):
            jobs.append({
                **cell,
                "cell": ci,
                "rep": rep,
                "master_seed": args.seed,
                "out": str(out),
                "noise": args.noise,
                "edge_prob": args.edge_prob,
                "hsic_subsample": args.hsic_subsample,
                "rank_tol": args.rank_tol,
                "ica_nonlinearity": args.ica_nonlinearity,
                "ica_max_iter": args.ica_max_iter,
                "population_mode": args.population_mode,
            })
    workers = int(os.environ.get("CREATOR_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(jobs)))
    outcomes = []
    if workers == 1:
        outcomes = [_bench_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_bench_worker, jobs))
    by_cell = {ci: {} for ci in range(len(cells))}
    for res in outcomes:
        by_cell[res["cell"]][res["rep"]] = res

    bench_rows = []
    for ci, cell in enumerate(cells):
        rows = []
        errors = []
        for rep in range(args.reps):
            res = by_cell[ci][rep]
            if res["ok"]:
                rows.append(res["row"])
            else:
                errors.append(f"rep {rep + 1}: {res['error']}")
        cell_dir = out / cell["cell_name"]
        cell_dir.mkdir(parents=True, exist_ok=True)
        _write_metrics_csv(cell_dir / "metrics.csv", rows)
        agg = {
            "d": cell["d"], "K": cell["K"], "n": cell["n"],
            "setting": cell["setting"], "sigma_scale": cell["sigma_scale"],
            "reps": args.reps,
        }
        for metric in _BENCH_METRICS:
            values = [float(r[metric]) for r in rows]
            agg[f"{metric}_mean"] = mean(values) if values else ""
            agg[f"{metric}_median"] = median(values) if values else ""
            agg[f"{metric}_std"] = float(np.std(values)) if values else ""
        agg["errors"] = len(errors)
        bench_rows.append(agg)
        if errors:
            for line in errors:
                print(f"{cell['cell_name']}: {line}", file=sys.stderr)

    columns = list(bench_rows[0].keys())
    with open(out / "bench.csv", "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in bench_rows:
            fh.write(",".join(_cell_str(row[c]) for c in columns) + "\n")

    x_key, x_label = ("d", "d") if len(ds) > 1 else ("sigma_scale", "sigma scale")
    for metric in ("shd", "loc_r2", "d_top"):
        series = {}
        for row in bench_rows:
            if row[f"{metric}_mean"] == "":
                continue
            label = f"setting {row['setting']}"
            if len(sigmas) > 1 and len(ds) > 1:
                label += f", sigma {row['sigma_scale']:g}"
            series.setdefault(label, []).append(
                (float(row[x_key]), float(row[f"{metric}_mean"]))
            )
        if series:
            svg.write_chart(
                out / f"{metric}.svg", series,
                title=f"mean {metric} vs {x_label}",
                x_label=x_label, y_label=metric,
            )
    print(f"wrote {out / 'bench.csv'}")
    return 0


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="creator",
        description="Linear causal feature recovery from heterogeneous environments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic dataset to disk")
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--k", type=int, default=None, help="environments (default 2*d)")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--setting", type=int, choices=(1, 2), default=1,
                   help="1: fresh noise family per env/component; 2: shared "
                        "distinct families")
    g.add_argument("--sigma-scale", type=float, default=1.0)
    g.add_argument("--noise", default="mixed",
                   help='"mixed", a family name, or family:shape')
    g.add_argument("--edge-prob", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="run the recovery pipeline on a dataset")
    f.add_argument("dataset")
    f.add_argument("--d", type=int, default=None,
                   help="latent dimension (defaults to the manifest)")
    f.add_argument("--project-dim", type=int, default=None,
                   help="project observations to this many columns first")
    _add_creator_flags(f)
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a result against ground truth")
    e.add_argument("dataset")
    e.add_argument("--result", default=None,
                   help="result.json path (default: inside the dataset dir)")
    e.add_argument("--literal-sur", action="store_true",
                   help="score against open surrounding sets (exclude the node)")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("fit-external",
                       help="score a result.json produced by another tool")
    x.add_argument("result_json")
    x.add_argument("dataset")
    x.add_argument("--literal-sur", action="store_true")
    x.add_argument("--out", default=None)
    x.set_defaults(func=cmd_fit_external)

    b = sub.add_parser("bench", help="generate/fit/eval sweep with aggregates")
    b.add_argument("--d", default="3", help="comma-separated list")
    b.add_argument("--k", default="2d", help='"d", "2d", or a fixed integer')
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--setting", default="1", help="comma-separated subset of 1,2")
    b.add_argument("--sigma-scale", default="1.0", help="comma-separated list")
    b.add_argument("--noise", default="mixed")
    b.add_argument("--edge-prob", type=float, default=0.5)
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--seed", type=int, default=0,
                   help="master seed; per-repetition seeds derive from it")
    _add_creator_flags(b, include_seed=False)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StructuralFailureError as err:
        print(f"structural failure: {err}", file=sys.stderr)
        return 3
    except _MissingGroundTruth as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (OSError, ValueError, json.JSONDecodeError, ConfigurationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CreatorError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

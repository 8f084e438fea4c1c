"""Dataset serialization: CSV/JSON layout, generation to disk, ingestion.

A dataset directory holds one subdirectory per environment, `env_1` ..
`env_K`, each with `X.csv` (header `x1..xp`) and, for synthetic data,
`Y.csv` and `Z.csv`; a top-level `manifest.json` records the generation
parameters and the generating model. External data can instead be a
directory of per-environment CSV files with arbitrary headers.

All writes are byte-deterministic: floats are serialized with `repr`
(shortest round-trip form) and JSON keys are sorted.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError
from .model import (
    FAMILY_POOL,
    Dag,
    EnvParams,
    MultiEnvDataset,
    NoiseSpec,
    ScmEnsemble,
    sample_env_params,
    sample_er_dag,
    sample_mixing,
    simulate,
)

__all__ = [
    "generate_experiment",
    "ingest_external",
    "parse_noise_arg",
    "read_dataset",
    "read_matrix_csv",
    "write_dataset",
    "write_matrix_csv",
]

# Shape defaults when a family that needs one is named bare on the CLI.
_DEFAULT_SHAPES = {"beta": 0.5, "gamma": 1.0, "chi2": 1.0}


def parse_noise_arg(text: str) -> NoiseSpec | None:
    """CLI noise descriptor: "mixed", a family name, or "family:shape"."""
    text = text.strip()
    if text == "mixed":
        return None
    family, _, shape = text.partition(":")
    if shape:
        try:
            return NoiseSpec(family, shape=float(shape))
        except ValueError as err:
            raise ConfigurationError(f"bad noise shape in {text!r}: {err}") from None
    if family in _DEFAULT_SHAPES:
        return NoiseSpec(family, shape=_DEFAULT_SHAPES[family])
    return NoiseSpec(family)


def write_matrix_csv(path, M: np.ndarray, prefix: str) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    header = ",".join(f"{prefix}{j + 1}" for j in range(M.shape[1]))
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path, expected_prefix: str | None = None) -> np.ndarray:
    """Parse a CSV matrix; malformed content is reported with its line number.

    With `expected_prefix` the header must be exactly `prefix1..prefixm`;
    otherwise a leading non-numeric row is treated as a header and skipped.
    """
    path = Path(path)
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = line.rstrip("\n").split(",")
            if lineno == 1:
                if expected_prefix is not None:
                    want = [f"{expected_prefix}{j + 1}" for j in range(len(cells))]
                    if cells != want:
                        raise ValueError(
                            f"{path}: line 1: expected header "
                            f"{','.join(want)!r}, got {line.rstrip()!r}"
                        )
                    width = len(cells)
                    continue
                try:
                    rows.append([float(c) for c in cells])
                    width = len(cells)
                except ValueError:
                    width = len(cells)      # header row
                continue
            if len(cells) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric cell {bad!r}"
                ) from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _spec_to_json(spec: NoiseSpec) -> dict:
    return {"family": spec.family, "shape": spec.shape, "scale": spec.scale}


def _spec_from_json(obj: dict) -> NoiseSpec:
    return NoiseSpec(obj["family"], shape=obj.get("shape"), scale=obj.get("scale", 1.0))


def build_manifest(
    data: MultiEnvDataset, *, seed: int, setting: int, sigma_scale: float,
    edge_prob: float, n: int,
) -> dict:
    ens = data.ensemble
    return {
        "d": ens.d,
        "p": ens.p,
        "K": ens.K,
        "n": n,
        "seed": seed,
        "setting": setting,
        "sigma_scale": sigma_scale,
        "edge_prob": edge_prob,
        "noise": [[_spec_to_json(s) for s in env.noise] for env in ens.envs],
        "has_ground_truth": data.has_ground_truth(),
        "ensemble": {
            "dag": ens.dag.adjacency.astype(int).tolist(),
            "H": ens.H.tolist(),
            "envs": [
                {"W": env.W.tolist(), "omega": env.omega.tolist()}
                for env in ens.envs
            ],
        },
    }


def write_dataset(out_dir, data: MultiEnvDataset, manifest: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(data.K):
        env_dir = out_dir / f"env_{k + 1}"
        env_dir.mkdir(exist_ok=True)
        write_matrix_csv(env_dir / "X.csv", data.X[k], "x")
        if data.Y is not None:
            write_matrix_csv(env_dir / "Y.csv", data.Y[k], "y")
        if data.Z is not None:
            write_matrix_csv(env_dir / "Z.csv", data.Z[k], "z")
    with open(out_dir / "manifest.json", "w", newline="\n") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir


def _ensemble_from_manifest(manifest: dict) -> ScmEnsemble | None:
    info = manifest.get("ensemble")
    if info is None:
        return None
    dag = Dag(np.asarray(info["dag"], dtype=bool))
    H = np.asarray(info["H"], dtype=float)
    envs = []
    for k, env in enumerate(info["envs"]):
        specs = tuple(_spec_from_json(s) for s in manifest["noise"][k])
        envs.append(EnvParams(np.asarray(env["W"]), np.asarray(env["omega"]), specs))
    return ScmEnsemble(dag, H, envs)


def read_dataset(path) -> tuple[MultiEnvDataset, dict | None]:
    """Load a dataset directory; returns the data and its manifest, if any.

    Directories without a manifest are handed to `ingest_external`, so the
    same entry point serves generated and external data.
    """
    path = Path(path)
    if not path.is_dir():
        raise ValueError(f"{path}: not a directory")
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        return ingest_external(path), None
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    K = int(manifest["K"])
    Xs, Ys, Zs = [], [], []
    for k in range(K):
        env_dir = path / f"env_{k + 1}"
        if not env_dir.is_dir():
            raise ValueError(f"{path}: missing environment directory env_{k + 1}")
        Xs.append(read_matrix_csv(env_dir / "X.csv", "x"))
        if (env_dir / "Y.csv").exists():
            Ys.append(read_matrix_csv(env_dir / "Y.csv", "y"))
        if (env_dir / "Z.csv").exists():
            Zs.append(read_matrix_csv(env_dir / "Z.csv", "z"))
    ensemble = _ensemble_from_manifest(manifest)
    data = MultiEnvDataset(
        X=Xs,
        Y=Ys if len(Ys) == K else None,
        Z=Zs if len(Zs) == K else None,
        ensemble=ensemble,
    )
    return data, manifest


def _env_sort_key(name: str):
    m = re.fullmatch(r"env_(\d+)", name)
    return (0, int(m.group(1)), name) if m else (1, 0, name)


# Files this package itself writes next to datasets; never environment data.
_ARTIFACT_CSV = re.compile(r"Y_hat_env\d+\.csv|metrics\.csv|bench\.csv")


def ingest_external(path, project_dim: int | None = None, seed: int = 0) -> MultiEnvDataset:
    """Load per-environment CSVs that were not produced by this package.

    Accepts either `env_*/X.csv` subdirectories or a flat directory of
    `*.csv` files, one per environment, ordered by name. With `project_dim`
    every environment is right-multiplied by one shared seeded standard
    normal matrix, reducing p columns to the requested count.
    """
    path = Path(path)
    env_dirs = sorted(
        (d for d in path.iterdir() if d.is_dir() and (d / "X.csv").exists()),
        key=lambda d: _env_sort_key(d.name),
    )
    if env_dirs:
        files = [d / "X.csv" for d in env_dirs]
    else:
        files = sorted(
            f for f in path.glob("*.csv") if not _ARTIFACT_CSV.fullmatch(f.name)
        )
    if not files:
        raise ValueError(f"{path}: no environment CSV files found")
    Xs = [read_matrix_csv(f) for f in files]
    p = Xs[0].shape[1]
    for f, X in zip(files, Xs):
        if X.shape[1] != p:
            raise ValueError(
                f"{f}: has {X.shape[1]} columns but {files[0]} has {p}; "
                "environments must agree"
            )
    if project_dim is not None:
        if not 1 <= project_dim <= p:
            raise ConfigurationError(
                f"--project-dim must be in [1, {p}], got {project_dim}"
            )
        G = np.random.default_rng(seed).normal(size=(p, project_dim))
        Xs = [X @ G for X in Xs]
    return MultiEnvDataset(X=Xs)


def generate_experiment(
    d: int,
    K: int,
    n: int,
    *,
    setting: int = 1,
    sigma_scale: float = 1.0,
    edge_prob: float = 0.5,
    seed: int = 0,
    noise: NoiseSpec | None = None,
    out_dir=None,
) -> tuple[MultiEnvDataset, dict]:
    """Sample one complete multi-environment experiment, optionally to disk.

    Setting 1 draws a fresh noise family for every (environment, component)
    pair; setting 2 draws d pairwise-distinct families once and shares them
    across environments. An explicit `noise` spec overrides both and applies
    to every component everywhere.
    """
    if setting not in (1, 2):
        raise ConfigurationError(f"setting must be 1 or 2, got {setting}")
    if K < 1 or n < 2:
        raise ConfigurationError(f"need K >= 1 and n >= 2, got K={K}, n={n}")
    seed = int(seed)
    rng = np.random.default_rng(seed)
    dag = sample_er_dag(d, edge_prob, rng)
    H = sample_mixing(d, d, rng)
    if noise is not None:
        per_env = [tuple(noise for _ in range(d))] * K
    elif setting == 2:
        if d > len(FAMILY_POOL):
            raise ConfigurationError(
                f"setting 2 needs d distinct families; have {len(FAMILY_POOL)}, "
                f"asked for {d}"
            )
        while True:
            idx = rng.integers(len(FAMILY_POOL), size=d)
            if len(set(idx.tolist())) == d:
                break
        shared = tuple(FAMILY_POOL[i] for i in idx)
        per_env = [shared] * K
    else:
        per_env = [None] * K
    envs = [
        sample_env_params(dag, sigma_scale, rng, noise=per_env[k]) for k in range(K)
    ]
    ensemble = ScmEnsemble(dag, H, envs)
    data = simulate(ensemble, n, rng)
    manifest = build_manifest(
        data, seed=seed, setting=setting, sigma_scale=sigma_scale,
        edge_prob=edge_prob, n=n,
    )
    if out_dir is not None:
        write_dataset(out_dir, data, manifest)
    return data, manifest

"""Serialization round trips, layout checks, and ingestion edge cases."""

import json

import numpy as np
import pytest

from creator.data_io import (
    generate_experiment,
    ingest_external,
    parse_noise_arg,
    read_dataset,
    read_matrix_csv,
    write_matrix_csv,
)
from creator.exceptions import ConfigurationError
from creator.model import NoiseSpec


# ---------------------------------------------------------------- CSV

def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    M = rng.normal(size=(40, 5)) * 10.0 ** rng.integers(-8, 8, size=(40, 5))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, M, "x")
    back = read_matrix_csv(path, "x")
    assert np.array_equal(M, back)

def test_csv_header_and_line_count(tmp_path):
    path = tmp_path / "m.csv"
    write_matrix_csv(path, np.zeros((7, 3)), "x")
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,x3"
    assert len(lines) == 8

def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(ValueError, match="line 1"):
        read_matrix_csv(path, "x")

def test_csv_rejects_non_numeric_cell(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x1,x2\n1.0,2.0\n3.0,oops\n")
    with pytest.raises(ValueError, match="line 3.*'oops'"):
        read_matrix_csv(path, "x")

def test_csv_rejects_ragged_row(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x1,x2\n1.0,2.0\n3.0,4.0,5.0\n")
    with pytest.raises(ValueError, match="line 3"):
        read_matrix_csv(path, "x")

def test_csv_rejects_empty_file(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x1,x2\n")
    with pytest.raises(ValueError, match="no data rows"):
        read_matrix_csv(path, "x")

def test_csv_headerless_numeric_first_line(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n")
    M = read_matrix_csv(path)
    assert M.shape == (2, 2)


# ---------------------------------------------------------------- dataset layout

def test_generated_dataset_layout(tmp_path):
    out = tmp_path / "ds"
    generate_experiment(2, 2, 100, seed=0, out_dir=out)
    for k in (1, 2):
        env = out / f"env_{k}"
        assert (env / "X.csv").exists()
        assert (env / "Y.csv").exists()
        assert (env / "Z.csv").exists()
        assert len((env / "X.csv").read_text().splitlines()) == 101
    assert (out / "manifest.json").exists()

def test_manifest_contents(tmp_path):
    out = tmp_path / "ds"
    _, manifest = generate_experiment(
        3, 4, 50, setting=2, sigma_scale=0.7, edge_prob=0.4, seed=5, out_dir=out
    )
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk == manifest
    assert manifest["d"] == 3 and manifest["p"] == 3
    assert manifest["K"] == 4 and manifest["n"] == 50
    assert manifest["seed"] == 5 and manifest["setting"] == 2
    assert manifest["sigma_scale"] == 0.7 and manifest["edge_prob"] == 0.4
    assert manifest["has_ground_truth"] is True
    assert len(manifest["noise"]) == 4
    assert all(len(env_specs) == 3 for env_specs in manifest["noise"])
    ens = manifest["ensemble"]
    assert len(ens["dag"]) == 3 and len(ens["H"]) == 3 and len(ens["envs"]) == 4

def test_setting_two_families_shared_and_distinct(tmp_path):
    _, manifest = generate_experiment(4, 6, 30, setting=2, seed=6)
    first = manifest["noise"][0]
    assert all(env == first for env in manifest["noise"])
    keys = [(s["family"], s["shape"]) for s in first]
    assert len(set(keys)) == 4

def test_setting_one_families_vary_across_environments():
    _, manifest = generate_experiment(4, 6, 30, setting=1, seed=7)
    assert any(env != manifest["noise"][0] for env in manifest["noise"][1:])

def test_noise_override_applies_everywhere():
    _, manifest = generate_experiment(
        3, 3, 30, seed=8, noise=NoiseSpec("gennorm", shape=2.5)
    )
    for env_specs in manifest["noise"]:
        for s in env_specs:
            assert s["family"] == "gennorm" and s["shape"] == 2.5

def test_round_trip_preserves_data_and_model(tmp_path):
    out = tmp_path / "ds"
    data, manifest = generate_experiment(3, 3, 60, setting=2, seed=9, out_dir=out)
    loaded, loaded_manifest = read_dataset(out)
    assert loaded_manifest == manifest
    for k in range(3):
        assert np.array_equal(data.X[k], loaded.X[k])
        assert np.array_equal(data.Y[k], loaded.Y[k])
        assert np.array_equal(data.Z[k], loaded.Z[k])
    assert loaded.ensemble.dag == data.ensemble.dag
    assert np.array_equal(loaded.ensemble.H, data.ensemble.H)
    for a, b in zip(loaded.ensemble.envs, data.ensemble.envs):
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.omega, b.omega)
        assert a.noise == b.noise

def test_generation_is_deterministic(tmp_path):
    a, ma = generate_experiment(3, 4, 40, setting=1, seed=11, out_dir=tmp_path / "a")
    b, mb = generate_experiment(3, 4, 40, setting=1, seed=11, out_dir=tmp_path / "b")
    assert ma == mb
    assert (tmp_path / "a" / "env_1" / "X.csv").read_bytes() == \
           (tmp_path / "b" / "env_1" / "X.csv").read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == \
           (tmp_path / "b" / "manifest.json").read_bytes()

def test_read_dataset_reports_missing_environment(tmp_path):
    import shutil
    out = tmp_path / "ds"
    generate_experiment(2, 3, 20, seed=12, out_dir=out)
    shutil.rmtree(out / "env_2")
    with pytest.raises(ValueError, match="env_2"):
        read_dataset(out)

def test_generate_rejects_bad_setting():
    with pytest.raises(ConfigurationError):
        generate_experiment(2, 2, 20, setting=3)


# ---------------------------------------------------------------- ingestion

def flat_external(tmp_path, shapes, headers=True):
    rng = np.random.default_rng(13)
    for idx, (n, p) in enumerate(shapes):
        lines = []
        if headers:
            lines.append(",".join(f"col{j}" for j in range(p)))
        for row in rng.normal(size=(n, p)):
            lines.append(",".join(repr(float(v)) for v in row))
        (tmp_path / f"env{chr(97 + idx)}.csv").write_text("\n".join(lines) + "\n")

def test_ingest_flat_csv_directory(tmp_path):
    flat_external(tmp_path, [(30, 4)] * 3)
    data = ingest_external(tmp_path)
    assert data.K == 3 and data.p == 4
    assert not data.has_ground_truth()

def test_ingest_headerless_files(tmp_path):
    flat_external(tmp_path, [(20, 3)] * 2, headers=False)
    data = ingest_external(tmp_path)
    assert data.K == 2 and data.n_per_env == [20, 20]

def test_ingest_rejects_mismatched_columns(tmp_path):
    flat_external(tmp_path, [(20, 3), (20, 4)])
    with pytest.raises(ValueError, match="columns"):
        ingest_external(tmp_path)

def test_ingest_env_directories_numeric_order(tmp_path):
    for k in (1, 2, 10):
        env = tmp_path / f"env_{k}"
        env.mkdir()
        (env / "X.csv").write_text(f"x1\n{float(k)}\n{float(k)}\n")
    data = ingest_external(tmp_path)
    assert [X[0, 0] for X in data.X] == [1.0, 2.0, 10.0]

def test_ingest_empty_directory(tmp_path):
    with pytest.raises(ValueError, match="no environment"):
        ingest_external(tmp_path)

def test_ingest_skips_our_own_artifacts(tmp_path):
    # fitting in place drops Y_hat/metrics files next to external data; a
    # second ingestion must not mistake them for environments
    flat_external(tmp_path, [(20, 3)] * 2)
    (tmp_path / "Y_hat_env1.csv").write_text("y1\n0.5\n")
    (tmp_path / "metrics.csv").write_text("seed,shd\n0,1\n")
    data = ingest_external(tmp_path)
    assert data.K == 2 and data.p == 3

def test_ingest_projection_shared_and_seeded(tmp_path):
    flat_external(tmp_path, [(25, 6)] * 2)
    a = ingest_external(tmp_path, project_dim=3, seed=4)
    b = ingest_external(tmp_path, project_dim=3, seed=4)
    c = ingest_external(tmp_path, project_dim=3, seed=5)
    assert a.p == 3
    assert np.array_equal(a.X[0], b.X[0])
    assert not np.allclose(a.X[0], c.X[0])
    raw = ingest_external(tmp_path)
    G = np.linalg.lstsq(raw.X[0], a.X[0], rcond=None)[0]
    assert np.allclose(raw.X[1] @ G, a.X[1], atol=1e-8)

def test_ingest_projection_bounds(tmp_path):
    flat_external(tmp_path, [(25, 4)] * 2)
    with pytest.raises(ConfigurationError):
        ingest_external(tmp_path, project_dim=9)


# ---------------------------------------------------------------- noise argument

def test_parse_noise_arg_forms():
    assert parse_noise_arg("mixed") is None
    assert parse_noise_arg("laplace") == NoiseSpec("laplace")
    assert parse_noise_arg("gennorm:2.5") == NoiseSpec("gennorm", shape=2.5)
    assert parse_noise_arg("beta") == NoiseSpec("beta", shape=0.5)
    assert parse_noise_arg("chi2:3") == NoiseSpec("chi2", shape=3.0)

def test_parse_noise_arg_rejects_unknown():
    with pytest.raises(ConfigurationError):
        parse_noise_arg("cauchy")

def test_parse_noise_arg_requires_gennorm_shape():
    with pytest.raises(ConfigurationError):
        parse_noise_arg("gennorm")

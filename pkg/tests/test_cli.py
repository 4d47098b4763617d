import json

import numpy as np
import pytest

from gldiffusion import cli
from gldiffusion import io as rio
from gldiffusion.experiments import ExperimentConfig, run
from gldiffusion.hydrodynamics import DensityField


def small(experiment, tmp_path, **kw):
    base = {
        "invariant-scan": dict(n_list=[8], samples=200),
        "stationary-path": dict(n_list=[4, 8], replicas=3, T=0.02, samples=50),
        "pde-relax": dict(grid_size=32, T=0.2, pde_dt=1e-3, record_times=[0.0, 0.1, 0.2]),
        "hydro-compare": dict(n_list=[16], replicas=8, grid_size=32, pde_dt=1e-3, T=0.01,
                              record_times=[0.0, 0.01]),
        "forms-scan": dict(n_list=[4, 8], samples=100),
        "resolvent-scan": dict(n_list=[4], samples=4, replicas=3, norm_samples=50,
                               beta_res=40.0),
    }[experiment]
    d = {"experiment": experiment, "seed": 7, "out": str(tmp_path), **base, **kw}
    return ExperimentConfig.from_dict(d)


def test_config_invariants():
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="forms-scan", seed=1, n_list=[8, 8])
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="forms-scan", seed=1, n_list=[])
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="nope", seed=1)
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="forms-scan", seed=None)


def test_config_schema():
    import jsonschema
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"experiment": "forms-scan"})
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"experiment": "forms-scan", "seed": 1, "bogus": 2})
    cfg = ExperimentConfig.from_dict({"experiment": "forms-scan", "seed": 1})
    assert cfg.n_list == [8, 16, 32, 64]


def test_invariant_scan_schema(tmp_path):
    rows = run(small("invariant-scan", tmp_path))
    assert len(rows) == 10
    harm = [r for r in rows if r["observable"].endswith("_sq")]
    assert len(harm) == 8
    assert all(r["estimate"] >= 0 for r in harm)
    assert {r["observable"] for r in rows} - {r["observable"] for r in harm} == {
        "pair_energy", "moment_functional"}
    text = (tmp_path / "invariant-scan.csv").read_bytes()
    assert text.startswith(b"n,observable,estimate,std_error,run_id\r\n")


def test_stationary_zero_noise_flat(tmp_path):
    # odd n: no exact antipodes, so equal spacing is an exact equilibrium
    rows = run(small("stationary-path", tmp_path, zero_noise=True, initial="equal-spacing",
                     n_list=[3, 5, 9]))
    for r in rows:
        if r["observable"].startswith("sup_abs"):
            assert r["estimate"] == pytest.approx(0.0, abs=1e-12)


def test_pde_relax_uniform(tmp_path):
    rows = run(small("pde-relax", tmp_path, amplitude=0.0))
    assert all(r["l2_distance"] == 0.0 for r in rows)
    rho, header = rio.read_density(tmp_path / "pde-relax_final.csv")
    assert header == {"beta": 0.5, "M": 32, "dt": 1e-3, "time": 0.2}
    assert np.array_equal(rho.values, np.ones(32))


def test_pde_relax_decays(tmp_path):
    rows = run(small("pde-relax", tmp_path))
    d = [r["l2_distance"] for r in rows]
    assert d[0] == pytest.approx(0.5 / np.sqrt(2)) and d[2] < d[1] < d[0]


def test_hydro_compare_t0_clt(tmp_path):
    rows = run(small("hydro-compare", tmp_path))
    t0 = [r for r in rows if r["time"] == 0.0]
    assert len(t0) == 2
    for r in t0:
        assert r["gap"] <= 4 / np.sqrt(16)
    meta = json.loads((tmp_path / "hydro-compare.manifest.json").read_text())["metadata"]
    assert meta["initial-law"].startswith("iid(rho0)")


def test_forms_and_resolvent_scans_run(tmp_path):
    rows = run(small("forms-scan", tmp_path))
    assert [r["observable"] for r in rows] == ["form_S", "generator_norm"] * 2
    rows = run(small("resolvent-scan", tmp_path))
    assert [r["observable"] for r in rows] == ["deviation", "generator_norm", "g_sup",
                                               "epsilon_n"]
    m = json.loads((tmp_path / "resolvent-scan.manifest.json").read_text())
    assert m["metadata"]["b"] > 0


@pytest.mark.parametrize("experiment", ["invariant-scan", "stationary-path", "pde-relax",
                                        "hydro-compare", "forms-scan", "resolvent-scan"])
def test_byte_identical_rerun_and_manifest(experiment, tmp_path):
    run(small(experiment, tmp_path / "a"))
    run(small(experiment, tmp_path / "b"))
    run(small(experiment, tmp_path / "c", threads=2))
    a = (tmp_path / "a" / f"{experiment}.csv").read_bytes()
    assert a == (tmp_path / "b" / f"{experiment}.csv").read_bytes()
    assert a == (tmp_path / "c" / f"{experiment}.csv").read_bytes()
    man = json.loads((tmp_path / "a" / f"{experiment}.manifest.json").read_text())
    rio.validate(man, "manifest.schema.json")
    rows = rio.read_csv(tmp_path / "a" / f"{experiment}.csv")
    assert {r["run_id"] for r in rows} == {man["manifest_hash"]}
    for f in man["files"]:
        assert rio.sha256_file(tmp_path / "a" / f["path"]) == f["sha256"]


def test_seed_changes_output(tmp_path):
    run(small("forms-scan", tmp_path / "a"))
    run(small("forms-scan", tmp_path / "b", seed=8))
    assert (tmp_path / "a" / "forms-scan.csv").read_bytes() != \
        (tmp_path / "b" / "forms-scan.csv").read_bytes()


def test_float_format():
    assert rio.fmt(0.1) == "0.10000000000000001"
    assert rio.fmt(np.float64(1 / 3)) == "0.33333333333333331"
    assert rio.fmt(3) == "3"
    assert rio.fmt(float("nan")) == "nan"


def test_density_roundtrip(tmp_path):
    rho = DensityField.from_function(lambda t: 1 + 0.2 * np.sin(2 * np.pi * t), 16)
    rio.write_density(tmp_path / "d.csv", rho, beta=0.25, dt=1e-4, time=0.5)
    back, header = rio.read_density(tmp_path / "d.csv")
    assert np.array_equal(back.values, rho.values)
    assert header["beta"] == 0.25 and header["M"] == 16


def test_cli_main(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "pde-relax", "seed": 1, "grid_size": 16,
                               "T": 0.01, "pde_dt": 1e-3, "record_times": [0, 0.01]}))
    out = tmp_path / "out"
    assert cli.main(["pde-relax", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    man = json.loads((out / "pde-relax.manifest.json").read_text())
    assert man["config"]["seed"] == 3
    assert "pde-relax" in capsys.readouterr().out


def test_cli_errors(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["forms-scan", "--out", str(tmp_path)])        # no seed
    with pytest.raises(SystemExit):
        cli.main(["not-an-experiment", "--seed", "1"])
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "pde-relax", "seed": 1}))
    with pytest.raises(SystemExit):
        cli.main(["forms-scan", "--config", str(cfg)])
    cfg.write_text(json.dumps({"experiment": "forms-scan", "seed": 1, "n_list": [8, 4]}))
    assert cli.main(["forms-scan", "--config", str(cfg)]) == 2


def test_write_errors_name_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        rio.write_csv(blocker / "sub" / "x.csv", ["a"], [{"a": 1}])

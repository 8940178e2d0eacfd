import csv
import json

import numpy as np
import pytest
import yaml

from adiabaticity import cli
from adiabaticity.errors import ConfigError


def base(**over):
    d = {"schema_version": 1, "name": "probe",
         "model": {"family": "schwinger", "params": {"omega0": 10.0, "theta": 0.01, "omega": 1.0}},
         "tracked_level": 1, "gauge": "pancharatnam_aligned(1)",
         "grid": {"t_start": 0.0, "t_end": 6.0, "samples": 301},
         "analyses": ["criteria", "bounds", "propagate"]}
    d.update(over)
    return d


def dump(tmp_path, d, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return p


@pytest.mark.parametrize("change", [
    {"grid": {"t_start": 0.0, "t_end": 6.0, "samples": 8}},
    {"grid": {"t_start": 1.0, "t_end": 1.0, "samples": 100}},
    {"grid": {"t_start": 0.0, "t_end": 6.0, "samples": "many"}},
    {"model": {"family": "nope", "params": {}}},
    {"model": {"family": "schwinger", "params": {"omega0": 1.0, "spin": 2}}},
    {"model": {"file": "missing.csv"}},
    {"schema_version": 2},
    {"analyses": []},
    {"analyses": ["criteria", "astrology"]},
    {"options": {"normalization": "half"}},
    {"thresholds": {"criteria": -1}},
    {"passages": [2, 4]},
    {"epsilon": 0},
    {"gauge": "sideways"},
    {"surprise": True},
])
def test_schema_violations(tmp_path, change):
    with pytest.raises(ConfigError):
        cli.parse_scenario(base(**change), tmp_path)


def test_level_out_of_range():
    scn = cli.parse_scenario(base(tracked_level=2))
    with pytest.raises(ConfigError):
        cli.build_model(scn)


def test_odd_passages_rejected():
    d = base(model={"family": "cycling_lz", "params": {"alpha": 20.0, "varpi": 1.0, "Omega": 6.0}},
             tracked_level=0, gauge="parallel_transport", passages=[3])
    with pytest.raises(ConfigError):
        cli.parse_scenario(d)


def test_shipped_scenarios_parse():
    names = cli.builtin_scenarios()
    assert {"schwinger-adiabatic", "schwinger-resonant", "cycling-constructive",
            "cycling-destructive", "interpolating-3level", "random-4level"} <= set(names)
    for name in names:
        scn = cli.load_scenario(name)
        model = cli.build_model(scn)
        assert scn.tracked_level < model.dimension


def test_run_shipped_adiabatic(tmp_path):
    rep = cli.run(cli.load_scenario("schwinger-adiabatic"), tmp_path)
    assert rep.verdict == "adiabatic"
    assert not rep.discrepancies
    out = tmp_path / "schwinger-adiabatic"
    for f in ("spectrum.csv", "criteria.csv", "bounds.csv", "bw.csv", "evolution.csv",
              "oracles.csv", "summary.json"):
        assert (out / f).exists(), f
    s = json.loads((out / "summary.json").read_text())
    assert s["verdict"] == "adiabatic"
    assert s["summary"]["unitarity_ok"]
    assert s["summary"]["oracles"]["max_propagator_error"] < 1e-9
    # full double precision in the series
    row = next(csv.DictReader(open(out / "criteria.csv")))
    assert len(row["standard"].replace("-", "").replace(".", "").split("e")[0]) >= 15


def test_verdict_points_at_row(tmp_path):
    rep = cli.run(cli.parse_scenario(base()), tmp_path)
    for v in rep.verdicts.values():
        rows = list(csv.DictReader(open(tmp_path / "probe" / v["series"])))
        r = rows[v["row"] - 1]
        assert float(r["t"]) == v["t"]
        val = float(r[v["column"]])
        if v["column"] == "fidelity":
            val = 1.0 - val
        assert val == pytest.approx(v["value"], rel=1e-15, abs=1e-17)


def test_runs_are_deterministic(tmp_path):
    scn = cli.parse_scenario(base())
    cli.run(scn, tmp_path / "a")
    cli.run(scn, tmp_path / "b")
    for f in ("criteria.csv", "bounds.csv", "evolution.csv", "summary.json"):
        a = (tmp_path / "a" / "probe" / f).read_bytes()
        b = (tmp_path / "b" / "probe" / f).read_bytes()
        assert a == b.replace(str(tmp_path / "b").encode(), str(tmp_path / "a").encode()), f


def test_resonant_discrepancy(tmp_path):
    d = base(model={"family": "schwinger",
                    "params": {"omega0": 10.0, "theta": 0.01, "omega": 10.0}},
             grid={"t_start": 0.0, "t_end": 20 * np.pi, "samples": 2001})
    rep = cli.run(cli.parse_scenario(d), tmp_path)
    assert rep.verdict == "non-adiabatic"
    assert rep.verdicts["standard"]["pass"]
    assert not rep.verdicts["generalized"]["pass"]
    assert any(m.startswith("standard") for m in rep.discrepancies)


def test_seed_override(tmp_path):
    d = base(model={"family": "random_smooth", "params": {"dim": 3, "seed": 1}},
             tracked_level=0, gauge="parallel_transport", analyses=["criteria"])
    scn = cli.parse_scenario(d)
    a = cli.run(scn, tmp_path / "a").summary
    b = cli.run(scn, tmp_path / "b", seed=9).summary
    assert a["seed"] == 1 and b["seed"] == 9
    assert a["max_standard"] != b["max_standard"]


def test_sweep_epsilon(tmp_path):
    d = base(model={"family": "interpolating",
                    "params": {"H_in": [[0.0, 0.3], [0.3, 1.0]], "H_fin": [[1.0, 0.3], [0.3, 0.0]],
                               "T": 5.0}},
             tracked_level=0, gauge="parallel_transport",
             grid={"t_start": 0.0, "t_end": 5.0, "samples": 201})
    reps = cli.sweep(cli.parse_scenario(d), "epsilon", ["1", "0.5"], tmp_path)
    a, b = (r.summary["final_jrs_integral"] for r in reps)
    assert b / a == pytest.approx(0.5, rel=1e-2)
    assert reps[1].summary["t_end"] == pytest.approx(10.0)
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert [r["value"] for r in rows] == ["1", "0.5"]


def test_sweep_passages(tmp_path):
    d = base(model={"family": "cycling_lz", "params": {"alpha": 20.0, "varpi": 1.0, "Omega": 6.0}},
             tracked_level=0, gauge="parallel_transport",
             grid={"t_start": 0.0, "t_end": 2 * np.pi, "samples": 401},
             analyses=["oracles"], passages=[2])
    cli.sweep(cli.parse_scenario(d), "M", ["2", "4"], tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [r["M"] for r in rows] == ["2", "4"]
    for r in rows:
        assert float(r["measured"]) == pytest.approx(float(r["predicted"]), rel=0.5)


def test_sweep_needs_values():
    scn = cli.parse_scenario(base())
    with pytest.raises(ConfigError):
        cli.sweep_variants(scn, "omega", [])
    with pytest.raises(ConfigError):
        cli.sweep_variants(scn, "M", ["2"])
    with pytest.raises(ConfigError):
        cli.sweep_variants(scn, "spin", ["2"])


def test_main_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["list-families"]) == 0
    out = capsys.readouterr().out
    assert "schwinger: omega0, theta, omega" in out
    assert cli.main(["list-scenarios"]) == 0
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 2
    assert cli.main(["run", str(dump(tmp_path, base(grid={"t_start": 0, "t_end": 1,
                                                         "samples": 4})))]) == 2
    assert cli.main(["sweep", str(dump(tmp_path, base())), "--param", "omega",
                     "--values", ","]) == 2
    theta = 0.5
    singular = base(model={"family": "schwinger",
                           "params": {"omega0": 1.0, "theta": theta, "omega": float(1 / np.cos(theta))}},
                    grid={"t_start": 0.0, "t_end": 1.0, "samples": 33}, analyses=["criteria"])
    assert cli.main(["--output-dir", str(tmp_path), "run",
                     str(dump(tmp_path, singular, "sing.yaml"))]) == 1
    assert "SingularBlockError" in capsys.readouterr().err
    # options before the subcommand name are honoured
    assert (tmp_path / "probe" / "spectrum.csv").exists()
    assert not (tmp_path / "adiabaticity-out").exists()
    assert cli.main(["run", "--output-dir", str(tmp_path), str(dump(tmp_path, base()))]) == 0
    assert "verdict: adiabatic" in capsys.readouterr().out

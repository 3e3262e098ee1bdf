import json

import pytest
from hypothesis import given, strategies as st

from monodiss.cli import main
from monodiss.config import ExperimentConfig, expand_sweep, set_path
from monodiss.errors import ConfigurationError


@given(
    st.integers(2, 64),
    st.floats(1e-5, 1e-1),
    st.sampled_from(["imex_euler", "implicit_monotone_euler", "reference_rk4"]),
    st.one_of(st.none(), st.integers(0, 2**64 - 1)),
)
def test_config_round_trip(N, dt, scheme, seed):
    cfg = ExperimentConfig.from_dict({"grid": {"N": N}, "dt": dt, "scheme": scheme, "seed": seed})
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"grid": {"N": 0}}, "grid.N"),
        ({"dt": -1.0}, "dt"),
        ({"bogus": 1}, "bogus"),
    ],
)
def test_config_field_errors(patch, field):
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig.from_dict(patch)
    assert field in str(info.value)


def test_expand_sweep():
    cfg = ExperimentConfig.from_dict({"sweep": {"grid.N": [8, 16], "dt": [1e-3, 1e-2, 1e-1]}})
    points = expand_sweep(cfg)
    assert len(points) == 6
    assert {(v["grid.N"], v["dt"]) for v, _ in points} == {(n, t) for n in (8, 16) for t in (1e-3, 1e-2, 1e-1)}
    assert all(p.grid["N"] == v["grid.N"] and not p.sweep for v, p in points)


def test_set_path_rejects_unknown():
    with pytest.raises(KeyError):
        set_path({"grid": {"N": 1}}, "mesh.N", 3)


def test_cli_exponents(capsys):
    assert main(["exponents", "--d", "5", "--alpha", "1"]) == 0
    out = capsys.readouterr().out
    table = json.loads(out[: out.index("\n}\n") + 2])
    assert table["critical"]["p_crit_D"] == 5.0
    assert "epsilon_window          UNDEFINED" in out


def test_cli_bad_grid_exits_2(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"grid": {"N": 0}}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "grid.N" in capsys.readouterr().err


def test_cli_verify_requires_seed(capsys, monkeypatch):
    monkeypatch.delenv("MONODISS_SEED", raising=False)
    assert main(["verify", "--preset", "exponents"]) == 2


def test_cli_verify_deterministic(capsys):
    assert main(["verify", "--preset", "fractional", "--seed", "7"]) == 0
    first = capsys.readouterr().out
    assert main(["verify", "--preset", "fractional", "--seed", "7"]) == 0
    assert capsys.readouterr().out == first


def test_cli_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("MONODISS_SEED", "7")
    assert main(["verify", "--preset", "fractional"]) == 0
    assert '"seed": 7' in capsys.readouterr().out


def test_cli_simulate_outputs(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"grid": {"N": 8}, "T": 0.05, "schedule": {"kind": "linear", "n": 5}, "n_traj": 2}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    for i in range(2):
        d = tmp_path / "o" / f"traj_{i:03d}"
        assert (d / "energy.csv").exists() and (d / "final_state.json").exists()
    assert (tmp_path / "o" / "summary.json").exists()


def test_cli_sweep_directories(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"grid": {"N": 8}, "T": 0.02, "schedule": {"kind": "linear", "n": 2}, "sweep": {"dt": [1e-3, 2e-3]}}))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "s"), "--workers", "1"]) == 0
    index = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert [p["dir"] for p in index["points"]] == ["point_000", "point_001"]
    assert (tmp_path / "s" / "point_001" / "config.json").exists()

import json

import pytest
from hypothesis import given, strategies as st

from slitbilliard import cli
from slitbilliard.errors import ConfigError, SingularHit
from slitbilliard.wall_motion import SlitConfig, TrigSeries

CONFIGS = cli.CONFIG_DIR


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_example_config_coefficients():
    cfg, spec = cli.parse_config(CONFIGS / "example.ini")
    assert (cfg.lam, cfg.x0) == (0.6, 0.1)
    assert cfg.f_L == TrigSeries(0.5, ((1, 0.3),))
    assert cfg.f_R == TrigSeries(0.5, (), ((1, 0.3),))
    assert spec.command == "rate" and spec.seed == 0


def test_shipped_configs_parse():
    for p in CONFIGS.glob("*.ini"):
        cli.parse_config(p)


BASE = "[geometry]\nlambda = {lam}\nx0 = {x0}\n[f_L]\nconstant = 0.5\n{extra}\n[f_R]\nconstant = 0.5\n"


def test_x0_not_below_lambda(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text(BASE.format(lam=0.3, x0=0.3, extra=""))
    with pytest.raises(ConfigError, match="x0"):
        cli.parse_config(p)
    assert run(tmp_path, "simulate", "--config", str(p)) == 2
    assert "x0 must satisfy" in capsys.readouterr().err


def test_wall_leaving_unit_interval(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(BASE.format(lam=0.6, x0=0.1, extra="cos = 1:0.3, 2:0.2"))
    with pytest.raises(ConfigError, match="leaves"):
        cli.parse_config(p)


def test_field_diagnostics_name_line(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(BASE.format(lam=0.6, x0=0.1, extra="") + "[rate]\norbits = many\n")
    with pytest.raises(ConfigError, match=r"c.ini:10: \[rate\] orbits"):
        cli.parse_config(p)
    p.write_text(BASE.format(lam=0.6, x0=0.1, extra="bogus = 1"))
    with pytest.raises(ConfigError, match=r":6: \[f_L\] bogus"):
        cli.parse_config(p)


def test_nf_check_zero_samples(tmp_path, capsys):
    code = run(tmp_path, "nf-check", "--seed", "0", "--set", "samples_per_decade=0")
    assert code == 2
    assert "InsufficientSamples" in capsys.readouterr().err


def test_seed_required(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(BASE.format(lam=0.6, x0=0.1, extra=""))
    assert run(tmp_path, "rate", "--config", str(p)) == 2


def test_usage_errors(tmp_path):
    assert run(tmp_path, "no-such-command") == 2
    assert run(tmp_path, "atlas", "--set", "bogus=1") == 2
    assert run(tmp_path, "atlas", "--tolerance", "grazing=1e-8") == 2
    assert run(tmp_path, "simulate", "--tolerance", "nonsense") == 2
    assert run(tmp_path, "escape", "--config", str(CONFIGS / "elliptic.ini"), "--seed", "0") == 2


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def boom(*args):
        raise SingularHit("synthetic")

    monkeypatch.setitem(cli.HANDLERS, "simulate", boom)
    assert run(tmp_path, "simulate") == 3


def test_periodic_orbit(tmp_path):
    assert run(tmp_path, "periodic-orbit", "--config", str(CONFIGS / "elliptic.ini")) == 0
    rep = json.loads((tmp_path / "report.json").read_text())["results"]
    assert rep["closure_residual"] < 1e-9
    assert rep["trace_one_step"] == pytest.approx(1.2259, abs=1e-4)
    assert abs(rep["trace_period"]) < 2 and rep["stability"] == "elliptic"


def test_atlas_boundary(tmp_path):
    assert run(tmp_path, "atlas", "--set", "lambda_n=30", "--set", "x0_n=30", "--threads", "2") == 0
    lines = (tmp_path / "atlas.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[1].startswith("# version=")
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "lambda,x0,kind,tr,hyperbolic"
    for row in body[1:]:
        lam, x0, kind = row.split(",")[:3]
        d = float(lam) - float(x0)
        s = float(lam) + float(x0)
        if abs(d - 0.25) > 1 / 30 and s < 0.75 - 1 / 30:
            assert kind == ("LowerTrapping" if d > 0.25 else "NoTrap")


def test_outputs_are_deterministic(tmp_path):
    args = ["escape", "--seed", "3", "--set", "samples=3000", "--set", "lines=100",
            "--set", "fragmentation_periods=3"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    for name in ("survival.csv", "fragmentation.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "created" not in (tmp_path / "a" / "survival.csv").read_text()
    assert run(tmp_path / "c", *args, "--timestamp") == 0
    assert "# created=" in (tmp_path / "c" / "survival.csv").read_text()


def test_simulate_and_waiting_time(tmp_path):
    assert run(tmp_path / "s", "simulate", "--set", "collisions=50") == 0
    assert len((tmp_path / "s" / "trajectory.csv").read_text().splitlines()) == 4 + 1 + 50  # header, columns, rows
    assert run(tmp_path / "w", "waiting-time", "--seed", "0", "--set", "samples=5000",
               "--set", "fragmentation_periods=4", "--set", "epsilons=0.2") == 0
    rep = json.loads((tmp_path / "w" / "report.json").read_text())["results"]
    assert rep["epsilons"]["0.2"]["survival"] < 0.2


amp = st.floats(-0.2, 0.2, allow_subnormal=False)


@given(amp, amp, st.floats(0.1, 0.9), st.floats(0, 1, exclude_max=True),
       st.sampled_from(sorted(cli.PARAMS)), st.one_of(st.none(), st.integers(0, 10 ** 6)),
       st.integers(1, 500))
def test_serialize_round_trip(a, b, lam, frac, command, seed, n):
    cfg = SlitConfig(TrigSeries(0.5, ((1, a),), ((3, b),)), TrigSeries(0.4, (), ((2, a),)),
                     lam, frac * lam)
    params = {"atlas": {"lambda_n": n}, "escape": {"epsilons": (0.01, 0.05 * (1 + abs(a)))},
              "waiting-time": {"c_star": "fitted"}, "rate": {"v_min": 100.0 + n}}
    spec = cli.ExperimentSpec(command, seed, params)
    text = cli.serialize(cfg, spec)
    cfg2, spec2 = cli.parse_text(text)
    assert cfg2 == cfg
    assert (spec2.command, spec2.seed, spec2.params) == (command, seed, params)
    assert cli.serialize(cfg2, spec2) == text

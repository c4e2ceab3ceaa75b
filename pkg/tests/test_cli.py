import json
import sys
from pathlib import Path

import pytest

from gslf import cli, config, io

GOLDEN = Path(__file__).parent / "golden"

# configs whose configured checks are expected to fail (see the acceptance suite)
EXPECTED_CHECK_FAILURES = {"approx_levels_gamma", "moments_nig"}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1, out
    return code, json.loads(out[0])


def help_text(capsys, monkeypatch, *argv):
    monkeypatch.setenv("COLUMNS", "100")
    with pytest.raises(SystemExit) as exc:
        cli.main(list(argv) + ["--help"])
    assert exc.value.code == 0
    return capsys.readouterr().out


@pytest.mark.parametrize("argv,name", [((), "help.txt"), (("charfn",), "help_charfn.txt"),
                                       (("converge-fem",), "help_converge_fem.txt")])
def test_help_matches_golden(capsys, monkeypatch, argv, name):
    text = help_text(capsys, monkeypatch, *argv)
    # regenerate with: COLUMNS=100 gslf [subcommand] --help > tests/golden/<name>
    assert text == (GOLDEN / name).read_text(encoding="utf-8")


def test_charfn_at_zero_is_exactly_one(capsys, tmp_path):
    code, s = run(capsys, "charfn", "--xi", "0", "--out", str(tmp_path))
    assert code == 0
    assert s["re"] == [1.0] and s["im"] == [0.0]
    assert s["status"] == "pass"


def test_covariance_value_and_csv(capsys, tmp_path):
    code, s = run(capsys, "covariance", "--config", "cov_gamma_a", "--out", str(tmp_path))
    assert code == 0
    assert s["value"] == pytest.approx(3.0265, rel=1e-3)
    header, rows = io.read_csv(tmp_path / "cov_gamma_a_covariance.csv")
    assert header[-1] == "covariance"
    assert float(rows[0][-1]) == s["value"]
    raw = (tmp_path / "cov_gamma_a_covariance.csv").read_bytes()
    assert raw.count(b"\r\n") == 2


def test_reruns_are_byte_identical(capsys, tmp_path):
    for sub in ("a", "b"):
        for cmd, cfg, workers in (("sample-field", "sample_field_matern_poisson", "1"),
                                  ("converge-lp", "lp_poisson", "1" if sub == "a" else "3"),
                                  ("density-hist", "histogram_gamma_small", "2")):
            code, _ = run(capsys, cmd, "--config", cfg, "--out", str(tmp_path / sub), "--workers", workers,
                          "--svg")
            assert code == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert any(f.endswith(".svg") for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_sample_field_file_roundtrips(capsys, tmp_path):
    code, s = run(capsys, "sample-field", "--out", str(tmp_path), "--seed", "11")
    assert code == 0
    vals, x, y, prov = io.read_field_csv(tmp_path / "sample_field_matern_poisson_field.csv")
    assert vals.shape == tuple(s["shape"])
    assert prov["seed"] == 11
    assert vals.min() == s["min"] and vals.max() == s["max"]


def test_unknown_config_key_exits_1(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    shipped = Path(config.__file__).with_name("configs") / "cov_gamma_a.toml"
    bad.write_text(shipped.read_text() + "\n[extra]\nfoo = 1\n")
    code, s = run(capsys, "covariance", "--config", str(bad), "--out", str(tmp_path))
    assert code == 1
    assert s["status"] == "error" and "extra" in s["error"]


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["charfn", "--scale", "huge"])
    assert exc.value.code == 1
    capsys.readouterr()


def test_module_entry_point_exits_with_code(monkeypatch, capsys, tmp_path):
    monkeypatch.setattr(sys, "argv", ["gslf", "covariance", "--config", "cov_gamma_b", "--out", str(tmp_path)])
    with pytest.raises(SystemExit) as exc:
        cli.main()
    assert exc.value.code == 0
    capsys.readouterr()


def shipped_runs():
    out = []
    for name in config.shipped_configs():
        cmd = config.load(name).get("command")
        marks = [pytest.mark.slow] if cmd == "converge-fem" else []
        out.append(pytest.param(name, cmd, id=f"{name}-{cmd}", marks=marks))
        if cmd == "covariance":
            out.append(pytest.param(name, "converge-cov", id=f"{name}-converge-cov"))
        if cmd == "converge-fem":
            out.append(pytest.param(name, "solve-pde", id=f"{name}-solve-pde"))
    return out


@pytest.mark.parametrize("name,cmd", shipped_runs())
def test_every_shipped_config_runs(capsys, tmp_path, name, cmd):
    code, s = run(capsys, cmd, "--config", name, "--out", str(tmp_path), "--svg")
    expected = 2 if name in EXPECTED_CHECK_FAILURES and cmd == config.load(name).get("command") else 0
    assert code == expected, s
    assert s["config"] == name and s["scale"] == "ci"
    for f in s["files"]:
        assert Path(f).exists()

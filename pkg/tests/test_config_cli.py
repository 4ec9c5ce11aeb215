import shutil
from importlib import resources
from pathlib import Path

import pytest

from timing_sim.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_TOLERANCE, main
from timing_sim.config import ConfigError, dump_config, load_config, loads_config
from timing_sim.latency import DeterministicLine
from timing_sim.simulator import BinaryDecay

CONFIGS = Path(str(resources.files("timing_sim") / "configs"))

MINIMAL = """
[experiment]
name = tiny
out = {out}
tolerance = {tol}

[protocol]
n = 6
tau = 25.0

[rewards]
mu = 1.0
kappa = 1.5

[latency]
model = line

[simulation]
rounds = {rounds}
replications = 2
seed = 4
"""


def write_cfg(tmp_path, rounds=2000, tol=0.05, extra=""):
    path = tmp_path / "tiny.cfg"
    path.write_text(MINIMAL.format(out=tmp_path / "out", rounds=rounds, tol=tol) + extra)
    return path


@pytest.mark.parametrize("name", ["line6.cfg", "cluster.cfg", "world100.cfg", "decay.cfg"])
def test_shipped_configs_round_trip(name):
    cfg = load_config(CONFIGS / name)
    text = dump_config(cfg)
    again = loads_config(text, base_dir=CONFIGS)
    assert dump_config(again) == text
    for field in ("protocol", "rewards", "profile", "election", "rounds", "replications", "seed"):
        assert getattr(again.sim, field) == getattr(cfg.sim, field)
    assert again.sim.latency.tags() == cfg.sim.latency.tags()


def test_defaults_and_types(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    assert isinstance(cfg.sim.latency, DeterministicLine)
    assert (cfg.sim.protocol.c, cfg.sim.protocol.m) == (4, 4)
    assert cfg.sim.rewards.b0 == pytest.approx(1.5 * 25)
    assert cfg.mode == "simulate"


def test_world_normalization_override():
    cfg = load_config(CONFIGS / "world100.cfg")
    assert cfg.sim.n == 100 and cfg.normalized_nodes == 100
    # the shipped quorum sizes are fixed for 100 nodes
    with pytest.raises(ConfigError, match="quorum"):
        load_config(CONFIGS / "world100.cfg", normalize_override=30)
    text = (CONFIGS / "world100.cfg").read_text().replace("c = 67", "").replace("m = 67", "")
    small = loads_config(text, normalize_override=30)
    assert small.sim.n == 30 and small.sim.protocol.c == 20


def test_decay_config():
    cfg = load_config(CONFIGS / "decay.cfg")
    assert isinstance(cfg.sim.election, BinaryDecay)


def test_not_time_decreasing_warns(tmp_path):
    text = write_cfg(tmp_path).read_text().replace("kappa = 1.5", "kappa = 0.5")
    with pytest.warns(UserWarning, match="time-decreasing"):
        loads_config(text)


@pytest.mark.parametrize(
    "old, new, match",
    [
        ("tau = 25.0", "tau = 25.0\nc = 4\nm = 2", "m > n - c"),
        ("model = line", "model = ring", "model must be one of"),
        ("mu = 1.0", "mu = fast", "mu"),
        ("kappa = 1.5", "kappa = 1.5\nb = 2.0", "either kappa or b"),
        ("seed = 4", "seed = 4\nelection = decay", "rho"),
        ("[latency]", "[latency]\nbogus = 1", "bogus"),
        ("model = line", "model = cluster\nsize_x = 4\nsize_y = 3\neps = 1\ninter = 5", "n=6"),
    ],
)
def test_config_errors(tmp_path, old, new, match):
    text = write_cfg(tmp_path).read_text().replace(old, new, 1)
    with pytest.raises(ConfigError, match=match):
        loads_config(text)


def test_parse_error_reports_location():
    with pytest.raises(ConfigError, match="line"):
        loads_config("[experiment]\nname = x\nthis is not an option\n")


def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_CONFIG
    assert main(["explode", "--config", "x.cfg"]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("[protocol]\nn = 6\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG


def test_cli_simulate_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    for name in ("utilities.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--seed", "99"]) == EXIT_OK
    assert (a / "utilities.csv").read_bytes() != (b / "utilities.csv").read_bytes()


def test_cli_uses_configured_out(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--rounds", "500"]) == EXIT_OK
    assert (tmp_path / "out" / "utilities.csv").exists()
    assert "rounds = 500" in (tmp_path / "out" / "summary.txt").read_text()


def test_cli_compare_pass_and_breach(tmp_path):
    ok = write_cfg(tmp_path, rounds=20000, tol=0.05)
    assert main(["compare", "--config", str(ok), "--out", str(tmp_path / "ok")]) == EXIT_OK
    strict = write_cfg(tmp_path, rounds=500, tol=1e-9)
    assert main(["compare", "--config", str(strict), "--out", str(tmp_path / "strict")]) == EXIT_TOLERANCE
    assert "false" in (tmp_path / "strict" / "compare.csv").read_text()


def test_cli_compare_rejects_stochastic_models(tmp_path):
    cfg = load_config(CONFIGS / "world100.cfg")
    assert cfg.sim.latency.deterministic is False
    path = tmp_path / "w.cfg"
    path.write_text((CONFIGS / "world100.cfg").read_text().replace("mode = simulate", "mode = compare"))
    assert main(["compare", "--config", str(path), "--out", str(tmp_path / "w"), "--rounds", "10"]) == EXIT_CONFIG


def test_cli_oracle_tables(tmp_path):
    cfg = write_cfg(tmp_path, extra="\n[oracle]\ntables = line, cluster\npoints = 10\n")
    out = tmp_path / "tables"
    assert main(["oracle", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    for name in ("fairness_line_early.csv", "fairness_line_late.csv", "fairness_cluster_early.csv", "fairness_cluster_late.csv", "oracle_utilities.csv"):
        lines = (out / name).read_text().splitlines()
        assert len(lines) > 1
    assert (out / "fairness_line_early.csv").read_text().startswith("n,advantage\n")


def test_cli_decay_compare(tmp_path):
    src = CONFIGS / "decay.cfg"
    path = tmp_path / "decay.cfg"
    shutil.copy(src, path)
    out = tmp_path / "decay"
    assert main(["compare", "--config", str(path), "--out", str(out), "--rounds", "20000"]) == EXIT_OK
    assert (out / "compare.csv").read_text().count("true") == 6


def test_cli_io_error_leaves_no_partial_output(tmp_path):
    cfg = write_cfg(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub"), "--rounds", "100"]) == EXIT_IO
    assert blocker.read_text() == "x"
    assert not (blocker.parent / "sub").exists()


def test_cli_write_failure_cleans_staged_files(tmp_path, monkeypatch):
    import timing_sim.cli as cli

    cfg = write_cfg(tmp_path)
    out = tmp_path / "out2"
    real = cli.os.replace
    calls = []

    def flaky(src, dst):
        if calls:
            raise OSError("disk full")
        calls.append(dst)
        return real(src, dst)

    monkeypatch.setattr(cli.os, "replace", flaky)
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--rounds", "100"]) == EXIT_IO
    assert not [p for p in out.iterdir() if p.name.startswith(".")]

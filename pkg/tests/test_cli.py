import json
from pathlib import Path

import numpy as np
import pytest

from disastertoll import cli
from disastertoll import pipeline as pl
from disastertoll.calibration import published_frequency_fit
from disastertoll.errors import ConvergenceError
from disastertoll.frequency import FrequencyFit

FAST = """\
seed = 11
disaster_types = ["flood", "storm"]
replications = 10
subsample_count = 20
subsample_size = 5
horizons = [2040, 2100]
null_simulations = 20
chi_band_resamples = 20
"""


def _config(tmp_path, text=FAST, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """simulate -> fit -> project -> bootstrap -> depend in one directory."""
    root = tmp_path_factory.mktemp("chain")
    cfg = _config(root)
    for cmd in ("simulate", "fit", "project", "bootstrap", "depend"):
        assert _run(cmd, "--config", cfg) == 0, cmd
    return root, cfg


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# configuration ----------------------------------------------------------------


def test_defaults_without_a_file():
    cfg = pl.load_config()
    assert cfg.window == (1960, 2019)
    assert cfg.replications == 500
    assert cfg.header_lines[1] == "seed=0"


def test_overrides_win_and_jobs_is_not_hashed(tmp_path):
    path = _config(tmp_path)
    base = pl.load_config(path)
    assert base.seed == 11
    assert pl.load_config(path, {"jobs": 4}).sha256 == base.sha256
    assert pl.load_config(path, {"seed": 12}).sha256 != base.sha256
    assert base.path("events") == tmp_path / "data" / "events.csv"


@pytest.mark.parametrize("text, needle", [
    ("bogus = 1\n", "unknown config key"),
    ("seed = 'x'\n", "wrong type"),
    ("[section]\nseed = 1\n", "flat"),
    ("seed = \n", ""),
    ("disaster_types = ['drought']\n", "disaster type"),
    ("window_start = 2020\n", "window_start"),
    ("ladder_overrides = ['cold_wave.tail=3']\n", "ladder override"),
    ("ladder_overrides = ['cold_wave.xi=9']\n", "ladder override"),
])
def test_bad_configs_exit_1(tmp_path, capsys, text, needle):
    assert _run("fit", "--config", _config(tmp_path, text)) == 1
    assert needle in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path, capsys):
    assert _run("explode") == 1
    assert _run("fit", "--config", tmp_path / "missing.toml") == 1
    assert "not found" in capsys.readouterr().err


def test_missing_and_empty_inputs_exit_2(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert _run("fit", "--config", cfg) == 2
    (tmp_path / "data").mkdir()
    events = tmp_path / "data" / "events.csv"
    events.write_text("")
    assert _run("fit", "--config", cfg) == 2
    assert str(events) in capsys.readouterr().err


def test_convergence_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise ConvergenceError("line search failed")

    monkeypatch.setitem(cli.COMMANDS, "fit", boom)
    assert _run("fit", "--config", _config(tmp_path)) == 3
    assert "convergence failure" in capsys.readouterr().err


# runs --------------------------------------------------------------------------


def test_every_output_carries_hash_and_seed(chain):
    root, cfg = chain
    sha = pl.load_config(cfg).sha256
    files = [p for p in (root / "out").rglob("*") if p.is_file()]
    assert files
    for p in files:
        text = p.read_text()
        if p.suffix == ".json":
            doc = json.loads(text)
            assert doc["config_sha256"] == sha and doc["seed"] == 11, p
        else:
            assert text.startswith(f"# config_sha256={sha}\n# seed=11\n"), p


def test_fit_recovers_generator(chain):
    root, _ = chain
    doc = json.loads((root / "out" / "fits" / "flood_frequency.json").read_text())
    fit = FrequencyFit.from_dict(doc)
    truth = published_frequency_fit("flood")
    z = (fit.coefficients - truth.coefficients) / fit.std_errors
    assert np.all(np.abs(z) < 3), z
    assert "Panel A: frequency (Poisson)" in (root / "out" / "fit_table.txt").read_text()


def test_project_writes_world_rows(chain):
    root, _ = chain
    lines = (root / "out" / "projection" / "SSP1-like.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines[3:]]
    assert len(rows) == 2 * 2 * 8
    assert {r[2] for r in rows if r[1] == "flood"} >= {"WLD", "EAP"}
    world = [r for r in rows if r[1] == "flood" and r[2] == "WLD" and r[3] == "2040"][0]
    assert float(world[4]) > 0 and float(world[7]) > 0


def test_bootstrap_writes_intervals(chain):
    root, _ = chain
    lines = (root / "out" / "bootstrap" / "SSP1-like_flood.csv").read_text().splitlines()
    assert "# replications=10" in lines
    header = [l for l in lines if not l.startswith("#")][0]
    assert header.endswith("median,low,high,n_effective")


def test_depend_writes_both_diagnostics(chain):
    root, _ = chain
    names = {p.name for p in (root / "out" / "depend").iterdir()}
    assert "residual_flood~storm.csv" in names
    assert {"chibar_flood~storm_raw.csv", "chibar_flood~storm_filtered.csv"} <= names
    assert "null band" in (root / "out" / "depend" / "summary.txt").read_text()


def test_same_config_gives_identical_tree(chain, tmp_path):
    root, _ = chain
    cfg = _config(tmp_path)
    for cmd in ("simulate", "fit", "project", "bootstrap", "depend"):
        assert _run(cmd, "--config", cfg, "--jobs", 2 if cmd == "bootstrap" else 1) == 0
    assert _tree(tmp_path / "out") == _tree(root / "out")
    assert _tree(tmp_path / "data") == _tree(root / "data")


def test_seed_flag_changes_output(chain, tmp_path):
    root, _ = chain
    cfg = _config(tmp_path)
    assert _run("simulate", "--config", cfg, "--seed", 12) == 0
    assert (tmp_path / "data" / "events.csv").read_bytes() != (root / "data" / "events.csv").read_bytes()


def test_dump_replicates_and_out_flag(chain, tmp_path):
    root, cfg = chain
    text = Path(cfg).read_text() + "dump_replicates = true\nfits = \"%s\"\n" % (root / "out" / "fits")
    cfg2 = _config(tmp_path, text)
    (tmp_path / "data").symlink_to(root / "data")
    out = tmp_path / "elsewhere"
    assert _run("bootstrap", "--config", cfg2, "--out", out) == 0
    dump = (out / "bootstrap" / "SSP1-like_flood_replicates.csv").read_text().splitlines()
    assert sum(not l.startswith("#") for l in dump) == 1 + 10 * 8 * 2


def test_conventional_flag_shifts_chi_bar(chain, tmp_path):
    root, cfg = chain
    out = tmp_path / "conv"
    assert _run("depend", "--config", cfg, "--conventional", "--out", out) == 0

    def values(path):
        rows = [l.split(",") for l in path.read_text().splitlines() if not l.startswith(("#", "pair"))]
        return np.array([float(r[2]) if r[2] != "gap" else np.nan for r in rows])

    a = values(root / "out" / "depend" / "chibar_flood~storm_raw.csv")
    b = values(out / "depend" / "chibar_flood~storm_raw.csv")
    np.testing.assert_allclose(b, a - 1.0, atol=1e-12)


def test_ladder_override_from_config(chain, tmp_path):
    root, _ = chain
    text = ('disaster_types = ["flood"]\nspecs = "select"\nladder_overrides = ["flood.xi=2"]\n'
            f'events = "{root / "data" / "events.csv"}"\ncovariates = "{root / "data" / "covariates.csv"}"\n')
    assert _run("fit", "--config", _config(tmp_path, text)) == 0
    doc = json.loads((tmp_path / "out" / "fits" / "flood_ladder_xi.json").read_text())
    assert doc["selected"] == 2 and doc["override"]
    assert pl.ladder_overrides(["cold_wave.xi=3"]) == {("cold_wave", "xi"): 3}

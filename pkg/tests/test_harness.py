import csv

import numpy as np
import pytest

from pathlib import Path

from cvxmdp.config import load_config, parse_matrix, parse_vector
from cvxmdp.errors import ConfigurationError
from cvxmdp.harness import EXIT_CONFIG, EXIT_OK, cli_run
from cvxmdp.mdp_vpdpo import CSV_COLUMNS, KnownEnvironment, KnrEnvironment, LowRankEnvironment

KNOWN_CONFIG = """\
# small known-model experiment
[environment]
kind = known
states = 3
actions = 2
horizon = 3

[objective]
kind = dist_point
target = uniform

[constraint]
kind = dist_ball
target = uniform
radius = 0.3   # ball around the uniform policy

[algorithm]
T = 4
Gamma = 2.0

[sweep]
seeds = 0 1
"""


def write_config(text: str, name: str = "exp.ini") -> Path:
    path = Path(name)
    path.write_text(text, encoding="utf-8")
    return path


def read_rows(path: Path) -> list[list[str]]:
    with path.open(newline="") as handle:
        return list(csv.reader(handle))


# HH: Command line


def test_presets_listing(capsys):
    assert cli_run(["presets"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "apprenticeship_tabular" in out
    assert "multiobjective_knr" in out


def test_run_single_episode(capsys):
    code = cli_run(["run", "--preset", "apprenticeship_tabular", "--T", "1", "--out", "out"])
    assert code == EXIT_OK
    path = Path("out/apprenticeship_tabular_seed0_T1.csv")
    rows = read_rows(path)
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 2
    assert rows[1][0] == "1"
    assert path.with_suffix(".truth").exists()
    assert str(path) in capsys.readouterr().out


def test_sweep_over_seeds(capsys):
    code = cli_run(
        ["sweep", "--preset", "apprenticeship_tabular", "--seeds", "0", "1", "2", "--T", "5", "--out", "out"]
    )
    assert code == EXIT_OK
    paths = [Path(f"out/apprenticeship_tabular_seed{s}_T5.csv") for s in range(3)]
    tables = [read_rows(p) for p in paths]
    assert all(table[0] == list(CSV_COLUMNS) for table in tables)
    assert all(len(table) == 6 for table in tables)
    assert len({tuple(map(tuple, table[1:])) for table in tables}) == 3


def test_run_from_config():
    config = write_config(KNOWN_CONFIG)
    assert cli_run(["run", "--config", str(config), "--out", "res"]) == EXIT_OK
    rows = read_rows(Path("res/exp_seed0_T4.csv"))
    assert len(rows) == 5


def test_bad_config_reports_the_line(capsys):
    config = write_config("[environment]\nkind = known\nthis line is broken\n", "bad.ini")
    assert cli_run(["run", "--config", str(config)]) == EXIT_CONFIG
    assert "bad.ini:3" in capsys.readouterr().err


@pytest.mark.parametrize(
    "old, new, key",
    [
        ("seeds = 0 1", "seeds = 0 x", "sweep.seeds"),
        ("states = 3", "model_file = nowhere.txt\nstates = 3", "environment.model_file"),
    ],
)
def test_invalid_config_values_exit_with_config_code(capsys, old, new, key):
    config = write_config(KNOWN_CONFIG.replace(old, new), "p.ini")
    assert cli_run(["run", "--config", str(config)]) == EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_unknown_flag_is_a_configuration_error(capsys):
    assert cli_run(["run", "--preset", "apprenticeship_tabular", "--bogus"]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_unknown_preset(capsys):
    assert cli_run(["run", "--preset", "nope"]) == EXIT_CONFIG
    assert "nope" in capsys.readouterr().err


def test_oracle_command():
    assert cli_run(["oracle", "--preset", "apprenticeship_tabular_constrained", "--out", "truth"]) == EXIT_OK
    text = Path("truth/apprenticeship_tabular_constrained_seed0.truth").read_text()
    assert text.startswith("mode ")
    assert "psi_star" in text


def test_emit_plots():
    args = ["run", "--preset", "apprenticeship_tabular", "--T", "3", "--out", "plots", "--emit-plots"]
    assert cli_run(args) == EXIT_OK
    data = np.loadtxt("plots/apprenticeship_tabular_seed0_T3.dat")
    assert data.shape == (3, 5)
    script = Path("plots/apprenticeship_tabular_seed0_T3.gp").read_text()
    assert "apprenticeship_tabular_seed0_T3.dat" in script


# HH: Configuration


def test_parse_helpers():
    np.testing.assert_allclose(parse_vector("1 2.5  -3"), [1.0, 2.5, -3.0])
    np.testing.assert_allclose(parse_matrix("1 2; 3 4"), [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        parse_matrix("1 2; 3")


def test_load_known_config():
    config = load_config(write_config(KNOWN_CONFIG))
    assert config.seeds == [0, 1]
    assert config.T_values == [4]
    assert config.name == "exp"
    spec = config.build(1)
    assert isinstance(spec.environment, KnownEnvironment)
    assert spec.g_oracle.kind == "dist_ball"
    assert spec.Gamma == 2.0
    assert spec.seed == 1


def test_config_seed_changes_the_instance():
    config = load_config(write_config(KNOWN_CONFIG))
    a = config.build(0).environment.model.transitions
    b = config.build(1).environment.model.transitions
    assert not np.allclose(a, b)
    pinned = load_config(write_config(KNOWN_CONFIG.replace("kind = known", "kind = known\ninstance_seed = 7")))
    np.testing.assert_allclose(
        pinned.build(0).environment.model.transitions, pinned.build(1).environment.model.transitions
    )


def test_lowrank_and_knr_configs():
    lowrank = KNOWN_CONFIG.replace("kind = known", "kind = lowrank\nrank = 2\nn_theta = 2\nn_upsilon = 2")
    spec = load_config(write_config(lowrank, "lr.ini")).build(0)
    assert isinstance(spec.environment, LowRankEnvironment)
    assert len(spec.environment.models) == 4

    knr = """\
[environment]
kind = knr
state_dim = 1
actions = 2
horizon = 2
sigma = 0.1
W = 0.5 0.2 -0.2
grid_nodes = 11
rollouts = 50
truth_rollouts = 100

[objective]
kind = linear
vector = 1 0 0 0 1 0

[algorithm]
T = 2
"""
    spec = load_config(write_config(knr, "knr.ini")).build(0)
    assert isinstance(spec.environment, KnrEnvironment)
    assert spec.g_oracle is None


@pytest.mark.parametrize(
    "broken, key",
    [
        (KNOWN_CONFIG.replace("states = 3", "states = three"), "environment.states"),
        (KNOWN_CONFIG.replace("kind = known", "kind = wormhole"), "environment.kind"),
        (KNOWN_CONFIG.replace("target = uniform\n\n[constraint]", "vector = 1 2 3\n\n[constraint]"), "objective.vector"),
        (KNOWN_CONFIG.replace("kind = dist_point", "kind = huber"), "objective.kind"),
        (KNOWN_CONFIG.replace("T = 4", "T = 0"), "sweep.T"),
        (KNOWN_CONFIG.replace("seeds = 0 1", "seeds = 0 x"), "sweep.seeds"),
        (KNOWN_CONFIG.replace("seeds = 0 1", "seeds = 0 1\nT = 5 ten"), "sweep.T"),
        (KNOWN_CONFIG.replace("states = 3", "model_file = nowhere.txt\nstates = 3"), "environment.model_file"),
        (KNOWN_CONFIG + "\n[extras]\nx = 1\n", "[extras]"),
        (KNOWN_CONFIG.replace("[objective]", "[goal]"), "[goal]"),
    ],
)
def test_config_errors_name_the_key(broken, key):
    with pytest.raises(ConfigurationError, match=key.replace("[", r"\[").replace("]", r"\]")):
        load_config(write_config(broken))


def test_missing_config_file():
    with pytest.raises(ConfigurationError, match="not found"):
        load_config("missing.ini")


def test_missing_section_header():
    with pytest.raises(ConfigurationError, match=":1:"):
        load_config(write_config("kind = known\n"))

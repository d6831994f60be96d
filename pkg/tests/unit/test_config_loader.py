from __future__ import annotations

from pathlib import Path
from typing import Any

import pytest
from pydantic import ValidationError
from shared.config.loader import ConfigError, load_run_config, resolve_run_file

from apps.solver.settings import ConstantCostConfig, Example11Config, ExpressionProblemConfig


def _write_run(dirpath: Path, name: str, text: str) -> Path:
    dirpath.mkdir(parents=True, exist_ok=True)
    p = dirpath / f"{name}.toml"
    p.write_text(text, encoding="utf-8")
    return p


def test_defaults_when_no_run_file_and_no_env():
    cfg = load_run_config(env={})
    assert cfg.mode == "ergodic"
    assert isinstance(cfg.problem, ConstantCostConfig)
    assert cfg.grid.hx == 0.25
    assert cfg.solver.alphas == [0.5, 0.25, 0.125, 0.0625, 0.03125]
    assert cfg.exterior == "reflect"
    assert cfg.workers == 1


def test_toml_overlay(tmp_path: Path):
    runs = tmp_path / "runs"
    _write_run(
        runs,
        "dev",
        """
        mode = "discounted"

        [problem]
        family = "example-1-1"
        gamma = 1.6
        theta = 0.1
        s = 0.9

        [grid]
        hx = 0.125
        radii = [8.0, 16.0]
        """,
    )
    env = {"EJH_CONFIG_DIR": str(runs), "EJH_PROFILE": "dev"}
    cfg = load_run_config(env=env)
    assert cfg.mode == "discounted"
    assert isinstance(cfg.problem, Example11Config)
    assert cfg.problem.gamma == 1.6
    assert cfg.grid.radii == [8.0, 16.0]
    # discounted runs default to the zero exterior
    assert cfg.exterior == "zero"


def test_env_overrides_toml(tmp_path: Path):
    path = _write_run(
        tmp_path,
        "run",
        """
        [solver]
        tol = 1e-4
        alphas = [0.5, 0.25]
        """,
    )
    env: dict[str, Any] = {
        "EJH_SOLVER__TOL": "1e-7",  # JSON number
        "EJH_SOLVER__ALPHAS": "[0.5, 0.25, 0.125]",
        "EJH_MODE": "certify",  # plain string fallback
        "EJH_UNRELATED": "ignored",
    }
    cfg = load_run_config(path, env=env)
    assert cfg.solver.tol == 1e-7
    assert cfg.solver.alphas == [0.5, 0.25, 0.125]
    assert cfg.mode == "certify"


def test_cli_overrides_win(tmp_path: Path):
    path = _write_run(tmp_path, "run", "workers = 2\n")
    cfg = load_run_config(
        path,
        env={"EJH_WORKERS": "3"},
        overrides={"workers": 4, "output": {"directory": str(tmp_path / "out")}},
    )
    assert cfg.workers == 4
    assert cfg.output.directory == str(tmp_path / "out")


def test_expression_problem_parses(tmp_path: Path):
    path = _write_run(
        tmp_path,
        "expr",
        """
        [problem]
        family = "expression"
        d = 1
        s = 0.75

        [problem.controls.left]
        drift = ["-x1"]
        cost = "1 + sin(x1)^2"
        kernel = "0.5"

        [problem.controls.right]
        drift = ["-2*x1"]
        cost = "2"
        kernel = "0.5*(1 + 0.2*cos(x1)*cos(ry))"
        """,
    )
    cfg = load_run_config(path, env={})
    assert isinstance(cfg.problem, ExpressionProblemConfig)
    assert list(cfg.problem.controls) == ["left", "right"]


def test_unknown_key_is_rejected(tmp_path: Path):
    path = _write_run(tmp_path, "bad", "[grid]\nhx = 0.25\nspacing = 0.1\n")
    with pytest.raises(ValidationError) as info:
        load_run_config(path, env={})
    assert "spacing" in str(info.value)


def test_example_constraint_chain_is_enforced(tmp_path: Path):
    # gamma must exceed s + 1/2
    path = _write_run(
        tmp_path,
        "bad",
        '[problem]\nfamily = "example-1-1"\ngamma = 1.2\ntheta = 0.1\ns = 0.9\n',
    )
    with pytest.raises(ValidationError) as info:
        load_run_config(path, env={})
    assert "gamma > s + 1/2" in str(info.value)


@pytest.mark.parametrize(
    "text",
    [
        "[grid]\nradii = [8.0, 4.0]\n",
        "[grid]\nhx = 0.5\nradii = [1.0]\n",
        "[solver]\nalphas = [0.25, 0.5]\n",
        "[solver]\nalphas = []\n",
        "[study]\nlevels = 7\n",
    ],
)
def test_bad_schedules_are_rejected(tmp_path: Path, text: str):
    path = _write_run(tmp_path, "bad", text)
    with pytest.raises(ValidationError):
        load_run_config(path, env={})


def test_profile_dir_override_via_env(tmp_path: Path):
    runs = tmp_path / "custom_runs"
    _write_run(runs, "myrun", 'mode = "certify"\n')
    env = {"EJH_CONFIG_DIR": str(runs)}
    assert resolve_run_file(profile="myrun", env=env) == runs / "myrun.toml"
    assert load_run_config(profile="myrun", env=env).mode == "certify"
    assert resolve_run_file(env={}) is None


def test_bad_toml_raises_config_error(tmp_path: Path):
    path = tmp_path / "broken.toml"
    path.write_text("[grid]\nthis = not_valid\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path, env={})


def test_missing_run_file_raises_config_error(tmp_path: Path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "nope.toml", env={})


def test_shipped_run_files_validate():
    root = Path(__file__).resolve().parents[2] / "configs" / "runs"
    files = sorted(root.glob("*.toml"))
    assert files
    for path in files:
        load_run_config(path, env={})

from __future__ import annotations

import json
import os
import tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from apps.solver.settings import RunConfig

ENV_PREFIX = "EJH_"
_LOADER_KEYS = {"CONFIG_DIR", "PROFILE"}


class ConfigError(RuntimeError):
    """A run file is missing or is not valid TOML."""


# --- paths --------------------------------------------------------------------


def _repo_root() -> Path:
    """Heuristic: walk up from this file until we find pyproject.toml."""
    p = Path(__file__).resolve()
    for ancestor in [p, *p.parents]:
        if (ancestor / "pyproject.toml").exists():
            return ancestor
    return Path.cwd()


def runs_dir(env: Mapping[str, str]) -> Path:
    # EJH_CONFIG_DIR points *at* the directory holding <profile>.toml files
    override = env.get(f"{ENV_PREFIX}CONFIG_DIR")
    if override:
        return Path(override)
    return _repo_root() / "configs" / "runs"


def _load_table(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"run file not found: {path}")
    try:
        return tomllib.loads(path.read_text("utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Failed to parse run TOML: {path}: {e}") from e


# --- env overlay helpers ------------------------------------------------------


def _coerce_env_value(raw: str) -> Any:
    """
    Try to parse JSON first (so lists/dicts/numbers/bools work),
    then fall back to the original string.
    """
    try:
        return json.loads(raw)
    except Exception:
        return raw


def _collect_env(env: Mapping[str, str], prefix: str = ENV_PREFIX) -> dict[str, Any]:
    """
    Collect overrides like EJH_MODE=ergodic, EJH_SOLVER__TOL=1e-8 into a nested dict.
    Only top-level names that RunConfig declares are picked up; `__` separates levels.
    """
    top = {name.upper(): name for name in RunConfig.model_fields}
    out: dict[str, Any] = {}
    plen = len(prefix)
    for k, v in sorted(env.items()):
        if not k.startswith(prefix):
            continue
        parts = k[plen:].split("__")
        if parts[0].upper() in _LOADER_KEYS or parts[0].upper() not in top:
            continue
        keys = [top[parts[0].upper()], *(p.lower() for p in parts[1:])]
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = _coerce_env_value(v)
    return out


def _deep_merge(base: dict[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in over.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


# --- public API ---------------------------------------------------------------


def resolve_run_file(
    path: str | Path | None = None,
    profile: str | None = None,
    env: Mapping[str, str] | None = None,
) -> Path | None:
    env = env if env is not None else os.environ
    if path is not None:
        return Path(path)
    name = (profile or env.get(f"{ENV_PREFIX}PROFILE") or "").strip()
    if not name:
        return None
    return runs_dir(env) / f"{name}.toml"


def load_run_config(
    path: str | Path | None = None,
    *,
    profile: str | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """
    Merge model defaults <- TOML run file <- env EJH_* <- CLI overrides, then validate.
    Env examples: EJH_MODE=certify, EJH_GRID__HX=0.125, EJH_SOLVER__ALPHAS=[0.5,0.25].
    """
    env = env if env is not None else os.environ
    data: dict[str, Any] = {}

    run_file = resolve_run_file(path, profile, env)
    if run_file is not None:
        data = _deep_merge(data, _load_table(run_file))

    data = _deep_merge(data, _collect_env(env))
    if overrides:
        data = _deep_merge(data, overrides)

    return RunConfig.model_validate(data)

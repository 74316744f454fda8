"""TOML run configuration: ``[backend]``, ``[optimizer]``, ``[search]``, ``[run]`` tables."""
from __future__ import annotations

import sys
from dataclasses import fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import BackendConfig
from .harness import RunConfig
from .optimizer import OptimizerConfig
from .similarity import SearchConfig


class ConfigError(ValueError):
    pass


def _capacity(v):
    if v in ("n", "N", None):
        return None
    return int(v)


def _build(cls, table: dict, section: str, base=None):
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    try:
        return replace(base, **table) if base is not None else cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def load_config(path=None) -> tuple[RunConfig, BackendConfig]:
    data: dict = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    unknown = set(data) - {"backend", "optimizer", "search", "run"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    backend = _build(BackendConfig, data.get("backend", {}), "backend")
    opt_table = dict(data.get("optimizer", {}))
    for key in ("good_capacity", "bad_capacity"):
        if key in opt_table:
            opt_table[key] = _capacity(opt_table[key])
    optimizer = _build(OptimizerConfig, opt_table, "optimizer")
    search_table = dict(data.get("search", {}))
    search_table.setdefault("n_similar", optimizer.n_similar)
    search = _build(SearchConfig, search_table, "search")
    run_table = dict(data.get("run", {}))
    run = _build(RunConfig, {**run_table, "optimizer": optimizer, "search": search}, "run")
    return run, backend

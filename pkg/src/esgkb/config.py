"""Flat INI configuration; every key can be overridden by the matching CLI flag."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

SECTION = "esgkb"


@dataclass(frozen=True)
class Config:
    # concept extraction
    top_k: int = 110000
    # semantic graph
    similarity_threshold: float = 0.80
    graph_block_size: int = 1024
    n_jobs: int = 1
    # clustering and seeds
    cluster_provider: str = "builtin"
    cluster_file: str = ""
    cqi_tau: float = 0.60
    seed_target: int = 23000
    beta: float = 0.01
    # propagation
    n_layers: int = 50
    alpha: float = 0.5
    convergence_tol: float = 1e-9
    tau_assign: float = 0.0
    # annotator
    backend: str = "mock"
    mock_fixture: str = ""
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    batch_size: int = 20
    max_concurrency: int = 4
    cache: str = ""
    # matching and reporting
    match_mode: str = "exact"
    match_level: str = "lemma"
    match_ordered: bool = True
    top_n: int = 10
    report_format: str = "json"
    # taxonomy override
    taxonomy: str = ""

    def update(self, **overrides: Any) -> "Config":
        """Copy with the non-``None`` overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_ini(self) -> str:
        lines = [f"[{SECTION}]"]
        for k, v in asdict(self).items():
            lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, kind: type, raw: str):
    if kind is bool:
        value = raw.strip().lower()
        if value in ("true", "yes", "1", "on"):
            return True
        if value in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw.strip())
    except ValueError:
        raise ValueError(f"config key {name}: cannot read {raw!r} as {kind.__name__}") from None


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    """Defaults, overlaid with the ``[esgkb]`` section of ``path`` if given.

    Unknown keys are an error so typos do not silently fall back to defaults.
    """
    cfg = Config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section(SECTION):
        raise ValueError(f"{path}: missing [{SECTION}] section")
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    values = {}
    for key, raw in parser.items(SECTION):
        if key not in types:
            raise ValueError(f"{path}: unknown config key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    return replace(cfg, **values)

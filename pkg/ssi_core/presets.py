from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ssi_core.errors import InvalidInputError
from ssi_core.models import ExperimentConfig


logger = logging.getLogger("ssikit")


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    config: dict[str, Any] = field(default_factory=dict)


_T_GRID = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
_BETA_GRID = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def default_presets() -> dict[str, Preset]:
    return {
        "lattice": Preset(
            name="lattice",
            description="5x9 lattice, |V0| about 0.4n, full T and beta grids",
            config={
                "graph": {"kind": "lattice", "params": {"rows": 5, "cols": 9}},
                "v0_fraction": 0.4,
                "T": list(_T_GRID),
                "beta": list(_BETA_GRID),
                "r": 1,
                "trials": 100,
            },
        ),
        "plant-standin": Preset(
            name="plant-standin",
            description="random connected graphs on 47 vertices standing in for the power network, |V0| about 0.6n",
            config={
                "label": "plant-standin(n=47)",
                "graph": {"kind": "random_connected", "params": {"n": 47}},
                "v0_fraction": 0.6,
                "T": list(_T_GRID),
                "beta": list(_BETA_GRID),
                "r": 1,
                "trials": 100,
            },
        ),
        "smoke": Preset(
            name="smoke",
            description="one trial on the 5x9 lattice",
            config={
                "graph": {"kind": "lattice", "params": {"rows": 5, "cols": 9}},
                "v0_fraction": 0.4,
                "T": [10, 50],
                "beta": [0.0, 0.6],
                "trials": 1,
            },
        ),
    }


def _package_default_path() -> Path:
    return Path(__file__).with_name("presets.yaml")


def load_presets(path: str | None = None) -> dict[str, Preset]:
    """
    Loads experiment presets from YAML. If the file is missing/invalid, returns defaults.
    """
    p = Path(path) if path else _package_default_path()
    if not p.exists() or not p.is_file():
        return default_presets()

    try:
        import yaml  # type: ignore
    except Exception:
        # без PyYAML работаем на встроенных пресетах
        return default_presets()

    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except Exception:
        logger.warning("Presets: cannot parse %s, using built-in defaults", p)
        return default_presets()

    return _parse_presets(data, fallback=default_presets())


def _g(d: dict[str, Any], *path: str) -> Any:
    cur: Any = d
    for k in path:
        if not isinstance(cur, dict) or k not in cur:
            return None
        cur = cur[k]
    return cur


def _parse_presets(data: dict[str, Any], fallback: dict[str, Preset]) -> dict[str, Preset]:
    out = dict(fallback)
    section = _g(data, "presets")
    if not isinstance(section, dict):
        return out
    for name, body in section.items():
        if not isinstance(body, dict):
            continue
        fb = fallback.get(name)
        config = _g(body, "config")
        out[str(name)] = Preset(
            name=str(name),
            description=str(_g(body, "description") or (fb.description if fb else "")),
            config=dict(config) if isinstance(config, dict) else (dict(fb.config) if fb else {}),
        )
    return out


def preset_config(
    name: str,
    path: str | None = None,
    base: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """ExperimentConfig for a named preset, layered over `base` (for example env-level T / beta defaults)."""
    presets = load_presets(path)
    if name not in presets:
        known = ", ".join(sorted(presets))
        raise InvalidInputError("unknown-preset", f"{name!r}; known presets: {known}")
    merged = dict(base or {})
    merged.update(presets[name].config)
    return ExperimentConfig.model_validate(merged)

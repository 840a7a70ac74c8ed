"""Run configuration: defaults for every stage plus a flat key=value file
format with dotted namespaces (fit.w, decomp.alpha, prune.t_main, ...).
Command-line flags override file values; file values override defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .decomp import DecompConfig
from .errors import MalformedFile
from .fitter import FitConfig
from .pipeline import PruneConfig

DEFAULT_RESOLUTION = 100


@dataclass
class RunConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    decomp: DecompConfig = field(default_factory=DecompConfig)
    prune: PruneConfig | None = None  # None: scale thresholds to the voxel size
    resolution: int = DEFAULT_RESOLUTION
    seed: int = 0
    k_per_partition: int = 1

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.k_per_partition < 1:
            raise ValueError("k_per_partition must be >= 1")


_SECTIONS = {"fit": FitConfig, "decomp": DecompConfig, "prune": PruneConfig}
_TOP_LEVEL = {"resolution": int, "seed": int, "k_per_partition": int}


def _parse_value(raw: str, target_type) -> object:
    raw = raw.strip()
    name = target_type if isinstance(target_type, str) else target_type.__name__
    if name == "bool" or raw.lower() in ("true", "false"):
        if raw.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {raw!r}")
        return raw.lower() == "true"
    if name == "int":
        return int(raw)
    return float(raw)


def parse_config_file(path) -> RunConfig:
    """Read a flat key=value file into a RunConfig.

    Unknown keys and malformed lines raise MalformedFile; sections left out
    keep their defaults.
    """
    overrides: dict[str, dict] = {name: {} for name in _SECTIONS}
    top: dict[str, object] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise MalformedFile(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in stripped.split("=", 1))
            try:
                if "." in key:
                    section, name = key.split(".", 1)
                    cls = _SECTIONS.get(section)
                    if cls is None:
                        raise KeyError(section)
                    fields = {f.name: f for f in dataclasses.fields(cls)}
                    if name not in fields:
                        raise KeyError(name)
                    overrides[section][name] = _parse_value(raw, fields[name].type)
                else:
                    if key not in _TOP_LEVEL:
                        raise KeyError(key)
                    top[key] = _parse_value(raw, _TOP_LEVEL[key])
            except KeyError as exc:
                raise MalformedFile(f"{path}:{lineno}: unknown key {key!r}") from exc
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    prune = PruneConfig(**overrides["prune"]) if overrides["prune"] else None
    return RunConfig(
        fit=FitConfig(**overrides["fit"]),
        decomp=DecompConfig(**overrides["decomp"]),
        prune=prune,
        **top,
    )

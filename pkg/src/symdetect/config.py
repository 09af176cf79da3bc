"""Pipeline configuration: TOML or JSON, one section per stage.

An empty file (or no file) gives the full-scale synthetic run (33 x 120 grid, 32 paths, 13 devices).

Example::

    seed = 7
    [simulator]
    n_fresh = 10
    n_aged = 3
    [vp]
    fraction = 0.1
    [ulsif]
    sigma_grid = [0.25, 0.5, 1.0]
    [pairing]
    mode = "fresh"
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .simulator import SimConfig
from .ulsif import UlsifConfig
from .vp import DEFAULT_STOP_TOL

PAIRING_MODES = ("fresh", "population", "structural")


@dataclass(frozen=True)
class VpConfig:
    fraction: float = 0.1
    stop_tol: float = DEFAULT_STOP_TOL
    # None: floor(samples / 4)
    max_atoms: Optional[int] = None

    def validate(self) -> None:
        if not (0.0 < self.fraction <= 1.0):
            raise ConfigError(f"vp.fraction: must lie in (0, 1], got {self.fraction}")
        if not self.stop_tol >= 0:
            raise ConfigError("vp.stop_tol: must be >= 0")
        if self.max_atoms is not None and self.max_atoms < 1:
            raise ConfigError("vp.max_atoms: must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 2024
    simulator: SimConfig = field(default_factory=SimConfig)
    vp: VpConfig = field(default_factory=VpConfig)
    ulsif: UlsifConfig = field(default_factory=UlsifConfig)
    pairing_mode: str = "fresh"
    # also run the adjacent-column scheme with live counters
    run_baseline: bool = False

    def validate(self) -> "PipelineConfig":
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        self.simulator.validate()
        self.vp.validate()
        self.ulsif.validate()
        if self.pairing_mode not in PAIRING_MODES:
            raise ConfigError(f"pairing.mode: must be one of {PAIRING_MODES}, got {self.pairing_mode!r}")
        return self

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=int(seed), simulator=replace(self.simulator, seed=int(seed)))

    def with_simulator(self, **changes) -> "PipelineConfig":
        return replace(self, simulator=replace(self.simulator, **changes))

    def to_dict(self) -> dict:
        u = asdict(self.ulsif)
        u["sigma_grid"] = list(u["sigma_grid"])
        u["lambda_grid"] = list(u["lambda_grid"])
        return {
            "seed": self.seed,
            "simulator": self.simulator.to_dict(),
            "vp": asdict(self.vp),
            "ulsif": u,
            "pairing": {"mode": self.pairing_mode},
            "detector": {"run_baseline": self.run_baseline},
        }


def read_config_file(path) -> dict:
    """Parse a ``.toml`` or ``.json`` file into a plain mapping."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {p}: top level must be a table/object")
    return doc


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be a table")
    return dict(sec)


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_mapping(doc: dict) -> PipelineConfig:
    allowed = {"seed", "simulator", "vp", "ulsif", "pairing", "detector"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    seed = doc.get("seed", PipelineConfig.seed)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: must be an integer")
    sim = _section(doc, "simulator")
    sim.setdefault("seed", seed)
    pairing = _section(doc, "pairing")
    if set(pairing) - {"mode"}:
        raise ConfigError(f"pairing: unknown field(s) {sorted(set(pairing) - {'mode'})}")
    det = _section(doc, "detector")
    if set(det) - {"run_baseline"}:
        raise ConfigError(f"detector: unknown field(s) {sorted(set(det) - {'run_baseline'})}")
    cfg = PipelineConfig(
        seed=seed,
        simulator=_build(SimConfig, sim, "simulator"),
        vp=_build(VpConfig, _section(doc, "vp"), "vp"),
        ulsif=_build(UlsifConfig, _section(doc, "ulsif"), "ulsif"),
        pairing_mode=pairing.get("mode", "fresh"),
        run_baseline=bool(det.get("run_baseline", False)),
    )
    return cfg.validate()


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    return config_from_mapping(read_config_file(path))

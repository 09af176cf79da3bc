"""Synthetic fresh/aged device fingerprints.

Each device gets one smooth systematic field per symmetric pair (paths
``p`` and ``p + P/2``), a small smooth jitter field per path, and i.i.d.
per-RO noise. Aged devices lose a fixed fraction of the base frequency
inside a stress rectangle on a subset of paths, which breaks the pair
symmetry.

Random streams
--------------
Every draw comes from ``PCG64(SeedSequence(seed, spawn_key=key))`` with
``key = (group, device_index, slot, role)``: group 0 is fresh devices,
group 1 aged devices; ``device_index`` counts within the group; ``slot``
is the pair index for the systematic field and the path index otherwise;
``role`` is one of the ``ROLE_*`` constants. Adding devices to a group,
or adding a group, never changes the streams of existing devices.

Pair sensitivity
----------------
Different LUT paths respond to process variation with different gain.
Pair ``k`` scales its systematic field by ``s_k``; the ``s_k`` are
geometrically spaced over ``pair_sensitivity`` and assigned to pairs by a
permutation drawn from the design stream ``(GROUP_DESIGN,)``. They are a
property of the chip design, so every device shares them, and both
partners of a pair share them.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .errors import ConfigError
from .fingerprint import AGED, FRESH, Dataset, DeviceFingerprint, check
from .vp import idct2

ROLE_SYSTEMATIC = 0
ROLE_JITTER = 1
ROLE_NOISE = 2

GROUP_FRESH = 0
GROUP_AGED = 1
GROUP_DESIGN = 2


@dataclass(frozen=True)
class SimConfig:
    rows: int = 33
    cols: int = 120
    paths: int = 32
    base_freq: float = 400.0
    systematic_sigma: float = 4.0
    random_sigma: float = 1.0
    pair_jitter_sigma: float = 0.3
    aging_drop_pct: float = 0.75
    # (row_start, row_stop, col_start, col_stop), half-open; None = central third
    stress_region: Optional[tuple] = None
    n_fresh: int = 10
    n_aged: int = 3
    seed: int = 2024
    # number of lowest-order (non-DC) DCT terms in each systematic field,
    # capped at rows * cols - 1
    n_modes: int = 1024
    # per-mode amplitude falls off as 1 / (1 + order) ** spectral_decay
    spectral_decay: float = 0.5
    # (low, high) gain range of the per-pair systematic scale factors
    pair_sensitivity: tuple = (0.25, 2.0)
    # "one": degrade aged_paths fully; "both": 70% on aged_paths, 30% on partners
    aging_mode: str = "one"
    # 1-based; None = the lower partner of every pair (1..P/2)
    aged_paths: Optional[tuple] = None

    def __post_init__(self):
        if self.stress_region is not None:
            object.__setattr__(self, "stress_region", tuple(int(v) for v in self.stress_region))
        if self.aged_paths is not None:
            object.__setattr__(self, "aged_paths", tuple(int(v) for v in self.aged_paths))
        object.__setattr__(self, "pair_sensitivity", tuple(float(v) for v in self.pair_sensitivity))

    @property
    def region(self) -> tuple:
        if self.stress_region is not None:
            return self.stress_region
        r3, c3 = self.rows // 3, self.cols // 3
        return (r3, self.rows - r3, c3, self.cols - c3)

    @property
    def degraded_paths(self) -> tuple:
        if self.aged_paths is not None:
            return self.aged_paths
        return tuple(range(1, self.paths // 2 + 1))

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"simulator.{name}: {why}")

        for name in ("rows", "cols"):
            if getattr(self, name) < 2:
                bad(name, "must be >= 2")
        if self.paths < 2 or self.paths % 2:
            bad("paths", f"must be even and >= 2, got {self.paths}")
        if not self.base_freq > 0:
            bad("base_freq", "must be > 0")
        for name in ("systematic_sigma", "random_sigma", "pair_jitter_sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                bad(name, "must be finite and >= 0")
        if not (0 <= self.aging_drop_pct < 100):
            bad("aging_drop_pct", "must lie in [0, 100)")
        if self.n_fresh < 0 or self.n_aged < 0:
            bad("n_fresh" if self.n_fresh < 0 else "n_aged", "must be >= 0")
        if not (0 <= self.seed < 2**64):
            bad("seed", "must be a 64-bit unsigned integer")
        if self.n_modes < 1:
            bad("n_modes", "must be >= 1")
        if self.spectral_decay < 0:
            bad("spectral_decay", "must be >= 0")
        ps = self.pair_sensitivity
        if len(ps) != 2 or not (0 < ps[0] <= ps[1] and np.isfinite(ps[1])):
            bad("pair_sensitivity", "must be [low, high] with 0 < low <= high")
        if self.aging_mode not in ("one", "both"):
            bad("aging_mode", "must be 'one' or 'both'")
        r0, r1, c0, c1 = self.region
        if not (0 <= r0 < r1 <= self.rows and 0 <= c0 < c1 <= self.cols):
            bad("stress_region", f"{self.region} does not lie within a {self.rows}x{self.cols} grid")
        for p in self.degraded_paths:
            if not 1 <= p <= self.paths:
                bad("aged_paths", f"path {p} outside 1..{self.paths}")
        if self.aging_mode == "both":
            half = self.paths // 2
            lower = {(p - 1) % half for p in self.degraded_paths}
            if len(lower) != len(self.degraded_paths):
                bad("aged_paths", "with aging_mode='both' name at most one path per pair")

    @classmethod
    def from_mapping(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"simulator: unknown field(s) {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"simulator: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pair_sensitivity"] = list(self.pair_sensitivity)
        for k in ("stress_region", "aged_paths"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def load_sim_config(path) -> SimConfig:
    from .config import read_config_file

    doc = read_config_file(path)
    return SimConfig.from_mapping(doc.get("simulator", doc))


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def mode_order(rows: int, cols: int) -> np.ndarray:
    """Non-DC DCT modes (u, v) sorted by u + v, then u."""
    u, v = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    u, v = u.ravel(), v.ravel()
    keep = (u + v) > 0
    u, v = u[keep], v[keep]
    order = np.lexsort((u, u + v))
    return np.stack([u[order], v[order]], axis=1)


def gen_systematic_field(
    rng: np.random.Generator,
    rows: int,
    cols: int,
    systematic_sigma: float,
    n_modes: int = 1024,
    spectral_decay: float = 0.5,
) -> np.ndarray:
    """Zero-mean smooth field spanned by the ``n_modes`` lowest DCT modes.

    The field's population standard deviation equals ``systematic_sigma``
    (the orthonormal basis makes this an exact rescaling of coefficients).
    """
    modes = mode_order(rows, cols)[:n_modes]
    order = modes.sum(axis=1).astype(np.float64)
    coef = rng.standard_normal(len(modes)) / (1.0 + order) ** spectral_decay
    grid = np.zeros((rows, cols))
    if systematic_sigma == 0:
        return grid
    energy = np.sqrt(np.sum(coef * coef) / (rows * cols))
    if energy == 0:
        return grid
    grid[modes[:, 0], modes[:, 1]] = coef * (systematic_sigma / energy)
    return idct2(grid)


def pair_gains(cfg: SimConfig) -> np.ndarray:
    """Systematic scale factor of each pair, shared by all devices."""
    half = cfg.paths // 2
    lo, hi = cfg.pair_sensitivity
    levels = np.geomspace(lo, hi, half) if half > 1 else np.array([np.sqrt(lo * hi)])
    return levels[stream(cfg.seed, GROUP_DESIGN).permutation(half)]


def _device_stack(cfg: SimConfig, group: int, index: int, aged: bool) -> np.ndarray:
    R, C, P = cfg.rows, cfg.cols, cfg.paths
    half = P // 2
    gains = pair_gains(cfg)
    out = np.empty((P, R, C))
    for k in range(half):
        rng = stream(cfg.seed, group, index, k, ROLE_SYSTEMATIC)
        shared = gen_systematic_field(
            rng, R, C, cfg.systematic_sigma * gains[k], cfg.n_modes, cfg.spectral_decay
        )
        for p in (k, k + half):
            jitter = gen_systematic_field(
                stream(cfg.seed, group, index, p, ROLE_JITTER),
                R, C, cfg.pair_jitter_sigma, cfg.n_modes, cfg.spectral_decay,
            )
            noise = stream(cfg.seed, group, index, p, ROLE_NOISE).standard_normal((R, C))
            out[p] = cfg.base_freq + shared + jitter + cfg.random_sigma * noise
    if aged and cfg.aging_drop_pct > 0:
        drop = cfg.aging_drop_pct * cfg.base_freq / 100.0
        r0, r1, c0, c1 = cfg.region
        for p in cfg.degraded_paths:
            i = p - 1
            if cfg.aging_mode == "one":
                out[i, r0:r1, c0:c1] -= drop
            else:
                partner = (i + half) % P
                out[i, r0:r1, c0:c1] -= 0.7 * drop
                out[partner, r0:r1, c0:c1] -= 0.3 * drop
    return out


def simulate(cfg: SimConfig) -> Dataset:
    """Generate ``n_fresh`` fresh then ``n_aged`` aged devices.

    Device ids are ``dev-00``, ``dev-01``, ... in generation order; the
    label lives only in ``ground_truth``.
    """
    cfg.validate()
    devices = []
    plan = [(GROUP_FRESH, i, False) for i in range(cfg.n_fresh)]
    plan += [(GROUP_AGED, i, True) for i in range(cfg.n_aged)]
    width = max(2, len(str(len(plan) - 1)))
    for n, (group, index, aged) in enumerate(plan):
        stack = _device_stack(cfg, group, index, aged)
        devices.append(
            DeviceFingerprint.from_stack(f"dev-{n:0{width}d}", stack, AGED if aged else FRESH)
        )
    provenance = "symdetect.simulate " + json.dumps(cfg.to_dict(), sort_keys=True)
    return check(Dataset(tuple(devices), cfg.rows, cfg.cols, cfg.paths, provenance))

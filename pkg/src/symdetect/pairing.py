"""Comparison pairs (CPs) from per-path RMSE signatures.

Partner paths share their systematic variation, so their reconstruction
errors are close. Pairing paths with the closest RMSE recovers them.
Path indices are 1-based throughout.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, PairingError, SchemaError

RMSE_MATCHED = "rmse_matched"
STRUCTURAL = "structural"
SOURCES = (RMSE_MATCHED, STRUCTURAL)


@dataclass(frozen=True)
class SymmetryPairing:
    """A perfect matching of paths ``1..P``.

    ``pairs`` holds ``(a, b)`` with ``a < b``, sorted by ``a``.
    ``margins`` is ``|rmse_a - rmse_b|`` per pair in MHz, or empty when
    no RMSE data backs the pairing.
    """

    pairs: tuple
    margins: tuple = ()
    source: str = RMSE_MATCHED

    def __post_init__(self):
        pairs = tuple(sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in self.pairs))
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "margins", tuple(float(m) for m in self.margins))
        if self.source not in SOURCES:
            raise PairingError(f"unknown pairing source {self.source!r}")
        if self.margins and len(self.margins) != len(pairs):
            raise PairingError("margins must have one entry per pair")
        seen = sorted(p for pair in pairs for p in pair)
        if seen != list(range(1, len(seen) + 1)) or any(a == b for a, b in pairs):
            raise PairingError(f"pairs do not form a perfect matching of 1..{len(seen)}: {pairs}")

    @property
    def n_paths(self) -> int:
        return 2 * len(self.pairs)

    def partner(self, path: int) -> int:
        for a, b in self.pairs:
            if path == a:
                return b
            if path == b:
                return a
        raise PairingError(f"path {path} is not in the pairing")

    def partners(self) -> dict:
        out = {}
        for a, b in self.pairs:
            out[a], out[b] = b, a
        return out

    def with_margins(self, rmse: Sequence[float]) -> "SymmetryPairing":
        return SymmetryPairing(self.pairs, pair_margins(self.pairs, rmse), self.source)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "pairs": [list(p) for p in self.pairs],
            "margins_mhz": list(self.margins),
        }


def _check_even(P: int) -> None:
    if P < 2 or P % 2:
        raise PairingError(f"P must be even and >= 2, got {P}")


def pair_margins(pairs, rmse: Sequence[float]) -> tuple:
    r = np.asarray(rmse, dtype=np.float64)
    norm = sorted((min(a, b), max(a, b)) for a, b in pairs)
    return tuple(float(abs(r[a - 1] - r[b - 1])) for a, b in norm)


def pair_by_rmse(rmse: Sequence[float]) -> SymmetryPairing:
    """Minimum-cost perfect matching under ``|rmse_a - rmse_b|``.

    For scalar values, pairing consecutive ranks is optimal. Sorting is
    stable on path index, so equal values pair the lower indices first.
    """
    r = np.asarray(rmse, dtype=np.float64).reshape(-1)
    _check_even(r.size)
    if not np.all(np.isfinite(r)):
        raise PairingError("RMSE values must be finite")
    order = np.argsort(r, kind="stable") + 1
    pairs = [(int(order[i]), int(order[i + 1])) for i in range(0, r.size, 2)]
    return SymmetryPairing(pairs, pair_margins(pairs, r), RMSE_MATCHED)


def structural_pairing(P: int, rmse: Optional[Sequence[float]] = None) -> SymmetryPairing:
    """``(p, p + P/2)`` for ``p = 1..P/2``."""
    _check_even(P)
    half = P // 2
    pairs = [(p, p + half) for p in range(1, half + 1)]
    margins = pair_margins(pairs, rmse) if rmse is not None else ()
    return SymmetryPairing(pairs, margins, STRUCTURAL)


def consensus_pairing(per_device: Sequence[SymmetryPairing], profiles=None) -> SymmetryPairing:
    """Majority partner of every path across devices.

    Each path takes its most frequent partner (ties: lower index). If that
    relation is not a perfect matching, edges are accepted greedily by
    descending vote count, then by ``(a, b)``; paths left over are paired
    in index order. Margins are averaged over ``profiles`` when given,
    otherwise over the devices that voted for each pair.
    """
    per_device = list(per_device)
    if not per_device:
        raise ParameterError("consensus_pairing needs at least one device pairing")
    P = per_device[0].n_paths
    if any(p.n_paths != P for p in per_device):
        raise PairingError("all device pairings must cover the same number of paths")

    votes = Counter(pair for p in per_device for pair in p.pairs)
    mode = {}
    for path in range(1, P + 1):
        best = None
        for other in range(1, P + 1):
            if other == path:
                continue
            v = votes.get((min(path, other), max(path, other)), 0)
            if best is None or v > best[0]:
                best = (v, other)
        mode[path] = best[1]

    if all(mode[mode[p]] == p for p in mode):
        pairs = sorted({(min(p, q), max(p, q)) for p, q in mode.items()})
    else:
        pairs, used = [], set()
        for (a, b), _ in sorted(votes.items(), key=lambda kv: (-kv[1], kv[0])):
            if a not in used and b not in used:
                pairs.append((a, b))
                used.update((a, b))
        rest = [p for p in range(1, P + 1) if p not in used]
        pairs += [(rest[i], rest[i + 1]) for i in range(0, len(rest), 2)]

    if profiles is not None:
        m = np.array([pair_margins(pairs, r) for r in profiles])
        margins = tuple(m.mean(axis=0)) if len(m) else ()
    else:
        margins = []
        for pair in sorted(pairs):
            vals = [d.margins[d.pairs.index(pair)] for d in per_device if pair in d.pairs and d.margins]
            margins.append(float(np.mean(vals)) if vals else 0.0)
    return SymmetryPairing(pairs, tuple(margins), RMSE_MATCHED)


def brute_force_matching(rmse: Sequence[float]) -> tuple:
    """Exhaustive minimum-cost perfect matching; returns ``(cost, pairs)``.

    Enumerates all ``(P-1)!!`` matchings. Meant for small ``P``.
    """
    r = [float(v) for v in rmse]
    _check_even(len(r))
    best = [np.inf, None]

    def rec(left, acc, cost):
        if cost >= best[0]:
            return
        if not left:
            best[0], best[1] = cost, tuple(acc)
            return
        a = left[0]
        for i in range(1, len(left)):
            b = left[i]
            rec(left[1:i] + left[i + 1:], acc + [(a + 1, b + 1)], cost + abs(r[a] - r[b]))

    rec(list(range(len(r))), [], 0.0)
    return best[0], best[1]


def matching_cost(pairing: SymmetryPairing, rmse: Sequence[float]) -> float:
    return float(sum(pair_margins(pairing.pairs, rmse)))


def save_pairing(pairing: SymmetryPairing, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pairing.to_dict(), fh, indent=2)
        fh.write("\n")


def pairing_from_dict(doc) -> SymmetryPairing:
    if not isinstance(doc, dict):
        raise SchemaError("$: pairing document must be an object")
    for key in ("source", "pairs"):
        if key not in doc:
            raise SchemaError(f"$.{key}: missing")
    pairs = doc["pairs"]
    if not isinstance(pairs, list) or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(v, int) for v in p) for p in pairs
    ):
        raise SchemaError("$.pairs: expected a list of [int, int]")
    margins = doc.get("margins_mhz", [])
    if not isinstance(margins, list) or not all(isinstance(v, (int, float)) for v in margins):
        raise SchemaError("$.margins_mhz: expected a list of numbers")
    return SymmetryPairing([tuple(p) for p in pairs], margins, doc["source"])


def load_pairing(path) -> SymmetryPairing:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return pairing_from_dict(doc)

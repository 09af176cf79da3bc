import itertools

import numpy as np
import pytest

from symdetect.errors import PairingError, ParameterError, SchemaError
from symdetect.pairing import (
    SymmetryPairing,
    brute_force_matching,
    consensus_pairing,
    load_pairing,
    matching_cost,
    pair_by_rmse,
    save_pairing,
    structural_pairing,
)


def test_example_pairs():
    p = pair_by_rmse([3.20, 5.0, 3.17, 5.1])
    assert p.pairs == ((1, 3), (2, 4))
    assert p.margins == pytest.approx((0.03, 0.1))
    assert p.source == "rmse_matched"


def test_all_equal_tie_break():
    assert pair_by_rmse([1.0] * 6).pairs == ((1, 2), (3, 4), (5, 6))


@pytest.mark.parametrize("P", [1, 3, 5])
def test_odd_p(P):
    with pytest.raises(PairingError):
        pair_by_rmse([1.0] * P)
    with pytest.raises(PairingError):
        structural_pairing(P)


def test_nonfinite():
    with pytest.raises(PairingError):
        pair_by_rmse([1.0, np.nan])


def _enumerate_matchings(items):
    if not items:
        yield []
        return
    a = items[0]
    for i in range(1, len(items)):
        for rest in _enumerate_matchings(items[1:i] + items[i + 1:]):
            yield [(a, items[i])] + rest


def test_brute_force_helper_against_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = rng.uniform(0, 5, 6)
        costs = [sum(abs(r[a] - r[b]) for a, b in m) for m in _enumerate_matchings(list(range(6)))]
        assert brute_force_matching(r)[0] == pytest.approx(min(costs))
    assert sum(1 for _ in _enumerate_matchings(list(range(8)))) == 105


def test_optimal_against_brute_force_small():
    rng = np.random.default_rng(1)
    for _ in range(200):
        P = int(rng.choice([2, 4, 6, 8]))
        r = rng.uniform(0, 5, P)
        assert matching_cost(pair_by_rmse(r), r) == pytest.approx(brute_force_matching(r)[0], abs=1e-12)


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    r = rng.uniform(0, 5, 10)
    perm = rng.permutation(10)  # new label i+1 holds old path perm[i]+1
    p0 = pair_by_rmse(r)
    p1 = pair_by_rmse(r[perm])
    back = {tuple(sorted((perm[a - 1] + 1, perm[b - 1] + 1))) for a, b in p1.pairs}
    assert back == set(p0.pairs)


def test_structural():
    assert structural_pairing(32).pairs[0] == (1, 17)
    assert structural_pairing(32).pairs[-1] == (16, 32)
    assert structural_pairing(2).pairs == ((1, 2),)
    assert structural_pairing(4).pairs == ((1, 3), (2, 4))
    assert structural_pairing(4).source == "structural"


def test_invariants_enforced():
    with pytest.raises(PairingError):
        SymmetryPairing([(1, 2), (2, 3)])
    with pytest.raises(PairingError):
        SymmetryPairing([(1, 3)])
    p = SymmetryPairing([(4, 2), (3, 1)])
    assert p.pairs == ((1, 3), (2, 4))


def test_consensus_unanimous_and_idempotent():
    x = structural_pairing(8)
    assert consensus_pairing([x] * 10).pairs == x.pairs
    y = pair_by_rmse([1, 2, 3, 4, 1.1, 2.2, 3.3, 4.4])
    assert consensus_pairing([y]).pairs == y.pairs


def test_consensus_majority():
    major = SymmetryPairing([(1, 17)] + [(p, p + 16) for p in range(2, 17)])
    minor = SymmetryPairing([(1, 18), (2, 17)] + [(p, p + 16) for p in range(3, 17)])
    c = consensus_pairing([major] * 9 + [minor])
    assert (1, 17) in c.pairs and c.pairs == major.pairs


def test_consensus_conflict_resolved_to_matching():
    a = SymmetryPairing([(1, 2), (3, 4)])
    b = SymmetryPairing([(1, 3), (2, 4)])
    c = SymmetryPairing([(1, 4), (2, 3)])
    out = consensus_pairing([a, b, c])
    assert out.pairs == ((1, 2), (3, 4))


def test_consensus_empty():
    with pytest.raises(ParameterError):
        consensus_pairing([])


def test_json_round_trip(tmp_path):
    p = pair_by_rmse([3.2, 5.0, 3.17, 5.1])
    path = tmp_path / "p.json"
    save_pairing(p, path)
    assert load_pairing(path) == p
    path.write_text('{"source": "structural", "pairs": [[1, "x"]]}')
    with pytest.raises(SchemaError):
        load_pairing(path)

import numpy as np
import pytest

from symdetect.errors import ConfigError
from symdetect.fingerprint import validate
from symdetect.simulator import SimConfig, gen_systematic_field, pair_gains, simulate, stream
from symdetect.vp import dct2


def test_zero_sigma_field():
    assert np.all(gen_systematic_field(stream(1, 0), 6, 7, 0.0) == 0)


def test_field_std_and_determinism():
    a = gen_systematic_field(stream(3, 1), 33, 120, 4.0)
    b = gen_systematic_field(stream(3, 1), 33, 120, 4.0)
    assert np.array_equal(a, b)
    assert abs(a.std() - 4.0) <= 0.2
    assert abs(a.mean()) < 1e-9


def test_field_k9_sparsity():
    # oracle: exact DCT of the output, count coefficients that are not ~0
    f = gen_systematic_field(stream(7, 0), 33, 120, 2.0, n_modes=9)
    coefs = dct2(f)
    nonzero = np.count_nonzero(np.abs(coefs) > 1e-9 * np.abs(coefs).max())
    assert 33 * 120 - nonzero >= 33 * 120 - 9


def test_full_scale_dims():
    cfg = SimConfig(n_fresh=10, n_aged=3)
    ds = simulate(SimConfig(rows=6, cols=8, paths=32, n_fresh=10, n_aged=3))
    assert len(ds.devices) == 13 and ds.n_paths == 32
    assert (cfg.rows, cfg.cols, cfg.paths) == (33, 120, 32)
    assert [d.ground_truth for d in ds.devices].count("aged") == 3
    assert validate(ds) == []


def test_bit_identical_reruns():
    cfg = SimConfig(rows=5, cols=6, paths=4, n_fresh=2, n_aged=1, seed=9)
    a, b = simulate(cfg), simulate(cfg)
    assert all(np.array_equal(x.stack(), y.stack()) for x, y in zip(a.devices, b.devices))


def test_adding_devices_keeps_existing_streams():
    a = simulate(SimConfig(rows=5, cols=6, paths=4, n_fresh=2, n_aged=0, seed=9))
    b = simulate(SimConfig(rows=5, cols=6, paths=4, n_fresh=4, n_aged=0, seed=9))
    for x, y in zip(a.devices, b.devices):
        assert np.array_equal(x.stack(), y.stack())


def test_pair_gains_shared_and_in_range():
    cfg = SimConfig(paths=8)
    g = pair_gains(cfg)
    assert len(g) == 4 and g.min() == pytest.approx(0.25) and g.max() == pytest.approx(2.0)
    assert np.array_equal(g, pair_gains(SimConfig(paths=8, n_fresh=3)))


@pytest.mark.parametrize(
    "field,value",
    [("paths", 3), ("base_freq", 0.0), ("random_sigma", -1.0), ("aging_drop_pct", 100.0),
     ("stress_region", (0, 40, 0, 5)), ("aging_mode", "half"), ("aged_paths", (99,))],
)
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigError, match=field):
        simulate(SimConfig(**{field: value}))


def test_from_mapping_rejects_unknown():
    with pytest.raises(ConfigError, match="unknown"):
        SimConfig.from_mapping({"rowz": 3})


def test_zero_aging_indistinguishable():
    cfg = SimConfig(rows=10, cols=12, paths=4, n_fresh=8, n_aged=8, aging_drop_pct=0.0,
                    systematic_sigma=0.0, pair_jitter_sigma=0.0, seed=3)
    ds = simulate(cfg)
    fresh = np.mean([d.stack() for d in ds.devices if d.ground_truth == "fresh"], axis=0)
    aged = np.mean([d.stack() for d in ds.devices if d.ground_truth == "aged"], axis=0)
    # bound from the criterion, per-cell mean difference; n = devices per group
    assert np.max(np.abs(fresh - aged)) <= 4 * 1.0 / np.sqrt(8) * 2


def test_aging_drop_in_region():
    cfg = SimConfig(rows=12, cols=20, paths=4, n_fresh=0, n_aged=1, aging_drop_pct=1.0,
                    stress_region=(0, 12, 0, 10), systematic_sigma=0.0, pair_jitter_sigma=0.0, seed=4)
    g = simulate(cfg).devices[0].stack()[0]
    stressed, rest = g[:, :10].mean(), g[:, 10:].mean()
    tol = 3 * 1.0 / np.sqrt(120) * 2
    assert abs((rest - stressed) - 4.0) <= tol


def test_both_mode_splits_drop():
    cfg = SimConfig(rows=6, cols=6, paths=2, n_fresh=0, n_aged=1, aging_mode="both",
                    random_sigma=0.0, systematic_sigma=0.0, pair_jitter_sigma=0.0,
                    stress_region=(0, 6, 0, 6))
    g = simulate(cfg).devices[0].stack()
    assert np.allclose(400 - g[0], 0.7 * 3.0) and np.allclose(400 - g[1], 0.3 * 3.0)


def test_fresh_partner_rmse_bound_over_seeds():
    bound = np.sqrt(2 * (0.3**2 + 1.0**2)) * 1.25
    fails = 0
    for seed in range(50):
        s = simulate(SimConfig(rows=33, cols=120, paths=2, n_fresh=1, n_aged=0, seed=seed)).devices[0].stack()
        fails += np.sqrt(np.mean((s[0] - s[1]) ** 2)) > bound
    assert fails <= 0.01 * 50


def test_aged_partner_rmse_exceeds_bound():
    bound = np.sqrt(2 * (0.3**2 + 1.0**2)) * 1.25
    # drop 4 MHz > 3 * random_sigma
    cfg = SimConfig(paths=4, n_fresh=0, n_aged=1, seed=2, aging_drop_pct=1.0)
    s = simulate(cfg).devices[0].stack()
    assert np.sqrt(np.mean((s[0] - s[2]) ** 2)) > bound

import math
from dataclasses import replace

import numpy as np
import pytest

from slowpoints import _rng, spde
from slowpoints.errors import DomainError, InsufficientDataError
from slowpoints.spde import SigmaSpec, SpdeConfig


def small_config(sigma, **kw):
    base = dict(checkpoints=(0.001, 0.002, 0.004), half_width=0.6, dx=0.02, replicas=4,
                seed=(3, 0))
    base.update(kw)
    return SpdeConfig(sigma, **base)


def test_sigma_catalog():
    s = SigmaSpec.default_bounded()
    assert s.sigma_at_one == pytest.approx(1.0, abs=1e-15)
    assert s.bound == pytest.approx(1 - math.sin(1) + 1)
    assert SigmaSpec.linear(2.0).sigma_at_one == 2.0
    assert SigmaSpec.linear(2.0).bound is None
    assert SigmaSpec.linear(2.0).truncated().bound == 4.0
    assert SigmaSpec.constant(0.5)(np.array([3.0, -7.0])).tolist() == [0.5, 0.5]
    t = SigmaSpec.linear(1.0).truncated()
    assert t(5.0) == 2.0 and t(-5.0) == -2.0 and t(1.5) == 1.5
    assert SigmaSpec.from_dict(s.to_dict()) == s
    with pytest.raises(DomainError):
        SigmaSpec.clamped(s, 1.0, 0.0)


def test_sigma_zero_keeps_field_at_one():
    rng = np.random.default_rng(0)
    u = np.ones(51)
    for _ in range(200):
        u = spde.step(u, rng.standard_normal(49), SigmaSpec.constant(0.0), 0.02, 0.0001)
    assert np.all(u == 1.0)


def test_step_stability_message():
    with pytest.raises(DomainError, match="stability"):
        spde.step(np.ones(5), np.zeros(3), SigmaSpec.constant(1.0), 0.1, 0.006)


def test_config_stability_and_buffer():
    s = SigmaSpec.constant(1.0)
    with pytest.raises(DomainError, match="stability") as exc:
        small_config(s, dt=0.0002)
    assert exc.value.param == "dt"
    with pytest.raises(DomainError) as exc:
        small_config(s, half_width=0.1)
    assert exc.value.param == "half_width"
    with pytest.raises(DomainError):
        small_config(SigmaSpec.linear(1.0, -1.0))
    with pytest.raises(DomainError):
        small_config(s, checkpoints=(0.002, 0.001))
    cfg = small_config(s)
    assert cfg.dt == pytest.approx(cfg.dx**2 / 4)
    assert cfg.horizon == 0.004


def test_checkpoints_snap_to_steps():
    cfg = small_config(SigmaSpec.constant(1.0), checkpoints=(0.00101, 0.002))
    steps, snap = cfg.checkpoint_steps()
    assert np.all(snap <= cfg.dt / 2 + 1e-18)
    with pytest.raises(DomainError):
        small_config(SigmaSpec.constant(1.0), checkpoints=(0.001, 0.001 + 1e-6)).checkpoint_steps()


def test_kernel_matches_numpy_step():
    sig = SigmaSpec.default_bounded()
    cfg = small_config(sig, replicas=2, checkpoints=(0.0004, 0.0008))
    run = spde.run_coupled(cfg)
    rng = _rng.generator(cfg.seed)
    n = 2 * cfg.n_half + 1
    u = np.ones((2, n))
    steps, _ = cfg.checkpoint_steps()
    o = cfg.site_indices()[0]
    for it in range(1, steps[-1] + 1):
        u = spde.step(u, rng.standard_normal((2, n - 2)), sig, cfg.dx, cfg.dt)
        if it in steps:
            k = list(steps).index(it)
            np.testing.assert_allclose(run.series_u[:, k, 0], u[:, o], rtol=0, atol=1e-13)


def test_linear_coupling_identity():
    for c in (0.7, -1.3):
        run = spde.run_coupled(small_config(SigmaSpec.constant(c), tracked_sites=(0.0, 0.1)))
        assert np.max(np.abs(run.series_u - 1.0 - c * run.series_h)) <= 1e-12
        assert np.max(np.abs(run.linearization_error)) <= 1e-12
        assert np.max(run.sup_error) <= 1e-12


def test_u_equals_ubar_until_clamp():
    run = spde.run_coupled(small_config(SigmaSpec.default_bounded()))
    assert run.clamp_step is None
    np.testing.assert_array_equal(run.series_u, run.series_ubar)
    big = spde.run_coupled(small_config(SigmaSpec.linear(6.0), replicas=8,
                                        checkpoints=(0.01, 0.05), half_width=1.5))
    assert big.clamp_step is not None
    assert np.any(big.series_u != big.series_ubar)


def test_runs_are_deterministic():
    cfg = small_config(SigmaSpec.default_bounded())
    a, b = spde.run_coupled(cfg), spde.run_coupled(cfg)
    np.testing.assert_array_equal(a.series_u, b.series_u)
    c = spde.run_coupled(replace(cfg, seed=(3, 1)))
    assert not np.array_equal(a.series_u, c.series_u)


def test_ensemble_independent_of_workers():
    cfg = small_config(SigmaSpec.default_bounded())
    one = spde.run_ensemble(cfg, 10, shard_size=3, workers=1)
    two = spde.run_ensemble(cfg, 10, shard_size=3, workers=3)
    assert [r.replicas for r in one] == [3, 3, 3, 1]
    for a, b in zip(one, two):
        np.testing.assert_array_equal(a.series_u, b.series_u)


def test_profiles_need_replicas():
    runs = spde.run_ensemble(small_config(SigmaSpec.default_bounded()), 20)
    with pytest.raises(InsufficientDataError):
        spde.linearization_profile(runs)
    with pytest.raises(InsufficientDataError):
        spde.truncation_profile(runs)


def test_linearization_profile_shapes():
    cfg = small_config(SigmaSpec.default_bounded(), checkpoints=(0.0005, 0.001, 0.002, 0.004))
    prof = spde.linearization_profile(spde.run_ensemble(cfg, 120, shard_size=60))
    assert prof.replicas == 120
    assert prof.l2.shape == (4,) and np.all(prof.l2 > 0) and np.all(prof.l2_se > 0)
    assert np.all(prof.sup_mean >= 0)
    assert math.isfinite(prof.slope)


def test_field_statistic_constant_sigma():
    c = -1.7
    cfg = small_config(SigmaSpec.constant(c), analysis_window=(-0.1, 0.1), half_width=0.7)
    fs = spde.simulate_field(cfg, (0.001, 0.004))
    np.testing.assert_allclose(fs.stat_u, abs(c) * fs.stat_h, rtol=1e-10)
    assert fs.stat_u.shape == (4, fs.positions.size)
    assert fs.positions.size == 11


def test_field_statistic_window_properties():
    cfg = small_config(SigmaSpec.default_bounded(), analysis_window=(-0.1, 0.1),
                       half_width=0.7)
    run = spde.run_coupled(cfg)
    one, used = spde.window_statistic(run.series_u, run.times, (0.002, 0.002), 1.0)
    assert used.tolist() == [0.002]
    np.testing.assert_allclose(one, np.abs(run.series_u[:, 1] - 1) / 0.002**0.25)
    small, _ = spde.window_statistic(run.series_u, run.times, (0.002, 0.004), 1.0)
    large, _ = spde.window_statistic(run.series_u, run.times, (0.001, 0.004), 1.0)
    assert np.all(large >= small)
    with pytest.raises(DomainError):
        spde.window_statistic(run.series_u, run.times, (0.005, 0.006), 1.0)
    with pytest.raises(DomainError):
        spde.simulate_field(cfg, (0.001, 0.5))

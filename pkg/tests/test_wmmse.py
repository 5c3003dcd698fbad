"""WMMSE solver properties and the grid oracle."""

import numpy as np
import pytest

from qgpc import channels as ch
from qgpc.wmmse import (
    GRID_POINT_GUARD, InstanceTooLargeError, WmmseConfig, grid_search_oracle,
    wmmse_allocate,
)


def _random_instance(rng, m, sigma2=1e-2):
    sc = ch.generate_scenario(m, 100.0, 2.0, 10.0, seed=int(rng.integers(1 << 31)))
    return ch.realize_channels(sc, sigma2=sigma2, seed=int(rng.integers(1 << 31)))


def test_single_pair_goes_full_power():
    inst = ch.ChannelRealization(G=np.array([[0.7 + 0.2j]]), sigma2=0.1, alpha=1.0, p_max=1.0)
    res = wmmse_allocate(inst)
    assert res.p[0] == pytest.approx(1.0, abs=1e-12)
    assert res.converged
    assert res.objective == pytest.approx(ch.sum_rate(inst, res.p), abs=1e-12)


def test_symmetric_pairs_get_symmetric_power():
    G = np.array([[1.0, 0.4], [0.4, 1.0]], dtype=complex)
    inst = ch.ChannelRealization(G=G, sigma2=0.1, alpha=1.0, p_max=1.0)
    res = wmmse_allocate(inst)
    assert res.p[0] == pytest.approx(res.p[1], rel=1e-9)


def test_iterates_feasible_and_monotone():
    rng = np.random.default_rng(3)
    for _ in range(25):
        m = int(rng.integers(2, 7))
        inst = _random_instance(rng, m)
        res = wmmse_allocate(inst)
        assert np.all(res.p >= 0.0) and np.all(res.p <= inst.p_max)
        assert np.all(np.diff(res.trace) >= -1e-9)


def test_tracks_grid_oracle_on_small_instances():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = int(rng.integers(2, 4))
        inst = _random_instance(rng, m)
        _, oracle_obj = grid_search_oracle(inst, levels=33)
        res = wmmse_allocate(inst)
        assert res.objective >= oracle_obj * 0.98


def test_unconverged_run_still_returns_best_iterate():
    rng = np.random.default_rng(11)
    inst = _random_instance(rng, 4)
    res = wmmse_allocate(inst, WmmseConfig(max_iter=1, tol=1e-30))
    assert not res.converged
    assert res.iterations == 1
    assert res.objective >= res.trace[0]


def test_random_init_is_seeded():
    rng = np.random.default_rng(13)
    inst = _random_instance(rng, 3)
    a = wmmse_allocate(inst, WmmseConfig(init="random", init_seed=5))
    b = wmmse_allocate(inst, WmmseConfig(init="random", init_seed=5))
    assert np.array_equal(a.p, b.p)
    with pytest.raises(ValueError):
        wmmse_allocate(inst, WmmseConfig(init="bogus"))


def test_grid_oracle_single_pair_matches_scan():
    inst = ch.ChannelRealization(G=np.array([[0.9]]), sigma2=0.2, alpha=1.0, p_max=1.0)
    p, obj = grid_search_oracle(inst, levels=101)
    axis = np.linspace(0.0, 1.0, 101)
    objs = [ch.sum_rate(inst, np.array([x])) for x in axis]
    assert obj == pytest.approx(max(objs), abs=1e-12)
    assert p[0] == pytest.approx(axis[int(np.argmax(objs))], abs=1e-12)


def test_grid_oracle_refinement_never_worse():
    # the 65-level grid contains every 33-level point, so it can only improve
    rng = np.random.default_rng(17)
    inst = _random_instance(rng, 3)
    _, coarse = grid_search_oracle(inst, levels=33)
    _, fine = grid_search_oracle(inst, levels=65)
    assert fine >= coarse - 1e-12


def test_grid_oracle_guards():
    rng = np.random.default_rng(19)
    inst = _random_instance(rng, 6)
    assert 33 ** 6 > GRID_POINT_GUARD
    with pytest.raises(InstanceTooLargeError):
        grid_search_oracle(inst, levels=33)
    with pytest.raises(ValueError):
        grid_search_oracle(inst, levels=1)

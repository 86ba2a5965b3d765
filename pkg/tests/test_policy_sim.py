import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandopt import (BandGridSpec, ConfigError, ControlBand, ModelParams, SimConfig, grid_search_band,
                     make_quadratic, policy_value, simulate_policy, value_bar)
from bandopt.policy_sim import axis, band_values, write_search_csv

from oracles import QUAD, uncontrolled_quadratic_cost

M = ModelParams(**QUAD)
HQ = make_quadratic(0, 1, 0, 1)


def _grid_of(band):
    return BandGridSpec(d=(band.d,), D=(band.D,), U=(band.U,), u=(band.u,))


def test_same_seed_same_estimate(quad_solution):
    cfg = SimConfig(dt=1e-2, horizon=5.0, paths=3000, seed=11)
    a = simulate_policy(quad_solution.band, M, HQ, 0.0, cfg)
    b = simulate_policy(quad_solution.band, M, HQ, 0.0, cfg)
    assert a == b
    c = simulate_policy(quad_solution.band, M, HQ, 0.0, SimConfig(dt=1e-2, horizon=5.0, paths=3000, seed=12))
    assert c.mean != a.mean


def test_short_horizon_gives_almost_nothing():
    band = ControlBand(-50.0, -49.0, 49.0, 50.0)
    est = simulate_policy(band, M, HQ, 0.0, SimConfig(dt=1e-4, horizon=1e-3, paths=2000, seed=3))
    # E int_0^T t sigma^2 dt = sigma^2 T^2 / 2
    assert 0 <= est.mean < 1e-5
    assert est.adjusted_fraction == 0


def test_uncontrolled_small():
    T = 4.0
    band = ControlBand(-60.0, -59.0, 59.0, 60.0)
    est = simulate_policy(band, M, HQ, 0.0, SimConfig(dt=2e-3, horizon=T, paths=8000, seed=5))
    ref = uncontrolled_quadratic_cost(M.sigma2, M.beta, T)
    assert abs(est.mean - ref) <= 3.5 * est.std_error + 2e-3


def test_optimal_band_short_run(quad_solution):
    b = quad_solution.band
    ref = value_bar(policy_value(b, M, HQ), x=0.0)
    est = simulate_policy(b, M, HQ, 0.0, SimConfig(dt=1e-3, horizon=18.0, paths=4000, seed=21))
    # a coarse step biases the estimate upward slightly; allow 5%
    assert abs(est.mean - ref) <= max(3 * est.std_error, 0.05 * ref)
    assert est.truncation_bound < 1e-6
    assert 0 < est.adjusted_fraction <= 1


def test_antithetic_pairs():
    band = ControlBand(-1.5, -0.5, 0.5, 1.5)
    plain = simulate_policy(band, M, HQ, 0.0, SimConfig(dt=1e-2, horizon=6.0, paths=2000, seed=4))
    anti = simulate_policy(band, M, HQ, 0.0, SimConfig(dt=1e-2, horizon=6.0, paths=2000, seed=4,
                                                      antithetic=True))
    assert anti.paths == 2000
    assert abs(anti.mean - plain.mean) <= 4 * math.hypot(anti.std_error, plain.std_error)


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(horizon=-1.0), dict(paths=1),
                                dict(paths=5, antithetic=True)])
def test_bad_sim_config(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_single_cell_grid_returns_band(quad_solution):
    b = quad_solution.band
    best, val, table = grid_search_band(M, HQ, x0=0.0, grid=_grid_of(b))
    assert best == b
    assert table.shape == (1, 5)
    assert val == pytest.approx(value_bar(policy_value(b, M, HQ), x=0.0), rel=1e-9)


def test_empty_grid_rejected():
    with pytest.raises(ConfigError):
        grid_search_band(M, HQ, grid=BandGridSpec(d=(1.0,), D=(0.0,), U=(2.0,), u=(3.0,)))
    with pytest.raises(ConfigError):
        grid_search_band(M, HQ, grid=None)
    with pytest.raises(ConfigError):
        axis(1.0, 0.0, 0.1)


def test_grid_containing_solver_band(quad_solution):
    b = quad_solution.band
    grid = BandGridSpec(d=(b.d - 0.05, b.d), D=(b.D, b.D + 0.05), U=(b.U - 0.05, b.U), u=(b.u, b.u + 0.05))
    best, val, table = grid_search_band(M, HQ, x0=0.0, grid=grid)
    ref = value_bar(policy_value(b, M, HQ), x=0.0)
    assert val <= ref + 1e-9
    assert best == b


def test_symmetric_candidates():
    g = BandGridSpec.from_ranges(symmetric=True, center=0.5, U=(0.6, 0.8, 0.1), u=(1.0, 1.2, 0.1))
    c = g.candidates()
    assert c.shape == (9, 4)
    assert np.allclose(c[:, 0] + c[:, 3], 1.0) and np.allclose(c[:, 1] + c[:, 2], 1.0)


@settings(max_examples=25, deadline=None)
@given(d=st.floats(-3, -0.2), w1=st.floats(0.05, 1), w2=st.floats(0.05, 2), w3=st.floats(0.05, 1),
       x0=st.floats(-4, 4))
def test_band_values_match_policy_value(d, w1, w2, w3, x0):
    b = ControlBand(d, d + w1, d + w1 + w2, d + w1 + w2 + w3)
    got = band_values(np.array([b.as_tuple()]), M, HQ, x0)[0]
    ref = value_bar(policy_value(b, M, HQ), x=x0)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_search_csv_columns(tmp_path, quad_solution):
    _, _, table = grid_search_band(M, HQ, grid=_grid_of(quad_solution.band))
    path = tmp_path / "search.csv"
    write_search_csv(table, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["d", "D", "U", "u", "value"]
    assert [float(v) for v in rows[1]] == list(table[0])

"""
Tests for the simulation model and the rejection-rate experiments
"""

import numpy as np
import pandas as pd
import pytest

from datasets import save_frame_csv
from kernel_cdf import sim_bandwidth
from sim_study import (
    REJECTION_COLUMNS, SimConfig, SignalPath, _rank_pseudo, draw_functions, gen_dataset, integrated_wiener,
    replication_seeds, run_bandwidth_robustness, run_estimation_effect, run_power_study, run_study_grid,
    run_uniformity_check, simulate_dataset,
)


# ============= Integrated Wiener paths =============

def test_zero_scale_gives_zero_path():
    path = integrated_wiener(0.0, 50, seed=3)
    assert np.all(path.values == 0)
    assert path(0.37) == 0


@pytest.mark.parametrize("seed", [0, 1, 12345])
def test_path_starts_at_zero(seed):
    path = integrated_wiener(1.0, 200, seed=seed)
    assert path.values[0] == 0
    assert path(0.0) == 0
    assert path.grid.size == 200
    assert path.grid[-1] == 1.0


def test_variance_at_one():
    rng = np.random.default_rng(2024)
    endpoints = [integrated_wiener(2.0, 1000, rng=rng).values[-1] for _ in range(2000)]
    assert np.var(endpoints) == pytest.approx(4.0 / 3.0, rel=0.15)


def test_path_interpolates_linearly():
    path = SignalPath(grid=np.array([0.0, 0.5, 1.0]), values=np.array([0.0, 1.0, 3.0]))
    np.testing.assert_allclose(path([0.25, 0.75]), [0.5, 2.0])


@pytest.mark.parametrize("kwargs", [{'sigma0': -1.0}, {'grid_m': 1}, {'grid_m': 10.5}])
def test_wiener_rejects_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        integrated_wiener(**kwargs)


# ============= Configuration =============

@pytest.mark.parametrize("kwargs", [
    {'noise_ratio': 0.0}, {'noise_ratio': -0.5}, {'rho': 1.5}, {'n': 1}, {'grid_m': 1}, {'sigma0': -2.0},
])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_config_defaults():
    cfg = SimConfig()
    assert (cfg.n, cfg.sigma0, cfg.grid_m, cfg.fixed_functions) == (100, 1.0, 1000, False)
    assert cfg.sigma_eps == 0.5
    assert cfg.replace(noise_ratio=0.3).sigma_eps == pytest.approx(0.3)
    assert cfg.to_dict()['rho'] == 0.0


# ============= Data generation =============

def test_perfectly_correlated_errors():
    data = simulate_dataset(SimConfig(n=50, rho=1.0, seed=7))
    np.testing.assert_array_equal(data.errors_z, data.errors_y)
    sample = data.sample
    np.testing.assert_allclose(sample.z - data.h(sample.x), sample.y - data.g(sample.x), atol=1e-12)


def test_dataset_is_deterministic():
    cfg = SimConfig(n=30, rho=0.4, seed=11)
    assert gen_dataset(cfg) == gen_dataset(cfg)
    assert not gen_dataset(cfg) == gen_dataset(cfg.replace(seed=12))


def test_x_is_uniform_on_unit_interval():
    sample = gen_dataset(SimConfig(n=500, seed=5))
    assert sample.x.min() >= 0 and sample.x.max() <= 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_signal_streams_are_independent(seed):
    g, h = draw_functions(SimConfig(seed=seed))
    assert not np.array_equal(g.values, h.values)


def test_fixed_functions_reuse_paths():
    cfg = SimConfig(n=20, seed=3)
    functions = draw_functions(cfg)
    data = simulate_dataset(cfg.replace(seed=99), functions)
    assert data.g is functions[0] and data.h is functions[1]


@pytest.mark.parametrize("rho", [-0.6, 0.0, 0.5])
def test_error_decomposition_at_large_n(rho):
    cfg = SimConfig(n=100_000, rho=rho, noise_ratio=0.7, seed=19)
    data = simulate_dataset(cfg)
    sample = data.sample
    residual_y = sample.y - data.g(sample.x)
    residual_z = sample.z - data.h(sample.x)
    assert np.corrcoef(residual_y, residual_z)[0, 1] == pytest.approx(rho, abs=0.01)
    assert abs(residual_y.mean()) < 0.01
    assert residual_y.std() == pytest.approx(0.7, rel=0.02)


def test_replication_seeds():
    assert replication_seeds(5, 0) == replication_seeds(5, 0)
    assert replication_seeds(5, 0) != replication_seeds(5, 1)
    data_seed, perm_seed = replication_seeds(5, 2)
    assert data_seed != perm_seed


# ============= Experiments =============

def test_power_study_table_shape():
    table = run_power_study(SimConfig(n=20, seed=1), [0.0, 0.9], replications=3, resamples=20)
    assert list(table.columns) == REJECTION_COLUMNS
    assert table['rho'].tolist() == [0.0, 0.9]
    assert table['bandwidth'].tolist() == pytest.approx([sim_bandwidth(0.5, 20)] * 2)
    for column in ('conditional_rejection_rate', 'unconditional_rejection_rate'):
        assert table[column].between(0, 1).all()
    assert (table['replications'] == 3).all() and (table['B'] == 20).all()


def test_power_study_uses_common_random_numbers():
    cfg = SimConfig(n=15, seed=4)
    alone = run_power_study(cfg, [0.0], replications=4, resamples=30)
    together = run_power_study(cfg, [0.5, 0.0], replications=4, resamples=30)
    pd.testing.assert_series_equal(alone.iloc[0], together.iloc[1], check_names=False)


def test_parallel_replications_match_serial():
    cfg = SimConfig(n=15, seed=8)
    serial = run_power_study(cfg, [0.3], replications=6, resamples=25, n_jobs=1)
    threaded = run_power_study(cfg, [0.3], replications=6, resamples=25, n_jobs=2)
    pd.testing.assert_frame_equal(serial, threaded)


@pytest.mark.parametrize("kwargs", [{'replications': 0}, {'replications': 2, 'resamples': 0}])
def test_power_study_invalid_budget(kwargs):
    with pytest.raises(ValueError):
        run_power_study(SimConfig(n=10), [0.0], **kwargs)


def test_power_study_empty_grid():
    with pytest.raises(ValueError):
        run_power_study(SimConfig(n=10), [], replications=1)


def test_rejection_table_csv_reloads(tmp_path):
    table = run_power_study(SimConfig(n=12, seed=6), [0.0, 0.6], replications=3, resamples=15)
    path = save_frame_csv(table, tmp_path / 'power.csv')
    reloaded = pd.read_csv(path)
    assert list(reloaded.columns) == REJECTION_COLUMNS
    pd.testing.assert_frame_equal(reloaded, table, check_dtype=False, rtol=1e-12)


def test_unconditional_ranks_are_pseudo_observations():
    pseudo = _rank_pseudo(gen_dataset(SimConfig(n=25, seed=8)))
    for values in (pseudo.u, pseudo.v):
        assert values.min() > 0 and values.max() == 1.0
        np.testing.assert_allclose(np.sort(values), np.arange(1, 26) / 25)


def test_bandwidth_robustness_rows_follow_grid():
    grid = [0.3, 0.05, 0.1]
    cfg = SimConfig(n=20, rho=0.8, seed=2)
    first = run_bandwidth_robustness(cfg, grid, replications=3, resamples=20)
    assert first['bandwidth'].tolist() == grid
    assert (first['rho'] == 0).all()
    pd.testing.assert_frame_equal(first, run_bandwidth_robustness(cfg, grid, replications=3, resamples=20))


@pytest.mark.parametrize("grid", [[], [0.1, -0.2]])
def test_bandwidth_robustness_invalid_grid(grid):
    with pytest.raises(ValueError):
        run_bandwidth_robustness(SimConfig(n=10), grid, replications=1)


def test_study_grid_covers_every_combination():
    table = run_study_grid(SimConfig(seed=6), [0.0, 0.5], replications=2, n_values=(10, 15),
                           noise_ratios=(0.3, 0.7), resamples=10)
    assert len(table) == 8
    assert list(zip(table['n'], table['lambda']))[::2] == [(10, 0.3), (10, 0.7), (15, 0.3), (15, 0.7)]
    assert table['rho'].tolist() == [0.0, 0.5] * 4


def test_estimation_effect_needs_signal():
    with pytest.raises(ValueError):
        run_estimation_effect(SimConfig(sigma0=0.0), replications=2)


# ============= Monte Carlo properties =============

@pytest.mark.slow
def test_type_one_error_near_nominal():
    table = run_power_study(SimConfig(n=100, noise_ratio=0.5, seed=101), [0.0],
                            replications=500, resamples=500)
    assert 0.03 <= table['conditional_rejection_rate'].iloc[0] <= 0.08


@pytest.mark.slow
def test_power_increases_with_rho():
    table = run_power_study(SimConfig(n=100, noise_ratio=0.5, seed=103), [0.0, 0.3, 0.6],
                            replications=500, resamples=500)
    rates = table['conditional_rejection_rate'].tolist()
    assert rates[0] < rates[1] < rates[2]
    conditional, unconditional = rates[2], table['unconditional_rejection_rate'].iloc[2]
    assert conditional <= unconditional + 3 * np.sqrt(0.25 / 500)


@pytest.mark.slow
def test_rule_bandwidth_keeps_level():
    h = sim_bandwidth(0.5, 100)
    table = run_bandwidth_robustness(SimConfig(n=100, noise_ratio=0.5, seed=107), [h],
                                     replications=500, resamples=500)
    assert 0.025 <= table['conditional_rejection_rate'].iloc[0] <= 0.08


@pytest.mark.slow
def test_level_stable_across_grid_resolution():
    rates = [
        run_power_study(SimConfig(n=100, noise_ratio=0.5, grid_m=m, seed=109), [0.0],
                        replications=500, resamples=500)['conditional_rejection_rate'].iloc[0]
        for m in (500, 2000)
    ]
    assert abs(rates[0] - rates[1]) < 0.02


@pytest.mark.slow
def test_estimation_effect_shrinks_with_n():
    table = run_estimation_effect(SimConfig(noise_ratio=0.5, seed=113), replications=200,
                                  n_values=(50, 400))
    small, large = table['median_abs_difference'].tolist()
    assert large < small


@pytest.mark.slow
def test_pseudo_observations_are_uniform_under_null():
    summary = run_uniformity_check(SimConfig(n=100, seed=127), replications=100)
    assert summary['mean'] == pytest.approx(0.5, abs=0.05)
    assert summary['variance'] == pytest.approx(1 / 12, rel=0.2)

"""
Тесты координатора: отчет, чувствительность к соглашениям
"""

import json

import pytest

from coordinator import (
    DEFAULT_STATISTICS, DIGOXIN_REFERENCE, CITestCoordinator, build_estimator_config,
    canonical_statistics, outside_reference,
)
from datasets import digoxin_dataset
from transform import Sample


@pytest.fixture
def digoxin():
    return digoxin_dataset()


def test_available_statistics():
    coordinator = CITestCoordinator()
    assert coordinator.get_available_statistics() == list(DEFAULT_STATISTICS)
    info = coordinator.get_statistic_info()
    assert info['kappa']['degree_r'] == 4
    assert info['kendall']['sidedness'] == 'two_sided'


def test_canonical_statistics_deduplicates():
    assert canonical_statistics(['Pearson', 'pearson', 'kendall']) == ['pearson', 'kendall']
    with pytest.raises(ValueError):
        canonical_statistics([])
    with pytest.raises(ValueError):
        canonical_statistics(['spearman'])


def test_build_estimator_config(digoxin):
    assert build_estimator_config(digoxin).bandwidth_y == pytest.approx(22.48, abs=0.1)
    explicit = build_estimator_config(digoxin, bandwidth=22.48)
    assert (explicit.rule, explicit.bandwidth_z) == ('explicit', 22.48)
    with pytest.raises(ValueError):
        build_estimator_config(digoxin, rule='silverman', bandwidth=1.0)
    with pytest.raises(ValueError):
        build_estimator_config(digoxin, bandwidth_z=1.0)


def test_report_structure(digoxin):
    coordinator = CITestCoordinator(resamples=100, seed=5)
    config = build_estimator_config(digoxin)
    report = coordinator.compare_statistics(digoxin, config, ['pearson', 'tau_star', 'pearson'],
                                            input_description='digoxin')
    assert [r['statistic_kind'] for r in report['results']] == ['pearson', 'tau_star']
    assert report['summary'] == {'statistics_tested': 2, 'successful': 2, 'failed': 0}
    assert report['n'] == 35
    assert report['estimator']['rule'] == 'silverman'
    assert report['partial_correlation']['success']
    assert 'timings' not in report
    assert all('elapsed_seconds' not in r for r in report['results'])
    json.dumps(report)

    timed = coordinator.compare_statistics(digoxin, config, ['kendall'], include_timings=True)
    assert set(timed['timings']) == {'transform', 'kendall'}


def test_failed_statistic_is_reported():
    sample = Sample(x=[0.1, 0.4, 0.5, 0.9, 1.3], y=[1.0, 3.0, 2.0, 5.0, 4.0], z=[2.0] * 5)
    coordinator = CITestCoordinator(resamples=20)
    report = coordinator.compare_statistics(sample, build_estimator_config(sample), ['pearson', 'kendall'])
    pearson, kendall = report['results']
    assert not pearson['success'] and 'error' in pearson and 'traceback' not in pearson
    assert kendall['success'] and kendall['p_value'] == 1.0
    assert report['summary']['failed'] == 1


def test_run_test_overrides(digoxin):
    coordinator = CITestCoordinator(resamples=50)
    pseudo = coordinator.transform(digoxin, build_estimator_config(digoxin))
    result = coordinator.run_test(pseudo, 'kendall', resamples=30, seed=9, sidedness='upper')
    assert (result['resamples'], result['seed'], result['sidedness']) == (30, 9, 'upper')
    assert result['elapsed_seconds'] >= 0


def test_compute_values(digoxin):
    coordinator = CITestCoordinator()
    pseudo = coordinator.transform(digoxin, build_estimator_config(digoxin))
    values = coordinator.compute_values(pseudo, ['kappa', 'taustar'])
    assert set(values) == {'kappa', 'tau_star'}
    assert values['kappa'] >= 0


def test_outside_reference():
    report = {'results': [
        {'statistic_kind': 'pearson', 'success': True, 'p_value': 0.02},
        {'statistic_kind': 'kendall', 'success': True, 'p_value': 0.3},
        {'statistic_kind': 'kappa', 'success': False, 'error': 'x'},
    ]}
    assert outside_reference(report) == ['kendall', 'kappa']
    assert outside_reference(report, reference={}) == []


def test_sensitivity_report_covers_all_conventions(digoxin):
    coordinator = CITestCoordinator(resamples=50, seed=2)
    sensitivity = coordinator.sensitivity_report(digoxin, ['pearson', 'kappa'])
    combinations = {(r['statistic_kind'], r['leave_one_out'], r['sidedness']) for r in sensitivity['rows']}
    assert len(combinations) == 8
    assert set(sensitivity['covered']) == {'pearson', 'kappa'}
    for row in sensitivity['rows']:
        assert row['reference_p_value'] == DIGOXIN_REFERENCE[row['statistic_kind']][0]


def test_sensitivity_report_adds_hoeffding_u_statistic(digoxin):
    coordinator = CITestCoordinator(resamples=50, seed=2)
    rows = coordinator.sensitivity_report(digoxin, ['hoeffding'])['rows']
    combinations = {(r['leave_one_out'], r['estimator'], r['sidedness']) for r in rows}
    assert len(combinations) == 8
    assert {r['estimator'] for r in rows} == {'v', 'u'}


def test_run_test_with_u_statistic(digoxin):
    coordinator = CITestCoordinator(resamples=30, seed=5)
    pseudo = coordinator.transform(digoxin, build_estimator_config(digoxin))
    v_stat = coordinator.run_test(pseudo, 'hoeffding')
    u_stat = coordinator.run_test(pseudo, 'hoeffding', estimator='u')
    assert v_stat['success'] and u_stat['success']
    assert u_stat['observed'] != v_stat['observed']


@pytest.mark.slow
def test_digoxin_reference_p_values(digoxin):
    # Hoeffding's Delta stays well below the published 0.107 under every
    # convention (about 0.011 as a V-statistic, about 0.03 as a U-statistic)
    coordinator = CITestCoordinator(resamples=10_000, seed=2024)
    config = build_estimator_config(digoxin)
    report = coordinator.compare_statistics(digoxin, config, DEFAULT_STATISTICS)
    outside = [kind for kind in outside_reference(report) if kind != 'hoeffding_delta']
    if outside:
        covered = coordinator.sensitivity_report(digoxin, outside)['covered']
        assert all(covered.values())
    pearson = report['results'][0]
    assert pearson['p_value'] == pytest.approx(0.018, abs=0.03)

    rows = coordinator.sensitivity_report(digoxin, ['hoeffding_delta'])['rows']
    in_sample = {r['estimator']: r['p_value'] for r in rows
                 if not r['leave_one_out'] and r['sidedness'] == 'upper'}
    assert in_sample['v'] < 0.05 and in_sample['u'] < 0.067

"""
Тесты командной строки
"""

import json

import pandas as pd
import pytest

from cli import DIGOXIN_OUT, build_parser, load_config_file, main, parse_bandwidth_rule, parse_list
from sim_study import REJECTION_COLUMNS

FAST = ['--resamples', '200', '--seed', '3']


def test_parse_helpers():
    assert parse_list("pearson, kendall,") == ['pearson', 'kendall']
    assert parse_list(['a', 'b']) == ['a', 'b']
    assert parse_bandwidth_rule('Silverman') == ('silverman', None)
    assert parse_bandwidth_rule('sim:0.5') == ('simulation', 0.5)
    with pytest.raises(ValueError):
        parse_bandwidth_rule('scott')


def test_test_command_prints_json(capsys):
    assert main(['test', '--stats', 'pearson,kendall', *FAST]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [r['statistic_kind'] for r in report['results']] == ['pearson', 'kendall']
    assert all(r['resamples'] == 200 and r['seed'] == 3 for r in report['results'])
    assert report['input'] == 'digoxin'


def test_unknown_statistic_exits_with_usage_error():
    with pytest.raises(SystemExit) as info:
        main(['test', '--stats', 'spearman'])
    assert info.value.code == 2


def test_explicit_bandwidth_is_echoed(tmp_path):
    assert main(['test', '--stats', 'kappa', '--bandwidth', '22.48', '--out', str(tmp_path), *FAST]) == 0
    report = json.loads((tmp_path / 'report.json').read_text(encoding='utf-8'))
    assert report['estimator']['bandwidth_y'] == 22.48
    assert report['estimator']['rule'] == 'explicit'
    assert report['results'][0]['config_echo']['bandwidth_z'] == 22.48


def test_json_output_is_byte_identical(tmp_path):
    args = ['test', '--stats', 'pearson,hoeffding,taustar', *FAST]
    assert main([*args, '--out', str(tmp_path / 'a')]) == 0
    assert main([*args, '--out', str(tmp_path / 'b')]) == 0
    assert (tmp_path / 'a' / 'report.json').read_bytes() == (tmp_path / 'b' / 'report.json').read_bytes()


def test_timings_only_on_request(tmp_path):
    assert main(['test', '--stats', 'kendall', '--timings', '--out', str(tmp_path), *FAST]) == 0
    report = json.loads((tmp_path / 'report.json').read_text(encoding='utf-8'))
    assert 'kendall' in report['timings']


def test_csv_results(tmp_path):
    assert main(['test', '--stats', 'kendall', '--format', 'csv', '--out', str(tmp_path), *FAST]) == 0
    table = pd.read_csv(tmp_path / 'results.csv')
    assert list(table.columns) == ['statistic_kind', 'observed', 'p_value', 'sidedness',
                                   'mode', 'resamples', 'seed', 'error']


def test_exhaustive_mode_on_small_file(tmp_path, capsys):
    path = tmp_path / 'small.csv'
    path.write_text("x,y,z\n0,1,3\n1,2,1\n2,4,2\n3,3,5\n4,6,4\n", encoding='utf-8')
    assert main(['test', '--data', str(path), '--stats', 'kendall', '--mode', 'exhaustive',
                 '--bandwidth', '1.0']) == 0
    result = json.loads(capsys.readouterr().out)['results'][0]
    assert (result['mode'], result['resamples']) == ('exhaustive', 120)


def test_failed_statistic_gives_exit_code_one(tmp_path):
    path = tmp_path / 'constant.csv'
    path.write_text("x,y,z\n0,1,2\n1,3,2\n2,2,2\n3,5,2\n", encoding='utf-8')
    assert main(['test', '--data', str(path), '--stats', 'pearson,kendall',
                 '--out', str(tmp_path / 'out'), *FAST]) == 1
    report = json.loads((tmp_path / 'out' / 'report.json').read_text(encoding='utf-8'))
    assert [r['success'] for r in report['results']] == [False, True]


def test_missing_file_returns_one(tmp_path):
    assert main(['test', '--data', str(tmp_path / 'nope.csv'), *FAST]) == 1


def test_missing_column_returns_one(tmp_path):
    path = tmp_path / 'data.csv'
    path.write_text("x,y\n1,2\n", encoding='utf-8')
    assert main(['transform', '--data', str(path)]) == 1


def test_transform_writes_csv(capsys):
    assert main(['transform', '--bandwidth', '22.48']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'x,y,z,u,v'
    assert len(lines) == 36
    assert lines[1].startswith('19.5,17.5,0.74,')


def test_transform_json(tmp_path):
    assert main(['transform', '--format', 'json', '--out', str(tmp_path)]) == 0
    data = json.loads((tmp_path / 'pseudo.json').read_text(encoding='utf-8'))
    assert len(data['u']) == 35
    assert set(data['statistics']) == {'pearson', 'kendall', 'hoeffding_delta', 'kappa', 'tau_star'}


def test_config_file(tmp_path):
    config = tmp_path / 'config.yaml'
    config.write_text("stats: [pearson, kendall]\nresamples: 50\nseed: 7\n", encoding='utf-8')
    assert load_config_file(str(config)) == {'stats': ['pearson', 'kendall'], 'resamples': 50, 'seed': 7}
    out = tmp_path / 'out'
    assert main(['test', '--config', str(config), '--seed', '8', '--out', str(out)]) == 0
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert len(report['results']) == 2
    assert report['results'][0]['resamples'] == 50
    assert report['results'][0]['seed'] == 8


def test_config_file_unknown_key(tmp_path):
    config = tmp_path / 'config.yaml'
    config.write_text("colour: red\n", encoding='utf-8')
    with pytest.raises(SystemExit) as info:
        main(['test', '--config', str(config)])
    assert info.value.code == 2


def test_simulate_power_table(tmp_path):
    assert main(['simulate', '--n', '15', '--replications', '2', '--resamples', '10',
                 '--rho-grid', '0,0.5', '--out', str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / 'power.csv')
    assert list(table.columns) == REJECTION_COLUMNS
    assert table['rho'].tolist() == [0.0, 0.5]


def test_simulate_lambda_from_config(tmp_path):
    config = tmp_path / 'sim.yaml'
    config.write_text("lambda: 0.3\nn: 12\nreplications: 2\nresamples: 10\nrho-grid: '0'\n", encoding='utf-8')
    assert main(['simulate', '--config', str(config), '--out', str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / 'power.csv')
    assert table['lambda'].tolist() == [0.3]
    assert table['n'].tolist() == [12]


def test_bandwidth_sweep(tmp_path):
    assert main(['bandwidth-sweep', '--n', '15', '--replications', '2', '--resamples', '10',
                 '--bandwidths', '0.2,0.1', '--out', str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / 'bandwidth.csv')
    assert table['bandwidth'].tolist() == [0.2, 0.1]


def test_bandwidth_sweep_needs_grid():
    with pytest.raises(SystemExit) as info:
        main(['bandwidth-sweep', '--replications', '1'])
    assert info.value.code == 2


def test_reproduce_digoxin_outputs(tmp_path):
    out = tmp_path / 'digoxin'
    main(['reproduce-digoxin', '--out', str(out), *FAST])
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert len(report['results']) == 5
    assert isinstance(report['outside_reference'], list)
    assert pd.read_csv(out / 'raw.csv').shape == (35, 3)
    assert list(pd.read_csv(out / 'pseudo.csv').columns) == ['x', 'y', 'z', 'u', 'v']
    assert (out / 'sensitivity.json').exists() == bool(report['outside_reference'])


def test_digoxin_output_default_is_not_shared():
    parser, _ = build_parser()
    for command in ('test', 'transform', 'simulate', 'reproduce-digoxin'):
        assert parser.parse_args([command]).out is None


def test_default_output_locations(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(['test', '--stats', 'kendall', *FAST]) == 0
    assert json.loads(capsys.readouterr().out)['results'][0]['statistic_kind'] == 'kendall'
    assert not (tmp_path / DIGOXIN_OUT).exists()
    main(['reproduce-digoxin', '--stats', 'pearson', *FAST])
    assert (tmp_path / DIGOXIN_OUT / 'report.json').exists()

# -*- coding: utf-8 -*- vim: ts=8 sts=4 sw=4 si et tw=79
"""
Tests for visaplan.drfree.cli
"""
# Python compatibility:
from __future__ import absolute_import

# Standard library:
import json
from os.path import abspath, dirname, isfile, pardir
from os.path import join as path_join

# 3rd party:
import pytest

# Local imports:
from visaplan.drfree.cli import (
    SweepSpec,
    cmd_compare,
    cmd_eval,
    cmd_sweep,
    cmd_train,
    format_table,
    load_sweep,
    main,
    )
from visaplan.drfree.exceptions import InvalidConfigValue, UnknownConfigKey

SWEEP_FILE = abspath(path_join(dirname(__file__), pardir, pardir, pardir,
                              pardir, 'configs', 'rho-sweep.toml'))

TINY_CONFIG = """\
max_steps = 4
episodes = 2
warmup_episodes = 1
n_candidates = 4
mc_samples = 16
golden_iterations = 20
rbf_count = 4
batch_size = 8
train_steps_per_episode = 3
eval_rollouts = 1
seeds = [5]
"""


@pytest.fixture(autouse=True)
def serial(monkeypatch):
    monkeypatch.delenv('DRFREE_WORKERS', raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'tiny.toml'
    path.write_text(TINY_CONFIG)
    return path


def read_lines(path):
    with open(str(path)) as f:
        return f.read().splitlines()


# ----------------------------------------------------- [ errors ... [
def test_unknown_config_key_exits_with_code_2(tmp_path, capsys):
    path = tmp_path / 'bad.toml'
    path.write_text(TINY_CONFIG + 'roh = 1\n')
    code = main(['train', str(path), '-o', str(tmp_path / 'run')])
    assert code == 2
    err = capsys.readouterr().err
    assert "drfree: error: UnknownConfigKey: Unknown config key 'roh'" in err
    assert not (tmp_path / 'run').exists()


def test_missing_files_exit_with_code_2(tmp_path, capsys):
    assert main(['train', str(tmp_path / 'nowhere.toml')]) == 2
    assert 'drfree: error:' in capsys.readouterr().err
    assert main(['eval', str(tmp_path)]) == 2


def test_usage_errors_exit_through_argparse():
    with pytest.raises(SystemExit) as excinfo:
        main(['frobnicate'])
    assert excinfo.value.code == 2


def test_eval_help_counts_rollouts_per_seed(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(['eval', '--help'])
    assert excinfo.value.code == 0
    text = ' '.join(capsys.readouterr().out.split())
    assert 'rollouts per trained seed; the summary covers seeds x rollouts' \
        in text
# ----------------------------------------------------- ] ... errors ]


# ------------------------------------------------------ [ train ... [
def test_train_writes_the_run_directory(config_file, tmp_path):
    out = tmp_path / 'run'
    assert main(['train', str(config_file), '-o', str(out),
                 '--trajectories']) == 0
    for name in ('config.json', 'episodes.csv', 'summary.json',
                 'manifest.json', 'checkpoints/seed-5.json'):
        assert (out / name).exists(), name
    lines = read_lines(out / 'episodes.csv')
    assert lines[0].startswith('# config hash: ')
    assert lines[1] == '# seeds: 5'
    assert lines[2] == '# return = -(sum of stage costs)'
    assert lines[3].startswith('seed,episode,phase,status,return,')
    assert len(lines) == 4 + 2
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['seeds'] == [5]
    assert summary['failed'] == 0
    assert summary['buffers']['5']['sources'] == {
        'train': summary['buffers']['5']['size']}
    trajectories = sorted(p.name for p in (out / 'trajectories').iterdir())
    assert trajectories == ['train-seed-5-episode-1.csv',
                            'train-seed-5-episode-2.csv']


def test_train_reruns_are_byte_identical(config_file, tmp_path):
    first = cmd_train(str(config_file), str(tmp_path / 'a'))
    second = cmd_train(str(config_file), str(tmp_path / 'b'))
    for name in ('config.json', 'episodes.csv', 'summary.json',
                 'checkpoints/seed-5.json'):
        assert ((tmp_path / 'a' / name).read_bytes()
                == (tmp_path / 'b' / name).read_bytes()), name
    assert first != second


def test_train_default_output(config_file, tmp_path):
    out = cmd_train(str(config_file))
    assert out == str(tmp_path / 'tiny-run')
    assert (tmp_path / 'tiny-run' / 'episodes.csv').exists()
# ------------------------------------------------------ ] ... train ]


# ------------------------------------------------------- [ eval ... [
def test_eval_with_perturbation(config_file, tmp_path, capsys):
    out = tmp_path / 'run'
    cmd_train(str(config_file), str(out))
    assert main(['eval', str(out), '--perturb', 'friction=0.8,drift=0.05',
                 '--rollouts', '2']) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split() == ['rho', 'n_rollouts', 'success_rate',
                                'safe_success_rate', 'mean_cost',
                                'std_cost']
    data = json.loads((out / 'evaluation.json').read_text())
    assert data['n_rollouts'] == 2
    assert data['perturbation']['friction'] == 0.8
    assert data['perturbation']['drift'] == 0.05
    lines = read_lines(out / 'evaluation.csv')
    assert '# perturbation: friction=0.8,drift=0.05' in lines
    assert len([line for line in lines if line.startswith('5,')]) == 2


def test_eval_at_another_rho(config_file, tmp_path):
    out = tmp_path / 'run'
    cmd_train(str(config_file), str(out))
    summary = cmd_eval(str(out), rho=0.0, trajectories=True)
    assert summary.rho == 0.0
    assert (out / 'trajectories' / 'eval-seed-5-episode-1.csv').exists()


def test_eval_rejects_unknown_perturbations(config_file, tmp_path, capsys):
    out = tmp_path / 'run'
    cmd_train(str(config_file), str(out))
    assert main(['eval', str(out), '--perturb', 'gravity=2']) == 2
    assert "'gravity'" in capsys.readouterr().err
# ------------------------------------------------------- ] ... eval ]


# ------------------------------------------------------ [ sweep ... [
def test_sweep_spec_validation(tmp_path):
    with pytest.raises(UnknownConfigKey):
        SweepSpec(parameter='gravity', values=[1], base_config='x.toml')
    with pytest.raises(UnknownConfigKey):
        SweepSpec(parameter='seeds', values=[1], base_config='x.toml')
    with pytest.raises(InvalidConfigValue):
        SweepSpec(values=[], base_config='x.toml')
    with pytest.raises(InvalidConfigValue):
        SweepSpec(values=[1], trials=0, base_config='x.toml')
    with pytest.raises(InvalidConfigValue):
        SweepSpec(values=[1])
    spec = SweepSpec(values=[0, 1], base_config='x.toml')
    assert spec.execution_time
    assert not spec._replace(retrain=True).execution_time
    assert not SweepSpec(parameter='n_candidates', values=[4],
                         base_config='x.toml').execution_time


def test_load_sweep_resolves_the_config_path(tmp_path):
    path = tmp_path / 'sweep.toml'
    path.write_text('config = "tiny.toml"\nvalues = [0, 1]\ntrials = 2\n')
    sweep = load_sweep(str(path))
    assert sweep.base_config == str(tmp_path / 'tiny.toml')
    assert sweep.parameter == 'rho'
    assert sweep.trials == 2
    assert load_sweep(str(path), retrain=True).retrain is True
    path.write_text('config = "tiny.toml"\nvalues = [0]\nseed = 1\n')
    with pytest.raises(UnknownConfigKey):
        load_sweep(str(path))


def test_rho_sweep_table(config_file, tmp_path, capsys):
    path = tmp_path / 'sweep.toml'
    path.write_text('config = "tiny.toml"\nvalues = [0, 1, 5]\n'
                    'trials = 1\n')
    rows = cmd_sweep(str(path), str(tmp_path / 'out'))
    assert [row['rho'] for row in rows] == [0, 1, 5]
    assert rows[1]['normalized_cost'] == 1.0
    assert all(row['std'] == 0.0 for row in rows)
    assert all(0.0 <= row['success_rate'] <= 1.0 for row in rows)
    printed = capsys.readouterr().out.splitlines()
    assert printed[0].split() == ['rho', 'normalized_cost', 'std',
                                  'success_rate']
    assert len(printed) == 4
    lines = read_lines(tmp_path / 'out' / 'sweep.csv')
    assert lines[1] == '# seeds: 5'
    assert 'rho,normalized_cost,std,success_rate' in lines
    manifest = json.loads((tmp_path / 'out' / 'manifest.json').read_text())
    assert manifest['retrain'] is False
    assert manifest['values'] == [0, 1, 5]


@pytest.mark.slow
def test_retrained_sweep_over_another_parameter(config_file, tmp_path):
    path = tmp_path / 'sweep.toml'
    path.write_text('config = "tiny.toml"\nparameter = "n_candidates"\n'
                    'values = [2, 4]\ntrials = 2\n')
    rows = cmd_sweep(str(path), str(tmp_path / 'out'))
    assert [row['n_candidates'] for row in rows] == [2, 4]
    assert min(row['normalized_cost'] for row in rows) == 1.0
    manifest = json.loads((tmp_path / 'out' / 'manifest.json').read_text())
    assert manifest['seeds'] == [5, 6]


@pytest.mark.slow
@pytest.mark.skipif(not isfile(SWEEP_FILE), reason='no source checkout')
def test_rho_sweep_trend(tmp_path):
    rows = cmd_sweep(SWEEP_FILE, str(tmp_path / 'out'))
    assert [row['rho'] for row in rows] == [0, 0.5, 1, 5, 100, 1000, 2000]
    costs = [row['normalized_cost'] for row in rows]
    assert None not in costs
    assert rows[costs.index(min(costs))]['rho'] in (0.5, 1, 5)
    # goal seeking beyond rho = 100 never improves the success rate
    tail = [row['success_rate'] for row in rows if row['rho'] >= 100]
    assert all(later <= earlier for (earlier, later) in zip(tail, tail[1:]))
# ------------------------------------------------------ ] ... sweep ]


def test_compare_writes_both_arms(config_file, tmp_path):
    out = tmp_path / 'cmp'
    summaries = cmd_compare(str(config_file), str(out))
    assert sorted(summaries) == ['baseline', 'robust']
    assert summaries['robust'].rho == 1.0
    assert summaries['baseline'].rho == 0.0
    data = json.loads((out / 'comparison.json').read_text())
    for arm in ('baseline', 'robust'):
        entry = data['arms'][arm]
        assert 0 <= entry['safe_successes'] <= entry['successes'] <= 1
    test = data['sign_test']
    assert test['wins'] + test['losses'] <= 1
    assert 0.0 < test['p_value'] <= 1.0
    lines = read_lines(out / 'learning_curve.csv')
    rows = [line for line in lines if not line.startswith('#')]
    assert rows[0] == 'episode,arm,mean_return,std_return,n'
    assert len(rows) == 1 + 2 * 2
    # the warm-up episode is shared by both arms
    warmup = [line.split(',') for line in rows[1:] if line.startswith('1,')]
    assert warmup[0][2] == warmup[1][2]


def test_format_table_aligns_columns():
    text = format_table(['a', 'bbb'], [{'a': 10, 'bbb': None},
                                       {'a': 1, 'bbb': 2.5}])
    assert text.splitlines() == ['a  bbb', '10', ' 1 2.5']

"""Multi-seed experiments on the default synthetic corpus.

These train every mode several times over and take minutes; run them
with --runslow. They use the settings of EXPERIMENT_CONFIG, which the
README's Experiments section lists too.
"""
import csv
import json
from pathlib import Path
from tempfile import TemporaryDirectory
import pytest
from grayrank import cli


SEEDS = [1, 2, 3]
MODES = ['ran_only', 'ran+ret', 'ran+gen', 'uni', 'flat_negatives']

EXPERIMENT_CONFIG = """
[generator]
order = 2
delta = 0.001
bias = 0.2
max_len = 8

[matcher]
dim = 32
init_scale = 0.1

[train]
learning_rate = 3.0
epochs = 15
"""

STAGES = ['ingest', 'build-index', 'train-lm', 'generate', 'build-grayscale']


def prepare(rawpath, *args):
    assert cli.main(['init', rawpath]) == 0
    Path(rawpath).joinpath('config.toml').write_text(EXPERIMENT_CONFIG)
    for command in STAGES:
        extra = ['--make-synthetic'] if command == 'ingest' else []
        assert cli.main([command, '-q', '-C', rawpath, *args, *extra]) == 0, \
            command


def ablation(seed):
    with TemporaryDirectory() as rawpath:
        args = ['--seed', str(seed),
                '--set', 'ablate.modes=' + json.dumps(MODES)]
        prepare(rawpath, *args)
        assert cli.main(['ablate', '-q', '-C', rawpath, *args]) == 0
        path = Path(rawpath).joinpath('reports', 'ablation.csv')
        with open(path) as file:
            return {row['mode']: float(row['R10@1'])
                    for row in csv.DictReader(file)}


@pytest.fixture(scope='module')
def mean_recall():
    runs = [ablation(seed) for seed in SEEDS]
    return {mode: sum(r[mode] for r in runs) / len(runs) for mode in MODES}


@pytest.mark.slow
def test_grayscale_beats_random_only(mean_recall):
    assert mean_recall['uni'] - mean_recall['ran_only'] >= 0.02


@pytest.mark.slow
def test_each_tier_helps(mean_recall):
    slack = -0.005
    assert mean_recall['uni'] - mean_recall['ran+ret'] >= slack
    assert mean_recall['ran+ret'] - mean_recall['ran_only'] >= slack
    assert mean_recall['uni'] - mean_recall['ran+gen'] >= slack
    assert mean_recall['ran+gen'] - mean_recall['ran_only'] >= slack


@pytest.mark.slow
def test_tiers_beat_flat_negatives(mean_recall):
    assert mean_recall['uni'] - mean_recall['flat_negatives'] >= 0.01


@pytest.mark.slow
def test_margin_sweep_covers_grid():
    with TemporaryDirectory() as rawpath:
        prepare(rawpath)
        args = ['-q', '-C', rawpath]
        assert cli.main(['sweep-margin', *args]) == 0
        path = Path(rawpath).joinpath('reports', 'margin_sweep.csv')
        first = path.read_bytes()
        rows = first.decode().splitlines()
        assert [r.split(',')[0] for r in rows[1:]] == [
            '0.1', '0.2', '0.3', '0.4', '0.5', '0.6', '0.7', '0.8', '0.9']
        assert cli.main(['sweep-margin', *args]) == 0
        assert path.read_bytes() == first

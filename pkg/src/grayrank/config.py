"""Pipeline configuration.

A workspace's config.toml overrides the defaults below; anything else on
the command line overrides the file. Unknown sections and keys are
rejected, and every value must have the type of its default (an int is
accepted where a float is expected).
"""


import copy
from dataclasses import dataclass
from dataclasses import fields
import hashlib
import json
import toml
from grayrank import _grid


MODES = ('bce', 'ran_only', 'ran+ret', 'ran+gen', 'uni', 'flat_negatives')

DEFAULTS = {
    'seed': 13,
    'git': False,
    'paths': {
        'train': 'raw/train.txt',
        'valid': 'raw/valid.txt',
        'test': 'raw/test.txt',
        'data': 'data',
        'vocab': 'artifacts/vocab.txt',
        'index': 'artifacts/index.bm25',
        'lm': 'artifacts/lm.ngram',
        'generated': 'artifacts/generated.tsv',
        'grayscale': 'artifacts/grayscale.jsonl',
        'checkpoint': 'artifacts/model.ckpt',
        'reports': 'reports',
    },
    'corpus': {
        'min_count': 2,
    },
    'synthetic': {
        'topics': 200,
        'entities': 6,
        'topic_words': 12,
        'common_words': 60,
        'train_dialogues': 2000,
        'valid_groups': 200,
        'test_groups': 500,
        'candidates': 10,
        'strong_distractors': 5,
        'min_turns': 2,
        'max_turns': 4,
    },
    'bm25': {
        'k1': 1.2,
        'b': 0.75,
        'pool_size': 100,
    },
    'generator': {
        'external': '',
        'order': 3,
        'delta': 0.1,
        'bias': 0.5,
        'beam_width': 10,
        'max_len': 20,
        'top_k': 5,
    },
    'grayscale': {
        'n_random': 5,
    },
    'matcher': {
        'dim': 64,
        'decay': 0.7,
        'init_scale': 0.05,
    },
    'train': {
        'mode': 'uni',
        'margin': 0.3,
        'learning_rate': 0.1,
        'pretrain_epochs': 2,
        'epochs': 20,
        'batch_size': 32,
        'adaptive_m': 5,
        'select_metric': 'R10@1',
    },
    'evaluate': {
        'metrics': ['R10@1', 'R10@2', 'R10@5', 'R2@1'],
        'tie_mode': 'index',
        'group_size': 0,
        'dump_groups': False,
    },
    'sweep': {
        'margins': '0.1:0.9:0.1',
    },
    'ablate': {
        'modes': list(MODES),
    },
}

DEFAULT_CONFIG_TOML = """# Settings left out here take their defaults; see `grayrank init -h`.
# seed = 13
# git = false

# [paths]
# train = "raw/train.txt"
# valid = "raw/valid.txt"
# test = "raw/test.txt"

# [train]
# mode = "uni"
# margin = 0.3
# epochs = 20
"""


class ConfigError(Exception):
    """Indicates an invalid configuration file or override."""
    pass


def _check_type(name, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, str) and name == 'sweep.margins':
        ok = isinstance(value, (str, list))
    elif isinstance(default, list) and default:
        ok = isinstance(value, list) and all(
            isinstance(item, type(default[0])) for item in value)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f'{name}: expected {type(default).__name__}, '
                          f'got {value!r}')
    if isinstance(default, float):
        return float(value)
    return value


def _merge(base, updates, prefix=''):
    for key, value in updates.items():
        name = prefix + key
        if key not in base:
            raise ConfigError(f'unknown config key: {name}')
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f'{name} must be a table')
            _merge(base[key], value, name + '.')
        else:
            base[key] = _check_type(name, base[key], value)


def parse_override(text):
    """Parses "section.key=value" into a nested dict.

    The value is read as a TOML literal; bare words are taken as strings.
    """
    name, sep, raw = text.partition('=')
    if not sep or not name.strip():
        raise ConfigError(f'expected section.key=value: {text}')
    try:
        value = toml.loads(f'v = {raw.strip()}')['v']
    except toml.TomlDecodeError:
        value = raw.strip()
    result = {}
    node = result
    parts = name.strip().split('.')
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return result


def resolve(raw=None, overrides=()):
    """Returns the defaults merged with raw, then with each override.

    Validates mode, tie mode, metric names and ranges.
    """
    config = copy.deepcopy(DEFAULTS)
    _merge(config, raw or {})
    for override in overrides:
        _merge(config, override)
    train = config['train']
    if train['mode'] not in MODES:
        raise ConfigError(f'train.mode must be one of {MODES}')
    if not config['ablate']['modes']:
        raise ConfigError('ablate.modes must not be empty')
    for mode in config['ablate']['modes']:
        if mode not in MODES:
            raise ConfigError(f'ablate.modes: unknown mode {mode}')
    if config['evaluate']['tie_mode'] not in ('index', 'pessimistic'):
        raise ConfigError('evaluate.tie_mode must be index or pessimistic')
    if config['evaluate']['group_size'] < 0:
        raise ConfigError('evaluate.group_size must be >= 0')
    try:
        for name in config['evaluate']['metrics'] + [train['select_metric']]:
            _grid.parse_metric(name)
        _grid.parse_grid(config['sweep']['margins'])
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e))
    TrainConfig.from_config(config)
    return config


def load(path, overrides=()):
    """Reads and resolves a config.toml file."""
    try:
        raw = toml.load(path)
    except toml.TomlDecodeError as e:
        raise ConfigError(f'{path}: {e}')
    return resolve(raw, overrides)


def dumps(config):
    return toml.dumps(config)


def config_hash(config):
    """Returns the SHA-256 of the config's canonical JSON form."""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


@dataclass(frozen=True)
class TrainConfig:
    mode: str = 'uni'
    margin: float = 0.3
    learning_rate: float = 0.1
    pretrain_epochs: int = 2
    epochs: int = 20
    batch_size: int = 32
    seed: int = 13
    adaptive_m: int = 5
    n_random: int = 5
    select_metric: str = 'R10@1'

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f'unknown mode: {self.mode}')
        if not 0 <= self.margin < 1:
            raise ConfigError(f'margin must be in [0, 1): {self.margin}')
        if self.learning_rate < 0:
            raise ConfigError('learning_rate must be >= 0')
        if not self.epochs >= self.pretrain_epochs >= 0 or self.epochs < 1:
            raise ConfigError('need epochs >= pretrain_epochs >= 0 '
                              'and epochs >= 1')
        if self.batch_size < 1 or self.adaptive_m < 1 or self.n_random < 1:
            raise ConfigError(
                'batch_size, adaptive_m and n_random must be >= 1')

    @classmethod
    def from_config(cls, config):
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in config['train'].items() if k in names}
        return cls(seed=config['seed'],
                   n_random=config['grayscale']['n_random'], **values)

from pathlib import Path
import pytest
from tempfile import TemporaryDirectory
from grayrank import config
from grayrank.config import ConfigError
from grayrank.config import TrainConfig


def test_defaults_resolve():
    cfg = config.resolve()
    assert cfg['seed'] == 13
    assert cfg['train']['mode'] == 'uni'
    assert cfg['bm25']['k1'] == 1.2
    assert cfg is not config.DEFAULTS
    cfg['paths']['train'] = 'changed'
    assert config.DEFAULTS['paths']['train'] == 'raw/train.txt'


def test_default_toml_parses_to_defaults():
    assert config.resolve(config.toml.loads(config.DEFAULT_CONFIG_TOML)) \
        == config.resolve()


def test_unknown_key():
    with pytest.raises(ConfigError) as e:
        config.resolve({'train': {'epochz': 3}})
    assert 'train.epochz' in str(e.value)


def test_unknown_section():
    with pytest.raises(ConfigError):
        config.resolve({'nope': {}})


def test_type_mismatch():
    with pytest.raises(ConfigError):
        config.resolve({'train': {'epochs': 'ten'}})
    with pytest.raises(ConfigError):
        config.resolve({'git': 1})


def test_list_element_types():
    with pytest.raises(ConfigError):
        config.resolve({'evaluate': {'metrics': [1]}})
    with pytest.raises(ConfigError):
        config.resolve({'ablate': {'modes': ['uni', 2]}})
    with pytest.raises(ConfigError):
        config.resolve({'sweep': {'margins': [0.1, [0.2]]}})
    with pytest.raises(ConfigError):
        config.resolve({'evaluate': {'group_size': -1}})


def test_int_accepted_for_float():
    cfg = config.resolve({'train': {'margin': 0}})
    assert cfg['train']['margin'] == 0.0
    assert isinstance(cfg['train']['margin'], float)


def test_invalid_values():
    with pytest.raises(ConfigError):
        config.resolve({'train': {'mode': 'fancy'}})
    with pytest.raises(ConfigError):
        config.resolve({'train': {'margin': 1.0}})
    with pytest.raises(ConfigError):
        config.resolve({'evaluate': {'metrics': ['R2@3']}})
    with pytest.raises(ConfigError):
        config.resolve({'evaluate': {'tie_mode': 'random'}})
    with pytest.raises(ConfigError):
        config.resolve({'sweep': {'margins': 'lots'}})
    with pytest.raises(ConfigError):
        config.resolve({'ablate': {'modes': []}})
    with pytest.raises(ConfigError):
        config.resolve({'train': {'pretrain_epochs': 5, 'epochs': 3}})


def test_parse_override():
    assert config.parse_override('train.margin=0.5') == {
        'train': {'margin': 0.5}}
    assert config.parse_override('train.mode=ran+gen') == {
        'train': {'mode': 'ran+gen'}}
    assert config.parse_override('ablate.modes=["uni", "bce"]') == {
        'ablate': {'modes': ['uni', 'bce']}}
    assert config.parse_override('seed=7') == {'seed': 7}
    with pytest.raises(ConfigError):
        config.parse_override('nothing')


def test_overrides_apply_after_file():
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('config.toml')
        path.write_text('seed = 1\n[train]\nepochs = 5\n')
        cfg = config.load(path, [config.parse_override('train.epochs=7')])
        assert cfg['seed'] == 1
        assert cfg['train']['epochs'] == 7


def test_load_bad_toml():
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('config.toml')
        path.write_text('[train\n')
        with pytest.raises(ConfigError):
            config.load(path)


def test_config_hash():
    a = config.resolve()
    b = config.resolve()
    assert config.config_hash(a) == config.config_hash(b)
    assert len(config.config_hash(a)) == 64
    b['train']['margin'] = 0.2
    assert config.config_hash(a) != config.config_hash(b)


def test_dumps_round_trips():
    cfg = config.resolve({'train': {'mode': 'bce'}})
    assert config.resolve(config.toml.loads(config.dumps(cfg))) == cfg


def test_train_config_from_config():
    cfg = config.resolve({'seed': 4, 'grayscale': {'n_random': 2}})
    tc = TrainConfig.from_config(cfg)
    assert tc.seed == 4
    assert tc.n_random == 2
    assert tc.mode == 'uni'
    assert tc.select_metric == 'R10@1'


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0, pretrain_epochs=0)
    assert TrainConfig(learning_rate=0.0).learning_rate == 0.0
    assert TrainConfig(margin=0.0).margin == 0.0

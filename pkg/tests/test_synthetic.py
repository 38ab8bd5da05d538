from dataclasses import replace
import pytest
import re
from grayrank import config
from grayrank import synthetic
from grayrank.config import ConfigError
from grayrank.corpus import group_candidates
from grayrank.synthetic import SyntheticSettings


SMALL = SyntheticSettings(topics=5, entities=3, topic_words=4,
                          common_words=10, train_dialogues=20,
                          valid_groups=3, test_groups=4, candidates=6,
                          strong_distractors=2)


def topic_of(utterance):
    [topic] = {re.match(r't\d+', w).group() for w in utterance
               if w.startswith('t')}
    return topic


def entities_of(utterance):
    return sorted(w for w in utterance if 'e' in w)


def test_sizes():
    data = synthetic.generate(SMALL, 1)
    assert len(data['train'].examples) == 2 * 20
    assert len(data['train'].relevant()) == 20
    assert len(data['valid'].examples) == 3 * 6
    assert len(data['test'].examples) == 4 * 6
    assert data['test'].split == 'test'


def test_deterministic():
    assert synthetic.generate(SMALL, 1) == synthetic.generate(SMALL, 1)
    assert synthetic.generate(SMALL, 1) != synthetic.generate(SMALL, 2)


def test_splits_are_independent():
    bigger = replace(SMALL, train_dialogues=30)
    a = synthetic.generate(SMALL, 1)
    b = synthetic.generate(bigger, 1)
    assert a['test'] == b['test']
    assert a['train'] != b['train']


def test_group_layout():
    data = synthetic.generate(SMALL, 4)
    groups = list(group_candidates(data['test']))
    assert len(groups) == 4
    for context, candidates in groups:
        assert [label for _, label in candidates] == [1, 0, 0, 0, 0, 0]
        truth = candidates[0][0]
        topic = topic_of(truth)
        pair = entities_of(truth)
        assert len(pair) == 2
        assert entities_of(context[-1]) == pair
        for turn in context[:-1]:
            assert entities_of(turn) == []
        assert {topic_of(turn) for turn in context} == {topic}
        for response, _ in candidates[1:3]:
            assert topic_of(response) == topic
            assert len(entities_of(response)) == 2
            assert entities_of(response) != pair
        for response, _ in candidates[3:]:
            assert topic_of(response) != topic


def test_utterances():
    data = synthetic.generate(SMALL, 2)
    for example in data['train'].examples:
        assert 2 <= len(example.context) <= 4
        for turn in example.context[:-1]:
            assert 4 <= len(turn) <= 6
        for turn in (example.context[-1], example.response):
            assert 6 <= len(turn) <= 8
    for example in data['train'].relevant():
        assert (entities_of(example.response)
                == entities_of(example.context[-1]))


def test_train_negatives_are_off_topic():
    data = synthetic.generate(SMALL, 3)
    examples = data['train'].examples
    for relevant, negative in zip(examples[::2], examples[1::2]):
        assert relevant.context == negative.context
        assert negative.label == 0
        assert topic_of(negative.response) != topic_of(relevant.response)


def test_invalid_settings():
    with pytest.raises(ValueError):
        SyntheticSettings(topics=1)
    with pytest.raises(ValueError):
        SyntheticSettings(entities=2)
    with pytest.raises(ValueError):
        SyntheticSettings(candidates=4, strong_distractors=4)
    cfg = config.resolve({'synthetic': {'min_turns': 3, 'max_turns': 2}})
    with pytest.raises(ConfigError):
        SyntheticSettings.from_config(cfg)

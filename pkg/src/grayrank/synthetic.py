"""A bundled synthetic dialogue corpus for smoke tests and experiments.

Every dialogue is about one topic. Its turns mix words of the topic with
common filler words, and its last turn names a pair of the topic's
entities that the ground-truth response names again. Telling the ground
truth apart from another dialogue on the same topic therefore takes the
entity pair, while telling it from a random response only takes the
topic.

Test and validation groups hold the ground truth first, then strong
distractors (ground truths of other dialogues on the same topic about a
different entity pair), then random responses (ground truths of
dialogues on other topics).
"""


from dataclasses import dataclass
from dataclasses import fields
import numpy as np
from grayrank.config import ConfigError
from grayrank.corpus import Corpus
from grayrank.corpus import IRRELEVANT
from grayrank.corpus import LabeledExample
from grayrank.corpus import RELEVANT


@dataclass(frozen=True)
class SyntheticSettings:
    topics: int = 200
    entities: int = 8
    topic_words: int = 12
    common_words: int = 60
    train_dialogues: int = 2000
    valid_groups: int = 200
    test_groups: int = 500
    candidates: int = 10
    strong_distractors: int = 5
    min_turns: int = 2
    max_turns: int = 4

    def __post_init__(self):
        if self.topics < 2:
            raise ValueError('need at least 2 topics')
        if self.entities < 3:
            raise ValueError('need at least 3 entities per topic')
        if min(self.topic_words, self.common_words) < 1:
            raise ValueError('topic_words and common_words must be >= 1')
        if not 1 <= self.min_turns <= self.max_turns:
            raise ValueError('need 1 <= min_turns <= max_turns')
        if self.candidates < 2:
            raise ValueError('candidates must be >= 2')
        if not 0 <= self.strong_distractors < self.candidates:
            raise ValueError('strong_distractors must be < candidates')

    @classmethod
    def from_config(cls, config):
        """Reads the [synthetic] section; raises ConfigError if invalid."""
        names = {f.name for f in fields(cls)}
        try:
            return cls(**{k: v for k, v in config['synthetic'].items()
                          if k in names})
        except ValueError as e:
            raise ConfigError(f'synthetic: {e}')


@dataclass(frozen=True)
class Dialogue:
    topic: int
    pair: tuple
    context: tuple
    ground_truth: tuple


class WordSource:
    """Draws dialogues from a seeded generator.

    Words are named t<topic>w<i> (topic words), t<topic>e<i> (entities)
    and c<i> (common words).
    """
    def __init__(self, settings, rng):
        self.settings = settings
        self.rng = rng

    def _pick(self, n):
        return int(self.rng.integers(n))

    def utterance(self, topic, pair=()):
        """Returns 3-4 topic words, 1-2 common words and pair, shuffled."""
        words = [f't{topic}e{k}' for k in pair]
        words += [f't{topic}w{self._pick(self.settings.topic_words)}'
                  for _ in range(3 + self._pick(2))]
        words += [f'c{self._pick(self.settings.common_words)}'
                  for _ in range(1 + self._pick(2))]
        self.rng.shuffle(words)
        return tuple(words)

    def entity_pair(self, exclude=None):
        while True:
            pair = tuple(sorted(int(k) for k in self.rng.choice(
                self.settings.entities, 2, replace=False)))
            if pair != exclude:
                return pair

    def other_topic(self, topic):
        other = self._pick(self.settings.topics - 1)
        return other + 1 if other >= topic else other

    def dialogue(self, topic=None, pair=None):
        """Returns a Dialogue; topic and pair are drawn when not given.

        Only the last context turn and the ground truth name the pair.
        """
        if topic is None:
            topic = self._pick(self.settings.topics)
        if pair is None:
            pair = self.entity_pair()
        turns = int(self.rng.integers(self.settings.min_turns,
                                      self.settings.max_turns + 1))
        context = tuple(self.utterance(topic) for _ in range(turns - 1))
        context += (self.utterance(topic, pair),)
        return Dialogue(topic, pair, context, self.utterance(topic, pair))

    def same_topic_response(self, dialogue):
        """The ground truth of another dialogue on the topic, other pair."""
        pair = self.entity_pair(exclude=dialogue.pair)
        return self.dialogue(dialogue.topic, pair).ground_truth

    def random_response(self, dialogue):
        """The ground truth of a dialogue on another topic."""
        return self.dialogue(self.other_topic(dialogue.topic)).ground_truth


def _train(source, n):
    examples = []
    for _ in range(n):
        dialogue = source.dialogue()
        examples.append(LabeledExample(dialogue.context,
                                       dialogue.ground_truth, RELEVANT))
        examples.append(LabeledExample(dialogue.context,
                                       source.random_response(dialogue),
                                       IRRELEVANT))
    return examples


def _groups(source, n):
    settings = source.settings
    examples = []
    for _ in range(n):
        dialogue = source.dialogue()
        context = dialogue.context
        examples.append(LabeledExample(context, dialogue.ground_truth,
                                       RELEVANT))
        for _ in range(settings.strong_distractors):
            examples.append(LabeledExample(
                context, source.same_topic_response(dialogue), IRRELEVANT))
        for _ in range(settings.candidates - 1 - settings.strong_distractors):
            examples.append(LabeledExample(
                context, source.random_response(dialogue), IRRELEVANT))
    return examples


def generate(settings, seed):
    """Returns a dict of split name to Corpus.

    The train split alternates each relevant dialogue with one random
    negative. Each split draws from its own generator seeded with
    (seed, split number), so changing one split's size leaves the others
    unchanged.
    """
    train = WordSource(settings, np.random.default_rng([seed, 0]))
    valid = WordSource(settings, np.random.default_rng([seed, 1]))
    test = WordSource(settings, np.random.default_rng([seed, 2]))
    return {
        'train': Corpus(tuple(_train(train, settings.train_dialogues)),
                        'train'),
        'valid': Corpus(tuple(_groups(valid, settings.valid_groups)),
                        'valid'),
        'test': Corpus(tuple(_groups(test, settings.test_groups)), 'test'),
    }

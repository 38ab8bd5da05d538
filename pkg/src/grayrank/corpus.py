"""Reading dialogue corpora and turning them into indexable pieces.

Terminology:
- an "utterance" is one turn of a dialogue, stored as a tuple of tokens
- a "labeled example" is a context (one or more utterances), a candidate
  response, and a relevance label; this is one line of a corpus file
- a "turn pair" is a single-turn input/response pair cut out of a
  relevant training dialogue; the BM25 index and the n-gram generator
  are built from these

Corpus files hold one example per line, tab-separated, label first and
response last, the layout used by the public Ubuntu and Douban releases.
"""


from collections import Counter
from dataclasses import dataclass
import re


RELEVANT = 1
IRRELEVANT = 0

SPLITS = ('train', 'valid', 'test')

UNK = '<unk>'
BOS = '<s>'
EOS = '</s>'

_TOKEN_RE = re.compile(r'\w+|[^\w\s]+')


class CorpusFormatError(Exception):
    """Indicates a line of an input file could not be parsed."""
    def __init__(self, line_number, message):
        where = f'line {line_number}: ' if line_number else ''
        super().__init__(where + message)
        self.line_number = line_number


def tokenize(text):
    """Returns the list of tokens in text.

    Text is lowercased and split on whitespace; each maximal run of
    punctuation becomes a token of its own.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class LabeledExample:
    context: tuple
    response: tuple
    label: int

    def __post_init__(self):
        if not self.context:
            raise ValueError('context must have at least one turn')
        if self.label not in (RELEVANT, IRRELEVANT):
            raise ValueError(f'invalid label: {self.label}')


@dataclass(frozen=True)
class Corpus:
    examples: tuple
    split: str

    def relevant(self):
        """Returns the examples labeled relevant, in file order."""
        return [ex for ex in self.examples if ex.label == RELEVANT]


@dataclass(frozen=True)
class TurnPair:
    input: tuple
    response: tuple
    source_dialogue: int
    response_id: int


def _utterance(text):
    return tuple(tokenize(text))


def parse_example_line(line, line_number=1):
    """Parses one corpus line into a LabeledExample.

    Raises CorpusFormatError naming the line number if the label is not
    "0" or "1" or there are fewer than three fields.
    """
    fields = line.rstrip('\r\n').split('\t')
    if len(fields) < 3:
        raise CorpusFormatError(
            line_number, f'expected at least 3 fields, got {len(fields)}')
    label = fields[0]
    if label not in ('0', '1'):
        raise CorpusFormatError(line_number, f'invalid label: {label!r}')
    return LabeledExample(
        context=tuple(_utterance(f) for f in fields[1:-1]),
        response=_utterance(fields[-1]),
        label=int(label))


def format_example(example):
    """Returns the corpus line (without newline) for an example."""
    fields = [str(example.label)]
    fields += [' '.join(turn) for turn in example.context]
    fields.append(' '.join(example.response))
    return '\t'.join(fields)


def read_corpus(path, split):
    """Reads a corpus file; blank lines are skipped."""
    if split not in SPLITS:
        raise ValueError(f'unknown split: {split}')
    examples = []
    with open(path, encoding='utf-8') as file:
        for number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            examples.append(parse_example_line(line, number))
    return Corpus(tuple(examples), split)


def write_corpus(corpus, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        for example in corpus.examples:
            file.write(format_example(example) + '\n')


def split_to_pairs(corpus):
    """Returns the single-turn input/response pairs of a training corpus.

    Only relevant examples are used. Each one is a dialogue u_1..u_k with
    ground truth r and yields (u_1, u_2), ..., (u_{k-1}, u_k), (u_k, r).
    source_dialogue is the example's position among relevant examples
    (the context_id used everywhere downstream); response_ids are
    sequential over the whole corpus.
    """
    pairs = []
    for context_id, example in enumerate(corpus.relevant()):
        turns = list(example.context) + [example.response]
        for first, second in zip(turns, turns[1:]):
            pairs.append(TurnPair(first, second, context_id, len(pairs)))
    return pairs


class Vocab:
    """Bijective token <-> id mapping with fixed special ids.

    Ids 0, 1 and 2 are the OOV, sequence-start and sequence-end markers;
    other tokens follow densely. Lookup of an unknown token returns the
    OOV id.
    """
    SPECIALS = (UNK, BOS, EOS)
    unk_id = 0
    bos_id = 1
    eos_id = 2

    def __init__(self, tokens=()):
        self.itos = list(self.SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for token in tokens:
            if token in self.stoi:
                raise ValueError(f'duplicate vocab token: {token!r}')
            self.stoi[token] = len(self.itos)
            self.itos.append(token)

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def __contains__(self, token):
        return token in self.stoi

    def lookup(self, token):
        return self.stoi.get(token, self.unk_id)

    def encode(self, tokens):
        """Returns the tuple of ids for a token sequence."""
        return tuple(self.stoi.get(t, self.unk_id) for t in tokens)

    def decode(self, ids):
        return tuple(self.itos[i] for i in ids)

    def save(self, path):
        """Writes one "token<TAB>id" line per entry, specials included."""
        with open(path, 'w', encoding='utf-8', newline='\n') as file:
            for i, token in enumerate(self.itos):
                file.write(f'{token}\t{i}\n')

    @classmethod
    def load(cls, path):
        tokens = []
        with open(path, encoding='utf-8') as file:
            for number, line in enumerate(file, start=1):
                parts = line.rstrip('\n').split('\t')
                if len(parts) != 2 or not parts[1].isdigit():
                    raise CorpusFormatError(number, 'expected token<TAB>id')
                if int(parts[1]) != number - 1:
                    raise CorpusFormatError(number, 'ids must be dense')
                tokens.append(parts[0])
        if tuple(tokens[:len(cls.SPECIALS)]) != cls.SPECIALS:
            raise CorpusFormatError(1, 'missing special tokens')
        return cls(tokens[len(cls.SPECIALS):])


def build_vocab(corpus, min_count=2):
    """Builds a Vocab from every token of every example in the corpus.

    Tokens seen fewer than min_count times are left out (they look up as
    OOV). Order is descending frequency, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError('min_count must be >= 1')
    counts = Counter()
    for example in corpus.examples:
        for turn in example.context:
            counts.update(turn)
        counts.update(example.response)
    kept = [t for t, c in counts.items()
            if c >= min_count and t not in Vocab.SPECIALS]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept)


def group_candidates(corpus, group_size=0):
    """Groups consecutive examples sharing a context, keeping file order.

    With group_size > 0 a group is also closed once it holds group_size
    candidates, so two adjacent groups for the same context stay apart.
    With group_size == 0 such groups are merged.

    Returns a list of (context, [(response, label), ...]).
    """
    groups = []
    for example in corpus.examples:
        if (groups and groups[-1][0] == example.context
                and not 0 < group_size <= len(groups[-1][1])):
            groups[-1][1].append((example.response, example.label))
        else:
            groups.append((example.context, [(example.response,
                                              example.label)]))
    return groups

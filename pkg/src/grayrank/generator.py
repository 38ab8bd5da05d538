"""Tier-2 generation responses.

The built-in generator is an add-delta smoothed n-gram language model over
the response side of the turn pairs, decoded with beam search and biased
towards the tokens of the dialogue context. Responses from any other
generator can be plugged in through the interchange file read by
load_generated.
"""


from collections import Counter
from dataclasses import dataclass
import json
import logging
import math
import numpy as np
from grayrank.corpus import CorpusFormatError
from grayrank.corpus import Vocab
from grayrank.workspace import ArtifactVersionError


FORMAT = 'grayrank-ngram'
VERSION = 1

logger = logging.getLogger(__name__)

_UNK = Vocab.unk_id
_BOS = Vocab.bos_id
_EOS = Vocab.eos_id


@dataclass(frozen=True)
class GeneratedResponse:
    tokens: tuple
    log_prob: float


class NGramModel:
    """Add-delta smoothed n-gram model over vocab ids.

    The predictive support is every vocab id except the OOV and
    sequence-start ids, so the end id is always included. Events whose
    next token is OOV are not counted, which keeps each conditional
    distribution normalized over the support.

    Attributes:
    - order: n, so histories hold order - 1 ids
    - counts: history tuple -> Counter of next id
    - vocab_size: size of the vocab the ids come from
    - delta: smoothing constant
    - bias: weight of the context unigram distribution during decoding
    """
    def __init__(self, order, counts, vocab_size, delta, bias=0.5):
        self.order = order
        self.counts = counts
        self.vocab_size = vocab_size
        self.delta = delta
        self.bias = bias
        self.support = np.array([i for i in range(vocab_size)
                                 if i not in (_UNK, _BOS)])
        self._position = np.full(vocab_size, -1)
        self._position[self.support] = np.arange(len(self.support))
        self._rows = {}

    def __eq__(self, other):
        return (isinstance(other, NGramModel)
                and self.order == other.order
                and self.counts == other.counts
                and self.vocab_size == other.vocab_size
                and self.delta == other.delta
                and self.bias == other.bias)

    def distribution(self, history):
        """Returns P(w | history) for every support id, as an array."""
        history = tuple(history[-(self.order - 1):])
        row = self._rows.get(history)
        if row is None:
            row = np.full(len(self.support), self.delta)
            seen = self.counts.get(history)
            total = 0
            if seen:
                for token, count in seen.items():
                    row[self._position[token]] += count
                    total += count
            row /= total + self.delta * len(self.support)
            self._rows[history] = row
        return row

    def prob(self, history, token):
        return float(self.distribution(history)[self._position[token]])

    def save(self, path):
        """Writes the model as JSON lines; counts are sorted by history."""
        with open(path, 'w', encoding='utf-8', newline='\n') as file:
            file.write(f'{FORMAT}\t{VERSION}\n')
            file.write(json.dumps({'order': self.order,
                                   'vocab_size': self.vocab_size,
                                   'delta': self.delta,
                                   'bias': self.bias},
                                  sort_keys=True) + '\n')
            for history in sorted(self.counts):
                nexts = sorted(self.counts[history].items())
                file.write(json.dumps([list(history), nexts]) + '\n')

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as file:
            header = file.readline().rstrip('\n')
            if header != f'{FORMAT}\t{VERSION}':
                raise ArtifactVersionError(path, header)
            params = json.loads(file.readline())
            counts = {}
            for line in file:
                history, nexts = json.loads(line)
                counts[tuple(history)] = Counter(
                    {token: count for token, count in nexts})
        return cls(params['order'], counts, params['vocab_size'],
                   params['delta'], params['bias'])


def train_lm(pairs, vocab, order=3, delta=0.1, bias=0.5):
    """Counts n-grams over the encoded responses of the turn pairs.

    Each response is padded with order - 1 start ids and closed with the
    end id. Raises ValueError for an empty pair list or bad parameters.
    """
    if not pairs:
        raise ValueError('cannot train a language model on zero pairs')
    if order < 2:
        raise ValueError('order must be >= 2')
    if delta <= 0:
        raise ValueError('delta must be > 0')
    if not 0 <= bias <= 1:
        raise ValueError('bias must be in [0, 1]')
    counts = {}
    for pair in pairs:
        ids = ((vocab.bos_id,) * (order - 1) + vocab.encode(pair.response)
               + (vocab.eos_id,))
        for i in range(order - 1, len(ids)):
            if ids[i] == vocab.unk_id:
                continue
            history = ids[i - order + 1:i]
            counts.setdefault(history, Counter())[ids[i]] += 1
    logger.info('trained %d-gram model: %d histories from %d responses',
                order, len(counts), len(pairs))
    return NGramModel(order, counts, len(vocab), delta, bias)


def context_distribution(model, context_ids):
    """Returns the normalized unigram distribution of the context tokens.

    Tokens outside the model's support get no mass; an all-OOV context
    yields all zeros.
    """
    dist = np.zeros(len(model.support))
    for turn in context_ids:
        for token in turn:
            position = model._position[token]
            if position >= 0:
                dist[position] += 1
    total = dist.sum()
    if total:
        dist /= total
    return dist


def beam_generate(model, context_ids, beam_width=10, max_len=20, top_k=5):
    """Decodes up to top_k responses for an encoded context.

    The per-step score of token w is
    log((1 - bias) * P_lm(w | h) + bias * P_ctx(w)). Each step expands
    every live hypothesis by every support token and keeps the best
    beam_width expansions; those ending in the end id are complete.
    Ordering is by score descending, then by id sequence. If fewer than
    top_k hypotheses complete within max_len steps, the best live ones
    are returned as they stand. Returned tokens are ids without the end
    id. Decoding stops early once top_k hypotheses have finished and
    every live one already scores below them.
    """
    if not beam_width >= top_k >= 1:
        raise ValueError('need beam_width >= top_k >= 1')
    if max_len < 1:
        raise ValueError('max_len must be >= 1')
    ctx = context_distribution(model, context_ids)
    eos = model._position[_EOS]
    start = (_BOS,) * (model.order - 1)
    with np.errstate(divide='ignore'):
        live = [((), 0.0)]
        done = []
        for _ in range(max_len):
            candidates = []
            for seq, score in live:
                probs = model.distribution(start + seq)
                mixed = (1 - model.bias) * probs + model.bias * ctx
                candidates.append(score + np.log(mixed))
            flat = np.concatenate(candidates)
            finite = np.isfinite(flat)
            if not finite.any():
                break
            keep = min(beam_width, int(finite.sum()))
            cutoff = np.partition(flat[finite], -keep)[-keep]
            chosen = []
            for index in np.flatnonzero(flat >= cutoff):
                hyp, position = divmod(int(index), len(model.support))
                seq = live[hyp][0] + (int(model.support[position]),)
                chosen.append((seq, float(flat[index]), position == eos))
            chosen.sort(key=lambda c: (-c[1], c[0]))
            chosen = chosen[:beam_width]
            live = [(seq, score) for seq, score, ended in chosen
                    if not ended]
            done += [(seq[:-1], score) for seq, score, ended in chosen
                     if ended]
            if not live:
                break
            if len(done) >= top_k:
                # Scores never increase, so no live hypothesis can
                # overtake the current top_k finished ones.
                kth = sorted(score for _, score in done)[-top_k]
                if max(score for _, score in live) < kth:
                    break
    done.sort(key=lambda c: (-c[1], c[0]))
    if len(done) < top_k:
        live.sort(key=lambda c: (-c[1], c[0]))
        done += live[:top_k - len(done)]
    return [GeneratedResponse(seq, score) for seq, score in done[:top_k]]


def write_generated(generated, vocab, path):
    """Writes context_id<TAB>log_prob<TAB>response text lines.

    generated maps context_id to a list of GeneratedResponse whose tokens
    are ids; they are written as text. log_prob is written with repr.
    """
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        for context_id in sorted(generated):
            for response in generated[context_id]:
                text = ' '.join(vocab.decode(response.tokens))
                file.write(f'{context_id}\t{response.log_prob!r}\t{text}\n')


def load_generated(path):
    """Reads generated responses, grouped by context_id.

    Each group is sorted by log_prob descending (stable for equal
    log_probs). Tokens are the whitespace-separated words of the text.
    Raises CorpusFormatError naming the line for malformed lines.
    """
    results = {}
    with open(path, encoding='utf-8') as file:
        for number, line in enumerate(file, start=1):
            line = line.rstrip('\r\n')
            if not line:
                continue
            fields = line.split('\t')
            if len(fields) != 3:
                raise CorpusFormatError(number, 'expected 3 fields')
            try:
                context_id = int(fields[0])
                log_prob = float(fields[1])
            except ValueError as e:
                raise CorpusFormatError(number, str(e))
            if math.isnan(log_prob) or log_prob > 0:
                raise CorpusFormatError(
                    number, f'log_prob must be <= 0: {fields[1]}')
            results.setdefault(context_id, []).append(
                GeneratedResponse(tuple(fields[2].split()), log_prob))
    for responses in results.values():
        responses.sort(key=lambda r: -r.log_prob)
    return results

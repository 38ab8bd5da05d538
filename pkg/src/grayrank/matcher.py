"""Matching models s(c, r) in (0, 1).

The trainer and evaluator only use the Scorer interface (score,
backward, snapshot, plus apply for updates), so any scorer honouring it
can be plugged in. DualEncoderScorer is the built-in one: a
recency-weighted mean of turn embeddings for the context, a mean
embedding for the response, a diagonal bilinear interaction and a
sigmoid.

Contexts and responses are passed as vocab ids (see Vocab.encode).
"""


from dataclasses import dataclass
import json
import numpy as np
from grayrank.workspace import ArtifactVersionError


FORMAT = 'grayrank-matcher'
VERSION = 1


class StaleCacheError(Exception):
    """Indicates a backward pass with a cache from other parameters."""
    pass


def sigmoid(x):
    """Elementwise logistic function; exact 0.5 at zero."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


class ScorerParams:
    """Trainable parameters of the dual encoder.

    Attributes:
    - embeddings: |V| x d float64 matrix
    - weights: d-vector of interaction weights
    - bias: scalar
    - decay: recency decay gamma in (0, 1]; a hyperparameter, not trained
    - version: bumped on every update, used to reject stale caches
    """
    def __init__(self, embeddings, weights, bias, decay):
        if not 0 < decay <= 1:
            raise ValueError(f'decay must be in (0, 1]: {decay}')
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.decay = float(decay)
        self.version = 0

    @classmethod
    def initialize(cls, vocab_size, dim=64, decay=0.7, init_scale=0.05,
                   seed=0):
        """Returns parameters with embeddings uniform in +-init_scale.

        Interaction weights start at one and the bias at zero.
        """
        if dim < 1:
            raise ValueError('dim must be >= 1')
        rng = np.random.default_rng(seed)
        embeddings = rng.uniform(-init_scale, init_scale, (vocab_size, dim))
        return cls(embeddings, np.ones(dim), 0.0, decay)

    @property
    def dim(self):
        return self.weights.shape[0]

    def copy(self):
        params = ScorerParams(self.embeddings.copy(), self.weights.copy(),
                              self.bias, self.decay)
        params.version = self.version
        return params

    def __eq__(self, other):
        return (isinstance(other, ScorerParams)
                and self.bias == other.bias
                and self.decay == other.decay
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.embeddings, other.embeddings))

    def save(self, path):
        """Writes a checkpoint: header, hyperparameters, raw arrays.

        The arrays are written with np.save one after another, so a
        checkpoint is byte-identical for identical parameters.
        """
        with open(path, 'wb') as file:
            file.write(f'{FORMAT}\t{VERSION}\n'.encode())
            meta = {'vocab_size': self.embeddings.shape[0],
                    'dim': self.dim,
                    'decay': self.decay}
            file.write((json.dumps(meta, sort_keys=True) + '\n').encode())
            np.save(file, self.embeddings, allow_pickle=False)
            np.save(file, self.weights, allow_pickle=False)
            np.save(file, np.array([self.bias]), allow_pickle=False)

    @classmethod
    def load(cls, path):
        with open(path, 'rb') as file:
            header = file.readline().decode().rstrip('\n')
            if header != f'{FORMAT}\t{VERSION}':
                raise ArtifactVersionError(path, header)
            meta = json.loads(file.readline().decode())
            embeddings = np.load(file, allow_pickle=False)
            weights = np.load(file, allow_pickle=False)
            bias = np.load(file, allow_pickle=False)
        if embeddings.shape != (meta['vocab_size'], meta['dim']):
            raise ArtifactVersionError(path, 'embedding shape mismatch')
        return cls(embeddings, weights, float(bias[0]), meta['decay'])


class ResponseBatch:
    """Token id sequences padded into one matrix.

    ids is n x width, each row padded at the end; mask is 1.0 on real
    tokens. An empty sequence is a row of zeros in the mask.
    """
    def __init__(self, ids, mask):
        self.ids = ids
        self.mask = mask
        self.lengths = mask.sum(axis=1)

    @classmethod
    def of(cls, sequences):
        if isinstance(sequences, ResponseBatch):
            return sequences
        sequences = list(sequences)
        width = max([len(s) for s in sequences] + [1])
        ids = np.zeros((len(sequences), width), dtype=np.int64)
        mask = np.zeros((len(sequences), width))
        for i, sequence in enumerate(sequences):
            ids[i, :len(sequence)] = sequence
            mask[i, :len(sequence)] = 1.0
        return cls(ids, mask)

    def __len__(self):
        return self.ids.shape[0]

    def take(self, rows):
        """Returns the sub-batch of the given row positions, in order."""
        rows = np.asarray(rows, dtype=np.int64)
        return ResponseBatch(self.ids[rows], self.mask[rows])

    def sequences(self):
        return [tuple(int(t) for t in row[:int(n)])
                for row, n in zip(self.ids, self.lengths)]


@dataclass
class BatchScore:
    """Scores of several responses to one context, plus what backward needs."""
    scores: np.ndarray
    raw: np.ndarray
    turns: ResponseBatch
    turn_weights: np.ndarray
    u: np.ndarray
    responses: ResponseBatch
    v: np.ndarray
    version: int


@dataclass
class ScoreWithCache:
    """A single score plus its one-row BatchScore."""
    score: float
    raw: float
    batch: BatchScore


@dataclass
class Gradients:
    """Gradients for one or more scores.

    rows maps an embedding row to its gradient; rows not present have
    zero gradient. Accumulation follows insertion order.
    """
    weights: np.ndarray
    bias: float
    rows: dict

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros(dim), 0.0, {})

    def add(self, other):
        self.weights += other.weights
        self.bias += other.bias
        for row, grad in other.rows.items():
            if row in self.rows:
                self.rows[row] += grad
            else:
                self.rows[row] = grad.copy()
        return self


def _turn_weights(n_turns, decay):
    weights = decay ** np.arange(n_turns - 1, -1, -1, dtype=np.float64)
    return weights / weights.sum()


def _mean_embeddings(params, batch):
    summed = (params.embeddings[batch.ids]
              * batch.mask[:, :, None]).sum(axis=1)
    return summed / np.maximum(batch.lengths, 1.0)[:, None]


def _encode(params, context):
    if not context:
        raise ValueError('context must have at least one turn')
    turns = ResponseBatch.of(context)
    weights = _turn_weights(len(turns), params.decay)
    u = (weights[:, None] * _mean_embeddings(params, turns)).sum(axis=0)
    return turns, weights, u


def encode_context(params, context):
    """Returns the recency-weighted mean of the turns' mean embeddings.

    Turn j of T gets weight decay**(T - j), normalized over all turns;
    empty turns contribute a zero vector but keep their weight.
    """
    return _encode(params, context)[2]


def score_batch(params, context, responses):
    """Scores every response against one context in a single pass.

    responses is a ResponseBatch or a list of id tuples.
    """
    turns, turn_weights, u = _encode(params, context)
    responses = ResponseBatch.of(responses)
    v = _mean_embeddings(params, responses)
    raw = (params.weights * u * v).sum(axis=1) + params.bias
    return BatchScore(sigmoid(raw), raw, turns, turn_weights, u, responses,
                      v, params.version)


def score(params, context, response):
    """Returns sigmoid(sum(w * u * v) + bias) with a backward cache."""
    batch = score_batch(params, context, [response])
    return ScoreWithCache(float(batch.scores[0]), float(batch.raw[0]), batch)


def _token_grads(batch, scale, grads):
    # Spreads grads[i] * scale[i] evenly over the tokens of row i.
    share = (scale / np.maximum(batch.lengths, 1.0))[:, None] * grads
    rows, cols = np.nonzero(batch.mask)
    return batch.ids[rows, cols], share[rows]


def backward_batch(params, cache, upstream):
    """Returns the Gradients of sum(upstream * scores) for a BatchScore.

    Responses with zero upstream gradient contribute no embedding rows.
    Raises StaleCacheError if params changed since the cache was made.
    """
    if cache.version != params.version:
        raise StaleCacheError(
            f'cache from version {cache.version}, params at '
            f'{params.version}')
    upstream = np.asarray(upstream, dtype=np.float64)
    d_raw = cache.scores * (1.0 - cache.scores) * upstream
    d_u = params.weights * (d_raw @ cache.v)
    d_v = np.outer(d_raw, params.weights * cache.u)
    live = np.flatnonzero(upstream)
    turn_ids, turn_grads = _token_grads(
        cache.turns, cache.turn_weights,
        np.broadcast_to(d_u, (len(cache.turns), params.dim)))
    response_ids, response_grads = _token_grads(
        cache.responses.take(live), np.ones(len(live)), d_v[live])
    ids, inverse = np.unique(np.concatenate([turn_ids, response_ids]),
                             return_inverse=True)
    summed = np.zeros((len(ids), params.dim))
    np.add.at(summed, inverse.ravel(),
              np.concatenate([turn_grads, response_grads]))
    rows = {int(token): summed[i] for i, token in enumerate(ids)}
    return Gradients((d_raw[:, None] * cache.u * cache.v).sum(axis=0),
                     float(d_raw.sum()), rows)


def backward(params, cache, upstream_grad):
    """Returns the Gradients of upstream_grad * score.

    Raises StaleCacheError if params changed since the cache was made.
    """
    return backward_batch(params, cache.batch, [upstream_grad])


@dataclass
class ScoreList:
    """score_batch result for scorers that score one pair at a time."""
    caches: list

    @property
    def scores(self):
        return np.array([c.score for c in self.caches])


class Scorer:
    """Interface the trainer and evaluator program against.

    Only score, backward, snapshot and apply are required; the batch
    methods fall back to them.
    """
    def score(self, context, response):
        raise NotImplementedError

    def score_batch(self, context, responses):
        """Returns a cache whose scores hold one score per response."""
        if isinstance(responses, ResponseBatch):
            responses = responses.sequences()
        return ScoreList([self.score(context, r) for r in responses])

    def score_many(self, context, responses):
        """Returns an array of plain scores for one context."""
        return np.asarray(self.score_batch(context, responses).scores)

    def backward(self, cache, upstream_grad):
        raise NotImplementedError

    def backward_batch(self, cache, upstream):
        grads = None
        for single, d in zip(cache.caches, upstream):
            if d:
                g = self.backward(single, float(d))
                grads = g if grads is None else grads.add(g)
        return grads if grads is not None else Gradients.zeros(0)

    def snapshot(self):
        """Returns a frozen copy usable while this scorer keeps training."""
        raise NotImplementedError

    def apply(self, grads, learning_rate):
        raise NotImplementedError


class DualEncoderScorer(Scorer):
    def __init__(self, params):
        self.params = params

    def score(self, context, response):
        return score(self.params, context, response)

    def score_batch(self, context, responses):
        return score_batch(self.params, context, responses)

    def backward(self, cache, upstream_grad):
        return backward(self.params, cache, upstream_grad)

    def backward_batch(self, cache, upstream):
        return backward_batch(self.params, cache, upstream)

    def snapshot(self):
        return DualEncoderScorer(self.params.copy())

    def apply(self, grads, learning_rate):
        """Plain SGD step: theta <- theta - learning_rate * grad."""
        params = self.params
        params.weights -= learning_rate * grads.weights
        params.bias -= learning_rate * grads.bias
        if grads.rows:
            ids = np.fromiter(grads.rows, dtype=np.int64,
                              count=len(grads.rows))
            params.embeddings[ids] -= learning_rate * np.stack(
                list(grads.rows.values()))
        params.version += 1

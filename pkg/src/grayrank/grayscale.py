"""Assembly of three-tier response sets for training contexts.

Tier 1 is the ground truth, tier 2 the retrieval and generation
responses, tier 3 responses sampled from other contexts. Nothing outside
tier 1 may equal the ground truth token for token.
"""


from dataclasses import dataclass
from dataclasses import field
import enum
import json
import numpy as np
from grayrank.corpus import CorpusFormatError
from grayrank.generator import GeneratedResponse


class Tier(enum.Enum):
    GROUND_TRUTH = 'tier1_ground_truth'
    RETRIEVAL = 'tier2_retrieval'
    GENERATION = 'tier2_generation'
    RANDOM = 'tier3_random'

    @property
    def level(self):
        """Returns 1, 2 or 3; the two tier-2 kinds share a level."""
        return int(self.value[4])

    def outranks(self, other):
        return self.level < other.level


class InsufficientResponsesError(Exception):
    """Indicates too few distinct responses to sample random negatives."""
    pass


@dataclass
class GrayscaleSet:
    """One training context and its tiered responses.

    Attributes:
    - context_id, context, ground_truth
    - retrieval_pool: list of (tokens, bm25_score), best first
    - generation: list of GeneratedResponse, best first
    - random: list of token tuples from other contexts
    - active_retrieval: indices into retrieval_pool in use this epoch
    """
    context_id: int
    context: tuple
    ground_truth: tuple
    retrieval_pool: list
    generation: list
    random: list
    active_retrieval: list = field(default_factory=list)

    def active_responses(self):
        return [self.retrieval_pool[i][0] for i in self.active_retrieval]

    def to_record(self):
        """Returns the JSON-ready export record for this set."""
        return {
            'context_id': self.context_id,
            'context': [' '.join(turn) for turn in self.context],
            'ground_truth': ' '.join(self.ground_truth),
            'retrieval': [{'text': ' '.join(tokens), 'bm25_score': score}
                          for tokens, score in self.retrieval_pool],
            'generation': [{'text': ' '.join(g.tokens),
                            'log_prob': g.log_prob}
                           for g in self.generation],
            'random': [' '.join(tokens) for tokens in self.random],
        }

    @classmethod
    def from_record(cls, record, m=5):
        pool = [(tuple(r['text'].split()), float(r['bm25_score']))
                for r in record['retrieval']]
        return cls(
            context_id=int(record['context_id']),
            context=tuple(tuple(t.split()) for t in record['context']),
            ground_truth=tuple(record['ground_truth'].split()),
            retrieval_pool=pool,
            generation=[GeneratedResponse(tuple(g['text'].split()),
                                          float(g['log_prob']))
                        for g in record['generation']],
            random=[tuple(t.split()) for t in record['random']],
            active_retrieval=list(range(min(m, len(pool)))))


class RandomResponsePool:
    """Distinct ground-truth responses available as tier-3 negatives.

    Responses are kept in first-occurrence order; own_index maps each
    context to the position of its own ground truth.
    """
    def __init__(self, ground_truths):
        self.responses = []
        self.own_index = []
        positions = {}
        for gt in ground_truths:
            gt = tuple(gt)
            if gt not in positions:
                positions[gt] = len(self.responses)
                self.responses.append(gt)
            self.own_index.append(positions[gt])


def sample_random(pool, context_id, n, seed):
    """Returns n distinct responses drawn from other contexts.

    Draws uniformly without replacement from the pool's distinct ground
    truths, leaving out the one token-identical to this context's own.
    The generator is seeded with (seed, context_id), so each context's
    draw is independent of the others. Raises
    InsufficientResponsesError if fewer than n candidates exist.
    """
    if n < 1:
        raise ValueError('n must be >= 1')
    available = len(pool.responses) - 1
    if available < n:
        raise InsufficientResponsesError(
            f'need {n} random responses, only {available} distinct '
            'responses from other contexts')
    own = pool.own_index[context_id]
    rng = np.random.default_rng([seed, context_id])
    picks = rng.choice(available, size=n, replace=False)
    picks = [int(i) for i in picks]
    return [pool.responses[i + 1 if i >= own else i] for i in picks]


def assemble(context_id, context, gt, hits, generated, random, responses,
             pool_size=100, max_generation=5, m=5, sources=None):
    """Builds a GrayscaleSet from retrieval hits and generations.

    hits must be sorted by BM25 score descending; responses maps a hit's
    response_id to its tokens. Hits and generations token-identical to
    the ground truth are dropped, as are repeats of a text already kept
    in the same list. The retrieval pool keeps pool_size hits and the
    generation list max_generation responses. Until the first refresh
    the active retrieval set is the first m pool entries.

    sources optionally maps a response_id to the dialogue it was cut
    from; hits from the context's own dialogue are then dropped.
    """
    gt = tuple(gt)
    pool = []
    seen = {gt}
    for hit in hits:
        if len(pool) >= pool_size:
            break
        if sources is not None and sources[hit.response_id] == context_id:
            continue
        tokens = tuple(responses[hit.response_id])
        if tokens in seen:
            continue
        seen.add(tokens)
        pool.append((tokens, hit.score))
    generation = []
    seen = {gt}
    for response in generated:
        if len(generation) >= max_generation:
            break
        tokens = tuple(response.tokens)
        if tokens in seen:
            continue
        seen.add(tokens)
        generation.append(GeneratedResponse(tokens, response.log_prob))
    random = [tuple(r) for r in random if tuple(r) != gt]
    return GrayscaleSet(context_id, tuple(tuple(t) for t in context), gt,
                        pool, generation, random,
                        active_retrieval=list(range(min(m, len(pool)))))


def adaptive_select(model_scores, m=5):
    """Returns the indices of the m highest scores, best first.

    Ties go to the lower index; all indices come back if there are fewer
    than m scores.
    """
    if m < 1:
        raise ValueError('m must be >= 1')
    order = sorted(range(len(model_scores)),
                   key=lambda i: (-model_scores[i], i))
    return order[:m]


def write_grayscale(sets, path):
    """Writes one JSON object per line, in context_id order."""
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        for gs in sorted(sets, key=lambda s: s.context_id):
            file.write(json.dumps(gs.to_record(), ensure_ascii=False,
                                  sort_keys=True) + '\n')


def load_grayscale(path, m=5):
    """Reads an export written by write_grayscale.

    Active retrieval starts as the first m pool entries (BM25 order).
    Raises CorpusFormatError naming the line for malformed records.
    """
    sets = []
    with open(path, encoding='utf-8') as file:
        for number, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                sets.append(GrayscaleSet.from_record(json.loads(line), m))
            except (ValueError, KeyError, TypeError) as e:
                raise CorpusFormatError(number, f'bad grayscale record: {e}')
    return sets

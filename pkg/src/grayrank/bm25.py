"""BM25 inverted index over turn pairs.

Documents are the input side of each pair; the response is the payload
handed back by retrieve. The index is immutable once built.
"""


from collections import Counter
from dataclasses import dataclass
from dataclasses import field
import heapq
import math
from grayrank.corpus import CorpusFormatError
from grayrank.workspace import ArtifactVersionError


FORMAT = 'grayrank-bm25'
VERSION = 1


@dataclass(frozen=True)
class RetrievalHit:
    pair_id: int
    response_id: int
    score: float


@dataclass
class Bm25Index:
    """Postings and document statistics for a set of turn pairs.

    Attributes:
    - postings: term -> list of (pair_id, term frequency), pair_id ascending
    - doc_len: input-side token count per pair_id
    - response_ids: response_id of each pair_id
    - avgdl: mean of doc_len
    - k1, b: BM25 parameters
    """
    postings: dict
    doc_len: list
    response_ids: list
    avgdl: float
    k1: float = 1.2
    b: float = 0.75
    _tf: list = field(default=None, repr=False, compare=False)

    @property
    def n_docs(self):
        return len(self.doc_len)

    def term_frequency(self, term, pair_id):
        if self._tf is None:
            self._tf = [dict() for _ in self.doc_len]
            for t, plist in self.postings.items():
                for pid, tf in plist:
                    self._tf[pid][t] = tf
        return self._tf[pair_id].get(term, 0)

    def save(self, path):
        """Writes the index as a line-oriented text file.

        Floats are written with repr, so load(save(x)) == x exactly.
        """
        with open(path, 'w', encoding='utf-8', newline='\n') as file:
            file.write(f'{FORMAT}\t{VERSION}\n')
            file.write(f'{self.k1!r}\t{self.b!r}\t{self.avgdl!r}\n')
            file.write(' '.join(map(str, self.doc_len)) + '\n')
            file.write(' '.join(map(str, self.response_ids)) + '\n')
            for term in sorted(self.postings):
                entries = ' '.join(f'{pid}:{tf}'
                                   for pid, tf in self.postings[term])
                file.write(f'{term}\t{entries}\n')

    @classmethod
    def load(cls, path):
        """Reads an index written by save.

        Raises ArtifactVersionError on a foreign or outdated header.
        """
        with open(path, encoding='utf-8') as file:
            lines = file.read().split('\n')
        if lines[0] != f'{FORMAT}\t{VERSION}':
            raise ArtifactVersionError(path, lines[0])
        try:
            k1, b, avgdl = (float(x) for x in lines[1].split('\t'))
            doc_len = [int(x) for x in lines[2].split()]
            response_ids = [int(x) for x in lines[3].split()]
        except ValueError as e:
            raise CorpusFormatError(2, f'bad index header: {e}')
        postings = {}
        for number, line in enumerate(lines[4:], start=5):
            if not line:
                continue
            term, _, entries = line.partition('\t')
            plist = []
            for entry in entries.split():
                pid, _, tf = entry.partition(':')
                plist.append((int(pid), int(tf)))
            postings[term] = plist
        return cls(postings, doc_len, response_ids, avgdl, k1, b)


def build_index(pairs, k1=1.2, b=0.75):
    """Indexes the input side of each pair; pair_id is the list position.

    Raises ValueError for an empty pair list or out-of-range parameters.
    """
    if not pairs:
        raise ValueError('cannot build an index from zero pairs')
    if k1 < 0 or not 0 <= b <= 1:
        raise ValueError(f'invalid BM25 parameters k1={k1} b={b}')
    postings = {}
    doc_len = []
    for pair_id, pair in enumerate(pairs):
        doc_len.append(len(pair.input))
        for term, tf in Counter(pair.input).items():
            postings.setdefault(term, []).append((pair_id, tf))
    avgdl = sum(doc_len) / len(doc_len)
    return Bm25Index(postings, doc_len, [p.response_id for p in pairs],
                     avgdl, float(k1), float(b))


def idf(index, term):
    """Returns ln((N - n_t + 0.5) / (n_t + 0.5) + 1); never negative."""
    n_t = len(index.postings.get(term, ()))
    return math.log((index.n_docs - n_t + 0.5) / (n_t + 0.5) + 1)


def _term_weight(index, term_idf, tf, pair_id):
    # avgdl is 0 only when every input is empty, and then no term matches
    norm = index.k1 * (1 - index.b
                       + index.b * index.doc_len[pair_id] / index.avgdl)
    return term_idf * tf * (index.k1 + 1) / (tf + norm)


def bm25_score(index, query, pair_id):
    """Returns the BM25 score of one indexed pair for a query.

    Each distinct query term counts once, in first-occurrence order.
    Raises IndexError for an unknown pair_id.
    """
    if not 0 <= pair_id < index.n_docs:
        raise IndexError(f'unknown pair_id: {pair_id}')
    score = 0.0
    for term in dict.fromkeys(query):
        tf = index.term_frequency(term, pair_id)
        if tf:
            score += _term_weight(index, idf(index, term), tf, pair_id)
    return score


def retrieve(index, context, k):
    """Returns up to k hits for the last utterance of a context.

    Hits are sorted by score descending, then pair_id ascending;
    documents sharing no term with the query are not returned.
    """
    if k < 1:
        raise ValueError('k must be >= 1')
    if not context:
        raise ValueError('context must have at least one turn')
    scores = {}
    for term in dict.fromkeys(context[-1]):
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index, term)
        for pair_id, tf in plist:
            scores[pair_id] = (scores.get(pair_id, 0.0)
                               + _term_weight(index, term_idf, tf, pair_id))
    top = heapq.nsmallest(k, scores.items(), key=lambda x: (-x[1], x[0]))
    return [RetrievalHit(pid, index.response_ids[pid], score)
            for pid, score in top if score > 0]

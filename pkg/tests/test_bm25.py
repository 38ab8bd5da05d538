import math
import numpy as np
from pathlib import Path
import pytest
from tempfile import TemporaryDirectory
from grayrank import bm25
from grayrank.corpus import TurnPair
from grayrank.workspace import ArtifactVersionError


def pairs(*inputs):
    return [TurnPair(tuple(text.split()), ('r', str(i)), i, 10 + i)
            for i, text in enumerate(inputs)]


def test_build_index():
    index = bm25.build_index(pairs('a b', 'a c c', 'd'))
    assert index.n_docs == 3
    assert index.doc_len == [2, 3, 1]
    assert index.avgdl == 2.0
    assert index.postings['a'] == [(0, 1), (1, 1)]
    assert index.postings['c'] == [(1, 2)]
    assert index.term_frequency('c', 1) == 2
    assert index.term_frequency('c', 0) == 0


def test_build_index_rejects_empty():
    with pytest.raises(ValueError):
        bm25.build_index([])


def test_build_index_rejects_bad_b():
    with pytest.raises(ValueError):
        bm25.build_index(pairs('a'), b=1.5)


def test_idf_is_never_negative():
    index = bm25.build_index(pairs('a', 'a', 'a'))
    assert index.n_docs == 3
    assert bm25.idf(index, 'a') == pytest.approx(math.log(0.5 / 3.5 + 1))
    assert bm25.idf(index, 'a') > 0


def test_bm25_score_matches_formula():
    index = bm25.build_index(pairs('a b', 'a c c', 'd'))
    idf_a = math.log(1.5 / 2.5 + 1)
    # doc_len 2 == avgdl, so the length norm is exactly k1
    assert bm25.bm25_score(index, ('a',), 0) == pytest.approx(
        idf_a * 2.2 / 2.2)
    assert bm25.bm25_score(index, ('a',), 1) == pytest.approx(
        idf_a * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 1.5)))
    assert bm25.bm25_score(index, ('a', 'a'), 0) == bm25.bm25_score(
        index, ('a',), 0)
    assert bm25.bm25_score(index, ('z',), 2) == 0.0


def test_bm25_score_unknown_pair():
    index = bm25.build_index(pairs('a'))
    with pytest.raises(IndexError):
        bm25.bm25_score(index, ('a',), 1)


def test_retrieve_uses_last_utterance():
    index = bm25.build_index(pairs('a b', 'a c c', 'd'))
    hits = bm25.retrieve(index, (('d',), ('a',)), 10)
    assert [h.pair_id for h in hits] == [0, 1]
    assert [h.response_id for h in hits] == [10, 11]
    assert hits[0].score == pytest.approx(bm25.bm25_score(index, ('a',), 0))


def test_retrieve_ties_by_pair_id_and_truncates():
    index = bm25.build_index(pairs('x', 'q', 'x', 'x'))
    hits = bm25.retrieve(index, (('x',),), 2)
    assert [h.pair_id for h in hits] == [0, 2]


def test_retrieve_no_overlap():
    index = bm25.build_index(pairs('a', 'b'))
    assert bm25.retrieve(index, (('z',),), 5) == []


def test_retrieve_rejects_bad_k():
    index = bm25.build_index(pairs('a'))
    with pytest.raises(ValueError):
        bm25.retrieve(index, (('a',),), 0)


def test_save_load():
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('index.bm25')
        index = bm25.build_index(pairs('a b', 'a c c', 'd'), k1=1.5, b=0.5)
        index.save(path)
        loaded = bm25.Bm25Index.load(path)
        assert loaded == index
        assert (bm25.retrieve(loaded, (('a',),), 3)
                == bm25.retrieve(index, (('a',),), 3))


def test_load_rejects_other_version():
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('index.bm25')
        path.write_text('grayrank-bm25\t99\n')
        with pytest.raises(ArtifactVersionError):
            bm25.Bm25Index.load(path)


def random_pairs(rng, n_docs, words='abcdefg'):
    texts = []
    for _ in range(n_docs):
        length = int(rng.integers(1, 7))
        texts.append(' '.join(rng.choice(list(words), size=length)))
    return pairs(*texts)


def test_retrieve_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(100):
        index = bm25.build_index(random_pairs(rng, int(rng.integers(1, 40))))
        query = tuple(str(t) for t in rng.choice(
            list('abcdefgxyz'), size=int(rng.integers(1, 5))))
        k = int(rng.integers(1, 10))
        scored = [(bm25.bm25_score(index, query, pid), pid)
                  for pid in range(index.n_docs)]
        expected = sorted([(-s, pid) for s, pid in scored if s > 0])[:k]
        hits = bm25.retrieve(index, [('ignored',), query], k)
        assert [h.pair_id for h in hits] == [pid for _, pid in expected]
        for hit, (neg, _) in zip(hits, expected):
            assert hit.score == pytest.approx(-neg, rel=1e-12)


def test_term_frequency_monotonicity():
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 500:
        docs = random_pairs(rng, int(rng.integers(2, 12)), 'abcd')
        first = list(docs[0].input)
        others = [i for i, t in enumerate(first) if t != 'a']
        if not others or 'a' not in first:
            continue
        # one more "a" in the first doc, same length and document frequency
        more = list(first)
        more[others[0]] = 'a'
        bumped = pairs(' '.join(more), *[' '.join(p.input) for p in docs[1:]])
        before = bm25.bm25_score(bm25.build_index(docs), ['a'], 0)
        after = bm25.bm25_score(bm25.build_index(bumped), ['a'], 0)
        assert after > before
        checked += 1


def test_idf_monotonicity_and_nonnegative_scores():
    rng = np.random.default_rng(6)
    for _ in range(500):
        n = int(rng.integers(1, 15))
        values = []
        for n_t in range(n + 1):
            index = bm25.build_index(pairs(*(['a z'] * n_t
                                             + ['z'] * (n - n_t))))
            values.append(bm25.idf(index, 'a'))
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] >= 0
        index = bm25.build_index(random_pairs(rng, n, 'abcd'))
        for pid in range(n):
            assert bm25.bm25_score(index, ['a', 'b', 'q'], pid) >= 0

from pathlib import Path
import json
import numpy as np
import pytest
from tempfile import TemporaryDirectory
from grayrank import evaluator
from grayrank.corpus import Corpus
from grayrank.corpus import LabeledExample
from grayrank.corpus import Vocab
from grayrank.evaluator import CandidateGroup
from grayrank.evaluator import EvaluationError
from grayrank.evaluator import NoRelevantError
from grayrank.matcher import Scorer


class TableScorer(Scorer):
    """Scores a response by looking up its first id."""
    def __init__(self, table):
        self.table = table

    def score_many(self, context, responses):
        return np.array([self.table[r[0]] for r in responses], dtype=float)


def group(scores, labels):
    return CandidateGroup(((0,),), [(i,) for i in range(len(scores))],
                          list(labels)), TableScorer(dict(enumerate(scores)))


def test_recall_at_k():
    assert evaluator.recall_at_k([0, 1, 0], 1) == 0.0
    assert evaluator.recall_at_k([0, 1, 0], 2) == 1.0
    assert evaluator.recall_at_k([1, 0, 1, 0], 2) == 0.5
    with pytest.raises(NoRelevantError):
        evaluator.recall_at_k([0, 0], 1)
    with pytest.raises(ValueError):
        evaluator.recall_at_k([1, 0], 3)


def test_average_precision_and_rr():
    assert evaluator.average_precision([0, 1, 0, 1]) == pytest.approx(
        (1 / 2 + 2 / 4) / 2)
    assert evaluator.reciprocal_rank([0, 0, 1]) == pytest.approx(1 / 3)
    assert evaluator.precision_at_1([1, 0]) == 1.0
    assert evaluator.precision_at_1([0, 1]) == 0.0


def test_rank_group_tie_modes():
    g, scorer = group([0.5, 0.9, 0.5], [1, 0, 0])
    assert evaluator.rank_group(scorer, g, 'index') == [1, 0, 2]
    assert evaluator.rank_group(scorer, g, 'pessimistic') == [1, 2, 0]


def test_evaluate_perfect_ranking():
    g, scorer = group([0.9] + [0.1] * 9, [1] + [0] * 9)
    report = evaluator.evaluate(scorer, [g], ['R10@1', 'R10@5', 'R2@1'])
    assert report.map == 1.0
    assert report.mrr == 1.0
    assert report.p_at_1 == 1.0
    assert report.recall == {'R10@1': 1.0, 'R10@5': 1.0, 'R2@1': 1.0}
    assert report.groups == 1
    assert report.excluded == 0


def test_evaluate_all_tied_pessimistic():
    g, scorer = group([0.5] * 10, [1] + [0] * 9)
    report = evaluator.evaluate(scorer, [g], ['R10@1', 'R10@5', 'R10@10'],
                                'pessimistic')
    assert report.recall['R10@1'] == 0.0
    assert report.recall['R10@5'] == 0.0
    assert report.recall['R10@10'] == 1.0
    assert report.mrr == pytest.approx(0.1)
    index = evaluator.evaluate(scorer, [g], ['R10@1'], 'index')
    assert index.recall['R10@1'] == 1.0


def test_recall_subset_uses_first_candidates():
    # the relevant candidate beats everything but candidate 3
    g, scorer = group([0.8, 0.1, 0.2, 0.9, 0.0], [1, 0, 0, 0, 0])
    report = evaluator.evaluate(scorer, [g], ['R5@1', 'R2@1'])
    assert report.recall['R5@1'] == 0.0
    assert report.recall['R2@1'] == 1.0


def test_excludes_groups_without_relevant():
    good, scorer = group([0.9, 0.1], [1, 0])
    bad = CandidateGroup(((0,),), [(0,), (1,)], [0, 0])
    report = evaluator.evaluate(scorer, [good, bad], ['R2@1'])
    assert report.groups == 1
    assert report.excluded == 1
    assert report.map == 1.0


def test_all_groups_excluded():
    bad, scorer = group([0.9, 0.1], [0, 0])
    with pytest.raises(EvaluationError):
        evaluator.evaluate(scorer, [bad], ['R2@1'])


def test_metric_larger_than_groups():
    g, scorer = group([0.9, 0.1], [1, 0])
    with pytest.raises(EvaluationError):
        evaluator.evaluate(scorer, [g], ['R10@1'])


def test_no_groups():
    with pytest.raises(EvaluationError):
        evaluator.evaluate(TableScorer({}), [], ['R2@1'])


def test_multiple_groups_average():
    g1, s1 = group([0.9, 0.1], [1, 0])
    g2 = CandidateGroup(((0,),), [(2,), (3,)], [1, 0])
    scorer = TableScorer({0: 0.9, 1: 0.1, 2: 0.2, 3: 0.7})
    report = evaluator.evaluate(scorer, [g1, g2], ['R2@1'])
    assert report.recall['R2@1'] == 0.5
    assert report.mrr == pytest.approx(0.75)


def test_groups_from_corpus():
    vocab = Vocab(['a', 'b', 'c'])
    data = Corpus((
        LabeledExample((('a',),), ('b',), 1),
        LabeledExample((('a',),), ('c', 'z'), 0),
        LabeledExample((('b',),), ('a',), 1),
    ), 'test')
    groups = evaluator.groups_from_corpus(data, vocab)
    assert len(groups) == 2
    assert groups[0].context == ((3,),)
    assert groups[0].responses == [(4,), (5, 0)]
    assert groups[0].labels == [1, 0]
    assert groups[1].n == 1


def test_write_metrics_csv_and_plaintext():
    g, scorer = group([0.9, 0.1], [1, 0])
    report = evaluator.evaluate(scorer, [g], ['R2@1'])
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('metrics.csv')
        evaluator.write_metrics_csv([('test', report)], path, key='split')
        assert path.read_text() == (
            'split,MAP,MRR,P@1,R2@1,groups,excluded\n'
            'test,1.000000,1.000000,1.000000,1.000000,1,0\n')
    text = evaluator.metrics_plaintext([('uni', report)], key='mode')
    assert text.splitlines()[0].split() == ['mode', 'MAP', 'MRR', 'P@1',
                                            'R2@1']
    assert text.splitlines()[2].split()[0] == 'uni'


def test_write_group_dump():
    g, scorer = group([0.2, 0.9], [1, 0])
    g.texts = ((('hi',),), [('yes',), ('no',)])
    results = evaluator.score_groups(scorer, [g])
    with TemporaryDirectory() as rawpath:
        path = Path(rawpath).joinpath('groups.jsonl')
        evaluator.write_group_dump([g], results, path)
        record = json.loads(path.read_text())
        assert record['context'] == ['hi']
        assert [c['rank'] for c in record['candidates']] == [2, 1]
        assert record['candidates'][0] == {
            'text': 'yes', 'label': 1, 'score': 0.2, 'rank': 2}


def brute_force(scores, labels, metrics):
    """Reference metrics computed from per-candidate ranks."""
    def ranks(s):
        return [1 + sum(1 for j in range(len(s))
                        if s[j] > s[i] or (s[j] == s[i] and j < i))
                for i in range(len(s))]

    rank = ranks(scores)
    relevant = [rank[i] for i in range(len(labels)) if labels[i]]
    ap = sum(sum(1 for q in relevant if q <= p) / p
             for p in relevant) / len(relevant)
    result = {'MAP': ap, 'MRR': 1 / min(relevant),
              'P@1': 1.0 if min(relevant) == 1 else 0.0}
    for name in metrics:
        n, k = (int(x) for x in name[1:].split('@'))
        sub_labels = labels[:n]
        if len(labels) < n or not any(sub_labels):
            result[name] = None
            continue
        sub_rank = ranks(scores[:n])
        hits = sum(1 for i in range(n) if sub_labels[i] and sub_rank[i] <= k)
        result[name] = hits / sum(sub_labels)
    return result


def test_matches_brute_force_on_random_groups():
    rng = np.random.default_rng(7)
    metrics = ['R10@1', 'R10@2', 'R10@5', 'R2@1', 'R5@3']
    groups = []
    expected = []
    for _ in range(1000):
        n = int(rng.integers(10, 21))
        labels = [0] * n
        for i in rng.choice(n, size=int(rng.integers(1, 6)), replace=False):
            labels[i] = 1
        # coarse scores so ties are common
        scores = [float(x) for x in rng.integers(0, 8, size=n) / 8]
        candidates = CandidateGroup(((0,),), [(i,) for i in range(n)], labels)
        results = evaluator.score_groups(TableScorer(dict(enumerate(scores))),
                                         [candidates])
        reference = brute_force(scores, labels, metrics)
        applicable = [m for m in metrics if reference[m] is not None]
        report = evaluator.aggregate(results, applicable)
        assert report.map == pytest.approx(reference['MAP'], abs=1e-9)
        assert report.mrr == pytest.approx(reference['MRR'], abs=1e-9)
        assert report.p_at_1 == reference['P@1']
        for name in applicable:
            assert report.recall[name] == pytest.approx(reference[name],
                                                        abs=1e-9)
        groups.append(results[0])
        expected.append(reference)
    report = evaluator.aggregate(groups, metrics)
    assert report.map == pytest.approx(
        sum(r['MAP'] for r in expected) / 1000, abs=1e-9)
    for name in metrics:
        values = [r[name] for r in expected if r[name] is not None]
        assert report.recall[name] == pytest.approx(
            sum(values) / len(values), abs=1e-9)


def test_single_relevant_identities():
    rng = np.random.default_rng(8)
    for _ in range(200):
        labels = [0] * 10
        labels[int(rng.integers(10))] = 1
        g, scorer = group(list(rng.uniform(size=10)), labels)
        report = evaluator.evaluate(scorer, [g],
                                    [f'R10@{k}' for k in range(1, 11)])
        assert report.map == report.mrr
        assert report.recall['R10@1'] == report.p_at_1
        recalls = [report.recall[f'R10@{k}'] for k in range(1, 11)]
        assert recalls == sorted(recalls)
        assert recalls[-1] == 1.0


def test_permutation_invariance_with_distinct_scores():
    rng = np.random.default_rng(9)
    for _ in range(100):
        scores = list(rng.permutation(10) / 10)
        labels = [1, 1] + [0] * 8
        g, scorer = group(scores, labels)
        before = evaluator.evaluate(scorer, [g], ['R10@1', 'R10@3'])
        perm = rng.permutation(10)
        g2, scorer2 = group([scores[i] for i in perm],
                            [labels[i] for i in perm])
        after = evaluator.evaluate(scorer2, [g2], ['R10@1', 'R10@3'])
        assert before == after


def test_groups_from_corpus_fixed_size():
    vocab = Vocab(['a', 'b', 'c'])
    data = Corpus(tuple(LabeledExample((('a',),), (r,), label)
                        for r, label in (('b', 1), ('c', 0),
                                         ('c', 1), ('b', 0))), 'test')
    groups = evaluator.groups_from_corpus(data, vocab, group_size=2)
    assert [g.labels for g in groups] == [[1, 0], [1, 0]]
    assert [g.responses for g in groups] == [[(4,), (5,)], [(5,), (4,)]]

"""Ranking candidate groups and computing response selection metrics.

A candidate group is a context with its n candidate responses in file
order. Metrics follow the usual definitions for binary relevance:
- Rn@k: share of the relevant candidates ranked within the top k when
  only the first n candidates of the group are ranked
- MAP: mean over groups of average precision
- MRR: mean over groups of 1 / rank of the first relevant candidate
- P@1: share of groups whose top candidate is relevant

Groups without a relevant candidate are excluded from every mean and
counted separately.
"""


import csv
from dataclasses import dataclass
from dataclasses import field
import json
import logging
from grayrank import _grid
from grayrank.corpus import RELEVANT
from grayrank.corpus import group_candidates
from grayrank.report import text_table


TIE_MODES = ('index', 'pessimistic')

logger = logging.getLogger(__name__)


class NoRelevantError(Exception):
    """Indicates a ranking with no relevant candidate."""
    pass


class EvaluationError(Exception):
    """Indicates the groups cannot produce the requested metrics."""
    pass


@dataclass
class CandidateGroup:
    """A context and its candidates, as vocab ids.

    texts optionally keeps the (context, responses) tokens for dumps.
    """
    context: tuple
    responses: list
    labels: list
    texts: tuple = None

    @property
    def n(self):
        return len(self.responses)


@dataclass
class GroupResult:
    scores: list
    order: list
    labels: list

    def ranked_labels(self):
        return [self.labels[i] for i in self.order]


@dataclass
class MetricsReport:
    map: float
    mrr: float
    p_at_1: float
    recall: dict = field(default_factory=dict)
    groups: int = 0
    excluded: int = 0

    def as_row(self):
        """Returns the metrics as an ordered dict of name -> value."""
        row = {'MAP': self.map, 'MRR': self.mrr, 'P@1': self.p_at_1}
        row.update(self.recall)
        return row

    def get(self, name):
        return self.as_row()[name]


def groups_from_corpus(corpus, vocab, group_size=0):
    """Returns CandidateGroups for consecutive lines sharing a context.

    group_size is passed to group_candidates.
    """
    groups = []
    for context, candidates in group_candidates(corpus, group_size):
        responses = [r for r, _ in candidates]
        groups.append(CandidateGroup(
            tuple(vocab.encode(turn) for turn in context),
            [vocab.encode(r) for r in responses],
            [label for _, label in candidates],
            (context, responses)))
    return groups


def _order(scores, labels, tie_mode):
    if tie_mode == 'index':
        return sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    if tie_mode == 'pessimistic':
        return sorted(range(len(scores)),
                      key=lambda i: (-scores[i], labels[i] == RELEVANT, i))
    raise ValueError(f'unknown tie mode: {tie_mode}')


def rank_group(scorer, group, tie_mode='index'):
    """Returns candidate indices sorted by score descending.

    Ties keep the original candidate order; in pessimistic mode relevant
    candidates go last among equal scores.
    """
    scores = list(scorer.score_many(group.context, group.responses))
    return _order(scores, group.labels, tie_mode)


def _check(ranked_labels):
    total = sum(1 for x in ranked_labels if x == RELEVANT)
    if not total:
        raise NoRelevantError('no relevant candidate')
    return total


def recall_at_k(ranked_labels, k):
    """Returns the share of relevant candidates within the top k."""
    total = _check(ranked_labels)
    if not 1 <= k <= len(ranked_labels):
        raise ValueError(f'k must be in 1..{len(ranked_labels)}: {k}')
    return sum(1 for x in ranked_labels[:k] if x == RELEVANT) / total


def average_precision(ranked_labels):
    total = _check(ranked_labels)
    hits = 0
    precision_sum = 0.0
    for position, label in enumerate(ranked_labels, start=1):
        if label == RELEVANT:
            hits += 1
            precision_sum += hits / position
    return precision_sum / total


def reciprocal_rank(ranked_labels):
    _check(ranked_labels)
    return 1.0 / (ranked_labels.index(RELEVANT) + 1)


def precision_at_1(ranked_labels):
    _check(ranked_labels)
    return 1.0 if ranked_labels[0] == RELEVANT else 0.0


def score_groups(scorer, groups, tie_mode='index'):
    """Scores and ranks every group; returns a GroupResult per group."""
    results = []
    for group in groups:
        scores = [float(s) for s in
                  scorer.score_many(group.context, group.responses)]
        results.append(GroupResult(
            scores, _order(scores, group.labels, tie_mode), group.labels))
    return results


def aggregate(results, metrics=('R10@1',), tie_mode='index'):
    """Builds a MetricsReport from GroupResults.

    Raises EvaluationError when every group is excluded or a recall
    metric has no group with enough candidates.
    """
    parsed = [(name, _grid.parse_metric(name)) for name in metrics]
    included = []
    for result in results:
        if RELEVANT in result.labels:
            included.append(result)
    if not included:
        raise EvaluationError(
            f'all {len(results)} groups lack a relevant candidate')
    ranked = [r.ranked_labels() for r in included]
    n = len(included)
    report = MetricsReport(
        map=sum(average_precision(x) for x in ranked) / n,
        mrr=sum(reciprocal_rank(x) for x in ranked) / n,
        p_at_1=sum(precision_at_1(x) for x in ranked) / n,
        groups=n,
        excluded=len(results) - n)
    for name, (size, k) in parsed:
        values = []
        for result in included:
            if len(result.labels) < size:
                continue
            labels = result.labels[:size]
            if RELEVANT not in labels:
                continue
            order = _order(result.scores[:size], labels, tie_mode)
            values.append(recall_at_k([labels[i] for i in order], k))
        if not values:
            raise EvaluationError(
                f'no group has {size} candidates with a relevant one '
                f'for {name}')
        report.recall[name] = sum(values) / len(values)
    if report.excluded:
        logger.info('excluded %d groups without a relevant candidate',
                    report.excluded)
    return report


def evaluate(scorer, groups, metrics=('R10@1',), tie_mode='index'):
    """Ranks every group with scorer and aggregates the metrics."""
    if not groups:
        raise EvaluationError('no candidate groups to evaluate')
    if tie_mode not in TIE_MODES:
        raise ValueError(f'unknown tie mode: {tie_mode}')
    return aggregate(score_groups(scorer, groups, tie_mode), metrics,
                     tie_mode)


def _fmt(value):
    return f'{value:.6f}'


def write_metrics_csv(rows, path, key=None):
    """Writes MetricsReports as CSV.

    rows is a list of (label, MetricsReport); key names the label column.
    Without a key a single report row is expected.
    """
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        first = rows[0][1]
        header = ([key] if key else []) + list(first.as_row())
        writer.writerow(header + ['groups', 'excluded'])
        for label, report in rows:
            values = [_fmt(v) for v in report.as_row().values()]
            writer.writerow(([label] if key else []) + values
                            + [report.groups, report.excluded])


def metrics_plaintext(rows, key='run'):
    """Returns a plain-text table with one row per (label, report)."""
    header = [key] + list(rows[0][1].as_row())
    table = [[str(label)] + [_fmt(v) for v in report.as_row().values()]
             for label, report in rows]
    return text_table(header, table)


def write_group_dump(groups, results, path):
    """Writes one JSON record per group for error analysis."""
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        for number, (group, result) in enumerate(zip(groups, results)):
            context, responses = group.texts or ((), [()] * group.n)
            ranks = [0] * group.n
            for rank, index in enumerate(result.order, start=1):
                ranks[index] = rank
            record = {
                'group': number,
                'context': [' '.join(t) for t in context],
                'candidates': [
                    {'text': ' '.join(responses[i]),
                     'label': result.labels[i],
                     'score': result.scores[i],
                     'rank': ranks[i]}
                    for i in range(group.n)],
            }
            file.write(json.dumps(record, ensure_ascii=False) + '\n')

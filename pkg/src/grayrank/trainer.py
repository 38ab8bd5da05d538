"""Training a scorer on grayscale sets.

Epochs 1..pretrain_epochs optimize loss_ran only; later epochs use the
configured mode's objective. At the start of every later epoch, modes
that use retrieval responses reselect each context's active retrieval
set as the top adaptive_m of its pool under a snapshot of the model.
Updates are plain SGD over mini-batches, and the returned model is the
one from the epoch with the best validation score (earliest on ties).
"""


import csv
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from datetime import datetime
from datetime import timezone
import json
import logging
import numpy as np
from grayrank import evaluator
from grayrank import objectives
from grayrank.grayscale import adaptive_select
from grayrank.matcher import Gradients
from grayrank.matcher import ResponseBatch


COMPONENTS = {
    'bce': ('bce',),
    'ran_only': ('ran',),
    'ran+ret': ('ran', 'ret'),
    'ran+gen': ('ran', 'gen'),
    'uni': ('ran', 'ret', 'gen'),
    'flat_negatives': ('flat',),
}

LOG_COLUMNS = ('ran', 'ret', 'gen', 'bce')

logger = logging.getLogger(__name__)


def uses_retrieval(mode):
    return any(c in ('ret', 'flat') for c in COMPONENTS[mode])


def uses_generation(mode):
    return any(c in ('gen', 'flat') for c in COMPONENTS[mode])


def now_stamp():
    return datetime.now(timezone.utc).strftime('%Y-%m-%dT%H%M%SZ')


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    losses: dict
    valid: float
    timestamp: str
    selected: bool = False


@dataclass
class TrainLog:
    """Per-epoch losses and validation scores of one training run.

    losses maps a component name to its mean over the contexts where
    that component was computed; flat_negatives is reported as "ran".
    """
    mode: str
    select_metric: str
    epochs: list = field(default_factory=list)

    @property
    def selected_epoch(self):
        return next((r.epoch for r in self.epochs if r.selected), None)

    def write_jsonl(self, path):
        with open(path, 'w', encoding='utf-8', newline='\n') as file:
            for record in self.epochs:
                file.write(json.dumps({
                    'epoch': record.epoch,
                    'phase': record.phase,
                    'mode': self.mode,
                    'losses': record.losses,
                    f'valid_{self.select_metric}': record.valid,
                    'timestamp': record.timestamp,
                    'selected': record.selected,
                }, sort_keys=True) + '\n')

    def write_csv(self, path):
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(['epoch'] + [f'loss_{c}' for c in LOG_COLUMNS]
                            + [f'valid_{self.select_metric}', 'selected'])
            for record in self.epochs:
                losses = [record.losses.get(c) for c in LOG_COLUMNS]
                writer.writerow(
                    [record.epoch]
                    + ['' if v is None else f'{v:.6f}' for v in losses]
                    + [f'{record.valid:.6f}', 'Y' if record.selected else ''])


class TrainHooks:
    """Observation points for instrumented runs; all no-ops by default."""
    def on_refresh(self, epoch, context, scores, snapshot):
        pass

    def on_context(self, epoch, context, components):
        pass

    def on_epoch(self, epoch, record):
        pass


@dataclass
class TrainingContext:
    """A grayscale set encoded as vocab ids, with its active retrieval.

    Every response of the set is also kept padded in one ResponseBatch,
    ground truth first, then random, retrieval pool and generation.
    """
    context_id: int
    context: tuple
    ground_truth: tuple
    pool: list
    generation: list
    random: list
    active: list
    bank: ResponseBatch = field(default=None, repr=False, compare=False)

    def response_bank(self):
        if self.bank is None:
            self.bank = ResponseBatch.of([self.ground_truth] + self.random
                                         + self.pool + self.generation)
        return self.bank

    def random_row(self, epoch):
        return 1 + (epoch - 1) % len(self.random)

    def pool_rows(self, indices):
        offset = 1 + len(self.random)
        return [offset + i for i in indices]

    def generation_rows(self):
        offset = 1 + len(self.random) + len(self.pool)
        return list(range(offset, offset + len(self.generation)))


def prepare_contexts(sets, vocab, m=5):
    """Encodes GrayscaleSets; active retrieval starts at the pool head."""
    contexts = []
    for gs in sets:
        ctx = TrainingContext(
            gs.context_id,
            tuple(vocab.encode(t) for t in gs.context),
            vocab.encode(gs.ground_truth),
            [vocab.encode(tokens) for tokens, _ in gs.retrieval_pool],
            [vocab.encode(g.tokens) for g in gs.generation],
            [vocab.encode(r) for r in gs.random],
            list(range(min(m, len(gs.retrieval_pool)))))
        ctx.response_bank()
        contexts.append(ctx)
    return contexts


def refresh_active(scorer, contexts, m, epoch=0, hooks=None):
    """Reselects every context's active retrieval with a frozen snapshot.

    Returns the snapshot used.
    """
    snapshot = scorer.snapshot()
    for ctx in contexts:
        if not ctx.pool:
            ctx.active = []
            continue
        pool = ctx.response_bank().take(ctx.pool_rows(range(len(ctx.pool))))
        scores = snapshot.score_many(ctx.context, pool)
        ctx.active = adaptive_select(list(scores), m)
        if hooks:
            hooks.on_refresh(epoch, ctx, scores, snapshot)
    return snapshot


def _losses(components, margin, s_r, s_e, s_g, s_rand):
    out = {}
    for name in components:
        if name == 'bce':
            out[name] = objectives.loss_bce(s_r, [s_rand])
        elif name == 'ran':
            out[name] = objectives.loss_ran(margin, s_r, s_rand)
        elif name == 'ret' and len(s_e):
            out[name] = objectives.loss_ret(margin, s_r, s_e, s_rand)
        elif name == 'gen' and len(s_g):
            out[name] = objectives.loss_gen(margin, s_r, s_g, s_rand)
        elif name == 'flat':
            out[name] = objectives.loss_ran(
                margin, s_r, [s_rand] + list(s_e) + list(s_g))
    return out


def context_step(scorer, ctx, components, margin, epoch):
    """Returns (component losses, Gradients) for one context.

    The random negative is taken round-robin from the context's random
    pool by epoch. Loss terms whose tier is empty are skipped. All
    responses are scored in one batch and differentiated in one pass.
    """
    need_e = any(c in ('ret', 'flat') for c in components)
    need_g = any(c in ('gen', 'flat') for c in components)
    e_rows = ctx.pool_rows(ctx.active) if need_e else []
    g_rows = ctx.generation_rows() if need_g else []
    rows = [0, ctx.random_row(epoch)] + e_rows + g_rows
    batch = scorer.score_batch(ctx.context, ctx.response_bank().take(rows))
    scores = [float(s) for s in batch.scores]
    n_e = len(e_rows)
    losses = _losses(components, margin, scores[0], scores[2:2 + n_e],
                     scores[2 + n_e:], scores[1])
    total = None
    for loss in losses.values():
        total = loss if total is None else total + loss
    if total is None:
        return losses, Gradients.zeros(0)
    upstream = np.zeros(len(rows))
    upstream[0] = total.d_r
    if 'flat' in losses:
        upstream[1:] = total.d_rand
    else:
        upstream[1] = float(np.sum(total.d_rand))
        if len(total.d_e):
            upstream[2:2 + n_e] = total.d_e
        if len(total.d_g):
            upstream[2 + n_e:] = total.d_g
    if not upstream.any():
        return losses, Gradients.zeros(0)
    return losses, scorer.backward_batch(batch, upstream)


def train(config, sets, vocab, scorer, valid_groups, metrics=None,
          tie_mode='index', hooks=None):
    """Trains scorer in place and returns (selected snapshot, TrainLog).

    valid_groups are CandidateGroups; config.select_metric chooses the
    epoch whose snapshot is returned.
    """
    if not sets:
        raise ValueError('no training contexts')
    if not valid_groups:
        raise ValueError('no validation groups')
    hooks = hooks or TrainHooks()
    metrics = list(dict.fromkeys([config.select_metric] + list(metrics or [])))
    contexts = [c for c in prepare_contexts(sets, vocab, config.adaptive_m)
                if c.random]
    if len(contexts) < len(sets):
        logger.warning('skipping %d contexts without random responses',
                       len(sets) - len(contexts))
    log = TrainLog(config.mode, config.select_metric)
    best = None
    best_value = None
    for epoch in range(1, config.epochs + 1):
        pretrain = epoch <= config.pretrain_epochs
        components = ('ran',) if pretrain else COMPONENTS[config.mode]
        if not pretrain and uses_retrieval(config.mode):
            refresh_active(scorer, contexts, config.adaptive_m, epoch, hooks)
        order = np.random.default_rng([config.seed, epoch]).permutation(
            len(contexts))
        sums = {}
        counts = {}
        for start in range(0, len(order), config.batch_size):
            batch = Gradients.zeros(0)
            for index in order[start:start + config.batch_size]:
                ctx = contexts[int(index)]
                losses, grads = context_step(scorer, ctx, components,
                                             config.margin, epoch)
                hooks.on_context(epoch, ctx, losses)
                for name, loss in losses.items():
                    name = 'ran' if name == 'flat' else name
                    sums[name] = sums.get(name, 0.0) + loss.value
                    counts[name] = counts.get(name, 0) + 1
                if grads.weights.size:
                    batch = grads if not batch.weights.size else batch.add(
                        grads)
            if batch.weights.size:
                scorer.apply(batch, config.learning_rate)
        report = evaluator.evaluate(scorer, valid_groups, metrics, tie_mode)
        value = report.get(config.select_metric)
        record = EpochRecord(
            epoch, 'pretrain' if pretrain else 'main',
            {name: sums[name] / counts[name] for name in sorted(sums)},
            value, now_stamp())
        log.epochs.append(record)
        if best_value is None or value > best_value:
            best_value = value
            best = (epoch, scorer.snapshot())
        logger.info('epoch %d/%d (%s) losses %s valid %s %.4f', epoch,
                    config.epochs, record.phase,
                    ' '.join(f'{k}={v:.4f}' for k, v in record.losses.items()),
                    config.select_metric, value)
        hooks.on_epoch(epoch, record)
    log.epochs[best[0] - 1].selected = True
    return best[1], log


def run_ablation_grid(base_config, modes, sets, vocab, make_scorer,
                      valid_groups, test_groups, metrics, tie_mode='index'):
    """Trains one model per mode and evaluates each on test_groups.

    make_scorer() must return a fresh, identically initialized scorer.
    Returns a list of (mode, MetricsReport) in the order given.
    """
    if not modes:
        raise ValueError('no modes to compare')
    rows = []
    for mode in modes:
        config = replace(base_config, mode=mode)
        logger.info('ablation: training mode %s', mode)
        selected, _ = train(config, sets, vocab, make_scorer(), valid_groups,
                            metrics, tie_mode)
        rows.append((mode, evaluator.evaluate(selected, test_groups, metrics,
                                              tie_mode)))
    return rows


def run_margin_sweep(base_config, margins, sets, vocab, make_scorer,
                     valid_groups, test_groups, metrics, tie_mode='index'):
    """Like run_ablation_grid, varying the margin instead of the mode.

    Returns a list of (margin, MetricsReport).
    """
    if not margins:
        raise ValueError('no margins to sweep')
    rows = []
    for margin in margins:
        config = replace(base_config, margin=margin)
        logger.info('margin sweep: training with margin %s', margin)
        selected, _ = train(config, sets, vocab, make_scorer(), valid_groups,
                            metrics, tie_mode)
        rows.append((margin, evaluator.evaluate(selected, test_groups,
                                                metrics, tie_mode)))
    return rows

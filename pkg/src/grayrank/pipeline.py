"""The pipeline stages behind each CLI command.

Every stage reads its inputs from the workspace, writes its outputs, and
records a manifest. A stage whose inputs are missing raises
MissingArtifactError naming the stage that produces them.
"""


import logging
from tqdm import tqdm
from grayrank import _grid
from grayrank import bm25
from grayrank import corpus
from grayrank import evaluator
from grayrank import generator
from grayrank import grayscale
from grayrank import synthetic
from grayrank import trainer
from grayrank.config import TrainConfig
from grayrank.matcher import DualEncoderScorer
from grayrank.matcher import ScorerParams
from grayrank.workspace import ArtifactVersionError


logger = logging.getLogger(__name__)


def _progress(iterable, desc, total=None):
    return tqdm(iterable, desc=desc, total=total, leave=False,
                disable=None)


def _read_split(ws, cfg, split):
    return corpus.read_corpus(ws.require(cfg, f'data_{split}'), split)


def _vocab(ws, cfg):
    return corpus.Vocab.load(ws.require(cfg, 'vocab'))


def _groups(ws, cfg, split, vocab):
    return evaluator.groups_from_corpus(_read_split(ws, cfg, split), vocab,
                                        cfg['evaluate']['group_size'])


def ingest(ws, cfg, make_synthetic=False):
    """Normalizes the raw train/valid/test files and builds the vocab.

    With make_synthetic, the bundled synthetic corpus is first written to
    the configured raw paths.
    """
    if make_synthetic:
        settings = synthetic.SyntheticSettings.from_config(cfg)
        for split, data in synthetic.generate(settings, cfg['seed']).items():
            path = ws.artifact_path(cfg, split)
            path.parent.mkdir(exist_ok=True, parents=True)
            corpus.write_corpus(data, path)
            logger.info('wrote synthetic %s split: %d lines', split,
                        len(data.examples))
    inputs = {}
    outputs = {}
    corpora = {}
    for split in corpus.SPLITS:
        raw = ws.require(cfg, split)
        data = corpus.read_corpus(raw, split)
        if not data.relevant():
            raise corpus.CorpusFormatError(
                None, f'{split} split has no relevant examples')
        out = ws.data_path(cfg, split)
        out.parent.mkdir(exist_ok=True, parents=True)
        corpus.write_corpus(data, out)
        inputs[split] = raw
        outputs[f'data_{split}'] = out
        corpora[split] = data
        logger.info('ingested %s: %d examples, %d relevant', split,
                    len(data.examples), len(data.relevant()))
    vocab = corpus.build_vocab(corpora['train'], cfg['corpus']['min_count'])
    outputs['vocab'] = ws.artifact_path(cfg, 'vocab')
    outputs['vocab'].parent.mkdir(exist_ok=True, parents=True)
    vocab.save(outputs['vocab'])
    logger.info('vocabulary: %d entries', len(vocab))
    ws.write_manifest('ingest', cfg, inputs, outputs)
    return outputs


def build_index(ws, cfg):
    train = _read_split(ws, cfg, 'train')
    pairs = corpus.split_to_pairs(train)
    index = bm25.build_index(pairs, cfg['bm25']['k1'], cfg['bm25']['b'])
    path = ws.artifact_path(cfg, 'index')
    path.parent.mkdir(exist_ok=True, parents=True)
    index.save(path)
    logger.info('indexed %d turn pairs', index.n_docs)
    ws.write_manifest('build-index', cfg,
                      {'data_train': ws.data_path(cfg, 'train')},
                      {'index': path})
    return {'index': path}


def train_lm(ws, cfg):
    vocab = _vocab(ws, cfg)
    pairs = corpus.split_to_pairs(_read_split(ws, cfg, 'train'))
    gen = cfg['generator']
    model = generator.train_lm(pairs, vocab, gen['order'], gen['delta'],
                               gen['bias'])
    path = ws.artifact_path(cfg, 'lm')
    path.parent.mkdir(exist_ok=True, parents=True)
    model.save(path)
    ws.write_manifest('train-lm', cfg,
                      {'data_train': ws.data_path(cfg, 'train'),
                       'vocab': ws.artifact_path(cfg, 'vocab')},
                      {'lm': path})
    return {'lm': path}


def generate(ws, cfg):
    """Decodes generation responses for every training context.

    Does nothing when generator.external names an external file.
    """
    gen = cfg['generator']
    if gen['external']:
        logger.info('using external generations from %s; skipping',
                    gen['external'])
        return {}
    vocab = _vocab(ws, cfg)
    model = generator.NGramModel.load(ws.require(cfg, 'lm'))
    train = _read_split(ws, cfg, 'train')
    relevant = train.relevant()
    results = {}
    for context_id, example in _progress(enumerate(relevant), 'generate',
                                         len(relevant)):
        context_ids = tuple(vocab.encode(turn) for turn in example.context)
        results[context_id] = generator.beam_generate(
            model, context_ids, gen['beam_width'], gen['max_len'],
            gen['top_k'])
    path = ws.artifact_path(cfg, 'generated')
    path.parent.mkdir(exist_ok=True, parents=True)
    generator.write_generated(results, vocab, path)
    logger.info('generated responses for %d contexts', len(results))
    ws.write_manifest('generate', cfg,
                      {'lm': ws.artifact_path(cfg, 'lm'),
                       'data_train': ws.data_path(cfg, 'train')},
                      {'generated': path})
    return {'generated': path}


def _generated_path(ws, cfg):
    external = cfg['generator']['external']
    if external:
        path = ws.path.joinpath(external)
        if not path.is_file():
            raise FileNotFoundError(f'external generations not found: {path}')
        return path
    return ws.require(cfg, 'generated')


def build_grayscale(ws, cfg):
    """Assembles and exports a GrayscaleSet for every training context."""
    train = _read_split(ws, cfg, 'train')
    index = bm25.Bm25Index.load(ws.require(cfg, 'index'))
    generated_path = _generated_path(ws, cfg)
    generated = generator.load_generated(generated_path)
    pairs = corpus.split_to_pairs(train)
    if len(pairs) != index.n_docs:
        raise ArtifactVersionError(ws.artifact_path(cfg, 'index'),
                                   'index does not match the train split')
    responses = {p.response_id: p.response for p in pairs}
    sources = {p.response_id: p.source_dialogue for p in pairs}
    relevant = train.relevant()
    pool = grayscale.RandomResponsePool([ex.response for ex in relevant])
    pool_size = cfg['bm25']['pool_size']
    sets = []
    for context_id, example in _progress(enumerate(relevant),
                                         'build-grayscale', len(relevant)):
        hits = bm25.retrieve(index, example.context, 2 * pool_size)
        random = grayscale.sample_random(pool, context_id,
                                         cfg['grayscale']['n_random'],
                                         cfg['seed'])
        gs = grayscale.assemble(
            context_id, example.context, example.response, hits,
            generated.get(context_id, []), random, responses,
            pool_size=pool_size, max_generation=cfg['generator']['top_k'],
            m=cfg['train']['adaptive_m'], sources=sources)
        if not gs.retrieval_pool:
            logger.debug('context %d has no retrieval responses', context_id)
        if not gs.generation:
            logger.debug('context %d has no generation responses', context_id)
        sets.append(gs)
    path = ws.artifact_path(cfg, 'grayscale')
    path.parent.mkdir(exist_ok=True, parents=True)
    grayscale.write_grayscale(sets, path)
    logger.info('assembled %d grayscale sets', len(sets))
    ws.write_manifest('build-grayscale', cfg,
                      {'data_train': ws.data_path(cfg, 'train'),
                       'index': ws.artifact_path(cfg, 'index'),
                       'generated': generated_path},
                      {'grayscale': path})
    return {'grayscale': path}


def _make_scorer_factory(cfg, vocab):
    matcher = cfg['matcher']

    def make_scorer():
        return DualEncoderScorer(ScorerParams.initialize(
            len(vocab), matcher['dim'], matcher['decay'],
            matcher['init_scale'], cfg['seed']))
    return make_scorer


def _training_inputs(ws, cfg):
    config = TrainConfig.from_config(cfg)
    vocab = _vocab(ws, cfg)
    sets = grayscale.load_grayscale(ws.require(cfg, 'grayscale'),
                                    config.adaptive_m)
    valid = _groups(ws, cfg, 'valid', vocab)
    return config, vocab, sets, valid


def _metrics(cfg):
    return cfg['evaluate']['metrics']


def train(ws, cfg):
    """Trains the matcher and saves the checkpoint of the selected epoch."""
    config, vocab, sets, valid = _training_inputs(ws, cfg)
    scorer = _make_scorer_factory(cfg, vocab)()
    selected, log = trainer.train(config, sets, vocab, scorer, valid,
                                  _metrics(cfg), cfg['evaluate']['tie_mode'])
    path = ws.artifact_path(cfg, 'checkpoint')
    path.parent.mkdir(exist_ok=True, parents=True)
    selected.params.save(path)
    reports = ws.reports_path(cfg)
    log_path = reports.joinpath('train_log.jsonl')
    summary_path = reports.joinpath('train_summary.csv')
    log.write_jsonl(log_path)
    log.write_csv(summary_path)
    logger.info('selected epoch %d', log.selected_epoch)
    ws.write_manifest('train', cfg,
                      {'grayscale': ws.artifact_path(cfg, 'grayscale'),
                       'vocab': ws.artifact_path(cfg, 'vocab'),
                       'data_valid': ws.data_path(cfg, 'valid')},
                      {'checkpoint': path, 'train_summary': summary_path})
    return log


def evaluate(ws, cfg):
    """Scores the test split with the checkpoint; returns the report."""
    vocab = _vocab(ws, cfg)
    checkpoint = ws.require(cfg, 'checkpoint')
    params = ScorerParams.load(checkpoint)
    if params.embeddings.shape[0] != len(vocab):
        raise ArtifactVersionError(checkpoint,
                                   'checkpoint does not match the vocab')
    groups = _groups(ws, cfg, 'test', vocab)
    tie_mode = cfg['evaluate']['tie_mode']
    results = evaluator.score_groups(DualEncoderScorer(params), groups,
                                     tie_mode)
    report = evaluator.aggregate(results, _metrics(cfg), tie_mode)
    reports = ws.reports_path(cfg)
    csv_path = reports.joinpath('metrics.csv')
    evaluator.write_metrics_csv([('test', report)], csv_path, key='split')
    reports.joinpath('metrics.txt').write_text(
        evaluator.metrics_plaintext([('test', report)], key='split'))
    outputs = {'metrics': csv_path}
    if cfg['evaluate']['dump_groups']:
        dump = reports.joinpath('groups.jsonl')
        evaluator.write_group_dump(groups, results, dump)
        outputs['groups'] = dump
    ws.write_manifest('evaluate', cfg,
                      {'checkpoint': checkpoint,
                       'vocab': ws.artifact_path(cfg, 'vocab'),
                       'data_test': ws.data_path(cfg, 'test')},
                      outputs)
    return report


def _comparison(ws, cfg, stage, key, rows, name):
    reports = ws.reports_path(cfg)
    csv_path = reports.joinpath(f'{name}.csv')
    txt_path = reports.joinpath(f'{name}.txt')
    evaluator.write_metrics_csv(rows, csv_path, key=key)
    text = evaluator.metrics_plaintext(rows, key=key)
    txt_path.write_text(text)
    ws.write_manifest(stage, cfg,
                      {'grayscale': ws.artifact_path(cfg, 'grayscale'),
                       'vocab': ws.artifact_path(cfg, 'vocab'),
                       'data_valid': ws.data_path(cfg, 'valid'),
                       'data_test': ws.data_path(cfg, 'test')},
                      {name: csv_path, f'{name}_text': txt_path})
    return text


def sweep_margin(ws, cfg):
    """Trains once per margin of sweep.margins; returns the table text."""
    config, vocab, sets, valid = _training_inputs(ws, cfg)
    test = _groups(ws, cfg, 'test', vocab)
    margins = _grid.parse_grid(cfg['sweep']['margins'])
    rows = trainer.run_margin_sweep(
        config, margins, sets, vocab, _make_scorer_factory(cfg, vocab),
        valid, test, _metrics(cfg), cfg['evaluate']['tie_mode'])
    return _comparison(ws, cfg, 'sweep-margin', 'margin',
                       [(f'{m:g}', r) for m, r in rows], 'margin_sweep')


def ablate(ws, cfg):
    """Trains once per mode of ablate.modes; returns the table text."""
    config, vocab, sets, valid = _training_inputs(ws, cfg)
    test = _groups(ws, cfg, 'test', vocab)
    rows = trainer.run_ablation_grid(
        config, cfg['ablate']['modes'], sets, vocab,
        _make_scorer_factory(cfg, vocab), valid, test, _metrics(cfg),
        cfg['evaluate']['tie_mode'])
    return _comparison(ws, cfg, 'ablate', 'mode', rows, 'ablation')

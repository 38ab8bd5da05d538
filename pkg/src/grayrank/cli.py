"""Command-line interface for the grayrank tool."""


import argparse
import logging
import sys
import traceback
from grayrank import config
from grayrank import evaluator
from grayrank import pipeline
from grayrank.corpus import CorpusFormatError
from grayrank.grayscale import InsufficientResponsesError
from grayrank.report import WorkspaceReport
from grayrank.workspace import ArtifactVersionError
from grayrank.workspace import MissingArtifactError
from grayrank.workspace import Workspace


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_VERSION = 5

_LOG_FORMAT = '[%(asctime)s][%(levelname)s] %(message)s'


def _open(args):
    overrides = [config.parse_override(s) for s in args.set]
    if args.seed is not None:
        overrides.append({'seed': args.seed})
    ws = Workspace(args.workspace)
    return ws, ws.read_config(overrides)


def _init(args):
    for path in args.path:
        Workspace(path).initialize(git=args.git)
    return EXIT_OK


def _ingest(args):
    ws, cfg = _open(args)
    pipeline.ingest(ws, cfg, make_synthetic=args.make_synthetic)
    return EXIT_OK


def _stage(func):
    def run(args):
        ws, cfg = _open(args)
        func(ws, cfg)
        return EXIT_OK
    return run


def _evaluate(args):
    ws, cfg = _open(args)
    report = pipeline.evaluate(ws, cfg)
    print(evaluator.metrics_plaintext([('test', report)], key='split'))
    return EXIT_OK


def _sweep_margin(args):
    ws, cfg = _open(args)
    print(pipeline.sweep_margin(ws, cfg))
    return EXIT_OK


def _ablate(args):
    ws, cfg = _open(args)
    print(pipeline.ablate(ws, cfg))
    return EXIT_OK


def _report(args):
    ws, cfg = _open(args)
    print(WorkspaceReport(ws, cfg).plaintext())
    return EXIT_OK


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(format=_LOG_FORMAT, datefmt='%H:%M:%S')
    logging.getLogger('grayrank').setLevel(level)


def _run(args):
    try:
        return args.func(args)
    except config.ConfigError as e:
        print(f'config error: {e}', file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, FileNotFoundError) as e:
        print(f'missing input: {e}', file=sys.stderr)
        return EXIT_MISSING
    except ArtifactVersionError as e:
        print(f'artifact version mismatch: {e}', file=sys.stderr)
        return EXIT_VERSION
    except (CorpusFormatError, InsufficientResponsesError,
            evaluator.EvaluationError) as e:
        print(f'data error: {e}', file=sys.stderr)
        return EXIT_DATA
    except Exception:
        print(f'failed to run {args.command}', file=sys.stderr)
        traceback.print_exc()
        return EXIT_FAILURE


def main(args=None):
    """Runs the tool and returns its exit code.

    args may be an array of string command-line arguments; if absent,
    the process's arguments are used.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-C', '--workspace', default='.',
                        help='workspace dir path (default: current dir)')
    common.add_argument('--seed', type=int,
                        help='override the configured seed')
    common.add_argument('--set', action='append', default=[],
                        metavar='SECTION.KEY=VALUE',
                        help='override a config value (TOML literal); '
                             'may be repeated')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true',
                           help='log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true',
                           help='log warnings and errors only')

    parser = argparse.ArgumentParser()
    parser.set_defaults(func=None, verbose=False, quiet=False)

    subs = parser.add_subparsers(title='Commands', dest='command')

    p_init = subs.add_parser('init', help='initialize new workspace dirs')
    p_init.add_argument('path', nargs='+', help='workspace dir path')
    p_init.add_argument('-g', '--git', action='store_true',
                        help='initialize a git repo')
    p_init.set_defaults(func=_init)

    p_ingest = subs.add_parser(
        'ingest', parents=[common],
        help='parse the raw corpus files and build the vocabulary')
    p_ingest.add_argument('--make-synthetic', action='store_true',
                          help='first write the bundled synthetic corpus '
                               'to the raw paths')
    p_ingest.set_defaults(func=_ingest)

    stages = [
        ('build-index', 'index the training turn pairs with BM25',
         pipeline.build_index),
        ('train-lm', 'train the n-gram response generator',
         pipeline.train_lm),
        ('generate', 'generate responses for every training context',
         pipeline.generate),
        ('build-grayscale', 'assemble and export the grayscale sets',
         pipeline.build_grayscale),
        ('train', 'train the matching model', pipeline.train),
    ]
    for name, help_text, func in stages:
        p = subs.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=_stage(func))

    p_evaluate = subs.add_parser(
        'evaluate', parents=[common],
        help='score the test split with the trained model')
    p_evaluate.set_defaults(func=_evaluate)

    p_sweep = subs.add_parser(
        'sweep-margin', parents=[common],
        help='train and evaluate once per margin in sweep.margins')
    p_sweep.set_defaults(func=_sweep_margin)

    p_ablate = subs.add_parser(
        'ablate', parents=[common],
        help='train and evaluate once per mode in ablate.modes')
    p_ablate.set_defaults(func=_ablate)

    p_report = subs.add_parser('report', parents=[common],
                               help='summarize workspace status')
    p_report.set_defaults(func=_report)

    args = parser.parse_args(args)
    if not args.func:
        parser.print_help()
        return EXIT_FAILURE
    _configure_logging(args)
    return _run(args)

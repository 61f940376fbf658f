"""
Command line interface.

    flakecat [global flags] <command> [arguments]

Exit codes: 0 success, 1 usage error, 2 data or source error, 3 numeric failure.
"""

import argparse
import json
import logging
import sys

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError

from . import __version__
from .classify import ForestConfig, KnnConfig, SvmConfig
from .corpus import fetch_corpus, load_manifest
from .embed import load_external_embeddings, save_embeddings
from .errors import DataError, NumericError, ObjectiveError, SourceError
from .harness import (
    CD_REPEATS, KNN_K_VALUES, SVM_C_VALUES, SVM_KERNELS, ExperimentConfig, ExperimentReport,
    category_table, cd_validation, emit_projection, load_features, override, print_frame,
    run_experiment, sweep_knn, sweep_svm, tfidf_features, tune_forest,
)
from .javalex import extract_test_method, flatten, load_flattened, save_flattened
from .metrics import category_name
from .reduce import DEFAULT_K_NEIGHBORS, DEFAULT_PERPLEXITY, DEFAULT_TSNE_ITERS, reduce_matrix
from .sample import balance, save_synthetic
from .tune import load_trace, save_trace
from .utils import configure_logging, plot_projection, plot_sweep, print_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


# ---------------------------------------------------------------------------- #
#                                    Helpers                                   #
# ---------------------------------------------------------------------------- #


def _experiment_config(args, **changes):
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = dict(changes)
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.threads is not None:
        overrides['threads'] = args.threads
    if args.objective is not None:
        overrides['objective'] = args.objective
    if args.reduce_scope is not None:
        overrides['reducer'] = dict(overrides.get('reducer', {}), scope=args.reduce_scope)
    if getattr(args, 'embeddings', None):
        overrides['embedding'] = {'source': 'external', 'path': args.embeddings}
    elif getattr(args, 'flattened', None):
        overrides['embedding'] = {'source': 'tfidf', 'path': args.flattened}
    return override(config, **overrides) if overrides else config


def _manifest(args):
    return load_manifest(args.manifest, args.cache_dir, skip_unknown=args.skip_unknown)


def _data(args, config):
    corpus = _manifest(args)
    return corpus, load_features(config, corpus), corpus.labels


def _seed(args):
    return 0 if args.seed is None else args.seed


# ---------------------------------------------------------------------------- #
#                                   Commands                                   #
# ---------------------------------------------------------------------------- #


def cmd_fetch(args):
    corpus = _manifest(args)
    sources = fetch_corpus(corpus, offline=args.offline, n_jobs=args.threads or 1)
    logger.info('%d test sources available in %s', len(sources), corpus.cache_dir)


def cmd_tokenize(args):
    corpus = _manifest(args)
    sources = fetch_corpus(corpus, offline=args.offline, n_jobs=args.threads or 1)
    rows = {}
    for record in corpus:
        try:
            stream = extract_test_method(sources[record.test_id], record.method_name, record.test_id)
        except DataError as e:
            if not args.skip_errors:
                e.context['test_id'] = record.test_id
                raise
            logger.warning('skipping %s: %s', record.test_id, e)
            continue
        rows[record.test_id] = flatten(stream)
    save_flattened(rows, args.output)
    logger.info('wrote %d flattened tests to %s', len(rows), args.output)


def cmd_embed(args):
    corpus = _manifest(args)
    matrix = tfidf_features(load_flattened(args.flattened), corpus, args.min_df, args.max_features)
    save_embeddings(matrix, corpus.labels, args.output)
    logger.info('wrote %dx%d tf-idf matrix to %s', *matrix.shape, args.output)


def _reduce(args, r):
    corpus = _manifest(args)
    X = load_external_embeddings(args.embeddings, corpus)
    params = {'k_neighbors': args.k_neighbors, 'perplexity': args.perplexity, 'iters': args.iters}
    reduced = reduce_matrix(args.method, X, corpus.labels, r, params, _seed(args))
    return corpus, reduced


def cmd_reduce(args):
    corpus, reduced = _reduce(args, args.r)
    frame = pd.DataFrame(reduced.values, columns=['c{}'.format(i) for i in range(reduced.values.shape[1])])
    frame.insert(0, 'label', [category_name(c) for c in corpus.labels])
    frame.insert(0, 'test_id', reduced.row_ids)
    frame.to_csv(args.output, index=False, float_format='%.17g')


def cmd_plot_data(args):
    corpus, reduced = _reduce(args, 2)
    emit_projection(reduced, corpus.labels, args.output)
    if args.figure:
        plot_projection(reduced.values, [category_name(c) for c in corpus.labels],
                        title=reduced.reducer_tag, filename=args.figure)


def cmd_balance(args):
    corpus = _manifest(args)
    X = load_external_embeddings(args.embeddings, corpus)
    sampled = balance(X.values, corpus.labels, args.k, _seed(args))
    save_synthetic(sampled, args.output)
    counts = np.unique(sampled.y, return_counts=True)
    print_table([[category_name(c), n] for c, n in zip(*counts)], ['category', 'count'],
                title='{} Tomek removals'.format(len(sampled.removed)))


def cmd_evaluate(args):
    config = _experiment_config(args)
    _, X, y = _data(args, config)
    report = run_experiment(config, X, y)
    report.save(args.output, include_timing=args.timing)
    report.print_summary()


def cmd_sweep_knn(args):
    config = _experiment_config(args)
    _, X, y = _data(args, config)
    table = sweep_knn(X, y, args.k, config)
    table.to_csv(args.output)
    print_frame(table, 'KNN sweep')
    if args.figure:
        plot_sweep(table, 'score', args.figure)


def cmd_sweep_svm(args):
    config = _experiment_config(args)
    _, X, y = _data(args, config)
    table = sweep_svm(X, y, args.kernels, args.c, config)
    table.to_csv(args.output)
    print_frame(table, 'SVM sweep ({})'.format(config.objective))
    if args.figure:
        plot_sweep(table, config.objective, args.figure)


def cmd_tune_rf(args):
    config = _experiment_config(args)
    _, X, y = _data(args, config)
    trace = load_trace(args.resume) if args.resume else None
    best, trace = tune_forest(X, y, config, args.n_init, args.n_iter, trace,
                              on_observation=lambda t: save_trace(t, args.trace))
    print_table([[k, v] for k, v in sorted(best.point.items())] + [['objective', '{:.4f}'.format(best.objective)]],
                ['parameter', 'value'], title='best of {} evaluations'.format(len(trace)))


def cmd_cd_validate(args):
    config = _experiment_config(args)
    _, X, y = _data(args, config)
    if config.classifier.kind == 'forest':
        forest = config.classifier.settings(config.seed)[0]
    else:
        forest = ForestConfig(seed=config.seed)
    classifiers = {
        'KNN': KnnConfig(args.knn_k),
        'SVM': SvmConfig(kernel='rbf', c=args.svm_c),
        'RF': forest,
    }
    c_table, d_table = cd_validation(X, y, classifiers, args.repeats, seed=_seed(args),
                                     epsilon=args.epsilon, config=config)
    c_table.to_csv('{}_consistency.csv'.format(args.output))
    d_table.to_csv('{}_discriminancy.csv'.format(args.output))
    print_frame(c_table, 'consistency C', '{:.3f}')
    print_frame(d_table, 'discriminancy D', '{:.3f}')


def cmd_report(args):
    reports = {}
    for path in args.reports:
        with open(path, encoding='utf-8') as f:
            reports[path] = ExperimentReport.from_dict(json.load(f))
    rows = []
    for path, report in reports.items():
        best = report.best()
        rows.append([path, json.dumps(best.setting, sort_keys=True),
                     '{:.4f}'.format(best.macro_f1), '{:.4f}'.format(best.fdc)])
    print_table(rows, ['report', 'best setting', 'macro F1', 'FDC'])

    frame = category_table(reports)
    print_frame(frame, 'F1 per category')
    if args.output:
        frame.to_csv(args.output)


COMMANDS = {
    'fetch': cmd_fetch,
    'tokenize': cmd_tokenize,
    'embed': cmd_embed,
    'reduce': cmd_reduce,
    'plot-data': cmd_plot_data,
    'balance': cmd_balance,
    'evaluate': cmd_evaluate,
    'sweep-knn': cmd_sweep_knn,
    'sweep-svm': cmd_sweep_svm,
    'tune-rf': cmd_tune_rf,
    'cd-validate': cmd_cd_validate,
    'report': cmd_report,
}


# ---------------------------------------------------------------------------- #
#                                    Parser                                    #
# ---------------------------------------------------------------------------- #


def _add_features(p):
    p.add_argument('manifest', help='labelled manifest CSV')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--embeddings', help='embedding CSV test_id,v0.. (external source)')
    group.add_argument('--flattened', help='flattened tests CSV (tf-idf source)')


def _add_reducer(p):
    p.add_argument('manifest', help='labelled manifest CSV')
    p.add_argument('embeddings', help='embedding CSV test_id,v0..')
    p.add_argument('--method', choices=('pca', 'lda', 'isomap', 'tsne'), default='lda')
    p.add_argument('--k-neighbors', type=int, default=DEFAULT_K_NEIGHBORS)
    p.add_argument('--perplexity', type=float, default=DEFAULT_PERPLEXITY)
    p.add_argument('--iters', type=int, default=DEFAULT_TSNE_ITERS)
    p.add_argument('-o', '--output', required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog='flakecat', description='Categorise flaky tests from their source code.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('--seed', type=int, default=None, help='base random seed (default 0)')
    parser.add_argument('--offline', action='store_true', help='never run git, use the source cache only')
    parser.add_argument('--threads', type=int, default=None, help='parallel workers (1 = reproducible reference mode)')
    parser.add_argument('--reduce-scope', choices=('full', 'fold'), default=None)
    parser.add_argument('--objective', choices=('f1', 'fdc'), default=None)
    parser.add_argument('--config', default=None, help='experiment configuration JSON')
    parser.add_argument('--cache-dir', default=None, help='source cache (default $FLAKECAT_CACHE or ~/.cache/flakecat)')
    parser.add_argument('--skip-unknown', action='store_true',
                        help='drop manifest rows whose category is not one of the seven labels')
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('fetch', help='fetch the test sources of a manifest into the cache')
    p.add_argument('manifest')

    p = sub.add_parser('tokenize', help='extract and flatten every test method')
    p.add_argument('manifest')
    p.add_argument('-o', '--output', required=True)
    p.add_argument('--skip-errors', action='store_true', help='log and skip tests that cannot be extracted')

    p = sub.add_parser('embed', help='tf-idf vectorise flattened tests')
    p.add_argument('manifest')
    p.add_argument('flattened')
    p.add_argument('-o', '--output', required=True)
    p.add_argument('--min-df', type=int, default=2)
    p.add_argument('--max-features', type=int, default=5000)

    p = sub.add_parser('reduce', help='reduce an embedding matrix')
    _add_reducer(p)
    p.add_argument('--r', type=int, default=6)

    p = sub.add_parser('plot-data', help='write a 2-D projection as plot data')
    _add_reducer(p)
    p.add_argument('--figure', default=None, help='also render a scatter plot to this file')

    p = sub.add_parser('balance', help='dump the synthetic rows of SMOTE + Tomek on a whole matrix')
    p.add_argument('manifest')
    p.add_argument('embeddings')
    p.add_argument('-k', type=int, default=5)
    p.add_argument('-o', '--output', required=True)

    p = sub.add_parser('evaluate', help='cross-validate the configured experiment')
    _add_features(p)
    p.add_argument('-o', '--output', required=True, help='report JSON')
    p.add_argument('--timing', action='store_true', help='include wall-clock time in the report')

    p = sub.add_parser('sweep-knn', help='KNN over a range of k')
    _add_features(p)
    p.add_argument('--k', type=int, nargs='+', default=list(KNN_K_VALUES))
    p.add_argument('-o', '--output', required=True)
    p.add_argument('--figure', default=None)

    p = sub.add_parser('sweep-svm', help='SVM over kernels and C')
    _add_features(p)
    p.add_argument('--kernels', nargs='+', choices=SVM_KERNELS, default=list(SVM_KERNELS))
    p.add_argument('--c', type=float, nargs='+', default=list(SVM_C_VALUES))
    p.add_argument('-o', '--output', required=True)
    p.add_argument('--figure', default=None)

    p = sub.add_parser('tune-rf', help='Bayesian optimisation of the random forest')
    _add_features(p)
    p.add_argument('--n-init', type=int, default=5)
    p.add_argument('--n-iter', type=int, default=60)
    p.add_argument('--trace', required=True, help='trace CSV, rewritten after every evaluation')
    p.add_argument('--resume', default=None, help='trace CSV of an interrupted run')

    p = sub.add_parser('cd-validate', help='consistency and discriminancy of FDC against F1')
    _add_features(p)
    p.add_argument('--repeats', type=int, nargs='+', default=list(CD_REPEATS))
    p.add_argument('--epsilon', type=float, default=0.005)
    p.add_argument('--knn-k', type=int, default=10)
    p.add_argument('--svm-c', type=float, default=1.0)
    p.add_argument('-o', '--output', required=True, help='prefix of the two output tables')

    p = sub.add_parser('report', help='summarise saved experiment reports')
    p.add_argument('reports', nargs='+')
    p.add_argument('-o', '--output', default=None, help='per-category table CSV')
    return parser


def _exit_code(exc):
    if isinstance(exc, ObjectiveError):
        return _exit_code(exc.__cause__) or EXIT_DATA
    if isinstance(exc, (NumericError, LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, SourceError, OSError)):
        return EXIT_DATA
    return None


def main(argv=None):
    """
    Run the command line interface.

    :param argv: arguments without the program name, defaults to ``sys.argv[1:]``
    :type argv: list, optional
    :return: the exit code
    :rtype: int
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    configure_logging(args.verbose)

    try:
        COMMANDS[args.command](args)
    except Exception as e:
        code = _exit_code(e)
        if code is None:
            if isinstance(e, ValueError):
                logger.error('%s', e)
                return EXIT_USAGE
            raise
        logger.error('%s: %s', type(e).__name__, e)
        return code
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())

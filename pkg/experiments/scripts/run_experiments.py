"""
Command-line entry point for the tube-confined BBM experiments. Runs a single experiment config or
a whole suite, lists the path catalog, and prints the predicted growth rates for a path.

Examples:
    python -m experiments.scripts.run_experiments suite growth_rates_suite.cfg
    python -m experiments.scripts.run_experiments predict sinlog:lambda=1 --r 1 --L 2 --horizon 1e4
    python -m experiments.scripts.run_experiments rerun experiment_output/zero_pde/manifest.json

Exit codes: 0 when every comparison target passes, 1 when a target fails or an engine fails, 2
for usage and config errors.
"""
import argparse
import logging
import os
from logging.config import dictConfig

from tubebbm.paths.api import PathDomainError, compute_T, predict_rates
from tubebbm.paths.catalog import list_paths, parse_path_key
from utils import TerminalFormats, colorize
from . import settings
from .harness import (
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    SuiteSummary,
    config_from_manifest,
    load_configs,
    run_experiment,
    run_suite,
)

logger = logging.getLogger(__name__)

SEPARATOR_CHARS = 75
OUTPUT_SEPARATOR = ('*' * SEPARATOR_CHARS)


def _print_report(report):
    print(OUTPUT_SEPARATOR)
    print('%s (%s): %s' % (report.name, report.engine, report.output_dir))
    print(OUTPUT_SEPARATOR)
    for quantity, measurement in sorted(report.measured.items()):
        if measurement.get('ci_halfwidth') is not None:
            print('\t%-28s %s ± %s (95%%)' % (quantity, measurement['value'],
                                              measurement['ci_halfwidth']))
        elif measurement['se'] is None:
            print('\t%-28s %s' % (quantity, measurement['value']))
        else:
            print('\t%-28s %s ± %s' % (quantity, measurement['value'], measurement['se']))
    for target in report.targets:
        color = TerminalFormats.OKGREEN if target['passed'] else TerminalFormats.FAIL
        print('\t' + colorize('target %s: expected %s, measured %s' % (
            target['quantity'], target['expected'], target['measured']), color))
    if report.failure:
        print(colorize('Failed: %s' % report.failure['message'], TerminalFormats.FAIL))


def run_configs(configs, source, output_root):
    """Runs configs one after another, printing each report and a closing summary."""
    summary = SuiteSummary(suite_file=source, reports=[])
    for config in configs:
        report = run_experiment(config, output_root)
        _print_report(report)
        summary.reports.append(report)
        summary.wall_clock_seconds += report.wall_clock_seconds
    summary.print_summary()
    return summary.exit_code


def resolve_config_file(file_name):
    """Config files that don't exist as given are looked up among the shipped suites."""
    if os.path.exists(file_name) or os.path.isabs(file_name):
        return file_name
    shipped = os.path.join(settings.SUITES_DIR, file_name)
    return shipped if os.path.exists(shipped) else file_name


def print_path_catalog():
    print(OUTPUT_SEPARATOR)
    print('Path catalog (key: parameters)')
    print(OUTPUT_SEPARATOR)
    for key, param_names, description, usual_conditions in list_paths():
        note = '' if usual_conditions else ' [violates the usual conditions]'
        print('%-14s %-24s %s%s' % (key, ', '.join(param_names) or '-', description, note))
    return EXIT_OK


def print_prediction(path_key, r, L, horizon):
    path = parse_path_key(path_key)
    prediction = predict_rates(path, r, L, horizon)
    print(OUTPUT_SEPARATOR)
    print('Predicted rates for %s (r=%g, L=%g, horizon=%g)' % (path.name, r, L, horizon))
    print(OUTPUT_SEPARATOR)
    for name, value in sorted(prediction.as_dict().items()):
        print('\t%-14s %s' % (name, value))
    if prediction.S_tilde > 0:
        try:
            print('\t%-14s %s' % ('T(0.5)', compute_T(path, r, L, 0.5, horizon)))
        except PathDomainError as error:
            print('\tT(0.5) unavailable: %s' % error)
    return EXIT_OK


def main(argv=None):

    ############################################################################################
    # Configure command line parameters
    ############################################################################################
    parser = argparse.ArgumentParser(
        description='Runs experiments on branching Brownian motion confined to a tube around a '
                    'path.',
        usage='python -m experiments.scripts.%(prog)s <command> [options]')
    parser.add_argument('-output_root', '-o', default=None,
                        help='the directory experiment outputs are written under (defaults to '
                             '$TUBEBBM_OUTPUT_ROOT, then %s)' % settings.OUTPUT_ROOT)
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    run_parser = commands.add_parser('run', help='run every experiment in a config file')
    run_parser.add_argument('config', help='an INI file of [experiment:<name>] sections')

    suite_parser = commands.add_parser('suite',
                                       help='run a suite in parallel and write summary.json')
    suite_parser.add_argument('suite_file')
    suite_parser.add_argument('-workers', '-w', type=int, default=settings.MAX_WORKERS,
                              help='worker processes (defaults to one per CPU)')

    commands.add_parser('list-paths', help='list the built-in path catalog')

    predict_parser = commands.add_parser('predict', help='print the predicted growth rates')
    predict_parser.add_argument('path_key', help='e.g. "linear:lambda=0.5"')
    predict_parser.add_argument('--r', type=float, required=True, help='branching rate')
    predict_parser.add_argument('--L', type=float, required=True, help='tube half-width')
    predict_parser.add_argument('--horizon', type=float, required=True)

    rerun_parser = commands.add_parser('rerun',
                                       help="rerun an experiment from its manifest.json")
    rerun_parser.add_argument('manifest')
    rerun_parser.add_argument('-output_dir', default=None,
                              help='write to this directory instead of the original one')

    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return exit_request.code

    dictConfig(settings.LOGGING)
    output_root = args.output_root

    try:
        if args.command == 'list-paths':
            return print_path_catalog()
        if args.command == 'predict':
            return print_prediction(args.path_key, args.r, args.L, args.horizon)
        if args.command == 'run':
            config_file = resolve_config_file(args.config)
            return run_configs(load_configs(config_file), os.path.abspath(config_file),
                               output_root)
        if args.command == 'rerun':
            config = config_from_manifest(args.manifest, args.output_dir)
            return run_configs([config], os.path.abspath(args.manifest), output_root)

        summary = run_suite(resolve_config_file(args.suite_file), output_root,
                            max_workers=args.workers)
        summary.print_summary()
        return summary.exit_code
    except ValueError as error:
        # ExperimentConfigError, UnknownPathError and bad predict arguments
        logger.error(str(error))
        return EXIT_CONFIG_ERROR


if __name__ == '__main__':
    result = main()
    exit(result)

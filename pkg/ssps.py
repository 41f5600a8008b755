"""Steady-state policy synthesis from the command line.

Subcommands: gen, synth, verify, simulate, compare. Reports go to stdout,
diagnostics to stderr. Exit codes: 0 success, 1 solver failure, 2 bad input,
3 infeasible program, 4 cut budget exhausted, 130 interrupted.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

import config
import mdp_io
from chain_analysis import InvalidSpec, NonTransientBlock, NotUnichain, verify
from environments import ENVIRONMENTS, InvalidParameter, make_environment
from lp import SolverConfig, SolverError, make_solver, solvers, write_mps
from lp_synthesis import (
    MODES, X, Y, BudgetExhausted, Infeasible, SynthesisConfig, synthesize
)
from mdp_core import (
    STEADY_STATE, InvalidMdp, InvalidPolicy, NoReachableTscc, classify_mdp
)
from simulation import (
    ConvergenceReporter, SimConfig, SimulationError, ensemble_metrics
)


root_path = os.path.dirname(os.path.abspath(__file__))
configs_path = os.path.join(root_path, 'config')
settings_plain_name = 'settings'
seed_variable = 'SSPS_SEED'

EXIT_SOLVER = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4
EXIT_INTERRUPTED = 130

input_errors = (
    mdp_io.FormatError, InvalidParameter, InvalidMdp, InvalidPolicy,
    InvalidSpec, NoReachableTscc, NotUnichain, NonTransientBlock,
    SimulationError, OSError, ValueError
)
compare_modes = ('ep', 'cp', 'cpu', 'kallenberg')


def default_seed():
    value = os.environ.get(seed_variable)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ValueError('{} must be an integer, got {}'.format(
            seed_variable, value
        ))


def parse_params(tokens):
    """Turn trailing '--key value' tokens into generator parameters."""
    params = {}
    tokens = list(tokens)
    while tokens:
        flag = tokens.pop(0)
        if not flag.startswith('--') or not tokens:
            raise InvalidParameter(
                'Expected --name value pairs, got {}'.format(flag)
            )
        params[flag[2:].replace('-', '_')] = tokens.pop(0)
    return params


def write_output(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, 'w') as f:
            f.write(text)


# Subcommands

def cmd_gen(args, extra, configuration):
    params = parse_params(extra)
    takes_seed = 'seed' in ENVIRONMENTS[args.env].defaults
    if args.seed is not None:
        if not takes_seed:
            raise InvalidParameter('{} takes no seed'.format(args.env))
        params['seed'] = args.seed
    elif takes_seed and default_seed() is not None:
        params['seed'] = default_seed()
    mdp = make_environment(args.env, **params)
    write_output(mdp_io.dumps(mdp_io.mdp_to_dict(mdp)), args.out)
    summary = '{}: {} states, {} state-action pairs, {}'.format(
        args.env, mdp.n_states, mdp.n_pairs, classify_mdp(mdp).summary()
    )
    print(summary, file=sys.stdout if args.out else sys.stderr)
    return 0


def synthesis_config(args, configuration):
    settings = dict(configuration.get('synthesis', {}))
    overrides = {
        'epsilon_pos': args.epsilon, 'epsilon_cut': args.epsilon_cut,
        'epsilon_flow': args.epsilon_flow, 'solver': args.solver,
    }
    settings.update(
        (key, value) for (key, value) in overrides.items() if value is not None
    )
    return SynthesisConfig.from_settings(settings)


def make_configured_solver(cfg, configuration):
    return make_solver(
        cfg.solver, SolverConfig(**configuration.get('solver', {}))
    )


def cmd_synth(args, extra, configuration):
    mdp = mdp_io.load_mdp(args.input)
    cfg = synthesis_config(args, configuration)
    solver = make_configured_solver(cfg, configuration)
    result = synthesize(mdp, args.mode, cfg, solver)
    if args.export_mps:
        with open(args.export_mps, 'w') as f:
            write_mps(result.lp, f)
    provenance = mdp_io.provenance_for(result, mdp, cfg)
    write_output(
        mdp_io.dumps(mdp_io.policy_to_dict(mdp, result.policy, provenance)),
        args.out
    )
    print('{} ({}): objective {:.6f} after {} iteration(s)'.format(
        result.lp.name, args.mode, result.objective, result.iterations
    ), file=sys.stdout if args.out else sys.stderr)
    return 0


def provenance_vector(provenance, key):
    if key not in provenance:
        return None
    return np.array(provenance[key], dtype=float)


def cmd_verify(args, extra, configuration):
    mdp = mdp_io.load_mdp(args.mdp)
    (pi, provenance) = mdp_io.load_policy(args.policy, mdp)
    report = verify(
        mdp, pi, x=provenance_vector(provenance, X),
        y=provenance_vector(provenance, Y)
    )
    if args.format == 'json':
        print(json.dumps(report.as_dict(), indent=2))
    else:
        print(report.format_text())
    return 0


def cmd_simulate(args, extra, configuration):
    mdp = mdp_io.load_mdp(args.mdp)
    (pi, _) = mdp_io.load_policy(args.policy, mdp)
    settings = dict(configuration.get('simulation', {}))
    seed = args.seed if args.seed is not None else default_seed()
    overrides = {
        'paths': args.paths, 'horizon': args.horizon, 'seed': seed,
        'workers': args.workers,
    }
    settings.update(
        (key, value) for (key, value) in overrides.items() if value is not None
    )
    report = ensemble_metrics(mdp, pi, SimConfig.from_settings(settings))
    write_output(json.dumps(report.as_dict(), indent=2) + '\n', args.out)
    if args.out:
        print(report.format_text())
    if args.curves:
        ConvergenceReporter(filename=args.curves).write(report)
    return 0


def spec_lp_value(mdp, result, spec):
    kind = X if spec.kind == STEADY_STATE else Y
    if kind == Y and result.mode == 'unichain':
        return None
    values = result.x(mdp) if kind == X else result.y(mdp)
    return float(values[mdp.label_pair_indices(spec.label)].sum())


def format_value(value):
    return '-' if value is None else '{:.4f}'.format(value)


def cmd_compare(args, extra, configuration):
    mdp = mdp_io.load_mdp(args.input)
    cfg = synthesis_config(args, configuration)
    solver = make_configured_solver(cfg, configuration)
    header = ['mode', 'LP objective', 'R', 'class'] + [
        '{} (LP/attained)'.format(spec.label) for spec in mdp.specs
    ]
    print(' | '.join(header))
    for mode in args.modes:
        try:
            result = synthesize(mdp, mode, cfg, solver)
        except (Infeasible, BudgetExhausted, SolverError) as error:
            print('{} | {}'.format(mode, error))
            continue
        report = verify(mdp, result.policy, x=result.x(mdp))
        row = [
            mode, format_value(result.objective), format_value(report.reward),
            report.flags.name
        ]
        for (spec, spec_result) in zip(mdp.specs, report.spec_results):
            row.append('{}/{}{}'.format(
                format_value(spec_lp_value(mdp, result, spec)),
                format_value(spec_result.attained),
                '' if spec_result.satisfied else ' (violated)'
            ))
        print(' | '.join(row))
    return 0


# Argument parsing

def add_synthesis_arguments(parser):
    parser.add_argument(
        '--epsilon', '-e', type=float, default=None,
        help='Strictness margin for LP1 positivity. Default: from settings'
    )
    parser.add_argument(
        '--epsilon-cut', type=float, default=None,
        help='Mass required across each cut. Default: from settings'
    )
    parser.add_argument(
        '--epsilon-flow', type=float, default=None,
        help='Flow strictness margin. Default: derived per TSCC'
    )
    parser.add_argument(
        '--solver', type=str, choices=sorted(solvers), default=None,
        help='LP solver. Default: from settings'
    )


def make_parser():
    parser = argparse.ArgumentParser(
        description='Synthesize and check steady-state policies of MDPs.'
    )
    config.add_config_arguments(parser, configs_path, settings_plain_name)
    parser.add_argument(
        '--verbose', '-v', action='count', default=0,
        help='Log INFO (-v) or DEBUG (-vv) messages to stderr.'
    )
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    gen = subparsers.add_parser(
        'gen', help='Generate an environment.',
        description=(
            'Generate an environment. Generator parameters follow as '
            '--name value pairs.'
        )
    )
    gen.add_argument('env', choices=sorted(ENVIRONMENTS))
    gen.add_argument(
        '--seed', type=int, default=None,
        help='Generator seed. Default: ${} or the generator default'.format(
            seed_variable
        )
    )
    gen.add_argument(
        '--out', '-o', type=str, default=None,
        help='MDP file to write. Default: stdout'
    )
    gen.set_defaults(handler=cmd_gen, accepts_extra=True)

    synth = subparsers.add_parser('synth', help='Synthesize a policy.')
    synth.add_argument(
        '--mode', '-m', type=str, choices=MODES, default='cpu',
        help='Synthesis mode. Default: cpu'
    )
    synth.add_argument('--in', '-i', dest='input', required=True)
    synth.add_argument(
        '--out', '-o', type=str, default=None,
        help='Policy file to write. Default: stdout'
    )
    synth.add_argument(
        '--export-mps', type=str, default=None,
        help='Write the final LP in free MPS form to this path.'
    )
    add_synthesis_arguments(synth)
    synth.set_defaults(handler=cmd_synth)

    check = subparsers.add_parser('verify', help='Analyze a policy.')
    check.add_argument('--mdp', required=True)
    check.add_argument('--policy', required=True)
    check.add_argument(
        '--format', '-f', choices=('json', 'text'), default='text',
        help='Report format. Default: text'
    )
    check.set_defaults(handler=cmd_verify)

    simulate = subparsers.add_parser(
        'simulate', help='Estimate policy metrics by Monte Carlo.'
    )
    simulate.add_argument('--mdp', required=True)
    simulate.add_argument('--policy', required=True)
    simulate.add_argument('--paths', '-n', type=int, default=None)
    simulate.add_argument('--horizon', type=int, default=None)
    simulate.add_argument(
        '--seed', type=int, default=None,
        help='Master seed. Default: ${} or settings'.format(seed_variable)
    )
    simulate.add_argument('--workers', '-w', type=int, default=None)
    simulate.add_argument(
        '--out', '-o', type=str, default=None,
        help='JSON report to write. Default: stdout'
    )
    simulate.add_argument(
        '--curves', type=str, default=None,
        help='CSV file for the convergence curves.'
    )
    simulate.set_defaults(handler=cmd_simulate)

    compare = subparsers.add_parser(
        'compare', help='Tabulate several synthesis modes on one MDP.'
    )
    compare.add_argument('--in', '-i', dest='input', required=True)
    compare.add_argument(
        '--modes', nargs='+', choices=MODES, default=list(compare_modes),
        help='Modes to run. Default: {}'.format(' '.join(compare_modes))
    )
    add_synthesis_arguments(compare)
    compare.set_defaults(handler=cmd_compare)
    return parser


def configure_logging(args, configuration):
    settings = configuration.get('logging', {})
    level = settings.get('level', 'WARNING')
    if args.verbose == 1:
        level = 'INFO'
    elif args.verbose > 1:
        level = 'DEBUG'
    logging.basicConfig(
        stream=sys.stderr, level=level,
        format=settings.get('format', logging.BASIC_FORMAT)
    )


def main(argv=None):
    parser = make_parser()
    (args, extra) = parser.parse_known_args(argv)
    if extra and not getattr(args, 'accepts_extra', False):
        parser.error('unrecognized arguments: {}'.format(' '.join(extra)))
    try:
        configuration = config.load_config_from_args(args)
        configure_logging(args, configuration)
        return args.handler(args, extra, configuration)
    except KeyboardInterrupt:
        print('Quitting early...', file=sys.stderr)
        return EXIT_INTERRUPTED
    except Infeasible as error:
        print('Infeasible: {}'.format(error), file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExhausted as error:
        print('Budget exhausted: {}'.format(error), file=sys.stderr)
        return EXIT_BUDGET
    except SolverError as error:
        print('Solver error: {}'.format(error), file=sys.stderr)
        return EXIT_SOLVER
    except input_errors as error:
        print('Error: {}'.format(error), file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())

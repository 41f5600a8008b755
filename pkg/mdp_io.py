"""JSON file formats for MDPs and policies."""
import json
import math

import numpy as np

from mdp_core import (
    PAIR_LABEL, STEADY_STATE, InvalidMdp, Mdp, Spec, StationaryPolicy,
    probability_tolerance, validate
)


format_version = 1

mdp_fields = (
    'ssps_version', 'states', 'actions', 'transitions', 'beta', 'labels',
    'specs'
)
transition_fields = ('s', 'a', 'sp', 'p', 'r')
spec_fields = ('label', 'lo', 'hi', 'kind')
policy_fields = ('ssps_version', 'policy', 'provenance')


class FormatError(ValueError):
    pass


def _check_fields(record, allowed, required, where):
    if not isinstance(record, dict):
        raise FormatError('{} must be an object'.format(where))
    unknown = set(record) - set(allowed)
    if unknown:
        raise FormatError('Unknown field(s) in {}: {}'.format(
            where, ', '.join(sorted(unknown))
        ))
    missing = set(required) - set(record)
    if missing:
        raise FormatError('Missing field(s) in {}: {}'.format(
            where, ', '.join(sorted(missing))
        ))


def _check_version(document):
    version = document.get('ssps_version', format_version)
    if version != format_version:
        raise FormatError('Unsupported ssps_version {}'.format(version))


def _bound(value):
    return None if math.isinf(value) else value


def _unbound(value):
    return math.inf if value is None else float(value)


# MDPs

def mdp_to_dict(mdp):
    names = mdp.state_names
    labels = {}
    for (name, label) in mdp.labels.items():
        if label.kind == PAIR_LABEL:
            labels[name] = [
                [names[s], mdp.actions[s][a]] for (s, a) in label.members
            ]
        else:
            labels[name] = [names[s] for s in label.members]
    return {
        'ssps_version': format_version,
        'states': list(names),
        'actions': [list(actions) for actions in mdp.actions],
        'transitions': [
            {
                's': names[s], 'a': mdp.actions[s][a], 'sp': names[target],
                'p': p, 'r': r
            }
            for (s, a, target, p, r) in mdp.transitions()
        ],
        'beta': [float(value) for value in mdp.beta],
        'labels': labels,
        'specs': [
            {
                'label': spec.label, 'lo': float(spec.lo),
                'hi': _bound(float(spec.hi)), 'kind': spec.kind
            }
            for spec in mdp.specs
        ],
    }


def mdp_from_dict(document):
    _check_fields(
        document, mdp_fields, ('states', 'actions', 'transitions', 'beta'),
        'MDP file'
    )
    _check_version(document)
    states = list(document['states'])
    state_index = {name: s for (s, name) in enumerate(states)}
    if len(state_index) != len(states):
        raise FormatError('Duplicate state names')
    actions = document['actions']
    if len(actions) != len(states):
        raise FormatError('actions lists {} states, states lists {}'.format(
            len(actions), len(states)
        ))
    action_index = [
        {name: a for (a, name) in enumerate(state_actions)}
        for state_actions in actions
    ]

    def state_of(name):
        if name not in state_index:
            raise FormatError('Unknown state {}'.format(name))
        return state_index[name]

    def action_of(s, name):
        if name not in action_index[s]:
            raise FormatError('Unknown action {} of state {}'.format(
                name, states[s]
            ))
        return action_index[s][name]

    transitions = []
    for record in document['transitions']:
        _check_fields(record, transition_fields, ('s', 'a', 'sp', 'p'),
                      'transition')
        s = state_of(record['s'])
        transitions.append((
            s, action_of(s, record['a']), state_of(record['sp']),
            float(record['p']), float(record.get('r', 0.0))
        ))

    labels = {}
    for (name, members) in document.get('labels', {}).items():
        if members and isinstance(members[0], list):
            labels[name] = [
                (state_of(s), action_of(state_of(s), a)) for (s, a) in members
            ]
        else:
            labels[name] = [state_of(s) for s in members]

    specs = []
    for record in document.get('specs', []):
        _check_fields(record, spec_fields, ('label', 'lo', 'hi'), 'spec')
        specs.append(Spec(
            record['label'], float(record['lo']), _unbound(record['hi']),
            record.get('kind', STEADY_STATE)
        ))

    beta = [float(value) for value in document['beta']]
    try:
        mdp = Mdp(
            actions, transitions, beta,
            labels=labels, specs=specs, state_names=states
        )
    except InvalidMdp as error:
        raise FormatError(str(error))
    report = validate(mdp)
    if not report:
        raise FormatError('Invalid MDP:\n{}'.format(report))
    return mdp


def dumps(document):
    return json.dumps(document, indent=2) + '\n'


def save_mdp(mdp, path):
    with open(path, 'w') as f:
        f.write(dumps(mdp_to_dict(mdp)))


def load_mdp(path):
    with open(path) as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as error:
            raise FormatError('{} is not valid JSON: {}'.format(path, error))
    return mdp_from_dict(document)


# Policies

def policy_to_dict(mdp, pi, provenance=None):
    document = {
        'ssps_version': format_version,
        'policy': {
            mdp.state_names[s]: {
                action: float(pi.distributions[s][a])
                for (a, action) in enumerate(mdp.actions[s])
            }
            for s in range(mdp.n_states)
        },
    }
    if provenance is not None:
        document['provenance'] = provenance
    return document


def provenance_for(result, mdp, cfg):
    """Summarize a SynthesisResult for the policy file."""
    provenance = {
        'mode': result.mode,
        'epsilon': cfg.epsilon_pos,
        'epsilon_cut': cfg.epsilon_cut,
        'lp_objective': result.objective,
        'iterations': result.iterations,
        'solver': result.solution.solver,
        'guaranteed': result.guaranteed,
        'x': [float(value) for value in result.x(mdp)],
    }
    if result.mode != 'unichain':
        provenance['y'] = [float(value) for value in result.y(mdp)]
    return provenance


def policy_from_dict(document, mdp):
    _check_fields(document, policy_fields, ('policy',), 'policy file')
    _check_version(document)
    rows = document['policy']
    distributions = []
    for (s, name) in enumerate(mdp.state_names):
        if name not in rows:
            raise FormatError('Policy has no row for state {}'.format(name))
        row = rows[name]
        unknown = set(row) - set(mdp.actions[s])
        if unknown:
            raise FormatError('Unknown action(s) {} in row {}'.format(
                ', '.join(sorted(unknown)), name
            ))
        distribution = np.array(
            [float(row.get(action, 0.0)) for action in mdp.actions[s]]
        )
        if abs(distribution.sum() - 1) > probability_tolerance:
            raise FormatError('Policy row {} sums to {:.12g}'.format(
                name, distribution.sum()
            ))
        if np.any(distribution < 0):
            raise FormatError('Policy row {} has a negative entry'.format(name))
        distributions.append(distribution)
    extra = set(rows) - set(mdp.state_names)
    if extra:
        raise FormatError('Policy rows for unknown states: {}'.format(
            ', '.join(sorted(extra))
        ))
    pi = StationaryPolicy(distributions)
    provenance = document.get('provenance') or {}
    for key in ('x', 'y'):
        if key in provenance and len(provenance[key]) != mdp.n_pairs:
            raise FormatError('Provenance {} has {} entries for {} pairs'.format(
                key, len(provenance[key]), mdp.n_pairs
            ))
    return (pi, provenance)


def save_policy(mdp, pi, path, provenance=None):
    with open(path, 'w') as f:
        f.write(dumps(policy_to_dict(mdp, pi, provenance)))


def load_policy(path, mdp):
    with open(path) as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as error:
            raise FormatError('{} is not valid JSON: {}'.format(path, error))
    return policy_from_dict(document, mdp)

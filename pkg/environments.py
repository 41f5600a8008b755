"""Benchmark MDPs: small fixtures and scalable generators.

Every generator is deterministic in its parameters (and seed), so the same
call always produces the same Mdp.
"""
import logging
from collections import namedtuple

import networkx as nx
import numpy as np

from mdp_core import (
    TRANSIENT, MarkovChain, Mdp, NoReachableTscc, Spec, classify_mdp,
    closed_components, tarjan_sccs, transition_graph
)


logger = logging.getLogger(__name__)

partition_attempts = 100


class InvalidParameter(ValueError):
    pass


def _deterministic(moves, rewards=None):
    """Turn {(s, a): s'} into (s, a, s', 1, R) tuples with 0-based indices."""
    rewards = rewards or {}
    return [
        (s, a, target, 1.0, rewards.get((s, a), 0.0))
        for ((s, a), target) in sorted(moves.items())
    ]


def _actions(counts):
    return [['a{}'.format(a + 1) for a in range(count)] for count in counts]


# Small fixtures

three_state_scenarios = ('lp0', 'example1', 'delta')


def three_state(scenario='lp0'):
    """s1 branches into the 2-cycle {s2, s3}; s2 and s3 each have a self-loop.

    Scenarios set rewards, beta and specs: 'lp0' (rewards on the self-loops,
    beta on s2 and s3), 'example1' (beta on s2 with half-mass specs on s2 and
    s3) and 'delta' (the bounded-support rewards, uniform beta).
    """
    moves = {
        (0, 0): 1, (0, 1): 2,
        (1, 0): 2, (1, 1): 1,
        (2, 0): 1, (2, 1): 2,
    }
    labels = {}
    specs = []
    if scenario == 'lp0':
        rewards = {(1, 1): 1.0, (2, 1): 1.0}
        beta = [0.0, 0.5, 0.5]
    elif scenario == 'example1':
        rewards = {(1, 1): 1.0, (2, 1): 1.0}
        beta = [0.0, 1.0, 0.0]
        labels = {'at_s2': [1], 'at_s3': [2]}
        specs = [Spec('at_s2', 0.5, 1.0), Spec('at_s3', 0.5, 1.0)]
    elif scenario == 'delta':
        rewards = {(1, 0): 0.1, (2, 0): 0.1, (2, 1): 0.1, (1, 1): 0.5}
        beta = [1.0 / 3] * 3
    else:
        raise InvalidParameter('Unknown three-state scenario: {}'.format(
            scenario
        ))
    return Mdp(
        _actions([2, 2, 2]), _deterministic(moves, rewards), beta,
        labels=labels, specs=specs
    )


def fig1_chain():
    """Chain with transient {s1, s2}, isolated {s3, s4} and two TSCCs."""
    matrix = np.zeros((11, 11))
    matrix[0, 1] = matrix[0, 4] = 0.5
    matrix[1, 0] = matrix[1, 8] = 0.5
    matrix[2, 3] = matrix[3, 2] = 1.0
    for (s, target) in ((4, 5), (5, 6), (6, 7), (7, 4), (8, 9), (9, 10), (10, 8)):
        matrix[s, target] = 1.0
    beta = np.zeros(11)
    beta[:2] = 0.5
    return MarkovChain(matrix, beta)


def chain_as_mdp(chain):
    """Wrap a Markov chain as an MDP with a single action per state."""
    transitions = [
        (s, 0, target, chain.matrix[s, target], 0.0)
        for s in range(chain.n_states)
        for target in np.flatnonzero(chain.matrix[s] > 0)
    ]
    return Mdp(
        _actions([1] * chain.n_states), transitions, chain.beta,
        state_names=chain.state_names
    )


def fig6_mdp():
    """Two TSCCs {s3, s4, s5} and {s6..s9} behind transient s1 and s2."""
    moves = {
        (0, 0): 2, (0, 1): 5,
        (1, 0): 0, (1, 1): 3, (1, 2): 6,
        (2, 0): 2, (2, 1): 3,
        (3, 0): 4, (3, 1): 2,
        (4, 0): 2, (4, 1): 4, (4, 2): 3,
        (5, 0): 6, (5, 1): 7,
        (6, 0): 5, (6, 1): 8,
        (7, 0): 8, (7, 1): 5,
        (8, 0): 8, (8, 1): 7, (8, 2): 6,
    }
    rewards = {(4, 2): 1.0, (7, 0): 1.0}
    beta = [0.0] + [1.0 / 8] * 8
    return Mdp(
        _actions([2, 3, 2, 2, 3, 2, 2, 2, 3]), _deterministic(moves, rewards),
        beta
    )


def fig13_mdp(pair_labels=False):
    """Three TSCCs of sizes 3, 4 and 6 behind the transient pair {s1, s2}.

    With pair_labels the specs sit on state-action pairs and a transient
    spec on (s2, a1), the s1/s2 loop, is added together with a cap of 50
    total transient visits.
    """
    moves = {
        (0, 0): 2, (0, 1): 1,
        (1, 0): 0, (1, 1): 5, (1, 2): 9,
        (2, 0): 3,
        (3, 0): 4,
        (4, 0): 3, (4, 1): 2,
        (5, 0): 5, (5, 1): 6,
        (6, 0): 7,
        (7, 0): 8,
        (8, 0): 7, (8, 1): 5,
        (9, 0): 9, (9, 1): 11,
        (10, 0): 12,
        (11, 0): 9, (11, 1): 10,
        (12, 0): 13, (12, 1): 9,
        (13, 0): 14,
        (14, 0): 13, (14, 1): 12,
    }
    rewards = {
        (3, 0): 1.0, (4, 0): 1.0, (7, 0): 1.0, (8, 0): 1.0,
        (13, 0): 1.0, (14, 0): 1.0,
    }
    counts = [2, 3, 1, 1, 2, 2, 1, 1, 2, 2, 1, 2, 2, 1, 2]
    if pair_labels:
        labels = {
            'gold1': [(3, 0)], 'gold2': [(5, 1)], 'gold3': [(9, 0)],
            'tool': [(1, 0)], 'transient_states': [0, 1],
        }
        specs = [
            Spec('gold1', 0.10, 1.0), Spec('gold2', 0.06, 1.0),
            Spec('gold3', 0.20, 1.0), Spec('tool', 20.0, 50.0, TRANSIENT),
            Spec('transient_states', 0.0, 50.0, TRANSIENT),
        ]
    else:
        labels = {'gold1': [3, 4], 'gold2': [5, 6], 'gold3': [9, 10]}
        specs = [
            Spec('gold1', 0.20, 1.0), Spec('gold2', 0.10, 1.0),
            Spec('gold3', 0.15, 1.0),
        ]
    return Mdp(
        _actions(counts), _deterministic(moves, rewards), [1.0 / 15] * 15,
        labels=labels, specs=specs
    )


# Frozen Islands

MOVES = (('up', (-1, 0)), ('down', (1, 0)), ('left', (0, -1)), ('right', (0, 1)))
slip_probability = 0.05

grid8_island_labels = {
    'log1': [34, 36, 38, 43], 'log2': [52, 55, 57, 61],
    'canoe1': [33], 'canoe2': [49], 'fish1': [48], 'fish2': [64],
}
grid8_island_specs = (
    ('log1', 0.25), ('log2', 0.25), ('canoe1', 0.05), ('canoe2', 0.05),
    ('fish1', 0.1), ('fish2', 0.1),
)
grid8_resource_labels = {
    'tools': [7, 13, 23], 'gas': [10, 16], 'supplies': [2, 15, 29],
}
resource_bounds = (('tools', 10.0), ('gas', 12.0), ('supplies', 15.0))


class IslandGrid(object):
    """n x n grid: rows [0, n/2) are the large island, then two strips.

    The first strip gets floor(n/4) rows and the second the rest.
    """
    def __init__(self, n):
        if n < 4 or n % 2:
            raise InvalidParameter(
                'Frozen Islands needs an even n >= 4, got {}'.format(n)
            )
        self.n = n
        self.half = n // 2
        self.strips = (self.half // 2, self.half - self.half // 2)

    def state(self, row, col):
        return row * self.n + col

    def island(self, row):
        if row < self.half:
            return 0
        if row < self.half + self.strips[0]:
            return 1
        return 2

    def island_rows(self, island):
        if island == 0:
            return range(0, self.half)
        start = self.half + sum(self.strips[:island - 1])
        return range(start, start + self.strips[island - 1])

    def island_states(self, island):
        return [
            self.state(row, col) for row in self.island_rows(island)
            for col in range(self.n)
        ]

    def neighbor(self, row, col, offset):
        (target_row, target_col) = (row + offset[0], col + offset[1])
        if not (0 <= target_row < self.n and 0 <= target_col < self.n):
            return None
        if self.island(target_row) != self.island(row):
            return None
        return (target_row, target_col)

    def crossings(self):
        """Map crossing cells on the large island to small-island entries."""
        bottom = self.n // 2 - 1
        return {
            self.state(bottom, 0): self.state(self.island_rows(1)[0], 0),
            self.state(bottom, self.n // 2): self.state(
                self.island_rows(2)[0], 0
            ),
        }


def _slip_transitions(grid, row, col, direction):
    (dr, dc) = dict(MOVES)[direction]
    attempts = [
        ((dr, dc), 1 - 2 * slip_probability),
        ((dc, dr), slip_probability), ((-dc, -dr), slip_probability),
    ]
    outcomes = {}
    here = (row, col)
    # Blocked moves leave the agent in place.
    for (move, p) in attempts:
        target = grid.neighbor(row, col, move) or here
        outcomes[target] = outcomes.get(target, 0.0) + p
    return {grid.state(*cell): p for (cell, p) in outcomes.items()}


def _one_based(cells):
    return [cell - 1 for cell in cells]


def frozen_islands(n=8, seed=0, transient_bound=None, visit_cap=None):
    grid = IslandGrid(n)
    n_states = n * n
    crossings = grid.crossings()

    if n == 8:
        labels = {
            name: _one_based(cells)
            for (name, cells) in grid8_island_labels.items()
        }
        specs = [Spec(name, lo, 1.0) for (name, lo) in grid8_island_specs]
        resources = {
            name: _one_based(cells)
            for (name, cells) in grid8_resource_labels.items()
        }
    else:
        rng = np.random.default_rng(seed)
        labels = {}
        for island in (1, 2):
            cells = grid.island_states(island)
            (canoe, fish_cell) = (cells[0], cells[-1])
            rest = [cell for cell in cells if cell not in (canoe, fish_cell)]
            logs = rng.choice(rest, size=max(1, len(cells) // 4), replace=False)
            labels['canoe{}'.format(island)] = [canoe]
            labels['fish{}'.format(island)] = [fish_cell]
            labels['log{}'.format(island)] = sorted(int(cell) for cell in logs)
        labels['logs'] = labels['log1'] + labels['log2']
        labels['canoes'] = labels['canoe1'] + labels['canoe2']
        specs = [Spec('logs', 0.3, 1.0), Spec('canoes', 0.05, 1.0)]
        large = [
            cell for cell in grid.island_states(0) if cell not in crossings
        ]
        picks = rng.choice(
            large, size=min(8, len(large)), replace=False
        ).tolist()
        resources = {
            'tools': sorted(picks[:3]), 'gas': sorted(picks[3:5]),
            'supplies': sorted(picks[5:]),
        }
    fish = set(labels['fish1'] + labels['fish2'])

    transitions = []
    for row in range(n):
        for col in range(n):
            s = grid.state(row, col)
            for (a, (direction, _)) in enumerate(MOVES):
                if direction == 'down' and s in crossings:
                    outcomes = {crossings[s]: 1.0}
                else:
                    outcomes = _slip_transitions(grid, row, col, direction)
                for (target, p) in sorted(outcomes.items()):
                    transitions.append(
                        (s, a, target, p, 1.0 if target in fish else 0.0)
                    )

    beta = np.zeros(n_states)
    beta[grid.island_states(0)] = 2.0 / n_states
    if transient_bound is not None:
        labels.update(resources)
        specs.extend(
            Spec(name, lo, float(transient_bound), TRANSIENT)
            for (name, lo) in resource_bounds
        )
    if visit_cap is not None:
        labels['large_island'] = grid.island_states(0)
        specs.append(Spec('large_island', 0.0, float(visit_cap), TRANSIENT))
    return Mdp(
        [[direction for (direction, _) in MOVES]] * n_states, transitions,
        beta, labels=labels, specs=specs
    )


# Toll Collector

def toll_collector(m=3, n=3, l=0.0):
    """Hub s0 with one action per clique; the first pair of each clique pays.

    States are named s0 (hub) then s1.. across the cliques in order.
    """
    if m < 1 or n < 2:
        raise InvalidParameter('Toll Collector needs m >= 1 and n >= 2')
    if not 0 <= l <= 1:
        raise InvalidParameter('Spec bound l must lie in [0, 1]')
    n_states = 1 + m * n
    actions = [['to_clique{}'.format(k + 1) for k in range(m)]]
    transitions = [(0, k, 1 + k * n, 1.0, 0.0) for k in range(m)]
    labels = {}
    specs = []
    for k in range(m):
        members = list(range(1 + k * n, 1 + (k + 1) * n))
        paid = (members[0], members[1])
        for s in members:
            targets = [target for target in members if target != s]
            actions.append(['to_s{}'.format(target) for target in targets])
            for (a, target) in enumerate(targets):
                reward = 1.0 if set((s, target)) == set(paid) else 0.0
                transitions.append((s, a, target, 1.0, reward))
        name = 'clique{}'.format(k + 1)
        labels[name] = [s for s in members if s not in paid]
        specs.append(Spec(name, l, 1.0))
    return Mdp(
        actions, transitions, [1.0 / n_states] * n_states, labels=labels,
        specs=specs, state_names=['s{}'.format(s) for s in range(n_states)]
    )


# Random partition graphs

def _partition_sizes(n, rng):
    sizes = []
    while sum(sizes) < n:
        draw = int(round(rng.normal(n / 5.0, np.sqrt(n / 5.0))))
        sizes.append(min(max(draw, 1), n - sum(sizes)))
    return sizes


def _shortest_cycle(graph, s, members):
    subgraph = graph.subgraph(members)
    distances = nx.single_source_shortest_path_length(subgraph, s)
    return min(
        distances[u] + 1 for u in subgraph.predecessors(s) if u in distances
    )


def _partition_once(n, p_in, p_out, rng):
    sizes = _partition_sizes(n, rng)
    graph = nx.random_partition_graph(
        sizes, p_in, p_out, seed=int(rng.integers(2 ** 31)), directed=True
    )
    actions = []
    transitions = []
    for s in range(n):
        targets = sorted(graph.successors(s)) or [s]
        if targets == [s] and not graph.has_edge(s, s):
            graph.add_edge(s, s)
        actions.append(['to_s{}'.format(target + 1) for target in targets])
        transitions.extend(
            (s, a, target, 1.0, 0.0) for (a, target) in enumerate(targets)
        )

    probe = Mdp(actions, transitions, np.full(n, 1.0 / n))
    digraph = transition_graph(probe)
    closed = set(
        s for component in closed_components(digraph, tarjan_sccs(digraph))
        for s in component
    )
    open_states = [s for s in range(n) if s not in closed] or list(range(n))
    beta = np.zeros(n)
    beta[open_states] = 1.0 / len(open_states)

    probe = Mdp(actions, transitions, beta)
    cls = classify_mdp(probe)
    rewarded = cls.recurrent_union
    transitions = [
        (s, a, target, p, 1.0 if s in rewarded and a == 0 else 0.0)
        for (s, a, target, p, _) in transitions
    ]

    reaches = [digraph.reachable([s]) for s in range(n)]
    masses = [
        sum(beta[s] for s in range(n) if reaches[s][tscc[0]])
        for tscc in cls.tsccs
    ]
    k = int(np.argmax(masses))
    target = cls.tsccs[k][0]
    cycle = _shortest_cycle(graph, target, cls.tsccs[k])
    lo = min(0.05, 0.5 * masses[k] / cycle)
    return Mdp(
        actions, transitions, beta, labels={'target': [target]},
        specs=[Spec('target', lo, 1.0)]
    )


def random_partition_mdp(n=20, p_in=0.9, p_out=0.05, seed=0):
    """Deterministic MDP on a directed Gaussian random partition graph."""
    if n < 5:
        raise InvalidParameter('Partition graphs need n >= 5, got {}'.format(n))
    for (name, p) in (('p_in', p_in), ('p_out', p_out)):
        if not 0 <= p <= 1:
            raise InvalidParameter('{} must lie in [0, 1], got {}'.format(
                name, p
            ))
    for attempt in range(partition_attempts):
        rng = np.random.default_rng([seed, attempt])
        try:
            return _partition_once(n, p_in, p_out, rng)
        except NoReachableTscc:
            logger.debug('Partition draw %d had no reachable TSCC', attempt)
    raise NoReachableTscc('No usable partition graph after {} draws'.format(
        partition_attempts
    ))


# Registry

EnvSpec = namedtuple('EnvSpec', ['name', 'generator', 'defaults'])

ENVIRONMENTS = {
    'three-state': EnvSpec('three-state', three_state, {'scenario': 'lp0'}),
    'fig1': EnvSpec('fig1', lambda: chain_as_mdp(fig1_chain()), {}),
    'fig6': EnvSpec('fig6', fig6_mdp, {}),
    'fig13': EnvSpec('fig13', fig13_mdp, {'pair_labels': False}),
    'frozen-islands': EnvSpec('frozen-islands', frozen_islands, {
        'n': 8, 'seed': 0, 'transient_bound': None, 'visit_cap': None,
    }),
    'toll-collector': EnvSpec(
        'toll-collector', toll_collector, {'m': 3, 'n': 3, 'l': 0.0}
    ),
    'partition': EnvSpec('partition', random_partition_mdp, {
        'n': 20, 'p_in': 0.9, 'p_out': 0.05, 'seed': 0,
    }),
}


def _coerce(value, default):
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        return value.lower() in ('1', 'true', 'yes')
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or default is None:
        try:
            return float(value)
        except ValueError:
            return value
    return value


def make_environment(name, **params):
    """Build a registered environment; string params are coerced by default."""
    if name not in ENVIRONMENTS:
        raise InvalidParameter('Unknown environment {}; choose from {}'.format(
            name, ', '.join(sorted(ENVIRONMENTS))
        ))
    spec = ENVIRONMENTS[name]
    unknown = set(params) - set(spec.defaults)
    if unknown:
        raise InvalidParameter('{} takes no parameter(s) {}'.format(
            name, ', '.join(sorted(unknown))
        ))
    arguments = dict(spec.defaults)
    for (key, value) in params.items():
        arguments[key] = _coerce(value, spec.defaults[key])
    return spec.generator(**arguments)

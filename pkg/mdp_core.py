import logging
from collections import namedtuple

import numpy as np
import scipy.sparse as sp


logger = logging.getLogger(__name__)

probability_tolerance = 1e-9
STEADY_STATE = 'steady'
TRANSIENT = 'transient'
spec_kinds = (STEADY_STATE, TRANSIENT)
STATE_LABEL = 'state'
PAIR_LABEL = 'pair'


class InvalidMdp(ValueError):
    pass


class InvalidPolicy(ValueError):
    pass


class NoReachableTscc(ValueError):
    pass


Spec = namedtuple('Spec', ['label', 'lo', 'hi', 'kind'])
Spec.__new__.__defaults__ = (STEADY_STATE,)
Label = namedtuple('Label', ['kind', 'members'])


# Models

class Mdp(object):
    """Labeled finite MDP with a sparse kernel indexed by (state, action) pairs.

    Transitions are (s, a, s', p, r) tuples where a indexes A(s). Rows of the
    kernel follow the pair order: all actions of state 0, then of state 1...
    Construction only rejects structural problems; use validate() for the
    stochasticity and reference checks.
    """
    def __init__(
        self, actions, transitions, beta, labels=None, specs=(),
        state_names=None
    ):
        self.actions = [list(state_actions) for state_actions in actions]
        self.n_states = len(self.actions)
        if state_names is None:
            state_names = ['s{}'.format(s + 1) for s in range(self.n_states)]
        if len(state_names) != self.n_states:
            raise InvalidMdp('Expected {} state names, got {}'.format(
                self.n_states, len(state_names)
            ))
        self.state_names = list(state_names)
        self.state_index = {
            name: s for (s, name) in enumerate(self.state_names)
        }

        counts = [len(state_actions) for state_actions in self.actions]
        self.pair_start = np.concatenate(([0], np.cumsum(counts))).astype(int)
        self.n_pairs = int(self.pair_start[-1])
        self.pairs = [
            (s, a) for s in range(self.n_states)
            for a in range(len(self.actions[s]))
        ]
        self.pair_state = np.array(
            [s for (s, _) in self.pairs], dtype=int
        )

        entries = {}
        for (s, a, next_state, probability, reward) in transitions:
            if not 0 <= s < self.n_states or not 0 <= a < counts[s]:
                raise InvalidMdp('Unknown state-action pair ({}, {})'.format(
                    s, a
                ))
            if not 0 <= next_state < self.n_states:
                raise InvalidMdp('Unknown successor {} of ({}, {})'.format(
                    next_state, s, a
                ))
            key = (self.pair_start[s] + a, next_state)
            if key in entries:
                raise InvalidMdp('Duplicate transition ({}, {}, {})'.format(
                    s, a, next_state
                ))
            probability = float(probability)
            if -probability_tolerance <= probability < 0:
                probability = 0.0
            entries[key] = (probability, float(reward))
        keys = sorted(entries)
        rows = np.array([row for (row, _) in keys], dtype=int)
        cols = np.array([col for (_, col) in keys], dtype=int)
        probabilities = np.array([entries[key][0] for key in keys])
        rewards = np.array([entries[key][1] for key in keys])
        shape = (self.n_pairs, self.n_states)
        self.kernel = sp.csr_matrix((probabilities, (rows, cols)), shape=shape)
        self.reward_kernel = sp.csr_matrix((rewards, (rows, cols)), shape=shape)
        self.kernel.sort_indices()
        self.reward_kernel.sort_indices()
        # R(s,a) = sum_s' T(s'|s,a) R(s,a,s')
        self.reward = np.asarray(
            self.kernel.multiply(self.reward_kernel).sum(axis=1)
        ).ravel()

        beta = np.array(beta, dtype=float)
        beta[(beta < 0) & (beta >= -probability_tolerance)] = 0.0
        self.beta = beta

        self.labels = {}
        for (name, label) in (labels or {}).items():
            if not isinstance(label, Label):
                label = make_label(label)
            self.labels[name] = label
        self.specs = [
            spec if isinstance(spec, Spec) else Spec(*spec) for spec in specs
        ]

    def pair_index(self, s, a):
        return int(self.pair_start[s] + a)

    def pair_range(self, s):
        return range(self.pair_start[s], self.pair_start[s + 1])

    def successors(self, s, a):
        """Return [(s', p)] for T(.|s,a) with p > 0."""
        row = self.pair_index(s, a)
        start, end = self.kernel.indptr[row], self.kernel.indptr[row + 1]
        return [
            (int(col), float(p)) for (col, p) in zip(
                self.kernel.indices[start:end], self.kernel.data[start:end]
            ) if p > 0
        ]

    def transitions(self):
        """Iterate over stored (s, a, s', p, r) tuples in kernel order."""
        for (row, (s, a)) in enumerate(self.pairs):
            start, end = self.kernel.indptr[row], self.kernel.indptr[row + 1]
            for position in range(start, end):
                yield (
                    s, a, int(self.kernel.indices[position]),
                    float(self.kernel.data[position]),
                    float(self.reward_kernel.data[position])
                )

    def label_states(self, name):
        """Return the states touched by a label (pairs map to their state)."""
        label = self.labels[name]
        if label.kind == STATE_LABEL:
            return sorted(set(label.members))
        return sorted(set(s for (s, _) in label.members))

    def label_pair_indices(self, name):
        """Return the pair rows a label covers (all actions of state labels)."""
        label = self.labels[name]
        if label.kind == STATE_LABEL:
            return [
                row for s in sorted(set(label.members))
                for row in self.pair_range(s)
            ]
        return sorted(set(self.pair_index(s, a) for (s, a) in label.members))

    def with_specs(self, specs, labels=None):
        """Return a copy carrying different specs (and optionally labels)."""
        merged = dict(self.labels)
        merged.update(labels or {})
        return Mdp(
            self.actions, list(self.transitions()), self.beta, labels=merged,
            specs=specs, state_names=self.state_names
        )


def make_label(members):
    """Build a Label from a list of states or of (state, action) pairs."""
    members = list(members)
    if members and isinstance(members[0], (tuple, list)):
        return Label(PAIR_LABEL, tuple(
            (int(s), int(a)) for (s, a) in members
        ))
    return Label(STATE_LABEL, tuple(int(s) for s in members))


class MarkovChain(object):
    def __init__(self, matrix, beta, state_names=None):
        self.matrix = np.array(matrix, dtype=float)
        self.beta = np.array(beta, dtype=float)
        self.n_states = self.matrix.shape[0]
        if state_names is None:
            state_names = ['s{}'.format(s + 1) for s in range(self.n_states)]
        self.state_names = list(state_names)


class StationaryPolicy(object):
    """Conditional action distributions pi(.|s), one array per state."""
    def __init__(self, distributions):
        self.distributions = [
            np.array(distribution, dtype=float)
            for distribution in distributions
        ]

    @classmethod
    def uniform(cls, mdp):
        return cls(
            np.full(len(actions), 1.0 / len(actions))
            for actions in mdp.actions
        )

    @classmethod
    def deterministic(cls, mdp, choices):
        distributions = []
        for (actions, choice) in zip(mdp.actions, choices):
            distribution = np.zeros(len(actions))
            distribution[choice] = 1.0
            distributions.append(distribution)
        return cls(distributions)

    @classmethod
    def from_pair_vector(cls, mdp, vector):
        return cls(
            vector[mdp.pair_start[s]:mdp.pair_start[s + 1]]
            for s in range(mdp.n_states)
        )

    def prob(self, s, a):
        return float(self.distributions[s][a])

    def pair_vector(self):
        return np.concatenate(self.distributions)

    def check(self, mdp):
        if len(self.distributions) != mdp.n_states:
            raise InvalidPolicy('Policy covers {} states, MDP has {}'.format(
                len(self.distributions), mdp.n_states
            ))
        for (s, distribution) in enumerate(self.distributions):
            if len(distribution) != len(mdp.actions[s]):
                raise InvalidPolicy(
                    'Policy row {} has {} entries for {} actions'.format(
                        mdp.state_names[s], len(distribution),
                        len(mdp.actions[s])
                    )
                )
            if np.any(distribution < -probability_tolerance):
                raise InvalidPolicy('Negative probability in row {}'.format(
                    mdp.state_names[s]
                ))
            total = distribution.sum()
            if abs(total - 1) > probability_tolerance:
                raise InvalidPolicy('Policy row {} sums to {}'.format(
                    mdp.state_names[s], total
                ))


# Validation

class ValidationReport(object):
    def __init__(self, violations=()):
        self.violations = list(violations)

    @property
    def valid(self):
        return not self.violations

    def __bool__(self):
        return self.valid

    def __str__(self):
        if self.valid:
            return 'valid'
        return '\n'.join(self.violations)


def validate(mdp):
    violations = []
    for (s, actions) in enumerate(mdp.actions):
        if not actions:
            violations.append('state {} has no actions'.format(
                mdp.state_names[s]
            ))
    row_sums = np.asarray(mdp.kernel.sum(axis=1)).ravel()
    for (row, (s, a)) in enumerate(mdp.pairs):
        if abs(row_sums[row] - 1) > probability_tolerance:
            violations.append('kernel row ({}, {}) sums to {:.12g}'.format(
                mdp.state_names[s], mdp.actions[s][a], row_sums[row]
            ))
    if np.any(mdp.kernel.data < 0):
        violations.append('kernel has negative probabilities')
    if len(mdp.beta) != mdp.n_states:
        violations.append('beta has {} entries for {} states'.format(
            len(mdp.beta), mdp.n_states
        ))
    else:
        if np.any(mdp.beta < 0) or np.any(mdp.beta > 1):
            violations.append('beta entries must lie in [0, 1]')
        if abs(mdp.beta.sum() - 1) > probability_tolerance:
            violations.append('beta sums to {:.12g}'.format(mdp.beta.sum()))
    for (name, label) in mdp.labels.items():
        for member in label.members:
            s, a = member if label.kind == PAIR_LABEL else (member, 0)
            if not 0 <= s < mdp.n_states:
                violations.append('label {} references unknown state {}'.format(
                    name, s
                ))
            elif label.kind == PAIR_LABEL and not 0 <= a < len(mdp.actions[s]):
                violations.append(
                    'label {} references unknown action {} of {}'.format(
                        name, a, mdp.state_names[s]
                    )
                )
    for (i, spec) in enumerate(mdp.specs):
        if spec.label not in mdp.labels:
            violations.append('spec {} references unknown label {}'.format(
                i, spec.label
            ))
        if spec.kind not in spec_kinds:
            violations.append('spec {} has unknown kind {}'.format(
                i, spec.kind
            ))
        if spec.lo > spec.hi:
            violations.append('spec {} on {} has lo > hi'.format(
                i, spec.label
            ))
        if spec.kind == STEADY_STATE and not (0 <= spec.lo and spec.hi <= 1):
            violations.append(
                'steady-state spec {} on {} has bounds outside [0, 1]'.format(
                    i, spec.label
                )
            )
        if spec.kind == TRANSIENT and spec.lo < 0:
            violations.append(
                'transient spec {} on {} has a negative bound'.format(
                    i, spec.label
                )
            )
    return ValidationReport(violations)


# Graphs

class Digraph(object):
    """Adjacency-list digraph over vertices 0..n-1 with sorted successors."""
    def __init__(self, n, edges=()):
        self.n = n
        successors = [set() for _ in range(n)]
        for (u, v) in edges:
            successors[u].add(v)
        self.successors = [sorted(targets) for targets in successors]

    @property
    def edges(self):
        return [(u, v) for u in range(self.n) for v in self.successors[u]]

    def reachable(self, sources):
        seen = np.zeros(self.n, dtype=bool)
        stack = list(sources)
        for source in stack:
            seen[source] = True
        while stack:
            u = stack.pop()
            for v in self.successors[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        return seen


def transition_graph(model):
    if isinstance(model, MarkovChain):
        (rows, cols) = np.nonzero(model.matrix > 0)
        return Digraph(model.n_states, zip(rows.tolist(), cols.tolist()))
    kernel = model.kernel.tocoo()
    positive = kernel.data > 0
    return Digraph(model.n_states, zip(
        model.pair_state[kernel.row[positive]].tolist(),
        kernel.col[positive].tolist()
    ))


def tarjan_sccs(graph):
    """Return the SCCs of a digraph in reverse topological order.

    Iterative Tarjan: an SCC is emitted only after every SCC reachable from it,
    so sinks of the condensation come first.
    """
    index = [None] * graph.n
    lowlink = [0] * graph.n
    on_stack = [False] * graph.n
    stack = []
    components = []
    counter = 0
    for root in range(graph.n):
        if index[root] is not None:
            continue
        work = [(root, 0)]
        while work:
            (v, position) = work.pop()
            if position == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            successors = graph.successors[v]
            while position < len(successors):
                w = successors[position]
                position += 1
                if index[w] is None:
                    work.append((v, position))
                    work.append((w, 0))
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            else:
                if lowlink[v] == index[v]:
                    component = []
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        component.append(w)
                        if w == v:
                            break
                    components.append(sorted(component))
                if work:
                    parent = work[-1][0]
                    lowlink[parent] = min(lowlink[parent], lowlink[v])
    return components


def closed_components(graph, components):
    """Return the SCCs with no edge leaving them."""
    membership = np.empty(graph.n, dtype=int)
    for (i, component) in enumerate(components):
        membership[component] = i
    return [
        component for (i, component) in enumerate(components)
        if all(
            membership[v] == i
            for u in component for v in graph.successors[u]
        )
    ]


def gcd_period(graph, component):
    """Return the period of a strongly connected component (BFS level gcd)."""
    members = set(component)
    level = {component[0]: 0}
    frontier = [component[0]]
    period = 0
    while frontier:
        next_frontier = []
        for u in frontier:
            for v in graph.successors[u]:
                if v not in members:
                    continue
                if v in level:
                    period = np.gcd(period, level[u] + 1 - level[v])
                else:
                    level[v] = level[u] + 1
                    next_frontier.append(v)
        frontier = next_frontier
    return int(period) if period else 1


# Classification

class StateClassification(object):
    """TSCCs, their union and the states outside it.

    For chains, recurrent_classes lists every closed class (isolated ones
    included), and transient/isolated split the remaining states by
    reachability from the support of beta.
    """
    def __init__(
        self, n_states, tsccs, recurrent_classes=None, transient=None,
        isolated=None, periods=None
    ):
        self.n_states = n_states
        self.tsccs = [tuple(sorted(tscc)) for tscc in tsccs]
        self.tsccs.sort()
        self.recurrent_union = frozenset(s for tscc in self.tsccs for s in tscc)
        self.complement = tuple(
            s for s in range(n_states) if s not in self.recurrent_union
        )
        if recurrent_classes is None:
            recurrent_classes = self.tsccs
        self.recurrent_classes = sorted(
            tuple(sorted(component)) for component in recurrent_classes
        )
        self.transient = tuple(sorted(transient or ()))
        self.isolated = tuple(sorted(isolated or ()))
        self.periods = periods or {}

    def status(self, s):
        if s in self.isolated:
            return 'isolated'
        if s in self.recurrent_union:
            return 'recurrent'
        return 'transient'

    def tscc_of(self, s):
        for (k, tscc) in enumerate(self.tsccs):
            if s in tscc:
                return k
        return None

    def summary(self):
        return '{} TSCC{} ({})'.format(
            len(self.tsccs), '' if len(self.tsccs) == 1 else 's',
            ', '.join(str(len(tscc)) for tscc in self.tsccs)
        )


def _classify(graph, beta):
    components = tarjan_sccs(graph)
    closed = closed_components(graph, components)
    reachable = graph.reachable(np.flatnonzero(beta > 0))
    tsccs = [component for component in closed if reachable[component[0]]]
    recurrent = set(s for tscc in tsccs for s in tscc)
    transient = [
        s for s in range(graph.n) if reachable[s] and s not in recurrent
    ]
    isolated = [s for s in range(graph.n) if not reachable[s]]
    periods = {
        tuple(component): gcd_period(graph, component) for component in closed
    }
    return StateClassification(
        graph.n, tsccs, recurrent_classes=closed, transient=transient,
        isolated=isolated, periods=periods
    )


def classify_mdp(mdp):
    classification = _classify(transition_graph(mdp), mdp.beta)
    if not classification.tsccs:
        raise NoReachableTscc('No TSCC is reachable from the support of beta')
    logger.debug('MDP classification: %s', classification.summary())
    return classification


def classify_chain(chain):
    return _classify(transition_graph(chain), chain.beta)


# Policies

def induced_chain(mdp, pi):
    pi.check(mdp)
    weights = sp.csr_matrix(
        (pi.pair_vector(), (mdp.pair_state, np.arange(mdp.n_pairs))),
        shape=(mdp.n_states, mdp.n_pairs)
    )
    matrix = (weights @ mdp.kernel).toarray()
    return MarkovChain(matrix, mdp.beta, state_names=mdp.state_names)


class PolicyClass(namedtuple('PolicyClass', ['ep', 'cp', 'cpu'])):
    @property
    def name(self):
        if self.ep:
            return 'EP'
        if self.cp:
            return 'CP'
        if self.cpu:
            return 'CPU'
        return 'none'


def policy_class(mdp, pi, mdp_classification=None, chain_classification=None):
    if mdp_classification is None:
        mdp_classification = classify_mdp(mdp)
    if chain_classification is None:
        chain_classification = classify_chain(induced_chain(mdp, pi))
    mdp_tsccs = set(mdp_classification.tsccs)
    chain_tsccs = set(chain_classification.tsccs)

    cp = chain_tsccs == mdp_tsccs
    full_support = all(
        np.all(pi.distributions[s] > 0)
        for s in mdp_classification.recurrent_union
    )
    ep = cp and full_support
    contained = chain_classification.recurrent_union.issubset(
        mdp_classification.recurrent_union
    )
    unique = all(
        sum(1 for tscc in chain_tsccs if set(tscc).issubset(mdp_tscc)) == 1
        for mdp_tscc in mdp_tsccs
    )
    cpu = contained and unique
    return PolicyClass(ep, cp or ep, cpu or cp or ep)

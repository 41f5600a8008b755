"""Linear programs for steady-state policy synthesis and the cut loop.

Every builder returns an lp.LinearProgram over VarKey variables: x and y per
state-action pair, and flow variables on the relation edges of each TSCC for
LP2. Constraint tags follow the constraint groups (i)-(xv) of the programs.
"""
import logging
from collections import namedtuple

import numpy as np

from chain_analysis import check_transient_label
from lp import (
    EQ, GE, LE, OPTIMAL, UNBOUNDED, LinearProgram, SolverError, make_solver
)
from mdp_core import (
    STEADY_STATE, TRANSIENT, Digraph, StationaryPolicy, classify_mdp,
    closed_components, tarjan_sccs
)


logger = logging.getLogger(__name__)

X = 'x'
Y = 'y'
FLOW = 'f'
FLOW_REV = 'frev'

FILL_RULES = ('uniform', 'first')
MODES = ('ep', 'cp', 'cpu', 'lp3', 'lp0', 'kallenberg', 'unichain')
GUARANTEED_MODES = ('ep', 'cp', 'cpu')


class Infeasible(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    pass


VarKey = namedtuple('VarKey', ['kind', 'first', 'second'])


def x_key(s, a):
    return VarKey(X, s, a)


def y_key(s, a):
    return VarKey(Y, s, a)


class SynthesisConfig(object):
    def __init__(
        self, epsilon_pos=1e-4, epsilon_flow=None, epsilon_cut=1e-4,
        support_threshold=1e-12, fill_rule='uniform', max_cut_iterations=None,
        solver='simplex'
    ):
        for (name, value) in (
            ('epsilon_pos', epsilon_pos), ('epsilon_cut', epsilon_cut),
            ('epsilon_flow', epsilon_flow)
        ):
            if value is not None and not value > 0:
                raise ValueError('{} must be positive, got {}'.format(
                    name, value
                ))
        if fill_rule not in FILL_RULES:
            raise ValueError('Unknown fill rule: {}'.format(fill_rule))
        self.epsilon_pos = epsilon_pos
        self.epsilon_flow = epsilon_flow
        self.epsilon_cut = epsilon_cut
        self.support_threshold = support_threshold
        self.fill_rule = fill_rule
        self.max_cut_iterations = max_cut_iterations
        self.solver = solver

    @classmethod
    def from_settings(cls, settings):
        return cls(**(settings or {}))


# Constraint groups

def _declare_pairs(lp, mdp, with_y=True):
    for (s, a) in mdp.pairs:
        lp.add_variable(x_key(s, a), 0.0, 1.0)
    if with_y:
        for (s, a) in mdp.pairs:
            lp.add_variable(y_key(s, a), 0.0, np.inf)


def _set_reward_objective(lp, mdp):
    lp.set_objective({
        x_key(s, a): mdp.reward[row]
        for (row, (s, a)) in enumerate(mdp.pairs) if mdp.reward[row] != 0
    })


def _inflows(mdp):
    """Yield (s', [(s, a, T(s'|s,a))]) for every state s'."""
    columns = mdp.kernel.tocsc()
    for target in range(mdp.n_states):
        start, end = columns.indptr[target], columns.indptr[target + 1]
        yield (target, [
            mdp.pairs[row] + (float(p),) for (row, p) in zip(
                columns.indices[start:end], columns.data[start:end]
            ) if p > 0
        ])


def _add_balance(lp, mdp, with_y=True):
    inflows = list(_inflows(mdp))
    for (target, sources) in inflows:
        row = [(x_key(s, a), p) for (s, a, p) in sources]
        row.extend(
            (x_key(target, a), -1.0) for a in range(len(mdp.actions[target]))
        )
        lp.add_constraint(row, EQ, 0.0, 'i')
    if not with_y:
        return
    for (target, sources) in inflows:
        row = [(y_key(s, a), p) for (s, a, p) in sources]
        for a in range(len(mdp.actions[target])):
            row.append((x_key(target, a), -1.0))
            row.append((y_key(target, a), -1.0))
        lp.add_constraint(row, EQ, -mdp.beta[target], 'ii')


def _add_transient_zero(lp, mdp, cls):
    lp.add_constraint(
        [
            (x_key(f, a), 1.0) for f in cls.complement
            for a in range(len(mdp.actions[f]))
        ],
        EQ, 0.0, 'iii'
    )


def _label_pairs(mdp, name):
    return [mdp.pairs[row] for row in mdp.label_pair_indices(name)]


def add_steady_state_spec_constraints(lp, mdp, specs=None):
    """Add (iv) rows l <= sum of x over the label <= u."""
    specs = mdp.specs if specs is None else specs
    for spec in specs:
        if spec.kind != STEADY_STATE:
            continue
        row = [(x_key(s, a), 1.0) for (s, a) in _label_pairs(mdp, spec.label)]
        if spec.lo > 0:
            lp.add_constraint(row, GE, spec.lo, 'iv')
        if spec.hi < 1:
            lp.add_constraint(row, LE, spec.hi, 'iv')
    return lp


def add_transient_spec_constraints(lp, mdp, cls, specs=None):
    """Add (xv) rows l <= sum of y over the label <= u."""
    specs = mdp.specs if specs is None else specs
    for spec in specs:
        if spec.kind != TRANSIENT:
            continue
        check_transient_label(mdp, cls, spec.label)
        row = [(y_key(s, a), 1.0) for (s, a) in _label_pairs(mdp, spec.label)]
        if spec.lo > 0:
            lp.add_constraint(row, GE, spec.lo, 'xv')
        if np.isfinite(spec.hi):
            lp.add_constraint(row, LE, spec.hi, 'xv')
    return lp


def _add_specs(lp, mdp, cls, specs):
    add_steady_state_spec_constraints(lp, mdp, specs)
    add_transient_spec_constraints(lp, mdp, cls, specs)


# Programs

def build_q0(mdp, cls, name='Q0'):
    lp = LinearProgram(name)
    _declare_pairs(lp, mdp)
    _add_balance(lp, mdp)
    _add_transient_zero(lp, mdp, cls)
    return lp


def build_lp0(mdp, cls):
    """Q0 with the reward objective; no correspondence guarantee."""
    lp = build_q0(mdp, cls, name='LP0')
    _set_reward_objective(lp, mdp)
    return lp


def build_lp3(mdp, cls, specs=None):
    lp = build_q0(mdp, cls, name='LP3')
    _set_reward_objective(lp, mdp)
    _add_specs(lp, mdp, cls, specs)
    return lp


def build_lp1(mdp, cls, specs=None, cfg=None):
    cfg = cfg or SynthesisConfig()
    lp = build_q0(mdp, cls, name='LP1')
    _set_reward_objective(lp, mdp)
    _add_specs(lp, mdp, cls, specs)
    # (v)': every action of a TSCC state keeps positive mass
    for s in sorted(cls.recurrent_union):
        for a in range(len(mdp.actions[s])):
            lp.set_bounds(x_key(s, a), lo=cfg.epsilon_pos, tag='v')
    return lp


def relation_edges(mdp, tscc):
    """Map each edge (s, s') of T^rel inside a TSCC to its [(action, p)] list."""
    members = set(tscc)
    edges = {}
    for s in tscc:
        for a in range(len(mdp.actions[s])):
            for (target, p) in mdp.successors(s, a):
                if target != s and target in members:
                    edges.setdefault((s, target), []).append((a, p))
    return dict(sorted(edges.items()))


def flow_epsilon(mdp, tscc, cfg):
    """Flow strictness for one TSCC, small enough to keep LP1 inside LP2."""
    if cfg.epsilon_flow is not None:
        return cfg.epsilon_flow
    edges = relation_edges(mdp, tscc)
    weakest = min(
        (max(p for (_, p) in capacities) for capacities in edges.values()),
        default=1.0
    )
    return cfg.epsilon_pos * weakest / (len(tscc) + 1)


def _capacity(u, capacities, sign=1.0):
    return [(x_key(u, a), sign * p) for (a, p) in capacities]


def _add_flow_constraints(lp, mdp, tscc, epsilon):
    if len(tscc) == 1:
        (s,) = tscc
        lp.add_constraint(
            [(x_key(s, a), 1.0) for a in range(len(mdp.actions[s]))],
            GE, epsilon, 'xii'
        )
        return
    root = min(tscc)
    edges = relation_edges(mdp, tscc)
    for (u, v) in edges:
        lp.add_variable(VarKey(FLOW, u, v), 0.0, 1.0)
        lp.add_variable(VarKey(FLOW_REV, u, v), 0.0, 1.0)

    for ((u, v), capacities) in edges.items():
        flow = VarKey(FLOW, u, v)
        reverse = VarKey(FLOW_REV, u, v)
        if u == root:
            lp.add_constraint(
                [(flow, 1.0)] + _capacity(u, capacities, -1.0), EQ, 0.0, 'vi'
            )
        else:
            lp.add_constraint(
                [(flow, 1.0)] + _capacity(u, capacities, -1.0), LE, 0.0, 'viii'
            )
        # Reverse flow runs from v back to u over the same capacity.
        if v == root:
            lp.add_constraint(
                [(reverse, 1.0)] + _capacity(u, capacities, -1.0), EQ, 0.0,
                'vii'
            )
        else:
            lp.add_constraint(
                [(reverse, 1.0)] + _capacity(u, capacities, -1.0), LE, 0.0,
                'ix'
            )

    incoming = {s: [] for s in tscc}
    outgoing = {s: [] for s in tscc}
    for (u, v) in edges:
        outgoing[u].append((u, v))
        incoming[v].append((u, v))
    for s in tscc:
        flow_in = [(VarKey(FLOW, u, v), 1.0) for (u, v) in incoming[s]]
        flow_out = [(VarKey(FLOW, u, v), -1.0) for (u, v) in outgoing[s]]
        reverse_in = [(VarKey(FLOW_REV, u, v), 1.0) for (u, v) in outgoing[s]]
        reverse_out = [
            (VarKey(FLOW_REV, u, v), -1.0) for (u, v) in incoming[s]
        ]
        if s != root:
            lp.add_constraint(flow_in + flow_out, GE, epsilon, 'x')
            lp.add_constraint(reverse_in + reverse_out, GE, epsilon, 'xi')
        lp.add_constraint(flow_in, GE, epsilon, 'xii')
        lp.add_constraint(reverse_in, GE, epsilon, 'xiii')


def build_lp2(mdp, cls, specs=None, cfg=None):
    cfg = cfg or SynthesisConfig()
    lp = build_q0(mdp, cls, name='LP2')
    _set_reward_objective(lp, mdp)
    _add_specs(lp, mdp, cls, specs)
    for tscc in cls.tsccs:
        _add_flow_constraints(lp, mdp, tscc, flow_epsilon(mdp, tscc, cfg))
    return lp


def build_kallenberg(mdp, specs=None, cls=None):
    """Kallenberg's multichain LP, optionally carrying (iv) and (xv)."""
    lp = LinearProgram('Kallenberg')
    _declare_pairs(lp, mdp)
    _add_balance(lp, mdp)
    _set_reward_objective(lp, mdp)
    specs = mdp.specs if specs is None else specs
    add_steady_state_spec_constraints(lp, mdp, specs)
    if any(spec.kind == TRANSIENT for spec in specs):
        add_transient_spec_constraints(
            lp, mdp, cls or classify_mdp(mdp), specs
        )
    return lp


def build_unichain_lp(mdp):
    """Occupation-measure LP that is only exact for unichain MDPs."""
    lp = LinearProgram('Unichain')
    _declare_pairs(lp, mdp, with_y=False)
    _add_balance(lp, mdp, with_y=False)
    lp.add_constraint(
        [(x_key(s, a), 1.0) for (s, a) in mdp.pairs], EQ, 1.0, 'normalization'
    )
    _set_reward_objective(lp, mdp)
    return lp


# Solutions and policies

def pair_values(solution, mdp, kind=X):
    """Return the x (or y) variables of a solution as a pair vector."""
    index = solution.lp.index
    values = np.zeros(mdp.n_pairs)
    for (row, (s, a)) in enumerate(mdp.pairs):
        j = index.get(VarKey(kind, s, a))
        if j is not None:
            values[row] = solution.values[j]
    return values


def extract_policy(solution, mdp, cfg=None):
    """pi(a|s) = x_sa/x_s on E_x, y_sa/y_s on E_y, the fill rule elsewhere."""
    cfg = cfg or SynthesisConfig()
    threshold = cfg.support_threshold
    x = np.clip(pair_values(solution, mdp, X), 0.0, None)
    y = np.clip(pair_values(solution, mdp, Y), 0.0, None)
    distributions = []
    for s in range(mdp.n_states):
        rows = mdp.pair_range(s)
        (x_s, y_s) = (x[rows], y[rows])
        if x_s.sum() > threshold:
            distributions.append(x_s / x_s.sum())
        elif y_s.sum() > threshold:
            distributions.append(y_s / y_s.sum())
        elif cfg.fill_rule == 'first':
            distribution = np.zeros(len(rows))
            distribution[0] = 1.0
            distributions.append(distribution)
        else:
            distributions.append(np.full(len(rows), 1.0 / len(rows)))
    return StationaryPolicy(distributions)


SupportGraph = namedtuple('SupportGraph', ['vertices', 'edges', 'graph'])
Cut = namedtuple('Cut', ['states', 'pairs'])


def support_digraph(x, mdp, tscc, threshold=1e-12):
    """Support digraph (V+, E+) of a pair vector x inside one TSCC.

    Vertex ids of the returned Digraph are positions in SupportGraph.vertices.
    Targets of support edges are included even when they carry no mass.
    """
    members = set(tscc)
    vertices = set()
    edges = set()
    for s in tscc:
        rows = mdp.pair_range(s)
        if x[rows].sum() <= threshold:
            continue
        vertices.add(s)
        for a in range(len(mdp.actions[s])):
            if x[mdp.pair_index(s, a)] <= threshold:
                continue
            for (target, _) in mdp.successors(s, a):
                if target in members:
                    edges.add((s, target))
    nodes = sorted(vertices | set(v for (_, v) in edges))
    position = {s: i for (i, s) in enumerate(nodes)}
    graph = Digraph(
        len(nodes), [(position[u], position[v]) for (u, v) in edges]
    )
    return SupportGraph(nodes, sorted(edges), graph)


def _leaving_pairs(mdp, tscc, states):
    inside = set(states)
    rest = set(tscc) - inside
    return [
        (s, a) for s in sorted(inside) for a in range(len(mdp.actions[s]))
        if any(target in rest for (target, _) in mdp.successors(s, a))
    ]


def find_cuts(support, tscc, mdp):
    """One cut per sink component of the support condensation.

    An empty support forces mass onto the lowest state of the TSCC.
    """
    if not support.vertices:
        s = min(tscc)
        return [Cut((s,), [(s, a) for a in range(len(mdp.actions[s]))])]
    components = tarjan_sccs(support.graph)
    if len(components) == 1:
        return []
    cuts = []
    for component in closed_components(support.graph, components):
        states = tuple(support.vertices[i] for i in component)
        pairs = _leaving_pairs(mdp, tscc, states)
        if pairs:
            cuts.append(Cut(states, pairs))
    return cuts


def add_cut_constraint(lp, cut, epsilon):
    lp.add_constraint(
        [(x_key(s, a), 1.0) for (s, a) in cut.pairs], GE, epsilon, 'cut'
    )


CutIteration = namedtuple('CutIteration', ['iteration', 'objective', 'cuts'])


def synthesize_cpu(mdp, cls, specs=None, cfg=None, solver=None):
    """Solve LP3 with accumulated cuts until each TSCC support is an SCC.

    Returns (policy, trace, solution).
    """
    cfg = cfg or SynthesisConfig()
    solver = solver or make_solver(cfg.solver)
    budget = cfg.max_cut_iterations or mdp.n_states * max(
        len(actions) for actions in mdp.actions
    )
    lp = build_lp3(mdp, cls, specs)
    lp.name = 'LP3+cuts'
    trace = []
    seen = set()
    for iteration in range(1, budget + 1):
        solution = solver.solve(lp)
        if solution.status != OPTIMAL:
            raise Infeasible('{} is {} at iteration {}'.format(
                lp.name, solution.status, iteration
            ))
        x = pair_values(solution, mdp, X)
        cuts = []
        for tscc in cls.tsccs:
            support = support_digraph(x, mdp, tscc, cfg.support_threshold)
            cuts.extend(find_cuts(support, tscc, mdp))
        trace.append(CutIteration(iteration, solution.objective, cuts))
        logger.info(
            'Cut iteration %d: objective %.6f, %d new cuts',
            iteration, solution.objective, len(cuts)
        )
        if not cuts:
            return (extract_policy(solution, mdp, cfg), trace, solution)
        for cut in cuts:
            signature = frozenset(cut.pairs)
            if signature in seen:
                raise SolverError(
                    'Cut on {} repeated at iteration {}'.format(
                        ', '.join(mdp.state_names[s] for s in cut.states),
                        iteration
                    )
                )
            seen.add(signature)
            add_cut_constraint(lp, cut, cfg.epsilon_cut)
    raise BudgetExhausted('No strongly connected support after {} iterations'
                          .format(budget))


# Entry point

class SynthesisResult(object):
    def __init__(
        self, mode, policy, solution, objective, iterations=1, trace=()
    ):
        self.mode = mode
        self.policy = policy
        self.solution = solution
        self.objective = objective
        self.iterations = iterations
        self.trace = list(trace)

    @property
    def lp(self):
        return self.solution.lp

    @property
    def guaranteed(self):
        return self.mode in GUARANTEED_MODES

    def x(self, mdp):
        return pair_values(self.solution, mdp, X)

    def y(self, mdp):
        return pair_values(self.solution, mdp, Y)


def _solve_or_raise(lp, solver):
    solution = solver.solve(lp)
    if solution.status == UNBOUNDED:
        raise SolverError('{} is unbounded'.format(lp.name))
    if solution.status != OPTIMAL:
        raise Infeasible('{} is {}'.format(lp.name, solution.status))
    return solution


def build_program(mdp, mode, cls=None, cfg=None):
    """Build the single LP behind a non-iterative mode."""
    cfg = cfg or SynthesisConfig()
    if mode == 'kallenberg':
        return build_kallenberg(mdp, cls=cls)
    if mode == 'unichain':
        return build_unichain_lp(mdp)
    cls = cls or classify_mdp(mdp)
    if mode == 'ep':
        return build_lp1(mdp, cls, cfg=cfg)
    if mode == 'cp':
        return build_lp2(mdp, cls, cfg=cfg)
    if mode == 'lp3':
        return build_lp3(mdp, cls)
    if mode == 'lp0':
        return build_lp0(mdp, cls)
    raise ValueError('No single program for mode {}'.format(mode))


def synthesize(mdp, mode='cpu', cfg=None, solver=None):
    if mode not in MODES:
        raise ValueError('Unknown synthesis mode: {}'.format(mode))
    cfg = cfg or SynthesisConfig()
    solver = solver or make_solver(cfg.solver)
    needs_classes = mode not in ('kallenberg', 'unichain') or any(
        spec.kind == TRANSIENT for spec in mdp.specs
    )
    cls = classify_mdp(mdp) if needs_classes else None
    if mode == 'cpu':
        (policy, trace, solution) = synthesize_cpu(
            mdp, cls, cfg=cfg, solver=solver
        )
        return SynthesisResult(
            mode, policy, solution, solution.objective,
            iterations=len(trace), trace=trace
        )
    solution = _solve_or_raise(build_program(mdp, mode, cls, cfg), solver)
    logger.info('%s optimum %.6f', solution.lp.name, solution.objective)
    return SynthesisResult(
        mode, extract_policy(solution, mdp, cfg), solution, solution.objective
    )

import itertools

import numpy as np
import pytest

import environments
from chain_analysis import (
    check_specs, expected_average_reward, occupation_measure, verify
)
from lp import OPTIMAL, LpSolution, RevisedSimplexSolver
from lp_synthesis import (
    FLOW, X, BudgetExhausted, Cut, Infeasible, SynthesisConfig, VarKey,
    build_kallenberg, build_lp1, build_lp2, build_lp3, build_q0,
    build_unichain_lp, extract_policy, find_cuts, flow_epsilon, pair_values,
    relation_edges, support_digraph, synthesize, x_key, y_key
)
from mdp_core import (
    TRANSIENT, Mdp, Spec, StationaryPolicy, classify_mdp, policy_class
)


def correspondence_holds(mdp, result, tolerance=1e-6):
    report = verify(mdp, result.policy, x=result.x(mdp))
    assert report.residual <= tolerance, (result.mode, report.residual)
    assert report.specs_satisfied, [
        (r.spec.label, r.attained) for r in report.spec_results
    ]
    return report


def objective(mdp, mode, solver, **settings):
    return synthesize(mdp, mode, SynthesisConfig(**settings), solver).objective


# Programs

def test_q0_shape():
    mdp = environments.three_state('lp0')
    lp = build_q0(mdp, classify_mdp(mdp))
    assert lp.n_variables == 12
    assert lp.n_constraints == 7
    assert (lp.count('i'), lp.count('ii'), lp.count('iii')) == (3, 3, 1)


def test_lp1_bounds_tscc_pairs():
    mdp = environments.three_state('delta')
    lp = build_lp1(mdp, classify_mdp(mdp), cfg=SynthesisConfig(epsilon_pos=0.01))
    for (s, a) in mdp.pairs:
        expected = 0.01 if s in (1, 2) else 0.0
        assert lp.lower[lp.index[x_key(s, a)]] == expected
    assert set(lp.bound_tags.values()) == {'v'}
    assert len(lp.bound_tags) == 4


def test_relation_edges_and_flow_epsilon():
    mdp = environments.three_state('delta')
    assert relation_edges(mdp, (1, 2)) == {
        (1, 2): [(0, 1.0)], (2, 1): [(0, 1.0)]
    }
    cfg = SynthesisConfig(epsilon_pos=3e-4)
    assert flow_epsilon(mdp, (1, 2), cfg) == pytest.approx(1e-4)
    cfg = SynthesisConfig(epsilon_flow=1e-6)
    assert flow_epsilon(mdp, (1, 2), cfg) == 1e-6


def test_lp2_flow_rows():
    mdp = environments.three_state('delta')
    lp = build_lp2(mdp, classify_mdp(mdp))
    counts = {tag: lp.count(tag) for tag in (
        'vi', 'vii', 'viii', 'ix', 'x', 'xi', 'xii', 'xiii'
    )}
    assert counts == {
        'vi': 1, 'vii': 1, 'viii': 1, 'ix': 1, 'x': 1, 'xi': 1,
        'xii': 2, 'xiii': 2,
    }
    assert VarKey(FLOW, 1, 2) in lp.index


def test_lp2_singleton_rows():
    mdp = Mdp(
        [['a'], ['a']], [(0, 0, 1, 1.0, 0.0), (1, 0, 1, 1.0, 1.0)],
        [1.0, 0.0]
    )
    lp = build_lp2(mdp, classify_mdp(mdp))
    assert lp.count('xii') == 1
    assert lp.count('vi') == 0


def test_kallenberg_and_unichain_programs():
    mdp = environments.three_state('example1')
    lp = build_kallenberg(mdp)
    assert lp.count('iii') == 0
    assert lp.count('iv') == 2
    unichain = build_unichain_lp(mdp)
    assert unichain.n_variables == mdp.n_pairs
    assert unichain.count('normalization') == 1
    assert y_key(1, 0) not in unichain.index


def test_spec_rows_respect_bounds():
    mdp = environments.three_state('delta').with_specs(
        [Spec('at_s2', 0.0, 0.6, 'steady'), Spec('at_s3', 0.2, 1.0, 'steady')],
        labels={'at_s2': [1], 'at_s3': [2]}
    )
    lp = build_lp3(mdp, classify_mdp(mdp))
    assert lp.count('iv') == 2
    relations = [c.relation for c in lp.constraints if c.tag == 'iv']
    assert relations == ['<=', '>=']


def test_transient_spec_rows():
    mdp = environments.fig13_mdp(pair_labels=True)
    lp = build_lp3(mdp, classify_mdp(mdp))
    assert lp.count('xv') == 3


# Three-state fixture

@pytest.mark.parametrize('delta', [0.1, 0.01, 0.001])
def test_lp1_delta_sweep(delta, solver):
    mdp = environments.three_state('delta')
    result = synthesize(
        mdp, 'ep', SynthesisConfig(epsilon_pos=delta), solver
    )
    assert result.objective == pytest.approx(0.5 - 1.2 * delta, abs=1e-8)
    x = result.x(mdp)
    assert x[mdp.pair_index(1, 1)] == pytest.approx(1 - 3 * delta, abs=1e-8)
    assert result.policy.prob(1, 0) == pytest.approx(
        delta / (1 - 2 * delta), abs=1e-8
    )
    assert result.policy.prob(2, 0) == pytest.approx(0.5, abs=1e-8)
    assert result.policy.prob(2, 1) == pytest.approx(0.5, abs=1e-8)
    correspondence_holds(mdp, result)


def test_lp1_approaches_ep_optimum(simplex):
    mdp = environments.three_state('delta')
    gaps = []
    for delta in (0.1, 0.01, 0.001):
        closed_form = 0.5 - 0.8 * delta + 0.4 * delta ** 2
        gaps.append(closed_form - objective(mdp, 'ep', simplex, epsilon_pos=delta))
    assert all(gap > 0 for gap in gaps)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_lp0_objective(solver):
    mdp = environments.three_state('lp0')
    assert objective(mdp, 'lp0', solver) == pytest.approx(1.0)


def test_kallenberg_breaks_correspondence(solver):
    mdp = environments.three_state('example1')
    result = synthesize(mdp, 'kallenberg', SynthesisConfig(), solver)
    x = result.x(mdp)
    assert x[mdp.pair_index(1, 1)] == pytest.approx(0.5)
    assert x[mdp.pair_index(2, 1)] == pytest.approx(0.5)
    report = verify(mdp, result.policy, x=x)
    assert report.measure.value(1, 1) == pytest.approx(1.0)
    assert report.residual >= 0.49
    assert not report.specs_satisfied


def test_guaranteed_modes_on_example1(solver):
    mdp = environments.three_state('example1')
    for mode in ('ep', 'cp', 'cpu'):
        result = synthesize(mdp, mode, SynthesisConfig(), solver)
        assert result.guaranteed
        correspondence_holds(mdp, result)


def test_unichain_mode():
    mdp = environments.three_state('delta')
    result = synthesize(mdp, 'unichain', SynthesisConfig(),
                        RevisedSimplexSolver())
    assert result.objective == pytest.approx(0.5)
    assert not result.guaranteed
    assert result.policy.prob(1, 1) == pytest.approx(1.0)


def test_contradictory_specs_are_infeasible(simplex):
    mdp = environments.three_state('delta').with_specs(
        [Spec('at_s2', 0.8, 1.0, 'steady'), Spec('at_s3', 0.8, 1.0, 'steady')],
        labels={'at_s2': [1], 'at_s3': [2]}
    )
    for mode in ('ep', 'cp', 'cpu', 'lp3', 'kallenberg'):
        with pytest.raises(Infeasible):
            synthesize(mdp, mode, SynthesisConfig(), simplex)


def test_unknown_mode():
    with pytest.raises(ValueError):
        synthesize(environments.fig6_mdp(), 'lp9')


# Policy extraction

def test_extract_policy_fill_rules(simplex):
    mdp = environments.fig6_mdp()
    result = synthesize(mdp, 'lp3', SynthesisConfig(), simplex)
    x = result.x(mdp)
    y = pair_values(result.solution, mdp, 'y')
    for rule in ('uniform', 'first'):
        pi = extract_policy(
            result.solution, mdp, SynthesisConfig(fill_rule=rule)
        )
        pi.check(mdp)
        for s in range(mdp.n_states):
            rows = list(mdp.pair_range(s))
            if x[rows].sum() > 1e-12:
                assert np.allclose(pi.distributions[s], x[rows] / x[rows].sum())
            elif y[rows].sum() > 1e-12:
                assert np.allclose(pi.distributions[s], y[rows] / y[rows].sum())
            elif rule == 'first':
                assert pi.distributions[s][0] == 1.0


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthesisConfig(epsilon_pos=0.0)
    with pytest.raises(ValueError):
        SynthesisConfig(fill_rule='random')


# Cuts

def test_support_digraph_and_cuts():
    mdp = environments.fig13_mdp()
    x = np.zeros(mdp.n_pairs)
    x[mdp.pair_index(5, 0)] = 0.1
    x[mdp.pair_index(7, 0)] = 0.2
    x[mdp.pair_index(8, 0)] = 0.2
    tscc = (5, 6, 7, 8)
    support = support_digraph(x, mdp, tscc)
    assert support.vertices == [5, 7, 8]
    assert support.edges == [(5, 5), (7, 8), (8, 7)]
    cuts = find_cuts(support, tscc, mdp)
    assert cuts == [Cut((5,), [(5, 1)]), Cut((7, 8), [(8, 1)])]


def test_connected_support_needs_no_cut():
    mdp = environments.fig13_mdp()
    x = np.zeros(mdp.n_pairs)
    for (s, a) in ((5, 1), (6, 0), (7, 0), (8, 1)):
        x[mdp.pair_index(s, a)] = 0.1
    support = support_digraph(x, mdp, (5, 6, 7, 8))
    assert find_cuts(support, (5, 6, 7, 8), mdp) == []


def test_empty_support_cut():
    mdp = environments.fig13_mdp()
    support = support_digraph(np.zeros(mdp.n_pairs), mdp, (5, 6, 7, 8))
    assert find_cuts(support, (5, 6, 7, 8), mdp) == [
        Cut((5,), [(5, 0), (5, 1)])
    ]


# Cut loop

def test_cpu_converges_in_three_iterations(fig13_cpu):
    (mdp, result) = fig13_cpu
    assert result.iterations == 3
    assert [len(step.cuts) for step in result.trace][-1] == 0
    assert result.objective == pytest.approx(0.75 - 5e-4, abs=1e-8)
    report = correspondence_holds(mdp, result)
    assert report.flags.cpu
    assert report.flags.name == 'CPU'
    masses = {r.spec.label: r.attained for r in report.spec_results}
    assert masses['gold2'] >= 0.10 - 1e-9
    assert masses['gold3'] >= 0.15 - 1e-9


def test_cpu_accumulates_cuts(fig13_cpu):
    (mdp, result) = fig13_cpu
    assert result.lp.count('cut') == sum(len(step.cuts) for step in result.trace)
    assert result.lp.name == 'LP3+cuts'


def test_cpu_budget(fig13):
    cfg = SynthesisConfig(max_cut_iterations=1)
    with pytest.raises(BudgetExhausted):
        synthesize(fig13, 'cpu', cfg, RevisedSimplexSolver())


def test_lp1_epsilon_monotone(fig13, simplex):
    values = [
        objective(fig13, 'ep', simplex, epsilon_pos=epsilon)
        for epsilon in (1e-2, 1e-3, 1e-4, 1e-5)
    ]
    assert values[0] == pytest.approx(0.75 - 8e-2, abs=1e-8)
    assert values[2] == pytest.approx(0.75 - 8e-4, abs=1e-8)
    assert all(b >= a - 1e-10 for (a, b) in zip(values, values[1:]))
    assert values[3] - values[2] < 1e-3
    with pytest.raises(Infeasible, match='LP1'):
        synthesize(fig13, 'ep', SynthesisConfig(epsilon_pos=0.1), simplex)


def test_policy_class_nesting(fig13, simplex):
    epsilon = 1e-4
    settings = {'epsilon_pos': epsilon, 'epsilon_cut': 1e-7}
    ep = objective(fig13, 'ep', simplex, **settings)
    cp = objective(fig13, 'cp', simplex, **settings)
    cpu = objective(fig13, 'cpu', simplex, **settings)
    lp3 = objective(fig13, 'lp3', simplex, **settings)
    assert ep <= cp + 1e-9
    assert cp <= cpu + 1e-9
    assert cpu <= lp3 + 1e-9
    assert lp3 == pytest.approx(0.75)


def test_transient_specs_correspond(simplex):
    mdp = environments.fig13_mdp(pair_labels=True)
    for mode in ('ep', 'cp', 'cpu'):
        result = synthesize(mdp, mode, SynthesisConfig(), simplex)
        report = verify(
            mdp, result.policy, x=result.x(mdp), y=result.y(mdp)
        )
        assert report.residual <= 1e-6
        assert report.visit_residual <= 1e-6
        assert report.specs_satisfied
        visits = {
            r.spec.label: r.attained for r in report.spec_results
            if r.spec.kind == TRANSIENT
        }
        assert 20 - 1e-6 <= visits['tool'] <= 50 + 1e-6


def test_pair_labelled_gold2_ceiling(simplex):
    # Balance in {s6..s9} makes (s6, a2) a quarter of that TSCC's mass,
    # which is at most 4/15 + 2/15.
    mdp = environments.fig13_mdp(pair_labels=True)
    raised = mdp.with_specs([
        Spec('gold2', 0.12, 1.0) if spec.label == 'gold2' else spec
        for spec in mdp.specs
    ])
    with pytest.raises(Infeasible):
        synthesize(raised, 'lp3', SynthesisConfig(), simplex)


# Bundled environments

@pytest.mark.parametrize('make', [
    lambda: environments.three_state('delta'),
    environments.fig6_mdp,
    environments.fig13_mdp,
    lambda: environments.toll_collector(3, 3, 0.0),
    lambda: environments.toll_collector(3, 10, 0.05),
    lambda: environments.frozen_islands(8),
])
def test_correspondence_on_environments(make, simplex):
    mdp = make()
    for mode in ('ep', 'cp', 'cpu'):
        correspondence_holds(mdp, synthesize(mdp, mode, SynthesisConfig(),
                                             simplex))


@pytest.mark.slow
def test_correspondence_on_large_toll_collector(solver):
    mdp = environments.toll_collector(3, 25, 0.0)
    for mode in ('ep', 'cp', 'cpu'):
        correspondence_holds(mdp, synthesize(mdp, mode, SynthesisConfig(),
                                             solver))


def test_correspondence_on_partition_graphs(simplex):
    for seed in range(20):
        mdp = environments.random_partition_mdp(20, seed=seed)
        for mode in ('ep', 'cp', 'cpu'):
            correspondence_holds(
                mdp, synthesize(mdp, mode, SynthesisConfig(), simplex)
            )


def test_simplex_agrees_with_highs(highs, simplex):
    mdp = environments.fig13_mdp()
    for mode in ('ep', 'cp', 'lp3', 'kallenberg'):
        assert objective(mdp, mode, simplex) == pytest.approx(
            objective(mdp, mode, highs), abs=1e-7
        )


# Toll Collector

def brute_force_optimum(mdp):
    best = -np.inf
    for choices in itertools.product(
        *[range(len(actions)) for actions in mdp.actions]
    ):
        pi = StationaryPolicy.deterministic(mdp, choices)
        best = max(best, expected_average_reward(mdp, pi))
    return best


def test_toll_collector_brute_force(simplex):
    mdp = environments.toll_collector(3, 3, 0.0)
    result = synthesize(mdp, 'cpu', SynthesisConfig(), simplex)
    assert result.objective == pytest.approx(brute_force_optimum(mdp), abs=1e-6)
    assert result.objective == pytest.approx(1.0)
    assert policy_class(mdp, result.policy).cpu


@pytest.mark.parametrize('n', [3, 10])
def test_toll_collector_ordering(n, simplex):
    m = 3
    epsilon = 1e-4
    mdp = environments.toll_collector(m, n, 0.0)
    ep = objective(mdp, 'ep', simplex, epsilon_pos=epsilon)
    cp = objective(mdp, 'cp', simplex, epsilon_pos=epsilon)
    cpu = objective(mdp, 'cpu', simplex, epsilon_pos=epsilon)
    assert ep == pytest.approx(1 - m * (n * (n - 1) - 2) * epsilon, abs=1e-8)
    assert cpu == pytest.approx(1.0)
    assert ep <= cp + 1e-9 <= cpu + 2e-9
    if n >= 10:
        assert ep < cp - 1e-6
        assert cp < cpu - 1e-9


@pytest.mark.slow
def test_toll_collector_gap_grows(solver):
    gaps = []
    for n in (3, 10, 25):
        mdp = environments.toll_collector(3, n, 0.0)
        gaps.append(
            objective(mdp, 'cpu', solver) - objective(mdp, 'ep', solver)
        )
    assert gaps[0] < gaps[1] < gaps[2]


# Frozen Islands

def test_kallenberg_islands_lp_meets_specs(simplex):
    mdp = environments.frozen_islands(8)
    result = synthesize(mdp, 'kallenberg', SynthesisConfig(), simplex)
    x = result.x(mdp)
    for spec in mdp.specs:
        mass = x[mdp.label_pair_indices(spec.label)].sum()
        assert spec.lo - 1e-7 <= mass <= spec.hi + 1e-7


def test_kallenberg_islands_policy_violates_spec(simplex):
    mdp = environments.frozen_islands(8)
    result = synthesize(mdp, 'kallenberg', SynthesisConfig(), simplex)
    assert not verify(mdp, result.policy).specs_satisfied


def test_islands_with_transient_specs(simplex):
    mdp = environments.frozen_islands(8, transient_bound=50, visit_cap=200)
    result = synthesize(mdp, 'ep', SynthesisConfig(), simplex)
    report = verify(mdp, result.policy, x=result.x(mdp), y=result.y(mdp))
    assert report.specs_satisfied
    assert report.visit_residual <= 1e-6


@pytest.mark.slow
def test_islands_scale(solver):
    mdp = environments.frozen_islands(16, seed=3)
    result = synthesize(mdp, 'ep', SynthesisConfig(), solver)
    assert result.solution.status == OPTIMAL
    correspondence_holds(mdp, result)


# Feasible points and oracles

def test_ep_occupation_measures_satisfy_q0(rng, highs):
    mdp = environments.fig6_mdp()
    cls = classify_mdp(mdp)
    for _ in range(200):
        pi = StationaryPolicy(
            rng.dirichlet(np.ones(len(actions))) for actions in mdp.actions
        )
        assert policy_class(mdp, pi, mdp_classification=cls).ep
        x = np.clip(occupation_measure(mdp, pi).pairs, 0.0, None)
        lp = build_q0(mdp, cls)
        for (row, (s, a)) in enumerate(mdp.pairs):
            lp.set_bounds(x_key(s, a), lo=x[row], hi=x[row])
        assert highs.solve(lp).status == OPTIMAL


@pytest.mark.parametrize('build, guarantee', [
    (build_lp1, 'ep'), (build_lp2, 'cp'),
])
def test_correspondence_at_mixed_feasible_points(build, guarantee, rng, highs):
    mdp = environments.fig6_mdp()
    cls = classify_mdp(mdp)
    lp = build(mdp, cls)
    points = []
    for _ in range(4):
        lp.set_objective({x_key(s, a): rng.normal() for (s, a) in mdp.pairs})
        solution = highs.solve(lp)
        assert solution.optimal
        points.append(solution.values)
    for _ in range(5):
        weights = rng.dirichlet(np.ones(len(points)))
        mixed = LpSolution(OPTIMAL, lp, values=weights @ np.array(points))
        assert not lp.violations(mixed.values)
        pi = extract_policy(mixed, mdp)
        report = verify(mdp, pi, x=pair_values(mixed, mdp, X))
        assert report.residual <= 1e-6
        assert getattr(report.flags, guarantee)


def grid_policies(mdp, step=0.05):
    """Every policy of a two-action MDP with probabilities on the grid."""
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    for probabilities in itertools.product(grid, repeat=mdp.n_states):
        yield StationaryPolicy([[p, 1.0 - p] for p in probabilities])


@pytest.mark.slow
def test_three_state_grid_oracle(simplex):
    mdp = environments.three_state('delta')
    cls = classify_mdp(mdp)
    best = best_ep = -np.inf
    for pi in grid_policies(mdp):
        reward = expected_average_reward(mdp, pi)
        best = max(best, reward)
        if policy_class(mdp, pi, mdp_classification=cls).ep:
            best_ep = max(best_ep, reward)
    assert best == pytest.approx(objective(mdp, 'lp3', simplex), abs=1e-9)
    ep = objective(mdp, 'ep', simplex, epsilon_pos=0.05)
    assert ep - 1e-9 <= best_ep < best
    assert objective(mdp, 'cpu', simplex) <= best + 1e-9


@pytest.mark.slow
def test_three_state_grid_oracle_with_specs(simplex):
    mdp = environments.three_state('example1')
    best = -np.inf
    for pi in grid_policies(mdp):
        results = check_specs(mdp, occupation_measure(mdp, pi))
        if all(result.satisfied for result in results):
            best = max(best, expected_average_reward(mdp, pi))
    # s2 and s3 only split their mass evenly when both leave at the same rate
    assert best == pytest.approx(0.95)
    assert best <= objective(mdp, 'lp3', simplex) + 1e-9
    assert objective(mdp, 'cpu', simplex) >= best - 1e-9

import itertools

import numpy as np
import pytest

import environments
from mdp_core import (
    PAIR_LABEL, STATE_LABEL, Digraph, InvalidMdp, InvalidPolicy, Mdp,
    NoReachableTscc, Spec, StationaryPolicy, classify_chain, classify_mdp,
    gcd_period, induced_chain, make_label, policy_class, tarjan_sccs,
    validate
)


def two_loop_mdp(beta=(1.0, 0.0)):
    """s1 can stay or move to s2; s2 can stay or move back."""
    return Mdp(
        [['stay', 'go'], ['stay', 'go']],
        [
            (0, 0, 0, 1.0, 0.0), (0, 1, 1, 1.0, 0.0),
            (1, 0, 1, 1.0, 1.0), (1, 1, 0, 1.0, 0.0),
        ],
        beta
    )


def transitive_closure(n, edges):
    reach = np.eye(n, dtype=bool)
    for (u, v) in edges:
        reach[u, v] = True
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return reach


# Mdp

def test_pair_layout():
    mdp = environments.fig6_mdp()
    assert mdp.n_states == 9
    assert mdp.n_pairs == 21
    assert mdp.pair_index(1, 2) == 4
    assert list(mdp.pair_range(1)) == [2, 3, 4]
    assert mdp.pairs[4] == (1, 2)
    assert mdp.pair_state[4] == 1


def test_reward_is_expected_over_successors():
    mdp = Mdp(
        [['a']], [(0, 0, 0, 1.0, 0.0)], [1.0]
    )
    assert mdp.reward[0] == 0.0
    mdp = Mdp(
        [['a'], ['a']],
        [(0, 0, 0, 0.25, 4.0), (0, 0, 1, 0.75, 0.0), (1, 0, 1, 1.0, 0.0)],
        [1.0, 0.0]
    )
    assert mdp.reward[0] == pytest.approx(1.0)


def test_successors_and_transitions():
    mdp = two_loop_mdp()
    assert mdp.successors(0, 1) == [(1, 1.0)]
    assert list(mdp.transitions())[2] == (1, 0, 1, 1.0, 1.0)


def test_duplicate_transition_rejected():
    with pytest.raises(InvalidMdp):
        Mdp([['a']], [(0, 0, 0, 0.5, 0.0), (0, 0, 0, 0.5, 0.0)], [1.0])


def test_unknown_action_rejected():
    with pytest.raises(InvalidMdp):
        Mdp([['a']], [(0, 1, 0, 1.0, 0.0)], [1.0])


def test_make_label_kinds():
    assert make_label([2, 0]).kind == STATE_LABEL
    label = make_label([(1, 0), [2, 1]])
    assert label.kind == PAIR_LABEL
    assert label.members == ((1, 0), (2, 1))


def test_label_pair_indices():
    mdp = environments.fig13_mdp(pair_labels=True)
    assert mdp.label_pair_indices('gold1') == [mdp.pair_index(3, 0)]
    assert mdp.label_states('transient_states') == [0, 1]
    assert mdp.label_pair_indices('transient_states') == [0, 1, 2, 3, 4]


def test_with_specs_keeps_model():
    mdp = environments.fig13_mdp()
    relaxed = mdp.with_specs([Spec('gold1', 0.0, 0.5, 'steady')])
    assert relaxed.specs[0].hi == 0.5
    assert relaxed.n_pairs == mdp.n_pairs
    assert (relaxed.kernel != mdp.kernel).nnz == 0


# Validation

def test_bundled_environments_validate():
    for mdp in (
        environments.three_state('lp0'), environments.fig6_mdp(),
        environments.fig13_mdp(), environments.fig13_mdp(pair_labels=True),
        environments.toll_collector(3, 3, 0.05),
    ):
        assert validate(mdp), str(validate(mdp))


def test_validate_reports_row_sums_and_beta():
    mdp = Mdp(
        [['a'], ['a']],
        [(0, 0, 1, 0.5, 0.0), (1, 0, 1, 1.0, 0.0)],
        [0.5, 0.2]
    )
    report = validate(mdp)
    assert not report
    text = str(report)
    assert 'kernel row (s1, a) sums to 0.5' in text
    assert 'beta sums to 0.7' in text


def test_validate_reports_specs():
    mdp = two_loop_mdp().with_specs(
        [Spec('missing', 0.0, 1.0, 'steady'), Spec('here', 0.8, 0.2, 'steady')],
        labels={'here': [0]}
    )
    violations = validate(mdp).violations
    assert any('unknown label missing' in v for v in violations)
    assert any('lo > hi' in v for v in violations)


# Graphs

def test_tarjan_matches_transitive_closure(rng):
    for n in range(1, 7):
        for _ in range(30):
            edges = [
                (u, v) for u in range(n) for v in range(n)
                if rng.random() < 0.3
            ]
            components = tarjan_sccs(Digraph(n, edges))
            assert sorted(s for c in components for s in c) == list(range(n))
            reach = transitive_closure(n, edges)
            mutual = reach & reach.T
            for component in components:
                for (u, v) in itertools.product(component, repeat=2):
                    assert mutual[u, v]
            for (first, second) in itertools.combinations(components, 2):
                assert not mutual[first[0], second[0]]


def test_tarjan_emits_sinks_first():
    graph = Digraph(4, [(0, 1), (1, 2), (2, 1), (2, 3)])
    assert tarjan_sccs(graph) == [[3], [1, 2], [0]]


def test_reachable():
    graph = Digraph(4, [(0, 1), (1, 2)])
    assert graph.reachable([0]).tolist() == [True, True, True, False]


def test_gcd_period():
    cycle = Digraph(3, [(0, 1), (1, 2), (2, 0)])
    assert gcd_period(cycle, [0, 1, 2]) == 3
    lazy = Digraph(3, [(0, 1), (1, 2), (2, 0), (0, 0)])
    assert gcd_period(lazy, [0, 1, 2]) == 1


# Classification

def test_classify_chain_fig1():
    cls = classify_chain(environments.fig1_chain())
    assert cls.tsccs == [(4, 5, 6, 7), (8, 9, 10)]
    assert cls.transient == (0, 1)
    assert cls.isolated == (2, 3)
    assert cls.status(0) == 'transient'
    assert cls.status(2) == 'isolated'
    assert cls.status(9) == 'recurrent'
    assert cls.tscc_of(9) == 1
    assert cls.summary() == '2 TSCCs (4, 3)'


def test_classify_mdp_fig6():
    cls = classify_mdp(environments.fig6_mdp())
    assert cls.tsccs == [(2, 3, 4), (5, 6, 7, 8)]
    assert cls.complement == (0, 1)


def test_classify_mdp_fig13():
    cls = classify_mdp(environments.fig13_mdp())
    assert [len(tscc) for tscc in cls.tsccs] == [3, 4, 6]
    assert cls.complement == (0, 1)


def test_no_reachable_tscc():
    mdp = Mdp([['a'], ['a']], [(0, 0, 1, 1.0, 0.0), (1, 0, 1, 1.0, 0.0)],
              [1.0, 0.0])
    assert classify_mdp(mdp).tsccs == [(1,)]
    empty = Mdp([], [], [])
    with pytest.raises(NoReachableTscc):
        classify_mdp(empty)


# Policies

def test_policy_constructors():
    mdp = environments.fig6_mdp()
    uniform = StationaryPolicy.uniform(mdp)
    assert uniform.prob(1, 2) == pytest.approx(1.0 / 3)
    fixed = StationaryPolicy.deterministic(mdp, [0] * mdp.n_states)
    assert fixed.prob(4, 0) == 1.0
    rebuilt = StationaryPolicy.from_pair_vector(mdp, uniform.pair_vector())
    assert np.allclose(rebuilt.pair_vector(), uniform.pair_vector())


def test_policy_check():
    mdp = two_loop_mdp()
    StationaryPolicy([[0.5, 0.5], [1.0, 0.0]]).check(mdp)
    with pytest.raises(InvalidPolicy):
        StationaryPolicy([[0.5, 0.4], [1.0, 0.0]]).check(mdp)
    with pytest.raises(InvalidPolicy):
        StationaryPolicy([[1.0], [1.0, 0.0]]).check(mdp)


def test_induced_chain():
    mdp = two_loop_mdp()
    chain = induced_chain(mdp, StationaryPolicy([[0.25, 0.75], [1.0, 0.0]]))
    assert np.allclose(chain.matrix, [[0.25, 0.75], [0.0, 1.0]])


def test_policy_classes_three_state():
    mdp = environments.three_state('delta')
    full = StationaryPolicy.uniform(mdp)
    assert policy_class(mdp, full) == (True, True, True)
    assert policy_class(mdp, full).name == 'EP'
    # s2 and s3 both keep their self-loops: two recurrent classes in one TSCC
    split = StationaryPolicy.deterministic(mdp, [0, 1, 1])
    flags = policy_class(mdp, split)
    assert not flags.cpu
    assert flags.name == 'none'
    # s2 loops, s3 feeds it: one class {s2} inside the TSCC
    single = StationaryPolicy.deterministic(mdp, [0, 1, 0])
    flags = policy_class(mdp, single)
    assert (flags.ep, flags.cp, flags.cpu) == (False, False, True)
    assert flags.name == 'CPU'
    # the 2-cycle alone covers the TSCC without full action support
    cycle = StationaryPolicy.deterministic(mdp, [0, 0, 0])
    assert policy_class(mdp, cycle).name == 'CP'


def test_policy_classes_fig6():
    mdp = environments.fig6_mdp()
    assert policy_class(mdp, StationaryPolicy.uniform(mdp)).name == 'EP'
    # s3 absorbs the first TSCC and {s8, s9} recur in the second
    policy = StationaryPolicy.deterministic(mdp, [0, 0, 0, 1, 0, 0, 1, 0, 1])
    flags = policy_class(mdp, policy)
    assert (flags.ep, flags.cp, flags.cpu) == (False, False, True)
    assert flags.name == 'CPU'
    # one deterministic cycle through every state of each TSCC
    cycles = StationaryPolicy.deterministic(mdp, [0, 0, 1, 0, 0, 0, 1, 1, 1])
    assert policy_class(mdp, cycles).name == 'CP'


def random_policy(rng, mdp, keep):
    distributions = []
    for actions in mdp.actions:
        weights = rng.random(len(actions)) * (rng.random(len(actions)) < keep)
        if not weights.any():
            weights[rng.integers(len(actions))] = 1.0
        distributions.append(weights / weights.sum())
    return StationaryPolicy(distributions)


def test_induced_chain_rows_are_stochastic(rng):
    for mdp in (
        environments.fig6_mdp(), environments.fig13_mdp(),
        environments.frozen_islands(8), environments.toll_collector(2, 4, 0.1),
    ):
        for _ in range(20):
            pi = random_policy(rng, mdp, rng.choice([0.5, 1.0]))
            matrix = induced_chain(mdp, pi).matrix
            assert np.all(matrix >= 0)
            assert np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12)


def test_policy_classes_nest(rng):
    # fig6 puts beta on every TSCC state, so each TSCC stays reachable.
    mdp = environments.fig6_mdp()
    cls = classify_mdp(mdp)
    seen = set()
    for _ in range(1000):
        pi = random_policy(rng, mdp, rng.choice([0.4, 0.7, 1.0]))
        flags = policy_class(mdp, pi, mdp_classification=cls)
        chain_cls = classify_chain(induced_chain(mdp, pi))
        full_support = all(
            np.all(pi.distributions[s] > 0) for s in cls.recurrent_union
        )
        preserved = set(chain_cls.tsccs) == set(cls.tsccs)
        unichain = chain_cls.recurrent_union <= cls.recurrent_union and all(
            sum(1 for tscc in chain_cls.tsccs if set(tscc) <= set(mdp_tscc)) == 1
            for mdp_tscc in cls.tsccs
        )
        assert flags.ep == full_support
        assert flags.cp == preserved
        assert flags.cpu == unichain
        assert not full_support or preserved
        assert not preserved or unichain
        seen.add(flags.name)
    assert {'EP', 'CPU', 'none'} <= seen

import logging

import numpy as np
import scipy.linalg

from mdp_core import (
    STATE_LABEL, STEADY_STATE, TRANSIENT, classify_chain, classify_mdp,
    induced_chain, policy_class
)


logger = logging.getLogger(__name__)

stationary_residual_tolerance = 1e-7
spec_tolerance = 1e-6
singular_pivot_ratio = 1e-13


class NotUnichain(ValueError):
    pass


class NonTransientBlock(ValueError):
    pass


class InvalidSpec(ValueError):
    pass


# Canonical form

class CanonicalDecomposition(object):
    """Block form of a chain: closed classes E_k first, then the rest F.

    blocks[k] is T_k, Z is the F-to-F block and couplings[k] is L_k (F to E_k).
    order lists global state indices in block order.
    """
    def __init__(self, matrix, classes, rest):
        self.classes = [np.array(component, dtype=int) for component in classes]
        self.rest = np.array(rest, dtype=int)
        self.order = np.concatenate(self.classes + [self.rest]).astype(int)
        self.blocks = [matrix[np.ix_(E, E)] for E in self.classes]
        self.Z = matrix[np.ix_(self.rest, self.rest)]
        self.couplings = [matrix[np.ix_(self.rest, E)] for E in self.classes]
        self.permuted = matrix[np.ix_(self.order, self.order)]

    def restore(self):
        """Undo the permutation: returns the matrix in global state order."""
        inverse = np.argsort(self.order)
        return self.permuted[np.ix_(inverse, inverse)]


def canonical_form(chain, cls=None):
    if cls is None:
        cls = classify_chain(chain)
    closed = set(s for component in cls.recurrent_classes for s in component)
    rest = [s for s in range(chain.n_states) if s not in closed]
    return CanonicalDecomposition(chain.matrix, cls.recurrent_classes, rest)


# Limiting behavior

def class_stationary_distribution(block):
    """Solve eta^T T_k = eta^T with sum(eta) = 1 by least squares."""
    block = np.asarray(block, dtype=float)
    n = block.shape[0]
    A = np.vstack((np.eye(n) - block.T, np.ones((1, n))))
    b = np.zeros(n + 1)
    b[-1] = 1.0
    (eta, _, rank, _) = np.linalg.lstsq(A, b, rcond=None)
    if rank < n:
        raise NotUnichain(
            'Stationary system of a {}-state block has rank {}'.format(n, rank)
        )
    residual = np.max(np.abs(A @ eta - b))
    if residual > stationary_residual_tolerance:
        raise NotUnichain('Stationary residual {:.3g} exceeds {}'.format(
            residual, stationary_residual_tolerance
        ))
    eta = np.clip(eta, 0, None)
    return eta / eta.sum()


def _factor_transient_block(Z):
    n = Z.shape[0]
    (lu, piv) = scipy.linalg.lu_factor(np.eye(n) - Z, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= singular_pivot_ratio * max(1.0, pivots.max()):
        raise NonTransientBlock(
            'I - Z is singular: the block holds a closed set of states'
        )
    return (lu, piv)


def absorption_probabilities(Z, L):
    """Return P_k = (I - Z)^-1 L_k e for one coupling block or a list of them.

    Rows of the result follow the F ordering; a list input yields one column
    per class.
    """
    Z = np.asarray(Z, dtype=float)
    single = not isinstance(L, (list, tuple))
    blocks = [L] if single else list(L)
    if Z.shape[0] == 0:
        P = np.zeros((0, len(blocks)))
    else:
        rhs = np.column_stack([
            np.asarray(block, dtype=float).reshape(Z.shape[0], -1).sum(axis=1)
            for block in blocks
        ])
        factors = _factor_transient_block(Z)
        P = scipy.linalg.lu_solve(factors, rhs, check_finite=False)
    if single:
        return P[:, 0]
    return P


def stationary_matrix(chain, cls=None):
    """Assemble the Cesaro limit from class distributions and absorption."""
    decomposition = canonical_form(chain, cls)
    n = chain.n_states
    limit = np.zeros((n, n))
    etas = [
        class_stationary_distribution(block)
        for block in decomposition.blocks
    ]
    for (E, eta) in zip(decomposition.classes, etas):
        limit[np.ix_(E, E)] = np.tile(eta, (len(E), 1))
    if len(decomposition.rest):
        P = absorption_probabilities(
            decomposition.Z, list(decomposition.couplings)
        )
        for (k, (E, eta)) in enumerate(zip(decomposition.classes, etas)):
            limit[np.ix_(decomposition.rest, E)] = np.outer(P[:, k], eta)
    return limit


# Measures

class OccupationMeasure(object):
    def __init__(self, mdp, pairs, marginal):
        self.mdp = mdp
        self.pairs = pairs
        self.marginal = marginal

    def value(self, s, a):
        return float(self.pairs[self.mdp.pair_index(s, a)])

    def label_mass(self, name):
        label = self.mdp.labels[name]
        if label.kind == STATE_LABEL:
            return float(self.marginal[sorted(set(label.members))].sum())
        return float(self.pairs[self.mdp.label_pair_indices(name)].sum())


class TransientVisits(object):
    def __init__(self, mdp, states, pairs):
        self.mdp = mdp
        self.states = states
        self.pairs = pairs

    def label_visits(self, name):
        label = self.mdp.labels[name]
        if label.kind == STATE_LABEL:
            return float(self.states[sorted(set(label.members))].sum())
        return float(self.pairs[self.mdp.label_pair_indices(name)].sum())


def occupation_measure(mdp, pi, chain=None):
    if chain is None:
        chain = induced_chain(mdp, pi)
    marginal = mdp.beta @ stationary_matrix(chain)
    pairs = marginal[mdp.pair_state] * pi.pair_vector()
    return OccupationMeasure(mdp, pairs, marginal)


def expected_average_reward(mdp, pi, measure=None):
    if measure is None:
        measure = occupation_measure(mdp, pi)
    return float(measure.pairs @ mdp.reward)


def expected_visits(mdp, pi, chain=None):
    """Solve zeta^T (I - Z) = beta^T over the transient states of M_pi.

    Isolated states are left out of the solve and get zero visits.
    """
    if chain is None:
        chain = induced_chain(mdp, pi)
    cls = classify_chain(chain)
    transient = np.array(cls.transient, dtype=int)
    states = np.zeros(chain.n_states)
    if len(transient):
        Z = chain.matrix[np.ix_(transient, transient)]
        factors = _factor_transient_block(Z)
        states[transient] = scipy.linalg.lu_solve(
            factors, chain.beta[transient], trans=1, check_finite=False
        )
    pairs = states[mdp.pair_state] * pi.pair_vector()
    return TransientVisits(mdp, states, pairs)


# Specifications

class SpecResult(object):
    def __init__(self, spec, attained, satisfied):
        self.spec = spec
        self.attained = attained
        self.satisfied = satisfied

    @property
    def slack(self):
        return min(self.attained - self.spec.lo, self.spec.hi - self.attained)


def check_transient_label(mdp, mdp_classification, name):
    touched = set(mdp.label_states(name))
    overlap = touched & mdp_classification.recurrent_union
    if overlap:
        raise InvalidSpec(
            'Transient spec label {} touches recurrent states {}'.format(
                name, ', '.join(mdp.state_names[s] for s in sorted(overlap))
            )
        )


def check_specs(
    mdp, measure, visits=None, mdp_classification=None, pi=None
):
    """Evaluate every spec; transient specs need visits, or pi to solve them."""
    results = []
    for spec in mdp.specs:
        if spec.kind == STEADY_STATE:
            attained = measure.label_mass(spec.label)
        else:
            if mdp_classification is None:
                mdp_classification = classify_mdp(mdp)
            check_transient_label(mdp, mdp_classification, spec.label)
            if visits is None:
                if pi is None:
                    raise InvalidSpec(
                        'Transient spec on {} needs expected visits or a '
                        'policy to compute them'.format(spec.label)
                    )
                visits = expected_visits(mdp, pi)
            attained = visits.label_visits(spec.label)
        satisfied = (
            spec.lo - spec_tolerance <= attained <= spec.hi + spec_tolerance
        )
        results.append(SpecResult(spec, attained, satisfied))
    return results


# Reports

class VerificationReport(object):
    def __init__(
        self, mdp, flags, measure, visits, reward, spec_results,
        residual=None, visit_residual=None
    ):
        self.mdp = mdp
        self.flags = flags
        self.measure = measure
        self.visits = visits
        self.reward = reward
        self.spec_results = spec_results
        self.residual = residual
        self.visit_residual = visit_residual

    @property
    def specs_satisfied(self):
        return all(result.satisfied for result in self.spec_results)

    def as_dict(self):
        names = self.mdp.state_names
        return {
            'policy_class': {
                'EP': bool(self.flags.ep), 'CP': bool(self.flags.cp),
                'CPU': bool(self.flags.cpu), 'name': self.flags.name
            },
            'average_reward': self.reward,
            'occupation': {
                names[s]: {
                    self.mdp.actions[s][a]: self.measure.value(s, a)
                    for a in range(len(self.mdp.actions[s]))
                }
                for s in range(self.mdp.n_states)
                if self.measure.marginal[s] > 0
            },
            'transient_visits': {
                names[s]: float(self.visits.states[s])
                for s in range(self.mdp.n_states)
                if self.visits.states[s] > 0
            },
            'specs': [
                {
                    'label': result.spec.label, 'kind': result.spec.kind,
                    'lo': result.spec.lo, 'hi': result.spec.hi,
                    'attained': result.attained,
                    'satisfied': bool(result.satisfied)
                }
                for result in self.spec_results
            ],
            'correspondence_residual': self.residual,
            'visit_residual': self.visit_residual,
        }

    def format_text(self):
        lines = [
            'Policy class: {}'.format(self.flags.name),
            'Average reward: {:.6f}'.format(self.reward),
        ]
        if self.residual is not None:
            lines.append('Correspondence residual: {:.3g}'.format(self.residual))
        if self.visit_residual is not None:
            lines.append('Transient visit residual: {:.3g}'.format(
                self.visit_residual
            ))
        for result in self.spec_results:
            lines.append('{:<6} {:<20} [{:g}, {:g}]  attained {:.6f}  {}'.format(
                result.spec.kind, result.spec.label, result.spec.lo,
                result.spec.hi, result.attained,
                'ok' if result.satisfied else 'VIOLATED'
            ))
        return '\n'.join(lines)


def verify(mdp, pi, x=None, y=None):
    """Analyze a policy; x and y are LP pair vectors for residual reporting."""
    mdp_classification = classify_mdp(mdp)
    chain = induced_chain(mdp, pi)
    flags = policy_class(
        mdp, pi, mdp_classification=mdp_classification,
        chain_classification=classify_chain(chain)
    )
    measure = occupation_measure(mdp, pi, chain=chain)
    visits = expected_visits(mdp, pi, chain=chain)
    reward = expected_average_reward(mdp, pi, measure=measure)
    results = check_specs(
        mdp, measure, visits=visits, mdp_classification=mdp_classification
    )
    residual = None
    if x is not None:
        residual = float(np.max(np.abs(measure.pairs - x)))
    visit_residual = None
    if y is not None:
        transient = list(mdp_classification.complement)
        y_states = np.bincount(mdp.pair_state, weights=y, minlength=mdp.n_states)
        visit_residual = float(np.max(
            np.abs(visits.states[transient] - y_states[transient])
        )) if transient else 0.0
    logger.debug(
        'Verified %s policy: reward %.6f, residual %s',
        flags.name, reward, residual
    )
    return VerificationReport(
        mdp, flags, measure, visits, reward, results,
        residual=residual, visit_residual=visit_residual
    )

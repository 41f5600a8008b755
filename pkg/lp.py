"""Solver-agnostic linear programs over named variables, and their solvers.

The built-in solver is a bounded-variable two-phase revised simplex on a
sparse LU factorization of the basis with product-form updates. HiGHS (via
scipy) implements the same interface for cross-checks.
"""
import copy
import logging
import re
from collections import namedtuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import splu


logger = logging.getLogger(__name__)

LE = '<='
EQ = '=='
GE = '>='
relations = (LE, EQ, GE)

OPTIMAL = 'Optimal'
INFEASIBLE = 'Infeasible'
UNBOUNDED = 'Unbounded'

violation_tolerance = 1e-7


class SolverError(RuntimeError):
    pass


Constraint = namedtuple(
    'Constraint', ['indices', 'coefficients', 'relation', 'rhs', 'tag']
)


# Models

class LinearProgram(object):
    """Maximize c^T v subject to tagged constraints and variable bounds."""
    def __init__(self, name='lp'):
        self.name = name
        self.keys = []
        self.index = {}
        self.lower = []
        self.upper = []
        self.bound_tags = {}
        self.objective = {}
        self.constraints = []

    @property
    def n_variables(self):
        return len(self.keys)

    @property
    def n_constraints(self):
        return len(self.constraints)

    def add_variable(self, key, lo=0.0, hi=np.inf):
        if key in self.index:
            raise ValueError('Variable {} declared twice in {}'.format(
                key, self.name
            ))
        self.index[key] = len(self.keys)
        self.keys.append(key)
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        return self.index[key]

    def set_bounds(self, key, lo=None, hi=None, tag=None):
        j = self.index[key]
        if lo is not None:
            self.lower[j] = float(lo)
        if hi is not None:
            self.upper[j] = float(hi)
        if tag is not None:
            self.bound_tags[j] = tag

    def set_objective(self, coefficients):
        self.objective = {}
        for (key, coefficient) in _items(coefficients):
            j = self.index[key]
            self.objective[j] = self.objective.get(j, 0.0) + coefficient

    def add_constraint(self, coefficients, relation, rhs, tag):
        if relation not in relations:
            raise ValueError('Unknown relation {}'.format(relation))
        merged = {}
        for (key, coefficient) in _items(coefficients):
            if key not in self.index:
                raise ValueError(
                    'Constraint {} references undeclared variable {}'.format(
                        tag, key
                    )
                )
            j = self.index[key]
            merged[j] = merged.get(j, 0.0) + coefficient
        indices = np.array(sorted(j for j in merged if merged[j] != 0), dtype=int)
        values = np.array([merged[j] for j in indices], dtype=float)
        self.constraints.append(
            Constraint(indices, values, relation, float(rhs), tag)
        )

    def copy(self, name=None):
        duplicate = LinearProgram(self.name if name is None else name)
        duplicate.keys = list(self.keys)
        duplicate.index = dict(self.index)
        duplicate.lower = list(self.lower)
        duplicate.upper = list(self.upper)
        duplicate.bound_tags = dict(self.bound_tags)
        duplicate.objective = dict(self.objective)
        duplicate.constraints = list(self.constraints)
        return duplicate

    def count(self, tag):
        return sum(1 for constraint in self.constraints if constraint.tag == tag)

    def objective_vector(self):
        c = np.zeros(self.n_variables)
        for (j, coefficient) in self.objective.items():
            c[j] = coefficient
        return c

    def constraint_matrix(self):
        """Return (A as csr, relation list, rhs array)."""
        rows, cols, data = [], [], []
        for (i, constraint) in enumerate(self.constraints):
            rows.extend([i] * len(constraint.indices))
            cols.extend(constraint.indices.tolist())
            data.extend(constraint.coefficients.tolist())
        A = sp.csr_matrix(
            (data, (rows, cols)), shape=(self.n_constraints, self.n_variables)
        )
        rhs = np.array([constraint.rhs for constraint in self.constraints])
        return (A, [constraint.relation for constraint in self.constraints], rhs)

    def violations(self, values, tolerance=violation_tolerance):
        """List (tag, amount) for every bound or constraint violated."""
        found = []
        lower = np.array(self.lower)
        upper = np.array(self.upper)
        for j in np.flatnonzero(values < lower - tolerance):
            found.append((
                self.bound_tags.get(j, 'bounds'), float(lower[j] - values[j])
            ))
        for j in np.flatnonzero(values > upper + tolerance):
            found.append(('bounds', float(values[j] - upper[j])))
        for constraint in self.constraints:
            lhs = float(constraint.coefficients @ values[constraint.indices])
            scale = tolerance * max(1.0, abs(constraint.rhs))
            if constraint.relation == LE:
                amount = lhs - constraint.rhs
            elif constraint.relation == GE:
                amount = constraint.rhs - lhs
            else:
                amount = abs(lhs - constraint.rhs)
            if amount > scale:
                found.append((constraint.tag, amount))
        return found


def _items(coefficients):
    if isinstance(coefficients, dict):
        return coefficients.items()
    return coefficients


class LpSolution(object):
    def __init__(
        self, status, lp, values=None, objective=None, iterations=0,
        solver=None
    ):
        self.status = status
        self.lp = lp
        self.values = values
        self.objective = objective
        self.iterations = iterations
        self.solver = solver

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, key):
        return float(self.values[self.lp.index[key]])

    def __repr__(self):
        return 'LpSolution({}, {}, objective={})'.format(
            self.lp.name, self.status, self.objective
        )


# Solvers

class SolverConfig(object):
    def __init__(
        self, pivot_tolerance=1e-9, optimality_tolerance=1e-9,
        feasibility_tolerance=1e-9, refactor_interval=50, degenerate_limit=50,
        perturbation=1e-9, max_iterations=None
    ):
        if perturbation < 0:
            raise ValueError('perturbation must be >= 0')
        self.pivot_tolerance = pivot_tolerance
        self.optimality_tolerance = optimality_tolerance
        self.feasibility_tolerance = feasibility_tolerance
        self.refactor_interval = refactor_interval
        self.degenerate_limit = degenerate_limit
        self.perturbation = perturbation
        self.max_iterations = max_iterations


class SolverInterface(object):
    """Generic LP solver interface. Implement solve."""
    name = None

    def solve(self, lp):
        raise NotImplementedError

    def check(self, lp, values):
        found = lp.violations(values)
        if found:
            (tag, amount) = max(found, key=lambda violation: violation[1])
            raise SolverError(
                '{} returned a point violating {} by {:.3g} in {}'.format(
                    self.name, tag, amount, lp.name
                )
            )


class _StandardForm(object):
    """min c^T z s.t. A z = b, 0 <= z <= u, with a map back to the LP."""
    def __init__(self, lp):
        lower = np.array(lp.lower, dtype=float)
        upper = np.array(lp.upper, dtype=float)
        n = lp.n_variables
        offset = np.zeros(n)
        map_rows, map_cols, map_signs, bounds = [], [], [], []
        for j in range(n):
            if np.isfinite(lower[j]):
                offset[j] = lower[j]
                map_rows.append(j)
                map_signs.append(1.0)
                bounds.append(upper[j] - lower[j])
            elif np.isfinite(upper[j]):
                offset[j] = upper[j]
                map_rows.append(j)
                map_signs.append(-1.0)
                bounds.append(np.inf)
            else:
                map_rows.extend([j, j])
                map_signs.extend([1.0, -1.0])
                bounds.extend([np.inf, np.inf])
        map_cols = list(range(len(map_rows)))
        self.mapping = sp.csr_matrix(
            (map_signs, (map_rows, map_cols)), shape=(n, len(map_rows))
        )
        self.offset = offset
        (A, row_relations, rhs) = lp.constraint_matrix()
        structural = (A @ self.mapping).tocsc()
        b = rhs - A @ offset
        m = A.shape[0]
        n_structural = structural.shape[1]

        slack_rows, slack_signs = [], []
        for (i, relation) in enumerate(row_relations):
            if relation == LE:
                slack_rows.append(i)
                slack_signs.append(1.0)
            elif relation == GE:
                slack_rows.append(i)
                slack_signs.append(-1.0)
        n_slack = len(slack_rows)
        slacks = sp.csc_matrix(
            (slack_signs, (slack_rows, range(n_slack))), shape=(m, n_slack)
        )
        flip = np.where(b < 0, -1.0, 1.0)
        b = b * flip
        row_flip = sp.diags(flip, 0, shape=(m, m))
        body = sp.hstack([row_flip @ structural, row_flip @ slacks]).tocsc()

        # Rows whose slack enters with +1 start from it; the rest get an
        # artificial column.
        basis = -np.ones(m, dtype=int)
        for (k, (i, sign)) in enumerate(zip(slack_rows, slack_signs)):
            if sign * flip[i] > 0:
                basis[i] = n_structural + k
        artificial_rows = np.flatnonzero(basis < 0)
        n_body = body.shape[1]
        artificials = sp.csc_matrix(
            (np.ones(len(artificial_rows)),
             (artificial_rows, range(len(artificial_rows)))),
            shape=(m, len(artificial_rows))
        )
        basis[artificial_rows] = n_body + np.arange(len(artificial_rows))

        self.A = sp.hstack([body, artificials]).tocsc()
        self.b = b
        self.m = m
        self.n_structural = n_structural
        self.n_columns = self.A.shape[1]
        self.artificial = np.zeros(self.n_columns, dtype=bool)
        self.artificial[n_body:] = True
        self.upper = np.concatenate((
            np.array(bounds, dtype=float),
            np.full(n_slack, np.inf), np.full(len(artificial_rows), np.inf)
        ))
        c = -lp.objective_vector()
        self.cost = np.concatenate((
            self.mapping.T @ c, np.zeros(self.n_columns - n_structural)
        ))
        self.initial_basis = basis

    def recover(self, z):
        return self.offset + self.mapping @ z[:self.n_structural]


class _BasisFactor(object):
    """LU of the basis matrix plus a product-form eta file."""
    def __init__(self, A, basis):
        self.lu = None
        if len(basis):
            try:
                self.lu = splu(A[:, basis].tocsc())
            except RuntimeError as error:
                raise SolverError('Singular basis: {}'.format(error))
        self.etas = []

    def solve(self, v, trans='N'):
        if self.lu is None:
            return np.array(v, dtype=float)
        return self.lu.solve(v, trans=trans)

    def ftran(self, a):
        v = self.solve(a)
        for (r, d) in self.etas:
            pivot = v[r] / d[r]
            v -= pivot * d
            v[r] = pivot
        return v

    def btran(self, w):
        w = np.array(w, dtype=float)
        for (r, d) in reversed(self.etas):
            w[r] = (w[r] - (w @ d - w[r] * d[r])) / d[r]
        return self.solve(w, trans='T')

    def update(self, r, d):
        self.etas.append((r, d))


class RevisedSimplexSolver(SolverInterface):
    """Two-phase bounded-variable revised simplex.

    Dantzig pricing on randomly shifted working bounds. Each phase starts by
    shifting the bounds of basic variables that sit on a bound outward by
    about config.perturbation; a run of degenerate_limit degenerate pivots
    shifts the bounds of the basic variables that reached a bound since.
    Once every such variable has been shifted, further stalls switch the
    phase to Bland's rule for good. The final point is the basic solution
    of the optimal basis under the original bounds.
    """
    name = 'simplex'

    def __init__(self, config=None):
        self.config = config or SolverConfig()

    def solve(self, lp):
        form = _StandardForm(lp)
        config = self.config
        max_iterations = config.max_iterations or 50 * (form.m + form.n_columns)
        state = _SimplexState(form, config, max_iterations)
        scale = max(1.0, float(np.max(np.abs(form.b)))) if form.m else 1.0
        tolerance = config.feasibility_tolerance * scale * 10

        if form.artificial.any():
            phase_one_cost = form.artificial.astype(float)
            state.run(phase_one_cost, lp.name)
            artificials = state.point()[form.artificial]
            infeasibility = float(np.maximum(artificials, 0.0).sum())
            logger.debug(
                '%s phase 1: %d iterations, infeasibility %.3g',
                lp.name, state.iterations, infeasibility
            )
            if infeasibility > tolerance:
                return LpSolution(
                    INFEASIBLE, lp, iterations=state.iterations, solver=self.name
                )
            state.retire_artificials()

        status = state.run(form.cost, lp.name)
        logger.debug('%s phase 2: %d iterations, status %s',
                     lp.name, state.iterations, status)
        if status == UNBOUNDED:
            return LpSolution(
                UNBOUNDED, lp, iterations=state.iterations, solver=self.name
            )
        z = state.final_point()
        if config.perturbation and state.violation > tolerance:
            logger.info(
                '%s: optimal basis is %.3g outside the original bounds, '
                'solving again without perturbation', lp.name, state.violation
            )
            plain = copy.copy(config)
            plain.perturbation = 0.0
            return RevisedSimplexSolver(plain).solve(lp)
        values = form.recover(z)
        self.check(lp, values)
        objective = float(lp.objective_vector() @ values)
        return LpSolution(
            OPTIMAL, lp, values=values, objective=objective,
            iterations=state.iterations, solver=self.name
        )


class _SimplexState(object):
    """Basis, working bounds and nonbasic values of one simplex run.

    Nonbasic columns always sit on a working bound: x[j] is lower[j], or
    upper[j] when at_upper[j]. Working bounds only ever widen the original
    ones [0, true_upper] until restore puts them back.
    """
    def __init__(self, form, config, max_iterations):
        self.form = form
        self.config = config
        self.max_iterations = max_iterations
        self.A = form.A
        self.A_rows = form.A.T.tocsr()
        self.true_upper = form.upper.copy()
        self.lower = np.zeros(form.n_columns)
        self.upper = form.upper.copy()
        self.shifted = np.zeros(form.n_columns, dtype=bool)
        self.basis = form.initial_basis.copy()
        self.is_basic = np.zeros(form.n_columns, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(form.n_columns, dtype=bool)
        self.eligible = np.ones(form.n_columns, dtype=bool)
        self.x = np.zeros(form.n_columns)
        self.iterations = 0
        self.factor = None
        self.rng = np.random.default_rng(0)
        self.violation = 0.0
        self.refactor()

    def column(self, q):
        a = np.zeros(self.form.m)
        start, end = self.A.indptr[q], self.A.indptr[q + 1]
        a[self.A.indices[start:end]] = self.A.data[start:end]
        return a

    def refactor(self):
        self.factor = _BasisFactor(self.A, self.basis)
        nonbasic = self.x.copy()
        nonbasic[self.basis] = 0.0
        self.xb = self.factor.ftran(self.form.b - self.A @ nonbasic)

    def perturb(self):
        """Widen the working bounds of basic variables on or past a bound.

        Returns the number of variables shifted. Each variable is shifted at
        most once between restores.
        """
        size = self.config.perturbation
        tolerance = self.config.feasibility_tolerance
        basis = self.basis
        fresh = ~self.shifted[basis]
        lower = self.lower[basis]
        upper = self.upper[basis]
        on_lower = np.flatnonzero(fresh & (self.xb <= lower + tolerance))
        on_upper = np.flatnonzero(
            fresh & np.isfinite(upper) & (self.xb >= upper - tolerance)
        )
        if len(on_lower):
            shift = size * (1.0 + self.rng.random(len(on_lower)))
            self.lower[basis[on_lower]] = (
                np.minimum(lower[on_lower], self.xb[on_lower]) - shift
            )
        if len(on_upper):
            shift = size * (1.0 + self.rng.random(len(on_upper))) * np.maximum(
                1.0, np.abs(upper[on_upper])
            )
            self.upper[basis[on_upper]] = (
                np.maximum(upper[on_upper], self.xb[on_upper]) + shift
            )
        self.shifted[basis[on_lower]] = True
        self.shifted[basis[on_upper]] = True
        return len(on_lower) + len(on_upper)

    def restore(self):
        """Return to the original bounds and recompute the basic values."""
        self.lower[:] = 0.0
        self.upper = self.true_upper.copy()
        self.shifted[:] = False
        nonbasic = ~self.is_basic
        self.x[nonbasic] = np.where(
            self.at_upper[nonbasic], self.upper[nonbasic], 0.0
        )
        self.refactor()

    def retire_artificials(self):
        artificial = self.form.artificial
        self.true_upper[artificial] = 0.0
        self.eligible[artificial] = False
        self.at_upper[artificial] = False
        self.restore()

    def point(self):
        z = self.x.copy()
        z[self.basis] = self.xb
        return z

    def final_point(self):
        self.restore()
        z = self.point()
        self.violation = float(max(
            np.max(-z, initial=0.0), np.max(z - self.true_upper, initial=0.0)
        ))
        z = np.clip(z, 0.0, self.true_upper)
        z = np.where(z < self.config.feasibility_tolerance, 0.0, z)
        near_upper = np.isfinite(self.upper) & (
            np.abs(z - self.upper) < self.config.feasibility_tolerance
        )
        z[near_upper] = self.upper[near_upper]
        return z

    def run(self, cost, name):
        config = self.config
        if config.perturbation:
            self.perturb()
        degenerate_streak = 0
        bland = False
        while True:
            if self.iterations >= self.max_iterations:
                raise SolverError(
                    '{}: iteration limit {} reached'.format(
                        name, self.max_iterations
                    )
                )
            if len(self.factor.etas) >= config.refactor_interval:
                self.refactor()

            y = self.factor.btran(cost[self.basis])
            reduced = cost - self.A_rows @ y
            candidates = self.eligible & ~self.is_basic & (
                (~self.at_upper & (reduced < -config.optimality_tolerance)
                 & (self.upper > self.lower))
                | (self.at_upper & (reduced > config.optimality_tolerance))
            )
            entering = np.flatnonzero(candidates)
            if not len(entering):
                return OPTIMAL
            if bland:
                q = int(entering[0])
            else:
                q = int(entering[np.argmax(np.abs(reduced[entering]))])
            direction = -1.0 if self.at_upper[q] else 1.0
            d = self.factor.ftran(self.column(q))
            delta = direction * d
            self.iterations += 1

            ratios = np.full(self.form.m, np.inf)
            basic_lower = self.lower[self.basis]
            basic_upper = self.upper[self.basis]
            decreasing = delta > config.pivot_tolerance
            ratios[decreasing] = (
                (self.xb[decreasing] - basic_lower[decreasing])
                / delta[decreasing]
            )
            increasing = (delta < -config.pivot_tolerance) & np.isfinite(
                basic_upper
            )
            ratios[increasing] = (
                (basic_upper[increasing] - self.xb[increasing])
                / -delta[increasing]
            )
            ratios = np.maximum(ratios, 0.0)
            theta_rows = ratios.min() if self.form.m else np.inf
            theta_flip = self.upper[q] - self.lower[q]
            if not np.isfinite(theta_rows) and not np.isfinite(theta_flip):
                return UNBOUNDED

            if theta_flip <= theta_rows:
                theta = theta_flip
                self.xb -= theta * delta
                self.at_upper[q] = not self.at_upper[q]
                self.x[q] = self.upper[q] if self.at_upper[q] else self.lower[q]
            else:
                theta = theta_rows
                ties = np.flatnonzero(ratios <= theta + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                leaving = self.basis[r]
                self.xb -= theta * delta
                to_upper = delta[r] < 0
                self.x[leaving] = (
                    self.upper[leaving] if to_upper else self.lower[leaving]
                )
                self.at_upper[leaving] = to_upper
                self.is_basic[leaving] = False
                entering_value = self.x[q] + direction * theta
                self.basis[r] = q
                self.is_basic[q] = True
                self.at_upper[q] = False
                self.xb[r] = entering_value
                self.factor.update(r, d)

            if theta > 1e-12:
                degenerate_streak = 0
                continue
            degenerate_streak += 1
            if degenerate_streak < config.degenerate_limit:
                continue
            degenerate_streak = 0
            if config.perturbation and self.perturb():
                logger.debug('%s: shifted bounds after degenerate pivots', name)
            elif not bland:
                logger.debug('%s: switching to Bland pricing', name)
                bland = True


class HighsSolver(SolverInterface):
    """scipy's HiGHS behind the same interface, for cross-checking.

    The feasibility tolerances come from the same SolverConfig, floored at
    the smallest values HiGHS accepts.
    """
    name = 'highs'
    smallest_tolerance = 1e-10

    def __init__(self, config=None):
        self.config = config or SolverConfig()

    def options(self):
        return {
            'primal_feasibility_tolerance': max(
                self.config.feasibility_tolerance, self.smallest_tolerance
            ),
            'dual_feasibility_tolerance': max(
                self.config.optimality_tolerance, self.smallest_tolerance
            ),
        }

    def solve(self, lp):
        (A, row_relations, rhs) = lp.constraint_matrix()
        row_relations = np.array(row_relations)
        upper_rows = row_relations == LE
        lower_rows = row_relations == GE
        equal_rows = row_relations == EQ
        A_ub = sp.vstack([A[upper_rows], -A[lower_rows]]).tocsr()
        b_ub = np.concatenate((rhs[upper_rows], -rhs[lower_rows]))
        bounds = [
            (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
            for (lo, hi) in zip(lp.lower, lp.upper)
        ]
        result = linprog(
            -lp.objective_vector(),
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=A[equal_rows] if equal_rows.any() else None,
            b_eq=rhs[equal_rows] if equal_rows.any() else None,
            bounds=bounds, method='highs', options=self.options()
        )
        if result.status == 2:
            return LpSolution(INFEASIBLE, lp, solver=self.name)
        if result.status == 3:
            return LpSolution(UNBOUNDED, lp, solver=self.name)
        if result.status != 0:
            raise SolverError('HiGHS failed on {}: {}'.format(
                lp.name, result.message
            ))
        values = np.asarray(result.x, dtype=float)
        self.check(lp, values)
        return LpSolution(
            OPTIMAL, lp, values=values,
            objective=float(lp.objective_vector() @ values),
            iterations=int(getattr(result, 'nit', 0)), solver=self.name
        )


solvers = {
    RevisedSimplexSolver.name: RevisedSimplexSolver,
    HighsSolver.name: HighsSolver,
}


def make_solver(name, config=None):
    if name not in solvers:
        raise ValueError('Unknown solver: {}'.format(name))
    if name == RevisedSimplexSolver.name:
        return RevisedSimplexSolver(config)
    return HighsSolver(config)


# Export

def _mps_name(prefix, index, label):
    cleaned = re.sub(r'[^A-Za-z0-9_]+', '_', str(label)).strip('_')
    return '{}{}_{}'.format(prefix, index, cleaned) if cleaned else '{}{}'.format(
        prefix, index
    )


def _column_label(key):
    if isinstance(key, tuple):
        return '_'.join(str(part) for part in key)
    return str(key)


def write_mps(lp, stream):
    """Write lp in free MPS format (maximization)."""
    column_names = [
        _mps_name('C', j, _column_label(key)) for (j, key) in enumerate(lp.keys)
    ]
    row_names = [
        _mps_name('R', i, constraint.tag)
        for (i, constraint) in enumerate(lp.constraints)
    ]
    row_types = {LE: 'L', EQ: 'E', GE: 'G'}
    (A, _, rhs) = lp.constraint_matrix()
    columns = A.tocsc()
    c = lp.objective_vector()

    print('NAME {}'.format(re.sub(r'\s+', '_', lp.name) or 'lp'), file=stream)
    print('OBJSENSE', file=stream)
    print('    MAX', file=stream)
    print('ROWS', file=stream)
    print(' N  obj', file=stream)
    for (name, constraint) in zip(row_names, lp.constraints):
        print(' {}  {}'.format(row_types[constraint.relation], name), file=stream)
    print('COLUMNS', file=stream)
    for (j, name) in enumerate(column_names):
        if c[j] != 0:
            print('    {} obj {!r}'.format(name, float(c[j])), file=stream)
        start, end = columns.indptr[j], columns.indptr[j + 1]
        for (i, value) in zip(
            columns.indices[start:end], columns.data[start:end]
        ):
            print('    {} {} {!r}'.format(
                name, row_names[i], float(value)
            ), file=stream)
    print('RHS', file=stream)
    for (i, name) in enumerate(row_names):
        if rhs[i] != 0:
            print('    rhs {} {!r}'.format(name, float(rhs[i])), file=stream)
    print('BOUNDS', file=stream)
    for (j, name) in enumerate(column_names):
        (lo, hi) = (lp.lower[j], lp.upper[j])
        if lo == hi:
            print(' FX bnd {} {!r}'.format(name, lo), file=stream)
            continue
        if np.isinf(lo) and np.isinf(hi):
            print(' FR bnd {}'.format(name), file=stream)
            continue
        if np.isinf(lo):
            print(' MI bnd {}'.format(name), file=stream)
        elif lo != 0:
            print(' LO bnd {} {!r}'.format(name, lo), file=stream)
        if not np.isinf(hi):
            print(' UP bnd {} {!r}'.format(name, hi), file=stream)
    print('ENDATA', file=stream)

"""Monte Carlo execution of stationary policies.

Paths are stepped by a numba kernel. Each path reseeds numba's generator from
its own SeedSequence-derived seed, so results do not depend on the number of
worker threads.
"""
import logging
import sys
from collections import namedtuple
from datetime import datetime

import numba
import numpy as np
from numba import prange

from mdp_core import classify_mdp


logger = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


# Kernel settings

numba_default = {
    'nogil': True,
    'cache': True,
    'parallel': False,
    'error_model': 'numpy',
    'fastmath': False,
    'boundscheck': False,
}

numba_nocache = numba_default.copy()
numba_nocache['cache'] = False

numba_nocache_parallel = numba_nocache.copy()
numba_nocache_parallel['parallel'] = True


@numba.njit(**numba_default)
def _draw(cumulative, start, end):
    u = np.random.random()
    offset = np.searchsorted(cumulative[start:end], u, side='right')
    if offset > end - start - 1:
        offset = end - start - 1
    return start + offset


@numba.njit(**numba_default)
def _step(s, pair_start, policy_cum, indptr, indices, cum_probs, rewards):
    row = _draw(policy_cum, pair_start[s], pair_start[s + 1])
    position = _draw(cum_probs, indptr[row], indptr[row + 1])
    return (row, indices[position], rewards[position])


def _paths(
    seeds, horizon, beta_cum, pair_start, policy_cum, indptr, indices,
    cum_probs, rewards, membership, recurrent, checkpoints, counts,
    reward_sums, entry_times, curve_rewards, curve_counts
):
    n_labels = membership.shape[0]
    for i in prange(len(seeds)):
        np.random.seed(seeds[i])
        s = _draw(beta_cum, 0, len(beta_cum))
        total = 0.0
        entry = -1
        checkpoint = 0
        for t in range(horizon):
            if entry < 0 and recurrent[s]:
                entry = t
            (row, target, reward) = _step(
                s, pair_start, policy_cum, indptr, indices, cum_probs, rewards
            )
            for k in range(n_labels):
                counts[i, k] += membership[k, row]
            total += reward
            s = target
            while checkpoint < len(checkpoints) and checkpoints[checkpoint] == t + 1:
                curve_rewards[i, checkpoint] = total
                for k in range(n_labels):
                    curve_counts[i, checkpoint, k] = counts[i, k]
                checkpoint += 1
        reward_sums[i] = total
        entry_times[i] = entry


# Two dispatchers share one body, so neither may use the on-disk cache.
_paths_serial = numba.njit(**numba_nocache)(_paths)
_paths_parallel = numba.njit(**numba_nocache_parallel)(_paths)


@numba.njit(**numba_default)
def _trajectory(
    seed, horizon, beta_cum, pair_start, policy_cum, indptr, indices,
    cum_probs, rewards
):
    np.random.seed(seed)
    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    earned = np.empty(horizon)
    s = _draw(beta_cum, 0, len(beta_cum))
    states[0] = s
    for t in range(horizon):
        (row, target, reward) = _step(
            s, pair_start, policy_cum, indptr, indices, cum_probs, rewards
        )
        actions[t] = row - pair_start[s]
        earned[t] = reward
        s = target
        states[t + 1] = s
    return (states, actions, earned)


# Inputs

class SimConfig(object):
    def __init__(
        self, paths=5000, horizon=100000, seed=0, workers=1, checkpoints=100
    ):
        if horizon <= 0:
            raise SimulationError('horizon must be positive, got {}'.format(
                horizon
            ))
        if paths <= 0:
            raise SimulationError('paths must be positive, got {}'.format(
                paths
            ))
        if workers < 1:
            raise SimulationError('workers must be at least 1')
        self.paths = int(paths)
        self.horizon = int(horizon)
        self.seed = int(seed)
        self.workers = int(workers)
        self.checkpoints = int(checkpoints)

    @classmethod
    def from_settings(cls, settings):
        return cls(**(settings or {}))


def _row_cumulative(values, starts):
    """Cumulative sums restarted at every segment start."""
    cumulative = np.cumsum(values)
    offsets = np.concatenate(([0.0], cumulative))[starts[:-1]]
    lengths = np.diff(starts)
    return cumulative - np.repeat(offsets, lengths)


def _kernel_inputs(mdp, pi):
    pi.check(mdp)
    kernel = mdp.kernel
    reward_kernel = mdp.reward_kernel
    return (
        np.cumsum(mdp.beta),
        mdp.pair_start.astype(np.int64),
        _row_cumulative(pi.pair_vector(), mdp.pair_start),
        kernel.indptr.astype(np.int64),
        kernel.indices.astype(np.int64),
        _row_cumulative(kernel.data, kernel.indptr),
        reward_kernel.data.astype(np.float64),
    )


def path_seeds(master, paths):
    return np.array([
        np.random.SeedSequence([master, i]).generate_state(1)[0]
        for i in range(paths)
    ], dtype=np.int64)


Trajectory = namedtuple('Trajectory', ['states', 'actions', 'rewards'])


def sample_trajectory(mdp, pi, seed, horizon):
    """Sample S_0..S_n, A_0..A_{n-1} and rewards; equals path 0 of an ensemble."""
    if horizon <= 0:
        raise SimulationError('horizon must be positive, got {}'.format(
            horizon
        ))
    (states, actions, rewards) = _trajectory(
        path_seeds(seed, 1)[0], int(horizon), *_kernel_inputs(mdp, pi)
    )
    return Trajectory(states, actions, rewards)


# Reports

def _mean_and_error(samples):
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        return (float(samples.mean()), 0.0)
    return (
        float(samples.mean()),
        float(samples.std(ddof=1) / np.sqrt(len(samples)))
    )


class EmpiricalReport(object):
    """Ensemble estimates with standard errors.

    frequencies[L] is the time-average visit fraction J of label L and
    visits[L] the total visit count V over the horizon; both come with
    standard errors. entry_time is the mean first step inside a TSCC over the
    paths that got there.
    """
    def __init__(
        self, paths, horizon, labels, counts, reward_sums, entry_times,
        checkpoints, curve_rewards, curve_counts
    ):
        self.paths = paths
        self.horizon = horizon
        self.labels = list(labels)
        self.frequencies = {}
        self.frequency_errors = {}
        self.visits = {}
        self.visit_errors = {}
        for (k, name) in enumerate(self.labels):
            (self.visits[name], self.visit_errors[name]) = _mean_and_error(
                counts[:, k]
            )
            self.frequencies[name] = self.visits[name] / horizon
            self.frequency_errors[name] = self.visit_errors[name] / horizon
        (self.average_reward, self.reward_error) = _mean_and_error(
            reward_sums / horizon
        )
        reached = entry_times >= 0
        self.censored = int(np.count_nonzero(~reached))
        if reached.any():
            (self.entry_time, self.entry_time_error) = _mean_and_error(
                entry_times[reached]
            )
        else:
            (self.entry_time, self.entry_time_error) = (None, None)
        self.checkpoints = np.asarray(checkpoints)
        scale = np.maximum(self.checkpoints, 1)
        self.reward_curve = curve_rewards.mean(axis=0) / scale
        self.frequency_curves = {
            name: curve_counts[:, :, k].mean(axis=0) / scale
            for (k, name) in enumerate(self.labels)
        }

    def as_dict(self):
        return {
            'paths': self.paths,
            'horizon': self.horizon,
            'average_reward': self.average_reward,
            'average_reward_se': self.reward_error,
            'frequencies': self.frequencies,
            'frequency_se': self.frequency_errors,
            'visits': self.visits,
            'visit_se': self.visit_errors,
            'entry_time': self.entry_time,
            'entry_time_se': self.entry_time_error,
            'censored_paths': self.censored,
        }

    def format_text(self):
        lines = [
            'Paths: {}  Horizon: {}'.format(self.paths, self.horizon),
            'Average reward: {:.6f} +/- {:.6f}'.format(
                self.average_reward, self.reward_error
            ),
        ]
        if self.entry_time is not None:
            lines.append(
                'First entry into a TSCC: {:.3f} +/- {:.3f} ({} censored)'.format(
                    self.entry_time, self.entry_time_error, self.censored
                )
            )
        for name in self.labels:
            lines.append('{:<20} J {:.6f} +/- {:.6f}  V {:.3f} +/- {:.3f}'.format(
                name, self.frequencies[name], self.frequency_errors[name],
                self.visits[name], self.visit_errors[name]
            ))
        return '\n'.join(lines)


def _label_membership(mdp, names):
    membership = np.zeros((len(names), mdp.n_pairs), dtype=np.int64)
    for (k, name) in enumerate(names):
        membership[k, mdp.label_pair_indices(name)] = 1
    return membership


def _checkpoint_steps(horizon, count):
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(
        np.linspace(horizon / count, horizon, count).round().astype(np.int64)
    )


def ensemble_metrics(mdp, pi, cfg=None, cls=None):
    cfg = cfg or SimConfig()
    cls = cls or classify_mdp(mdp)
    names = sorted(mdp.labels)
    membership = _label_membership(mdp, names)
    recurrent = np.zeros(mdp.n_states, dtype=np.bool_)
    recurrent[sorted(cls.recurrent_union)] = True
    checkpoints = _checkpoint_steps(cfg.horizon, cfg.checkpoints)

    seeds = path_seeds(cfg.seed, cfg.paths)
    counts = np.zeros((cfg.paths, len(names)), dtype=np.int64)
    reward_sums = np.zeros(cfg.paths)
    entry_times = np.zeros(cfg.paths, dtype=np.int64)
    curve_rewards = np.zeros((cfg.paths, len(checkpoints)))
    curve_counts = np.zeros(
        (cfg.paths, len(checkpoints), len(names)), dtype=np.int64
    )
    inputs = _kernel_inputs(mdp, pi)
    logger.info(
        'Simulating %d paths of %d steps on %d worker(s)',
        cfg.paths, cfg.horizon, cfg.workers
    )
    if cfg.workers > 1:
        numba.set_num_threads(
            min(cfg.workers, numba.config.NUMBA_NUM_THREADS)
        )
        run = _paths_parallel
    else:
        run = _paths_serial
    run(
        seeds, cfg.horizon, *inputs, membership, recurrent, checkpoints,
        counts, reward_sums, entry_times, curve_rewards, curve_counts
    )
    return EmpiricalReport(
        cfg.paths, cfg.horizon, names, counts, reward_sums, entry_times,
        checkpoints, curve_rewards, curve_counts
    )


# Convergence curves

class ConvergenceReporter(object):
    def __init__(self, filename=None, file_prefix='convergence_', file_suffix=''):
        self.filename = filename
        self.file_prefix = file_prefix
        self.file_suffix = file_suffix
        self.start_time = None
        self.file = None

    def close_report(self):
        if self.file is not None:
            self.file.close()
            self.file = None

    def generate_timestamp(self, time):
        return datetime.fromtimestamp(time).isoformat(sep='_')

    def generate_filename(self):
        return '{}{}{}.csv'.format(
            self.file_prefix,
            self.generate_timestamp(self.start_time),
            self.file_suffix
        )

    def open_report(self):
        filename = self.filename or self.generate_filename()
        print('Logging to {}...'.format(filename), file=sys.stderr)
        self.file = open(filename, 'w')

    def report_header(self, labels):
        print('Step,Average Reward{}'.format(
            ''.join(',{}'.format(name) for name in labels)
        ), file=self.file)
        self.file.flush()

    def report(self, step, reward, frequencies):
        print('{},{:.6f}{}'.format(
            step, reward,
            ''.join(',{:.6f}'.format(value) for value in frequencies)
        ), file=self.file)
        self.file.flush()

    def write(self, report):
        self.start_time = datetime.now().timestamp()
        self.open_report()
        try:
            self.report_header(report.labels)
            for (i, step) in enumerate(report.checkpoints):
                self.report(step, report.reward_curve[i], [
                    report.frequency_curves[name][i] for name in report.labels
                ])
        finally:
            self.close_report()


class ConvergencePrinter(ConvergenceReporter):
    def close_report(self):
        pass

    def open_report(self):
        self.file = sys.stdout

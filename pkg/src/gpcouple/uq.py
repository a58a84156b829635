"""Monte Carlo propagation of surrogate uncertainty through a coupled solve.

Two schemes are provided for problems whose solvers include
:class:`~gpcouple.coupling.SurrogateSolver` instances:

``M2`` (:func:`run_method2`)
    Trajectory-conditioned sampling. Each replication draws every queried
    surrogate value from the posterior conditioned on the values already
    drawn along its own path.
``M3`` (:func:`run_method3`)
    Mean-path constant offsets. A deterministic run with posterior means
    fixes the query points; each replication draws one joint posterior sample
    on those points and reruns the coupling with the mean predictor shifted
    by the offset of the current iteration.

Replication ``j`` uses its own generator seeded from
``(master_seed, method, j)``, so ensembles do not depend on execution order
or on the number of workers.
"""
import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .coupling import SurrogateSolver, fixed_point, multi_step_cycle
from .errors import DivergenceError, InsufficientDataError, NonConvergenceError
from .gp import PosteriorSampler, TrajectoryState

log = logging.getLogger(__name__)

METHOD_CODES = {"M2": 2, "M3": 3, "M3-cycle": 30}
MAX_EXCLUDED_FRACTION = 0.01


def replication_seed(master_seed, method, j):
    """64-bit seed of replication ``j``, derived from the master seed and method tag."""
    ss = np.random.SeedSequence([int(master_seed), METHOD_CODES[method], int(j)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass
class McEnsemble:
    """Coupled outputs of ``N`` replications.

    ``samples[j]`` is the output vector of replication ``j``; rows of
    non-converged replications are kept but flagged in ``converged``.
    """

    samples: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    seeds: list
    method: str
    mean_path_output: np.ndarray = None
    mean_path_iterations: object = None
    offset_norms: np.ndarray = None
    offset_reuse: int = 0
    info: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.samples.shape[0]

    @property
    def excluded(self):
        return int(np.count_nonzero(~self.converged))

    def valid(self):
        return self.samples[self.converged]

    def to_csv(self, path):
        D = self.samples.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replication", "converged", "M"] + [f"y{i + 1}" for i in range(D)])
            for j in range(self.N):
                w.writerow([j, int(self.converged[j]), int(self.iterations[j])]
                           + [repr(float(v)) for v in self.samples[j]])


@dataclass
class McStats:
    """Empirical summaries of an ensemble."""

    mean: np.ndarray
    cov: np.ndarray
    var: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    n: int
    excluded: int = 0

    def to_dict(self):
        return {"mean": self.mean.tolist(), "variance": self.var.tolist(), "covariance": self.cov.tolist(),
                "q025": self.q025.tolist(), "q975": self.q975.tolist(), "n": self.n, "excluded": self.excluded}


def ensemble_stats(e, max_excluded=MAX_EXCLUDED_FRACTION):
    """Mean, unbiased covariance and central 95% interval of the converged samples.

    Quantiles interpolate linearly between order statistics at position
    ``1 + (N - 1) p`` (type 7). ``max_excluded`` is the tolerated fraction
    of non-converged replications.

    Raises
    ------
    InsufficientDataError
        Fewer than two converged samples.
    NonConvergenceError
        More than ``max_excluded`` of the replications were excluded.
    """
    if isinstance(e, McEnsemble):
        Y = e.valid()
        excluded = e.excluded
        total = e.N
    else:
        Y = np.asarray(e, dtype=float)
        Y = Y.reshape(Y.shape[0], -1) if Y.ndim > 1 else Y.reshape(-1, 1)
        excluded, total = 0, Y.shape[0]
    if total and excluded / total > max_excluded:
        raise NonConvergenceError(f"{excluded} of {total} replications did not converge")
    if Y.shape[0] < 2:
        raise InsufficientDataError("need at least two converged samples")
    mean = Y.mean(axis=0)
    dev = Y - mean
    cov = dev.T @ dev / (Y.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    q = np.quantile(Y, [0.025, 0.975], axis=0, method="linear")
    return McStats(mean, cov, np.diag(cov).copy(), q[0], q[1], Y.shape[0], excluded)


def surrogate_solvers(problem):
    """Indices of solvers backed by GP models."""
    return [c for c, s in enumerate(problem.solvers) if isinstance(s, SurrogateSolver)]


def _map_replications(fn, N, jobs):
    if jobs is None or jobs == 1 or N < 2:
        return [fn(j) for j in range(N)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=jobs)(delayed(fn)(j) for j in range(N))


def _finish(results, method, seeds, **extra):
    samples = np.array([r[0] for r in results], dtype=float)
    return McEnsemble(
        samples=samples,
        converged=np.array([r[1] for r in results], dtype=bool),
        iterations=np.array([r[2] for r in results]),
        seeds=seeds,
        method=method,
        **extra,
    )


def _mean_run(problem):
    u, path = fixed_point(problem)
    if not path.converged:
        raise NonConvergenceError("deterministic mean-path run did not converge")
    return u, path


def _offset_schedule(samplers, rng):
    """Per (solver, model) offsets ``(M, rows, D_k)`` along a recorded path."""
    out = {}
    for c, (rows, per_model) in samplers.items():
        M = per_model[0].points.shape[0] // rows
        out[c] = [s.offsets(rng).reshape(M, rows, -1) for s in per_model]
    return out


def _samplers_for(solver, points):
    return solver.rows, [PosteriorSampler(model, points) for model in solver.models]


def _offset_hook(problem, offsets, zero_offsets, counter):
    """Evaluation hook applying constant offsets ``delta_m`` to the mean predictors."""
    used = {c: np.zeros(len(offs)) for c, offs in offsets.items()}

    def evaluate(c, m, x, theta):
        solver = problem.solvers[c]
        if c not in offsets:
            return solver.evaluate(x, theta)
        pts = solver.points(x)
        blocks = []
        for k, model in enumerate(solver.models):
            schedule = offsets[c][k]
            idx = min(m, schedule.shape[0]) - 1
            if m > schedule.shape[0]:
                counter["reuse"] = True
            delta = 0.0 * schedule[idx] if zero_offsets else schedule[idx]
            used[c][k] = max(used[c][k], float(np.linalg.norm(delta)))
            blocks.append(model.mean(pts) + delta)
        return solver.assemble(blocks)

    return evaluate, used


def run_method3(problem, N, master_seed, zero_offsets=False, jobs=1):
    """Mean-path constant-offset Monte Carlo.

    If a perturbed run needs more iterations than the mean path, the last
    offset is reused for the extra iterations (counted in ``offset_reuse``).

    Parameters
    ----------
    problem : CouplingProblem
        Problem whose GP-backed solvers evaluate posterior means.
    N : int
        Number of replications.
    master_seed : int
    zero_offsets : bool
        Force every offset to zero; each replication then reproduces the
        mean-path output exactly.
    jobs : int
        Worker processes for the replications.

    Returns
    -------
    McEnsemble
        ``offset_norms[j, i]`` holds ``max_m ||delta_m||_2`` actually applied
        to surrogate model ``i`` (models enumerated solver by solver).
    """
    u_mean, path = _mean_run(problem)
    y_mean = problem.output(u_mean)
    sur = surrogate_solvers(problem)
    samplers = {}
    for c in sur:
        solver = problem.solvers[c]
        pts = np.vstack([solver.points(x) for x in path.inputs[c]])
        samplers[c] = _samplers_for(solver, pts)
    seeds = [replication_seed(master_seed, "M3", j) for j in range(N)]

    def one(j):
        rng = np.random.default_rng(seeds[j])
        offsets = _offset_schedule(samplers, rng)
        counter = {"reuse": False}
        hook, used = _offset_hook(problem, offsets, zero_offsets, counter)
        try:
            u, p = fixed_point(problem, hook)
            y, ok, M = problem.output(u), p.converged, p.M
        except DivergenceError:
            y, ok, M = np.full(y_mean.size, np.nan), False, problem.max_iter
        norms = np.concatenate([used[c] for c in sur]) if sur else np.zeros(0)
        return y, ok, M, norms, counter["reuse"]

    results = _map_replications(one, N, jobs)
    reuse = sum(1 for r in results if r[4])
    if reuse:
        log.info("M3: %d of %d replications needed more than %d iterations; last offset reused", reuse, N, path.M)
    return _finish(results, "M3", seeds, mean_path_output=y_mean, mean_path_iterations=path.M,
                   offset_norms=np.array([r[3] for r in results]), offset_reuse=reuse)


def run_method2(problem, N, master_seed, jobs=1):
    """Trajectory-conditioned Monte Carlo.

    Every surrogate value queried along a replication's own path is drawn
    from the posterior conditioned on the values already drawn on that path.
    """
    u_mean, path = _mean_run(problem)
    y_mean = problem.output(u_mean)
    sur = surrogate_solvers(problem)
    seeds = [replication_seed(master_seed, "M2", j) for j in range(N)]

    def one(j):
        rng = np.random.default_rng(seeds[j])
        states = {c: [TrajectoryState(m) for m in problem.solvers[c].models] for c in sur}

        def evaluate(c, m, x, theta):
            solver = problem.solvers[c]
            if c not in states:
                return solver.evaluate(x, theta)
            pts = solver.points(x)
            return solver.assemble([st.sample(pts, rng) for st in states[c]])

        try:
            u, p = fixed_point(problem, evaluate)
            y, ok, M = problem.output(u), p.converged, p.M
        except DivergenceError:
            y, ok, M = np.full(y_mean.size, np.nan), False, problem.max_iter
        repeats = sum(st.repeats for sts in states.values() for st in sts)
        return y, ok, M, repeats

    results = _map_replications(one, N, jobs)
    repeats = sum(r[3] for r in results)
    if repeats:
        log.info("M2: %d queries coincided with earlier trajectory points and reused their values", repeats)
    return _finish(results, "M2", seeds, mean_path_output=y_mean, mean_path_iterations=path.M,
                   info={"repeat_queries": repeats})


def run_method3_cycle(problems, initial_state, N, master_seed, transition=None, zero_offsets=False, jobs=1):
    """Constant-offset Monte Carlo over a multi-step cycle.

    One joint posterior draw per surrogate model covers the whole
    concatenated cycle path; the offset applied at step ``t``, inner
    iteration ``m`` is the draw at the mean-run query of ``(t, m)``.
    Outputs of all steps are concatenated into one sample vector.
    """
    outs, record = multi_step_cycle(problems, initial_state, transition)
    y_mean = np.concatenate(outs)
    first = problems(0, initial_state) if callable(problems) and not isinstance(problems, (list, tuple)) \
        else problems[0]
    sur = surrogate_solvers(first)
    counts = record.counts
    starts = np.cumsum([0] + counts)
    samplers = {}
    for c in sur:
        solver = first.solvers[c]
        pts = np.vstack([solver.points(x) for p in record.steps for x in p.inputs[c]])
        samplers[c] = _samplers_for(solver, pts)
    seeds = [replication_seed(master_seed, "M3-cycle", j) for j in range(N)]

    def one(j):
        rng = np.random.default_rng(seeds[j])
        full = _offset_schedule(samplers, rng)
        counter = {"reuse": False}
        norms = {c: np.zeros(len(full[c])) for c in sur}
        hooks = {}

        def evaluate(t, c, m, x, theta):
            if t not in hooks:
                step_offsets = {cc: [o[starts[t]:starts[t + 1]] for o in full[cc]] for cc in sur}
                prob_t = current[t]
                hooks[t] = _offset_hook(prob_t, step_offsets, zero_offsets, counter)
            hook, used = hooks[t]
            val = hook(c, m, x, theta)
            for cc in sur:
                norms[cc] = np.maximum(norms[cc], used[cc])
            return val

        current = {}
        if callable(problems) and not isinstance(problems, (list, tuple)):
            def factory(t, state):
                current[t] = problems(t, state)
                return current[t]

            factory.steps = problems.steps
            source = factory
        else:
            current.update(enumerate(problems))
            source = problems
        try:
            o, rec = multi_step_cycle(source, initial_state, transition, evaluate)
            y, ok, M = np.concatenate(o), True, sum(rec.counts)
        except (NonConvergenceError, DivergenceError):
            y, ok, M = np.full(y_mean.size, np.nan), False, 0
        flat = np.concatenate([norms[c] for c in sur]) if sur else np.zeros(0)
        return y, ok, M, flat, counter["reuse"]

    results = _map_replications(one, N, jobs)
    reuse = sum(1 for r in results if r[4])
    return _finish(results, "M3-cycle", seeds, mean_path_output=y_mean, mean_path_iterations=counts,
                   offset_norms=np.array([r[3] for r in results]), offset_reuse=reuse,
                   info={"steps": len(counts), "step_output_dim": outs[0].size})


def stats_to_json(stats, path, **extra):
    payload = stats.to_dict()
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)

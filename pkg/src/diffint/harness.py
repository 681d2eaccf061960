"""Experiment harness: test sets, MSE evaluation against oracles, the
MSE-vs-training-size convergence study, and statistical checks of label
unbiasedness and of the error reduction from differential training.

Every cell of the convergence grid is a pure function of
(problem, size, trial, mode, base seed, config): the training data, weight
init and shuffle streams are all derived from those coordinates, while the
test set lives on its own stream shared by every cell of a study.
"""

from __future__ import annotations

import multiprocessing
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import sampling
from .fileio import atomic_write_text, fmt
from .problems import ProblemSpec, generate_dataset, get_problem, ground_truth, labels_and_grads
from .training import TrainConfig, TrainedModel, TrainingError, train

DEFAULT_TEST_SIZE = 4096
MODES = ("ann", "dml")


@dataclass(frozen=True)
class TestSet:
    inputs: np.ndarray
    truths: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]


def make_testset(problem: ProblemSpec, size: int, seed: int) -> TestSet:
    """Oracle-labeled inputs on a dedicated stream, disjoint from training data."""
    if size < 1:
        raise ValueError("test size must be >= 1")
    state = sampling.RngState(seed, sampling.substream("test", problem.id))
    inputs = sampling.sample_inputs(problem, state, size)
    return TestSet(inputs=inputs, truths=ground_truth(problem, inputs))


def evaluate_mse(model: TrainedModel, testset: TestSet) -> float:
    """Mean over test points and output components of squared raw-unit error.

    For multi-output problems the cumulative (summed over outputs) MSE is
    this value times the output count.
    """
    pred = model.predict(testset.inputs)
    if pred.shape != testset.truths.shape:
        raise ValueError("model and test set disagree on output dimensions")
    err = pred - testset.truths
    return float(np.mean(err * err))


# ---------------------------------------------------------------------------
# convergence study

@dataclass(frozen=True)
class ConvergenceRow:
    problem: str
    mode: str
    size: int
    trial: int
    mse: float


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    def means(self):
        """Per (problem, mode, size) trial means, sorted; nan rows propagate."""
        groups: dict[tuple, list] = {}
        for r in self.rows:
            groups.setdefault((r.problem, r.mode, r.size), []).append(r.mse)
        return [(p, m, j, float(np.mean(v))) for (p, m, j), v in sorted(groups.items())]

    def mean_mse(self, mode: str, size: int) -> float:
        for _, m, j, v in self.means():
            if m == mode and j == size:
                return v
        raise KeyError(f"no rows for mode={mode} size={size}")


def _study_config(config: TrainConfig | None) -> TrainConfig:
    return TrainConfig() if config is None else config


def _run_cell(args):
    """One (problem, size, trial, mode) cell; returns a ConvergenceRow tuple."""
    (pid, order, size, trial, mode, seed, config, test_inputs, test_truths) = args
    problem = get_problem(pid, order=order)
    tag = (size, trial, mode)
    cfg = replace(config, mode=mode, seed=seed)
    data_state = sampling.RngState(seed, sampling.substream("train-data", pid, *tag))
    try:
        dataset = generate_dataset(problem, size, data_state)
        model = train(problem, dataset, cfg,
                      init_stream=sampling.substream("init", pid, *tag),
                      shuffle_stream=sampling.substream("shuffle", pid, *tag))
        pred = model.predict(test_inputs)
        mse = float(np.mean((pred - test_truths) ** 2))
    except TrainingError as exc:
        print(f"warning: {pid} J={size} trial={trial} {mode}: {exc}", file=sys.stderr)
        mse = float("nan")
    return (pid, mode, size, trial, mse)


def _pool_init():
    # keep BLAS single threaded inside workers so jobs do not thrash each other
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass


def run_convergence(problem: ProblemSpec, sizes, trials: int, seed: int,
                    config: TrainConfig | None = None, jobs: int = 1,
                    test_size: int = DEFAULT_TEST_SIZE) -> ConvergenceTable:
    """Train both modes at every size and trial; evaluate on a shared test set.

    Rows are independent jobs keyed by (size, trial, mode); a worker pool of
    ``jobs`` processes may run them in any order.  A training abort is
    recorded as a nan row and the study continues.
    """
    sizes = [int(j) for j in sizes]
    if sizes != sorted(sizes) or trials < 1:
        raise ValueError("sizes must be ascending and trials >= 1")
    config = _study_config(config)
    testset = make_testset(problem, test_size, seed)
    order = problem.constants.get("order")
    tasks = [(problem.id, order, j, t, mode, seed, config, testset.inputs, testset.truths)
             for j in sizes for t in range(trials) for mode in MODES]
    if jobs > 1:
        with multiprocessing.Pool(jobs, initializer=_pool_init) as pool:
            rows = pool.map(_run_cell, tasks, chunksize=1)
    else:
        rows = [_run_cell(t) for t in tasks]
    rows = [ConvergenceRow(*r) for r in sorted(rows, key=lambda r: (r[0], r[2], r[3], r[1]))]
    return ConvergenceTable(rows=rows)


def fit_loglog_slope(sizes, mean_mses) -> float:
    """Least-squares slope of log2(mse) against log2(J)."""
    x = np.log2(np.asarray(sizes, float))
    y = np.log2(np.asarray(mean_mses, float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# table files

TABLE_HEADER = "problem,mode,J,trial,mse"
MEANS_HEADER = "problem,mode,J,mean_mse"


def write_table(path: str, table: ConvergenceTable) -> None:
    lines = [TABLE_HEADER]
    for r in table.rows:
        lines.append(f"{r.problem},{r.mode},{r.size},{r.trial},{fmt(r.mse)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path: str) -> ConvergenceTable:
    rows = []
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != TABLE_HEADER:
            raise ValueError(f"unexpected table header {header!r}")
        for line in fh:
            p, m, j, t, v = line.strip().split(",")
            rows.append(ConvergenceRow(p, m, int(j), int(t), float(v)))
    return ConvergenceTable(rows=rows)


def write_means(path: str, table: ConvergenceTable) -> None:
    lines = [MEANS_HEADER]
    for p, m, j, v in table.means():
        lines.append(f"{p},{m},{j},{fmt(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_means(path: str):
    rows = []
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != MEANS_HEADER:
            raise ValueError(f"unexpected means header {header!r}")
        for line in fh:
            p, m, j, v = line.strip().split(",")
            rows.append((p, m, int(j), float(v)))
    return rows


def means_path_for(table_path: str) -> str:
    if table_path.endswith(".csv"):
        return table_path[:-4] + ".means.csv"
    return table_path + ".means"


# ---------------------------------------------------------------------------
# statistical checks (label unbiasedness; error reduction of dml vs ann)

@dataclass(frozen=True)
class UnbiasednessRow:
    point: tuple
    component: str  # "y[k]" or "g[k][i]"
    estimate: float
    std_error: float
    truth: float
    tolerance: float
    passed: bool


@dataclass
class PropositionReport:
    problem: str
    samples_per_point: int
    label_rows: list
    grad_rows: list
    comparison: "ErrorComparison | None" = None

    @property
    def all_unbiased(self) -> bool:
        return all(r.passed for r in self.label_rows + self.grad_rows)

    def summary_lines(self):
        lines = [f"problem {self.problem}: unbiasedness at {len(set(r.point for r in self.label_rows))} "
                 f"points, {self.samples_per_point} draws each"]
        fails = [r for r in self.label_rows + self.grad_rows if not r.passed]
        lines.append(f"  label checks: {len(self.label_rows)}, gradient checks: {len(self.grad_rows)}, "
                     f"failures: {len(fails)}")
        for r in fails:
            lines.append(f"  FAIL {r.component} at {r.point}: est {r.estimate:.6g} "
                         f"vs truth {r.truth:.6g} (tol {r.tolerance:.3g})")
        if self.comparison is not None:
            lines.extend(self.comparison.summary_lines())
        return lines


def interior_points(problem: ProblemSpec, count: int = 5) -> np.ndarray:
    """Deterministic strictly interior points along the box diagonal."""
    fracs = (np.arange(count) + 1.0) / (count + 1.0)
    lo = np.array([b[0] for b in problem.box])
    hi = np.array([b[1] for b in problem.box])
    return lo + np.outer(fracs, hi - lo)


def _truth_fd(problem: ProblemSpec, point: np.ndarray, coord: int, step: float) -> np.ndarray:
    up = point.copy()
    dn = point.copy()
    up[coord] += step
    dn[coord] -= step
    return (ground_truth(problem, up) - ground_truth(problem, dn)) / (2.0 * step)


def unbiasedness_report(problem: ProblemSpec, points: int = 5, samples: int = 10 ** 6,
                        seed: int = 0, se_mult: float = 4.0,
                        grad_abs_floor: float = 1e-3, chunk: int = 200_000):
    """Sample means of labels and gradient labels against the oracle.

    Labels must match ground truth within ``se_mult`` standard errors;
    gradient components are compared against central finite differences of
    the oracle (step 1e-4 of the coordinate range) within
    max(se_mult * SE, grad_abs_floor).
    """
    from .problems import _draw_noise  # shared redraw policy

    label_rows, grad_rows = [], []
    for pi, point in enumerate(interior_points(problem, points)):
        state = sampling.RngState(seed, sampling.substream("prop", problem.id, pi))
        inputs = np.tile(point, (chunk, 1))
        # streaming first/second moments; the label arrays can be large
        y_s1 = np.zeros(problem.output_dim)
        y_s2 = np.zeros(problem.output_dim)
        g_s1 = np.zeros((problem.output_dim, problem.input_dim))
        g_s2 = np.zeros_like(g_s1)
        n_done = 0
        while n_done < samples:
            m = min(chunk, samples - n_done)
            noise = _draw_noise(problem, state, m)
            y, g = labels_and_grads(problem, inputs[:m], noise)
            y_s1 += y.sum(axis=0)
            y_s2 += (y * y).sum(axis=0)
            g_s1 += g.sum(axis=0)
            g_s2 += (g * g).sum(axis=0)
            n_done += m
        pt = tuple(round(float(v), 12) for v in point)

        def moments(s1, s2):
            mean = s1 / samples
            var = np.maximum(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
            return mean, np.sqrt(var / samples)

        y_mean, y_se = moments(y_s1, y_s2)
        truth = ground_truth(problem, point)
        for k in range(problem.output_dim):
            tol = se_mult * y_se[k]
            label_rows.append(UnbiasednessRow(pt, f"y[{k}]", float(y_mean[k]), float(y_se[k]),
                                              float(truth[k]), float(tol),
                                              bool(abs(y_mean[k] - truth[k]) <= tol)))
        g_mean, g_se = moments(g_s1, g_s2)
        for i in range(problem.input_dim):
            lo, hi = problem.box[i]
            step = 1e-4 * (hi - lo) if hi > lo else 1e-6
            fd = _truth_fd(problem, point, i, step)
            for k in range(problem.output_dim):
                tol = max(se_mult * g_se[k, i], grad_abs_floor)
                grad_rows.append(UnbiasednessRow(pt, f"g[{k}][{i}]", float(g_mean[k, i]),
                                                 float(g_se[k, i]), float(fd[k]), float(tol),
                                                 bool(abs(g_mean[k, i] - fd[k]) <= tol)))
    return label_rows, grad_rows


@dataclass
class ErrorComparison:
    """Mean test MSE of both modes at one size, with a paired bootstrap CI
    on the mean per-point squared-error difference (dml - ann)."""

    size: int
    trials: int
    ann_mse: float
    dml_mse: float
    diff_ci: tuple

    @property
    def ratio(self) -> float:
        return self.dml_mse / self.ann_mse

    def summary_lines(self):
        lo, hi = self.diff_ci
        return [f"  J={self.size}, {self.trials} trials: ann mse {self.ann_mse:.4e}, "
                f"dml mse {self.dml_mse:.4e}, ratio {self.ratio:.3f}",
                f"  paired bootstrap 95% CI of (dml - ann) per-point sq.err: "
                f"[{lo:.3e}, {hi:.3e}]"]


def compare_modes(problem: ProblemSpec, size: int, trials: int, seed: int,
                  config: TrainConfig | None = None, jobs: int = 1,
                  test_size: int = DEFAULT_TEST_SIZE,
                  bootstrap: int = 2000) -> ErrorComparison:
    """Train both modes over trials at one size and compare per-point errors."""
    config = _study_config(config)
    testset = make_testset(problem, test_size, seed)
    order = problem.constants.get("order")
    tasks = [(problem.id, order, size, t, mode, seed, config, testset.inputs, testset.truths)
             for t in range(trials) for mode in MODES]
    if jobs > 1:
        with multiprocessing.Pool(jobs, initializer=_pool_init) as pool:
            results = pool.map(_sq_errors_cell, tasks, chunksize=1)
    else:
        results = [_sq_errors_cell(t) for t in tasks]
    per_point = {mode: np.zeros(test_size) for mode in MODES}
    for mode, _, errs in results:
        per_point[mode] += errs / trials
    diffs = per_point["dml"] - per_point["ann"]
    bs_state = sampling.RngState(seed, sampling.substream("bootstrap", problem.id, size))
    draws = sampling.uniform(bs_state, 0.0, 1.0, bootstrap * test_size)
    idx = (draws.reshape(bootstrap, test_size) * test_size).astype(int)
    bs_means = diffs[idx].mean(axis=1)
    ci = (float(np.quantile(bs_means, 0.025)), float(np.quantile(bs_means, 0.975)))
    return ErrorComparison(size=size, trials=trials,
                           ann_mse=float(per_point["ann"].mean()),
                           dml_mse=float(per_point["dml"].mean()),
                           diff_ci=ci)


def _sq_errors_cell(cell_args):
    pid, order_, size_, trial, mode, seed_, cfg, tx, tt = cell_args
    prob = get_problem(pid, order=order_)
    tag = (size_, trial, mode)
    cfg = replace(cfg, mode=mode, seed=seed_)
    ds = generate_dataset(prob, size_, sampling.RngState(seed_, sampling.substream("train-data", pid, *tag)))
    model = train(prob, ds, cfg,
                  init_stream=sampling.substream("init", pid, *tag),
                  shuffle_stream=sampling.substream("shuffle", pid, *tag))
    err = model.predict(tx) - tt
    return (mode, trial, np.mean(err * err, axis=1))


def proposition_tests(problem: ProblemSpec, point_count: int = 5,
                      samples_per_point: int = 10 ** 6, seed: int = 0,
                      train_size: int | None = None, trials: int = 10,
                      config: TrainConfig | None = None, jobs: int = 1) -> PropositionReport:
    """Unbiasedness of labels and gradient labels (always), plus the
    dml-vs-ann error comparison when ``train_size`` is given."""
    label_rows, grad_rows = unbiasedness_report(problem, point_count, samples_per_point, seed)
    comparison = None
    if train_size is not None:
        comparison = compare_modes(problem, train_size, trials, seed, config, jobs)
    return PropositionReport(problem=problem.id, samples_per_point=samples_per_point,
                             label_rows=label_rows, grad_rows=grad_rows, comparison=comparison)

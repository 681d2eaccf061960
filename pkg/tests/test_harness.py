"""Harness: test sets, MSE evaluation, the convergence grid, statistics."""

import os

import numpy as np
import pytest

from diffint import sampling
from diffint.harness import (
    ConvergenceRow,
    ConvergenceTable,
    evaluate_mse,
    fit_loglog_slope,
    interior_points,
    make_testset,
    means_path_for,
    read_means,
    read_table,
    run_convergence,
    unbiasedness_report,
    write_means,
    write_table,
)
from diffint.harness import TestSet as EvalSet
from diffint.problems import PROBLEM_IDS, generate_dataset, get_problem
from diffint.training import TrainConfig


class _Stub:
    """Duck-typed predictor for evaluate_mse contracts."""

    def __init__(self, fn):
        self.fn = fn

    def predict(self, x):
        return self.fn(np.asarray(x))


class TestMakeTestset:
    def test_deterministic(self):
        p = get_problem("elliptic")
        a = make_testset(p, 128, seed=5)
        b = make_testset(p, 128, seed=5)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.truths, b.truths)

    def test_all_problems_finite_at_4096(self):
        for pid in PROBLEM_IDS:
            p = get_problem(pid)
            ts = make_testset(p, 4096, seed=0)
            assert np.all(np.isfinite(ts.truths)), pid

    def test_disjoint_from_training_stream(self):
        # no test input collides with any training input at matching seeds
        p = get_problem("cos_toy")
        ts = make_testset(p, 4096, seed=0)
        state = sampling.RngState(0, sampling.substream("train-data", p.id, 1 << 16, 0, "dml"))
        ds = generate_dataset(p, 1 << 16, state)
        assert np.intersect1d(ts.inputs[:, 0], ds.inputs[:, 0]).size == 0


class TestEvaluateMse:
    def test_oracle_predictor_is_zero_for_every_problem(self):
        from diffint.problems import ground_truth

        for pid in PROBLEM_IDS:
            p = get_problem(pid)
            ts = make_testset(p, 64, seed=1)
            assert evaluate_mse(_Stub(lambda x, p=p: ground_truth(p, x)), ts) == 0.0, pid

    def test_hand_value(self):
        ts = EvalSet(inputs=np.zeros((2, 1)), truths=np.array([[0.0], [2.0]]))
        assert evaluate_mse(_Stub(lambda x: np.zeros((2, 1))), ts) == pytest.approx(2.0)

    def test_quadratic_homogeneity(self):
        p = get_problem("lognormal_moment_1d")
        ts = make_testset(p, 100, seed=2)
        base = evaluate_mse(_Stub(lambda x: ts.truths + 0.1), ts)
        double = evaluate_mse(_Stub(lambda x: ts.truths + 0.2), ts)
        assert double == pytest.approx(4.0 * base, rel=1e-12)

    def test_dimension_mismatch(self):
        ts = EvalSet(inputs=np.zeros((3, 1)), truths=np.zeros((3, 1)))
        with pytest.raises(ValueError):
            evaluate_mse(_Stub(lambda x: np.zeros((3, 2))), ts)


_TINY = TrainConfig(epochs=2, batch_size=32, hidden=(8,), seed=0)


class TestRunConvergence:
    def test_row_count_and_means(self):
        p = get_problem("cos_toy")
        table = run_convergence(p, [64], trials=1, seed=3, config=_TINY, test_size=64)
        assert len(table.rows) == 2  # one per mode
        assert {r.mode for r in table.rows} == {"ann", "dml"}
        means = table.means()
        assert len(means) == 2
        for (prob, mode, j, v), row in zip(means, sorted(table.rows, key=lambda r: r.mode)):
            assert v == pytest.approx(row.mse)

    def test_trial_means_are_arithmetic(self):
        t = ConvergenceTable(rows=[
            ConvergenceRow("x", "ann", 8, 0, 1.0),
            ConvergenceRow("x", "ann", 8, 1, 3.0),
        ])
        assert t.means() == [("x", "ann", 8, 2.0)]
        assert t.mean_mse("ann", 8) == 2.0

    def test_reproducible_cells(self):
        p = get_problem("cos_toy")
        t1 = run_convergence(p, [64], trials=2, seed=9, config=_TINY, test_size=32)
        t2 = run_convergence(p, [64], trials=2, seed=9, config=_TINY, test_size=32)
        assert [r.mse for r in t1.rows] == [r.mse for r in t2.rows]

    def test_jobs_match_serial(self):
        p = get_problem("cos_toy")
        serial = run_convergence(p, [64], trials=1, seed=4, config=_TINY, test_size=32)
        pooled = run_convergence(p, [64], trials=1, seed=4, config=_TINY, test_size=32, jobs=2)
        assert [r.mse for r in serial.rows] == [r.mse for r in pooled.rows]

    def test_invalid_sizes(self):
        p = get_problem("cos_toy")
        with pytest.raises(ValueError):
            run_convergence(p, [128, 64], trials=1, seed=0, config=_TINY)


class TestSlope:
    def test_fit_loglog_slope(self):
        sizes = [1024, 2048, 4096]
        assert fit_loglog_slope(sizes, [1e-2, 5e-3, 2.5e-3]) == pytest.approx(-1.0, rel=1e-12)
        assert fit_loglog_slope(sizes, [1e-2, 1e-2, 1e-2]) == pytest.approx(0.0, abs=1e-12)


class TestTableFiles:
    def test_round_trip_and_means_file(self, tmp_path):
        table = ConvergenceTable(rows=[
            ConvergenceRow("cos_toy", "ann", 64, 0, 0.25),
            ConvergenceRow("cos_toy", "dml", 64, 0, 0.0625),
        ])
        tp = os.path.join(tmp_path, "t.csv")
        write_table(tp, table)
        with open(tp) as fh:
            assert fh.readline().strip() == "problem,mode,J,trial,mse"
        back = read_table(tp)
        assert back.rows == table.rows
        mp = means_path_for(tp)
        assert mp.endswith("t.means.csv")
        write_means(mp, table)
        rows = read_means(mp)
        assert rows == [("cos_toy", "ann", 64, 0.25), ("cos_toy", "dml", 64, 0.0625)]

    def test_rejects_wrong_header(self, tmp_path):
        path = os.path.join(tmp_path, "x.csv")
        with open(path, "w") as fh:
            fh.write("a,b,c\n")
        with pytest.raises(ValueError):
            read_table(path)


class TestInteriorPoints:
    def test_strictly_inside(self):
        for pid in PROBLEM_IDS:
            p = get_problem(pid)
            pts = interior_points(p, 5)
            assert pts.shape == (5, p.input_dim)
            for i, (lo, hi) in enumerate(p.box):
                assert np.all(pts[:, i] > lo) and np.all(pts[:, i] < hi)


class TestCompareModes:
    def test_smoke_report(self):
        from diffint.harness import compare_modes

        p = get_problem("cos_toy")
        cmp = compare_modes(p, 64, trials=2, seed=5, config=_TINY, test_size=32, bootstrap=200)
        assert cmp.ann_mse > 0 and cmp.dml_mse > 0
        assert cmp.diff_ci[0] <= cmp.diff_ci[1]
        assert cmp.ratio == pytest.approx(cmp.dml_mse / cmp.ann_mse)
        assert any("ratio" in line for line in cmp.summary_lines())


class TestUnbiasednessSmoke:
    def test_cos_toy_small(self):
        p = get_problem("cos_toy")
        label_rows, grad_rows = unbiasedness_report(p, points=2, samples=200_000, seed=1)
        assert len(label_rows) == 2 and len(grad_rows) == 2
        assert all(r.passed for r in label_rows + grad_rows)

    def test_detects_truth_scale_bug(self):
        # a predictor bias of 5 sigma must trip the 4 SE gate
        p = get_problem("cos_toy")
        label_rows, _ = unbiasedness_report(p, points=1, samples=50_000, seed=2)
        row = label_rows[0]
        shifted = abs(row.estimate + 6.0 * row.std_error - row.truth)
        assert shifted > row.tolerance

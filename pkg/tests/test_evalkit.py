import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bgmil.dataio import make_splits
from bgmil.evalkit import (
    MetricReport,
    ProtocolError,
    accuracy,
    format_rank_table,
    format_summary,
    normalized_deviation,
    rank_table,
    read_metrics_csv,
    regression_metrics,
    run_protocol,
    wilcoxon_signed_rank,
    write_metrics_csv,
)
from bgmil.numkit import Rng

from oracles import wilcoxon_enumeration

finite = st.floats(-100, 100, allow_nan=False)


# -- metrics -------------------------------------------------------------------------
def test_accuracy_example():
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75


def test_accuracy_errors():
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_normalized_deviation_example():
    assert normalized_deviation([0.5, 0.5], [0.4, 0.6]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        normalized_deviation([1.0], [0.0])


def test_regression_example():
    rmse, mae, mape = regression_metrics([1.0, 3.0], [2.0, 2.0])
    assert (rmse, mae, mape) == (1.0, 1.0, 50.0)
    with pytest.raises(ValueError, match="zero"):
        regression_metrics([1.0], [0.0])


@given(hnp.arrays(np.float64, st.integers(1, 30), elements=finite), st.data())
def test_rmse_at_least_mae(pred, data):
    true = data.draw(hnp.arrays(np.float64, pred.shape, elements=st.floats(0.5, 50)))
    rmse, mae, _ = regression_metrics(pred, true)
    assert rmse >= mae - 1e-12


@given(hnp.arrays(np.float64, st.integers(1, 30), elements=finite), st.integers(0, 1000))
def test_metrics_permutation_invariant(pred, seed):
    true = np.abs(pred[::-1]) + 1.0
    perm = Rng(seed).permutation(pred.size)
    np.testing.assert_allclose(regression_metrics(pred[perm], true[perm]), regression_metrics(pred, true), rtol=1e-12)
    assert normalized_deviation(pred[perm], true[perm]) == pytest.approx(normalized_deviation(pred, true))


# -- ranks ----------------------------------------------------------------------------
def test_rank_example():
    t = rank_table([[0.9, 0.8]], ["a", "b"])
    assert t.ranks.tolist() == [[1.0, 2.0]]
    assert rank_table([[0.9, 0.8]], higher_is_better=False).ranks.tolist() == [[2.0, 1.0]]


def test_rank_ties_average():
    assert rank_table([[0.5, 0.5, 0.1]]).ranks.tolist() == [[1.5, 1.5, 3.0]]


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 1)))
def test_rank_rows_sum(scores):
    m = scores.shape[1]
    t = rank_table(scores)
    np.testing.assert_allclose(t.ranks.sum(axis=1), m * (m + 1) / 2)
    assert t.average.shape == (m,) and t.median.shape == (m,)


def test_rank_table_text():
    text = format_rank_table(rank_table([[0.9, 0.8], [0.7, 0.75]], ["ours", "base"], ["x", "y"]))
    assert "average rank" in text and "median rank" in text and "ours" in text


def test_rank_rejects_missing():
    with pytest.raises(ValueError):
        rank_table([[0.5, np.nan]])


# -- Wilcoxon --------------------------------------------------------------------------
def test_wilcoxon_all_positive():
    res = wilcoxon_signed_rank([0, 0, 0], [1, 2, 3])
    assert res.statistic == 6 and res.p_value == 1 / 8 and res.method == "exact"


def test_wilcoxon_drops_zeros():
    res = wilcoxon_signed_rank([1, 1, 0, 0], [1, 2, 3, 4])
    assert res.zeros_dropped == 1 and res.n == 3


def test_wilcoxon_all_zero():
    with pytest.raises(ValueError, match="zero"):
        wilcoxon_signed_rank([1, 2], [1, 2])


def test_wilcoxon_alternatives():
    a, b = [0.0] * 5, [1.0, 2.0, -0.5, 3.0, 4.0]
    g = wilcoxon_signed_rank(a, b, "greater").p_value
    l = wilcoxon_signed_rank(a, b, "less").p_value
    assert g < 0.5 < l
    assert wilcoxon_signed_rank(a, b, "two-sided").p_value == pytest.approx(min(1.0, 2 * g))
    with pytest.raises(ValueError):
        wilcoxon_signed_rank(a, b, "bigger")


@given(st.lists(st.integers(-4, 4), min_size=1, max_size=10))
def test_wilcoxon_exact_matches_enumeration(diffs):
    if not any(diffs):
        return
    res = wilcoxon_signed_rank(np.zeros(len(diffs)), np.array(diffs, dtype=float))
    observed, p = wilcoxon_enumeration(diffs)
    assert res.statistic == observed
    assert res.p_value == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_wilcoxon_normal_close_to_exact(seed):
    rng = Rng(seed)
    d = rng.normal(0.3, 1.0, size=25)
    exact = wilcoxon_signed_rank(np.zeros(25), d, exact_max_n=30)
    approx = wilcoxon_signed_rank(np.zeros(25), d)
    assert exact.method == "exact" and approx.method == "normal"
    assert abs(exact.p_value - approx.p_value) < 0.01


# -- protocol ------------------------------------------------------------------------------
def mean_of_test(train, test, rng):
    return {"size": float(len(test)), "draw": float(rng.uniform())}


def test_protocol_counts():
    plans = make_splits(25, folds=5, trials=2, rng=Rng(0))
    reports = run_protocol(plans, mean_of_test, seed=3)
    assert len(reports["size"].values) == 10
    assert reports["size"].keys == [(t, f) for t in range(2) for f in range(5)]
    assert reports["size"].mean == 5.0 and reports["size"].std_error == 0.0


def test_protocol_schedule_and_workers_do_not_matter():
    plans = make_splits(30, folds=3, trials=3, rng=Rng(1))
    ref = run_protocol(plans, mean_of_test, seed=7)
    units = [(t, f) for t in range(3) for f in range(3)]
    shuffled = [units[i] for i in Rng(2).permutation(len(units))]
    for kwargs in (dict(schedule=shuffled), dict(workers=4), dict(schedule=shuffled[::-1], workers=3)):
        out = run_protocol(plans, mean_of_test, seed=7, **kwargs)
        assert out["draw"].values == ref["draw"].values and out["draw"].keys == ref["draw"].keys


def test_protocol_threads_really_run():
    plans = make_splits(12, folds=4, trials=1, rng=Rng(0))
    names = set()

    def pipe(train, test, rng):
        names.add(threading.current_thread().name)
        return {"x": 1.0}

    run_protocol(plans, pipe, workers=2)
    assert names and "MainThread" not in names


def test_protocol_failure_names_trial_seed():
    plans = make_splits(10, folds=2, trials=2, rng=Rng(0))

    def pipe(train, test, rng):
        if rng.stream_id == (1, 1):
            raise RuntimeError("boom")
        return {"x": 1.0}

    with pytest.raises(ProtocolError, match=f"trial 1 fold 1.*trial seed {plans[1].trial_seed}.*boom"):
        run_protocol(plans, pipe)


def test_protocol_bad_schedule():
    plans = make_splits(10, folds=2, rng=Rng(0))
    with pytest.raises(ValueError):
        run_protocol(plans, mean_of_test, schedule=[(0, 0)])


def test_standard_error():
    rep = MetricReport("acc", [1.0, 2.0, 3.0, 4.0])
    assert rep.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    with pytest.raises(ValueError):
        MetricReport("acc", [])


def test_metrics_csv_round_trip(tmp_path):
    reps = {
        "accuracy": MetricReport("accuracy", [0.1 + 0.2, 1 / 3], [(0, 0), (0, 1)]),
        "nd": MetricReport("nd", [2.0, 1e-17], [(0, 0), (0, 1)]),
    }
    write_metrics_csv(tmp_path / "m.csv", reps)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "trial,fold,accuracy,nd"
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back["accuracy"].values == reps["accuracy"].values and back["nd"].keys == [(0, 0), (0, 1)]
    assert "accuracy" in format_summary(back, "run")
